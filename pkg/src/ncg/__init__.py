"""Nearest Category Generalization (NCG) measurement toolkit.

Exact 1-NN labels for out-of-distribution points, smoothness-region
training of small MLPs, robust-radius estimation, NCG reports with
statistical tests, and the separation simulation behind the claim that
NCG needs far fewer samples than OOD detection.
"""

from .dataset import LabeledDataset, OODSet, load_dataset, load_ood, save_dataset, save_ood
from .evaluation import NCGReport, evaluate, ncg_accuracy, split_by_ncg
from .model import MLPModel
from .nnindex import NNIndex
from .trainer import TrainConfig, train

__all__ = [
    "LabeledDataset",
    "MLPModel",
    "NCGReport",
    "NNIndex",
    "OODSet",
    "TrainConfig",
    "evaluate",
    "load_dataset",
    "load_ood",
    "ncg_accuracy",
    "save_dataset",
    "save_ood",
    "split_by_ncg",
    "train",
]
__version__ = "0.1.0"
