"""Exception hierarchy.

The CLI maps the three families onto exit codes: usage errors (2),
data errors (3) and numerical failures (4).
"""


class NCGError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class UsageError(NCGError):
    exit_code = 2


class DataError(NCGError):
    exit_code = 3


class NumericalFailure(NCGError):
    exit_code = 4


class MissingFile(DataError):
    pass


class EmptyFile(DataError):
    pass


class InconsistentDimension(DataError):
    pass


class LabelOutOfRange(DataError):
    pass


class TooFewClasses(DataError):
    pass


class EmptyOODSet(DataError):
    pass


class MissingTrueLabels(DataError):
    pass


class ZeroMarginPair(DataError):
    """Two differently-labeled training points coincide."""


class SingleClass(DataError):
    pass


class InsufficientSamples(DataError):
    pass


class InvalidLevel(UsageError):
    pass


class DegenerateSpectrum(NumericalFailure):
    pass


class Diverged(NumericalFailure):
    pass


class RadiusBracketExceeded(NumericalFailure):
    def __init__(self, r_hi: float):
        super().__init__(f"no adversarial example found within r_hi={r_hi!r}")
        self.r_hi = r_hi


class TrialCapExceeded(NumericalFailure):
    pass
