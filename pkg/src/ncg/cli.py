"""Command-line entry point: ``ncg <command> ...``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
Every command that writes a report embeds its effective configuration, and
``ncg rerun <report>`` replays it.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import svg
from .attacks import AttackConfig, MLPClassifier, empirical_robust_radius
from .dataset import (
    CorruptionKind,
    CorruptionSpec,
    LabeledDataset,
    OODSet,
    ThreeClusterSpec,
    apply_corruption,
    generate_three_cluster,
    guess_format,
    hold_out_class,
    load_dataset,
    load_ood,
    save_dataset,
    save_ood,
)
from .errors import EmptyOODSet, InsufficientSamples, NCGError, RadiusBracketExceeded, UsageError
from .evaluation import coverage_within_radius, distance_histogram, evaluate
from .nnindex import NNIndex, _distances
from .stats import ls_slope
from .theoremsim import TheoremWorld, complexity_curve, sample_mu, sample_nu, summary_json, write_records_csv
from .trainer import METHODS, TrainConfig, load_checkpoint, save_checkpoint, train

# keys that never influence outputs and are left out of the embedded config
_NON_CONFIG = {"func", "config", "threads"}


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _int_list(text):
    return [int(t) for t in str(text).split(",") if t.strip()]


def read_config_file(path) -> dict:
    """``key=value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _fmt(path, given):
    return given or guess_format(path)


def _write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _effective(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NON_CONFIG}


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# ---------------------------------------------------------------- gen


def cmd_gen_three_cluster(args):
    spec = ThreeClusterSpec(samples_per_cluster=args.samples_per_cluster, noise=args.noise)
    train_ds, ood = generate_three_cluster(spec, args.seed)
    fmt = _fmt(args.out, args.format)
    save_dataset(train_ds, args.out, fmt)
    save_ood(ood, args.ood, train_ds.class_count, fmt)
    outputs = [args.out, args.ood]
    if args.test:
        test_ds, _ = generate_three_cluster(spec, args.seed + 1_000_003)
        save_dataset(test_ds, args.test, fmt)
        outputs.append(args.test)
    _gen_report(args, outputs)
    print(f"three-cluster: train n={train_ds.n} ood m={ood.m} -> {', '.join(outputs)}")


def cmd_gen_theorem(args):
    world = TheoremWorld(args.C, args.d, args.eps)
    rng = np.random.default_rng(args.seed)
    train_pts, train_y = [], []
    for _ in range(args.n):
        x, j, _ = sample_mu(world, rng)
        train_pts.append(x)
        train_y.append(j - 1)
    ood_pts, ood_y = [], []
    for _ in range(args.n_ood):
        x, j = sample_nu(world, rng)
        ood_pts.append(x)
        ood_y.append(j - 1)
    labels = np.asarray(train_y)
    missing = sorted(set(range(args.C)) - set(labels.tolist()))
    if missing:
        raise InsufficientSamples(f"{args.n} draws left classes {missing} unobserved; increase --n")
    fmt = _fmt(args.out, args.format)
    save_dataset(LabeledDataset(np.array(train_pts), labels, args.C, name="theorem"), args.out, fmt)
    save_ood(OODSet(np.array(ood_pts), np.asarray(ood_y)), args.ood, args.C, fmt)
    _gen_report(args, [args.out, args.ood])
    print(f"theorem world C={args.C} d={args.d} eps={args.eps}: n={args.n} ood m={args.n_ood}")


def cmd_gen_holdout(args):
    ds = load_dataset(args.data, _fmt(args.data, args.format))
    train_ds, ood, label_map = hold_out_class(ds, args.hold_class)
    fmt = _fmt(args.out, args.format)
    save_dataset(train_ds, args.out, fmt)
    save_ood(OODSet(ood.points, np.full(ood.m, args.hold_class)), args.ood, ds.class_count, fmt)
    _gen_report(args, [args.out, args.ood], extra={"label_map": {str(k): v for k, v in label_map.items()}})
    print(f"held out class {args.hold_class}: train n={train_ds.n} ood m={ood.m}")


def cmd_gen_corrupt(args):
    ood = load_ood(args.data, _fmt(args.data, args.format), labeled=True)
    spec = CorruptionSpec(args.kind, args.level)
    pts = apply_corruption(ood.points, spec, args.seed)
    class_count = int(ood.true_labels.max()) + 1
    save_ood(OODSet(pts, ood.true_labels), args.out, class_count, _fmt(args.out, args.format))
    _gen_report(args, [args.out])
    print(f"{spec.describe()}: m={ood.m} -> {args.out}")


def _gen_report(args, outputs, extra=None):
    if not args.report:
        return
    body = {"command": args.command, "config": _effective(args), "outputs": {p: _sha256(p) for p in outputs}}
    body.update(extra or {})
    _write_json(args.report, body)


# ---------------------------------------------------------------- train


def train_config_from_args(args) -> TrainConfig:
    return TrainConfig(
        method=args.method,
        beta=args.beta,
        r=args.r,
        lam=args.lam,
        k=args.k,
        m_samples=args.m_samples,
        T=args.T,
        epochs=args.epochs,
        lr=args.lr,
        momentum=args.momentum,
        batch_size=args.batch_size,
        eta=args.eta,
        thresh=args.thresh,
        seed=args.seed,
        hidden=tuple(args.hidden),
        decay_epochs=tuple(args.decay_epochs),
    )


def cmd_train(args):
    ds = load_dataset(args.data, _fmt(args.data, args.format))
    cfg = train_config_from_args(args)
    model, history = train(cfg, ds)
    save_checkpoint(args.out, model, {"command": args.command, **_effective(args), "train_config": cfg.to_dict()})
    if args.history:
        history.write_csv(args.history)
    print(f"trained {cfg.method} on {ds.name}: final train acc {history.train_acc[-1]:.4f} -> {args.out}")


# ---------------------------------------------------------------- eval


def _sample_radii(args, classifier, ds, rng):
    rows = np.sort(rng.choice(ds.n, size=min(args.radius_samples, ds.n), replace=False))
    radii, failures = {}, 0
    for i in rows:
        x = ds.points[i]
        r_hi = args.r_hi or float(_distances(ds.points, x[None, :]).max())
        cfg = AttackConfig(args.attack_steps, args.restarts, args.bisect_steps, r_hi)
        try:
            radii[int(i)] = empirical_robust_radius(classifier, x, int(ds.labels[i]), cfg, np.random.default_rng([args.seed, int(i)]))
        except RadiusBracketExceeded:
            failures += 1
    return radii, failures


def cmd_eval(args):
    model, header = load_checkpoint(args.model)
    ds = load_dataset(args.data, _fmt(args.data, args.format))
    ood = load_ood(args.ood, _fmt(args.ood, args.format), labeled=args.ood_labeled)
    index = NNIndex(ds)
    clf = MLPClassifier(model)
    report = evaluate(clf, index, ood, bins=args.bins, bin_mode=args.bin_mode)
    report.metadata = {
        "train_accuracy": float(np.mean(clf.predict(ds.points) == ds.labels)),
        "model_method": header.get("config", {}).get("method"),
        "ood_source": ood.source,
        "train_name": ds.name,
        "seed": args.seed,
        "robust_radius": "single-attack L2 PGD estimate",
        "t_test": "one-sided Welch",
    }
    report.config = {"command": args.command, **_effective(args)}
    rng = np.random.default_rng(args.seed)

    radii = {}
    if args.radius_samples:
        radii, failures = _sample_radii(args, clf, ds, rng)
        report.metadata["radius_bracket_failures"] = failures
        if radii:
            try:
                report.coverage = coverage_within_radius(index, ood, radii)
            except EmptyOODSet:
                report.metadata["coverage_note"] = "no OOD point's nearest row was among the sampled rows"
            vals = np.array(list(radii.values()))
            report.distances.update(
                {"robust_radius_mean": float(vals.mean()), "robust_radius_median": float(np.median(vals))}
            )

    if args.corrupt:
        if ood.true_labels is None:
            raise UsageError("--corrupt needs --ood-labeled")
        for level in args.levels:
            spec = CorruptionSpec(args.corrupt, level)
            pts = apply_corruption(ood.points, spec, args.seed + level)
            sub = evaluate(clf, index, OODSet(pts, ood.true_labels, spec.describe()))
            report.levels.append(
                {
                    "level": level,
                    "ncg_accuracy": sub.ncg_accuracy,
                    "test_accuracy": sub.test_accuracy,
                    "ncg_correct_test_acc": sub.ncg_correct_test_acc,
                    "ncg_incorrect_test_acc": sub.ncg_incorrect_test_acc,
                    "ncg_correct_count": sub.ncg_correct_count,
                    "ncg_incorrect_count": sub.ncg_incorrect_count,
                    "tests": sub.tests,
                }
            )
        if len(args.levels) >= 2:
            lv = [e["level"] for e in report.levels]
            report.slopes = {
                "test_accuracy": ls_slope(lv, [e["test_accuracy"] for e in report.levels])[0],
                "ncg_accuracy": ls_slope(lv, [e["ncg_accuracy"] for e in report.levels])[0],
            }

    text = report.to_json()
    with open(args.out, "w") as fh:
        fh.write(text)
    if args.bins_csv and report.per_bin:
        report.write_bins_csv(args.bins_csv)
    if args.svg_dir:
        _eval_svgs(args.svg_dir, report, index, ood, radii)
    print(f"NCG accuracy {report.ncg_accuracy:.4f} on m={report.m} -> {args.out}")


def _eval_svgs(directory, report, index, ood, radii):
    os.makedirs(directory, exist_ok=True)
    _, dist, _ = index.nearest_arrays(ood.points)
    series = []
    pos = dist[dist > 0]
    vals = [pos] + ([np.array([r for r in radii.values() if r > 0])] if radii else [])
    vals = [v for v in vals if v.size]
    if vals:
        lo = min(np.log10(v).min() for v in vals)
        hi = max(np.log10(v).max() for v in vals)
        rng_ = (lo, hi) if hi > lo else None
        h = distance_histogram(pos, log_scale=True, bins=20, range=rng_) if pos.size else None
        if h is not None:
            series.append(("OOD distance", h.edges, h.counts))
        if len(vals) > 1:
            h = distance_histogram(vals[1], log_scale=True, bins=20, range=rng_)
            series.append(("robust radius", h.edges, h.counts))
        with open(os.path.join(directory, "distances.svg"), "w") as fh:
            fh.write(svg.histogram_chart(series, "log10 distance", "log10 L2 distance"))
    if report.per_bin:
        labels = [f"{b['mean_distance']:.3g}" if b["mean_distance"] is not None else "-" for b in report.per_bin]
        with open(os.path.join(directory, "bins.svg"), "w") as fh:
            fh.write(svg.bar_chart(labels, [b["ncg_accuracy"] for b in report.per_bin], "NCG accuracy per distance bin",
                                   "mean distance to closest training point", "NCG accuracy"))
    if report.levels:
        lv = [e["level"] for e in report.levels]
        with open(os.path.join(directory, "levels.svg"), "w") as fh:
            fh.write(svg.line_chart(lv, [("test accuracy", [e["test_accuracy"] for e in report.levels]),
                                         ("NCG accuracy", [e["ncg_accuracy"] for e in report.levels])],
                                    "accuracy vs corruption level", "level", "accuracy"))


# ---------------------------------------------------------------- theorem


def cmd_theorem(args):
    world = TheoremWorld(args.C, args.d, args.eps)
    summary, records = complexity_curve(world, args.trials, args.seed, args.n_test, args.threads)
    summary["config"] = {"command": args.command, **_effective(args)}
    with open(args.out, "w") as fh:
        fh.write(summary_json(summary))
    if args.csv:
        write_records_csv(records, args.csv)
    if args.svg:
        ncg = np.array([r.samples_to_ncg for r in records])
        det = np.array([r.samples_to_detect for r in records])
        lo, hi = np.log10(min(ncg.min(), det.min())), np.log10(max(ncg.max(), det.max()))
        h1 = distance_histogram(ncg, True, 30, (lo, hi))
        h2 = distance_histogram(det, True, 30, (lo, hi))
        with open(args.svg, "w") as fh:
            fh.write(svg.histogram_chart([("samples to NCG", h1.edges, h1.counts), ("samples to detect", h2.edges, h2.counts)],
                                         f"stopping times (C={args.C}, d={args.d}, eps={args.eps})", "log10 samples"))
    print(
        f"median samples: NCG {summary['samples_to_ncg']['median']:.1f}, "
        f"detect {summary['samples_to_detect']['median']:.1f}, nu correct {summary['nu_correct_fraction']:.4f}"
    )


# ---------------------------------------------------------------- rerun


def cmd_rerun(args):
    path = args.report
    with open(path, "rb") as fh:
        first = fh.readline()
    try:
        body = json.loads(first)
    except ValueError:
        with open(path) as fh:
            body = json.load(fh)
    config = body.get("config", {})
    command = config.get("command") or body.get("command")
    if not command:
        raise UsageError(f"{path} carries no embedded configuration")
    parser = build_parser()
    ns = parser.parse_args(command.split() + ["--out", config["out"]] + _required_args(command, config))
    for key, value in config.items():
        if key != "command":
            setattr(ns, key, value)
    ns.command = command
    return ns.func(ns)


def _required_args(command, config):
    # placeholders satisfy argparse; the embedded values overwrite them
    need = {
        "gen three-cluster": ["--ood", "x"],
        "gen theorem": ["--ood", "x"],
        "gen holdout": ["--data", "x", "--class", "0", "--ood", "x"],
        "gen corrupt": ["--data", "x", "--kind", "contrast", "--level", "0"],
        "train": ["--data", "x"],
        "eval": ["--model", "x", "--data", "x", "--ood", "x"],
    }
    return need.get(command, [])


# ---------------------------------------------------------------- parser


def _common(p, out_required=True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--config", help="key=value file; flags override its values")
    p.add_argument("--format", choices=["csv", "binary"], help="file format (default: from extension)")
    p.add_argument("--out", required=out_required)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncg", description="Nearest category generalization toolkit")
    sub = parser.add_subparsers(dest="top", required=True)

    gen = sub.add_parser("gen", help="generate or transform datasets")
    gsub = gen.add_subparsers(dest="kind_", required=True)

    p = gsub.add_parser("three-cluster", help="two-class 2D data with an OOD cluster")
    _common(p)
    p.add_argument("--ood", required=True)
    p.add_argument("--test", help="also write a fresh labeled in-distribution test set")
    p.add_argument("--samples-per-cluster", type=_positive_int, default=ThreeClusterSpec.samples_per_cluster)
    p.add_argument("--noise", type=float, default=ThreeClusterSpec.noise)
    p.add_argument("--report")
    p.set_defaults(func=cmd_gen_three_cluster, command="gen three-cluster")

    p = gsub.add_parser("theorem", help="samples from the cube construction")
    _common(p)
    p.add_argument("--ood", required=True)
    p.add_argument("--C", type=_positive_int, default=10)
    p.add_argument("--d", type=_positive_int, default=5)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--n", type=_positive_int, default=100)
    p.add_argument("--n-ood", type=_positive_int, default=100)
    p.add_argument("--report")
    p.set_defaults(func=cmd_gen_theorem, command="gen theorem")

    p = gsub.add_parser("holdout", help="hold out one class as OOD data")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--class", dest="hold_class", type=int, required=True)
    p.add_argument("--ood", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_gen_holdout, command="gen holdout")

    p = gsub.add_parser("corrupt", help="apply a vector corruption to a labeled set")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=[k.value for k in CorruptionKind], required=True)
    p.add_argument("--level", type=int, choices=range(6), required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_gen_corrupt, command="gen corrupt")

    p = sub.add_parser("train", help="train an MLP")
    _common(p)
    d = TrainConfig()
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=METHODS, default=d.method)
    p.add_argument("--beta", type=float, default=d.beta)
    p.add_argument("--r", type=float, default=d.r)
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam)
    p.add_argument("--k", type=_positive_int, default=d.k)
    p.add_argument("--m-samples", type=_positive_int, default=d.m_samples)
    p.add_argument("--T", type=_nonneg_int, default=d.T)
    p.add_argument("--epochs", type=_positive_int, default=d.epochs)
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--momentum", type=float, default=d.momentum)
    p.add_argument("--batch-size", type=_positive_int, default=d.batch_size)
    p.add_argument("--eta", type=float, default=d.eta)
    p.add_argument("--thresh", type=float, default=d.thresh)
    p.add_argument("--hidden", type=_int_list, default=list(d.hidden))
    p.add_argument("--decay-epochs", type=_int_list, default=[])
    p.add_argument("--history")
    p.set_defaults(func=cmd_train, command="train")

    p = sub.add_parser("eval", help="NCG report for a trained model")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="training set used for 1-NN")
    p.add_argument("--ood", required=True)
    p.add_argument("--ood-labeled", action="store_true", help="OOD file labels are semantic labels")
    p.add_argument("--bins", type=_nonneg_int, default=0)
    p.add_argument("--bin-mode", choices=["equal_count", "equal_width"], default="equal_count")
    p.add_argument("--bins-csv")
    p.add_argument("--radius-samples", type=_nonneg_int, default=0)
    p.add_argument("--attack-steps", type=_positive_int, default=40)
    p.add_argument("--restarts", type=_positive_int, default=3)
    p.add_argument("--bisect-steps", type=_positive_int, default=12)
    p.add_argument("--r-hi", type=float, default=None)
    p.add_argument("--corrupt", choices=[k.value for k in CorruptionKind])
    p.add_argument("--levels", type=_int_list, default=[0, 1, 2, 3, 4, 5])
    p.add_argument("--svg-dir")
    p.set_defaults(func=cmd_eval, command="eval")

    p = sub.add_parser("theorem", help="sample-complexity simulation")
    _common(p)
    p.add_argument("--C", type=_positive_int, default=10)
    p.add_argument("--d", type=_positive_int, default=5)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--trials", type=_positive_int, default=200)
    p.add_argument("--n-test", type=_positive_int, default=100)
    p.add_argument("--csv")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_theorem, command="theorem")

    p = sub.add_parser("rerun", help="replay a command from a report's embedded config")
    p.add_argument("report")
    p.set_defaults(func=cmd_rerun, command="rerun")
    return parser


def _apply_config_file(parser, argv):
    """Re-parse with values from ``--config`` installed as defaults."""
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    values = read_config_file(path)
    known = set(vars(args))
    unknown = sorted(set(values) - known)
    if unknown:
        raise UsageError(f"{path}: unknown keys {unknown}")
    # find the leaf subparser and install the file values as its defaults
    leaf = parser
    for token in argv:
        action = next((a for a in leaf._actions if isinstance(a, argparse._SubParsersAction)), None)
        if action is None:
            break
        if token in action.choices:
            leaf = action.choices[token]
    leaf.set_defaults(**values)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
        args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except NCGError as exc:
        print(f"ncg: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"ncg: error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
