"""Command-line front door: synth, train, identify, sweep-k, det, bench.

Exit codes: 0 success, 1 validation error (single machine-parsable line on
stderr), 2 internal error. A flat key=value config file can supply defaults;
explicit flags override it with a notice.
"""

import argparse
import os
import sys

import numpy as np

from . import dataset, eigenfaces, evaluation
from .errors import EigenbenchError, InvalidInputError


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits on its own; route everything through our exit codes instead
    def error(self, message):
        raise _UsageError(message)


def _load_config(path):
    cfg = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for i, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise InvalidInputError(f"{path}:{i}: expected key=value, got {line!r}")
                key, _, value = line.partition("=")
                cfg[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
    return cfg


def _apply_config(args, parser_defaults):
    """Config fills in values the command line left at their defaults."""
    if not getattr(args, "config", None):
        return
    cfg = _load_config(args.config)
    for key, raw in cfg.items():
        if not hasattr(args, key):
            continue
        current = getattr(args, key)
        default = parser_defaults.get(key)
        if current != default:
            print(f"notice: flag --{key.replace('_', '-')} overrides config value {raw!r}",
                  file=sys.stderr)
            continue
        if isinstance(default, int) and not isinstance(default, bool):
            setattr(args, key, int(raw))
        elif isinstance(default, float):
            setattr(args, key, float(raw))
        else:
            setattr(args, key, raw)


def _out_dir(args):
    out = getattr(args, "out_dir", None) or os.environ.get("EIGENBENCH_OUT") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _parse_dims(text):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise InvalidInputError(f"bad --dims {text!r}, want WIDTHxHEIGHT like 24x24")


def _selection_from(args):
    k = getattr(args, "select_top_k", None)
    tau = getattr(args, "select_threshold", None)
    if k is not None and tau is not None:
        raise InvalidInputError("use either --select-top-k or --select-threshold, not both")
    if tau is not None:
        return eigenfaces.SelectionRule(value_threshold=float(tau))
    if k is None or str(k) == "all":
        return eigenfaces.keep_all()
    return eigenfaces.SelectionRule(top_k=int(k))


def _train_from_manifest(manifest, selection):
    pairs = dataset.load_split(manifest, "train")
    ts = eigenfaces.TrainingSet.from_pairs(pairs)
    return eigenfaces.train(ts, selection, dims=manifest.dims)


def cmd_synth(args):
    dims = _parse_dims(args.dims)
    manifest = dataset.synth_dataset(
        num_subjects=args.subjects,
        train_per_subject=args.train,
        test_per_subject=args.test,
        dims=dims,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
        out_dir=args.out,
        impostors=args.impostors,
    )
    print(f"wrote {len(manifest.records)} images and manifest.csv to {args.out}")
    return 0


def cmd_train(args):
    manifest = dataset.load_manifest(args.manifest)
    model = _train_from_manifest(manifest, _selection_from(args))
    eigenfaces.save_model(model, args.out)
    print(f"trained on {len(manifest.train_records())} images, "
          f"kept {model.kept_count} of {len(model.eigenvalues)} eigenfaces -> {args.out}")
    return 0


def cmd_identify(args):
    model = eigenfaces.load_model(args.model)
    record = dataset.ImageRecord(path=args.image, subject_id="?", split="test")
    iv = dataset.load_image_vector(record, model.dims, base_dir=".")
    decision = eigenfaces.identify(iv, model, theta=args.theta)
    verdict = "ACCEPT" if decision.accepted else "REJECT"
    print(f"{verdict} {decision.subject_id} {decision.distance!r}")
    return 0


def cmd_sweep_k(args):
    manifest = dataset.load_manifest(args.manifest)
    k_values = [int(k) for k in args.k.split(",")]
    points, errors = evaluation.training_size_sweep(
        manifest, k_values, _selection_from(args), theta=args.theta)
    for k, msg in errors:
        print(f"sweep-k: skipped k={k}: {msg}", file=sys.stderr)
    out = _out_dir(args)
    path = os.path.join(out, "sweep.csv")
    evaluation.emit_sweep_csv(points, path)
    for p in points:
        print(f"k={p.k} matching_ratio={p.matching_ratio:.4f} n_test={p.n_test}")
    print(f"wrote {path}")
    return 0


def cmd_det(args):
    manifest = dataset.load_manifest(args.manifest)
    model = _train_from_manifest(manifest, _selection_from(args))
    probes = dataset.load_split(manifest, "test")
    trials, skipped = evaluation.run_trials(model, [(iv, sid) for iv, sid in probes])
    if skipped:
        print(f"det: skipped {skipped} probes with mismatched dimensions", file=sys.stderr)
    grid = evaluation.default_threshold_grid(trials, n=args.grid_points)
    points = evaluation.far_frr_curve(trials, grid)
    theta, rate = evaluation.find_eer(points)
    out = _out_dir(args)
    csv_path = os.path.join(out, "det.csv")
    svg_path = os.path.join(out, "det.svg")
    evaluation.emit_det_csv(points, csv_path)
    evaluation.emit_det_svg(points, svg_path)
    print(f"EER ~ {rate:.4f} at threshold {theta!r} (squared-distance units)")
    print(f"wrote {csv_path} and {svg_path}")
    return 0


def cmd_bench(args):
    manifest = dataset.load_manifest(args.manifest)
    full_sel = eigenfaces.keep_all() if args.full_k == "all" \
        else eigenfaces.SelectionRule(top_k=int(args.full_k))
    full_model = _train_from_manifest(manifest, full_sel)
    if args.pruned_threshold is not None:
        kept = int(np.count_nonzero(
            full_model.eigenvalues[: full_model.kept_count] >= args.pruned_threshold))
        if kept == 0:
            raise InvalidInputError(
                f"--pruned-threshold {args.pruned_threshold!r} keeps no eigenfaces")
    elif args.pruned_k is not None:
        kept = args.pruned_k
    else:
        raise InvalidInputError("need --pruned-threshold or --pruned-k")
    pruned_model = eigenfaces.truncate_model(full_model, kept)
    probes = [iv for iv, _ in dataset.load_split(manifest, "test")]
    full_rep, pruned_rep, agreement = evaluation.pruning_benchmark(
        full_model, pruned_model, probes, repetitions=args.reps)
    out = _out_dir(args)
    path = os.path.join(out, "timing.csv")
    evaluation.emit_timing_csv([("full", full_rep), ("pruned", pruned_rep)], path)
    ratio = pruned_rep.median_seconds / full_rep.median_seconds
    print(f"full m'={full_rep.model_kept_count} median={full_rep.median_seconds:.6f}s")
    print(f"pruned m'={pruned_rep.model_kept_count} median={pruned_rep.median_seconds:.6f}s")
    print(f"time_ratio={ratio:.3f} prediction_agreement={agreement:.4f}")
    print(f"wrote {path}")
    return 0


def build_parser():
    parser = _Parser(prog="eigenbench",
                     description="Eigenfaces face recognition: train, match, evaluate, benchmark.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value defaults file; flags win")

    p = sub.add_parser("synth", parents=[], help="generate a synthetic dataset")
    common(p)
    p.add_argument("--subjects", type=int, required=True)
    p.add_argument("--train", type=int, required=True, help="train images per subject")
    p.add_argument("--test", type=int, required=True, help="test images per subject")
    p.add_argument("--dims", default="24x24")
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--impostors", type=int, default=0,
                   help="extra subjects with test images only")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth, _subparser=p)

    p = sub.add_parser("train", help="train a model from a manifest")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--select-top-k", help="integer or 'all'")
    p.add_argument("--select-threshold", type=float, help="eigenvalue cutoff")
    p.add_argument("--out", required=True, help="model file path")
    p.set_defaults(func=cmd_train, _subparser=p)

    p = sub.add_parser("identify", help="match one probe image against a model")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--theta", type=float, required=True,
                   help="acceptance threshold in squared-distance units")
    p.set_defaults(func=cmd_identify, _subparser=p)

    p = sub.add_parser("sweep-k", help="matching ratio vs training images per subject")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", default="1,2,3,4,5,6", help="comma-separated k values")
    p.add_argument("--theta", type=float, default=np.inf)
    p.add_argument("--select-top-k")
    p.add_argument("--select-threshold", type=float)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_sweep_k, _subparser=p)

    p = sub.add_parser("det", help="FAR/FRR threshold sweep and DET curve")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--grid-points", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--select-top-k")
    p.add_argument("--select-threshold", type=float)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_det, _subparser=p)

    p = sub.add_parser("bench", help="full vs pruned identification timing")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--full-k", default="all")
    p.add_argument("--pruned-threshold", type=float)
    p.add_argument("--pruned-k", type=int)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_bench, _subparser=p)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        sp = getattr(args, "_subparser", parser)
        defaults = {k: sp.get_default(k) for k in vars(args)}
        _apply_config(args, defaults)
        return args.func(args)
    except (_UsageError, EigenbenchError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - internal failure path
        print(f"internal-error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
