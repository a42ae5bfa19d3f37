"""``lesion-unc`` command line interface.

Exit codes: 0 success, 1 usage error, 2 data or I/O error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .errors import LesionUncError
from .evaluation import DEFAULT_TAU, detection_f1, match_predictions
from .features import DEFAULT_BINS, read_centroids
from .instance import (
    DEFAULT_CONNECTIVITY,
    DEFAULT_THRESHOLD,
    Source,
    connected_components,
    instances_from_labels,
    label_volume,
    threshold,
)
from .pipeline import (
    FEATURE_SETS,
    Settings,
    dump_json,
    eval_text,
    feature_matrix,
    feature_set,
    lesion_rows,
    lesions_text,
    load_samples,
    read_lesions,
    resolve_jobs,
    run_pipeline,
    sample_paths,
    write_phantoms,
    write_text,
)
from .regress import Grid, fit_report
from .regress.report import coefficients_csv, render
from .uncertainty import lesion_uncertainties
from .volio import ensure_dir, read_nifti, read_table, write_nifti, write_table

PROG = "lesion-unc"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _fraction(text):
    x = float(text)
    if not 0.0 < x < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return x


def _connectivity(text):
    c = int(text)
    if c not in (6, 18, 26):
        raise argparse.ArgumentTypeError(f"must be 6, 18 or 26, got {text}")
    return c


def _positive(text):
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return n


def _nonneg(text):
    n = int(text)
    if n < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return n


def _tau(text):
    x = float(text)
    if not 0.0 <= x < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {text}")
    return x


def _add_threshold(p):
    p.add_argument("--threshold", type=_fraction, default=DEFAULT_THRESHOLD,
                   help="binarisation threshold, foreground iff p > t (default %(default)s)")


def _add_connectivity(p):
    p.add_argument("--connectivity", type=_connectivity, default=DEFAULT_CONNECTIVITY,
                   help="6, 18 or 26 (default %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description="Lesion structural uncertainty: extraction, "
                     "features, evaluation and explanatory regression.")
    parser.add_argument("--version", action="version", version=f"{PROG} {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="generate a synthetic phantom dataset")
    p.add_argument("--spec", type=Path, help="phantom spec JSON (defaults used when omitted)")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--seed", type=int, help="override the phantom seed")
    p.add_argument("--patients", type=_positive, help="override the phantom patient count")

    p = sub.add_parser("lesions", help="extract lesions from sampled predictions and score LSU")
    p.add_argument("--pred-samples", required=True,
                   help="glob of probability NIfTI samples, read in lexicographic order")
    _add_threshold(p)
    _add_connectivity(p)
    p.add_argument("--min-size", type=_nonneg, default=0, help="drop lesions smaller than this (voxels)")
    p.add_argument("--patient-id", help="defaults to the samples' parent directory name")
    p.add_argument("--out", type=Path, required=True, help="lesions CSV")
    p.add_argument("--masks", type=Path, help="instance label NIfTI (default: --out with .nii)")

    p = sub.add_parser("features", help="per-lesion radiomic and location features")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--lesions", type=Path, required=True, help="lesions CSV from `lesions`")
    p.add_argument("--masks", type=Path, help="instance label NIfTI (default: --lesions with .nii)")
    p.add_argument("--atlas", type=Path)
    p.add_argument("--atlas-centroids", type=Path, help="label,name,cx,cy,cz CSV (mm)")
    p.add_argument("--gt", type=Path, help="ground truth; adds an iou_adj column")
    _add_connectivity(p)
    p.add_argument("--tau", type=_tau, default=DEFAULT_TAU)
    p.add_argument("--bins", type=_positive, default=DEFAULT_BINS)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("eval", help="IoU, IoU_adj and detection F1 against ground truth")
    p.add_argument("--pred", type=Path, required=True,
                   help="instance labels, binary mask or probability map")
    p.add_argument("--gt", type=Path, required=True, help="ground-truth mask or labels")
    p.add_argument("--tau", type=_tau, default=DEFAULT_TAU)
    _add_threshold(p)
    _add_connectivity(p)
    p.add_argument("--patient-id", default="")
    p.add_argument("--out", type=Path, required=True, help="JSON with tp, fp, fn, f1")
    p.add_argument("--per-lesion", type=Path, help="per-lesion CSV (default: --out with .csv)")

    p = sub.add_parser("fit", help="repeated CV selection and ElasticNet fit")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--test", type=Path)
    p.add_argument("--target", default="lsu")
    p.add_argument("--seed", type=int, default=17, help="master seed (default %(default)s)")
    p.add_argument("--grid", type=Path, help="hyper-parameter grid JSON")
    p.add_argument("--feature-set", choices=FEATURE_SETS, default="no_iou_adj")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("report", help="render a report JSON as text and coefficient CSV")
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--out", type=Path, help="text table (default: standard output)")
    p.add_argument("--coefficients", type=Path, help="coefficient CSV")

    p = sub.add_parser("pipeline", help="run everything on a dataset directory")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    _add_threshold(p)
    _add_connectivity(p)
    p.add_argument("--min-size", type=_nonneg, default=0)
    p.add_argument("--bins", type=_positive, default=DEFAULT_BINS)
    p.add_argument("--tau", type=_tau, default=DEFAULT_TAU)
    p.add_argument("--seed", type=int, default=17)
    p.add_argument("--grid", type=Path)
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("--target", default="lsu")
    p.add_argument("--jobs", type=_positive, help="worker processes (fallback: $LESION_UNC_JOBS)")
    return parser


# ---------------------------------------------------------------------------

def _config(args, **extra) -> dict:
    cfg = {"version": __version__}
    for k, v in sorted(vars(args).items()):
        cfg[k] = str(v) if isinstance(v, Path) else v
    cfg.update(extra)
    return cfg


def _sidecar(out: Path) -> Path:
    return out.with_name(out.stem + ".config.json")


def _parent(path: Path) -> None:
    ensure_dir(path.parent if str(path.parent) else ".")


def _grid(path):
    return Grid.from_json(path) if path else Grid()


def _instances(vol, t, connectivity, source):
    """Instances from a probability map, binary mask or instance label volume."""
    if vol.kind == "probability":
        return connected_components(threshold(vol, t), connectivity, source=source)
    data = vol.data
    if data.max(initial=0) <= 1:
        return connected_components(data > 0, connectivity, source=source)
    return instances_from_labels(vol, source=source)


def cmd_synth(args) -> None:
    from .synth import PhantomSpec, generate

    spec = PhantomSpec.from_json(args.spec) if args.spec else PhantomSpec()
    d = spec.to_dict()
    if args.seed is not None:
        d["seed"] = args.seed
    if args.patients is not None:
        d["n_patients"] = args.patients
    spec = PhantomSpec.from_dict(d)
    write_phantoms(generate(spec), args.out_dir)
    dump_json(_config(args, spec=spec.to_dict()), args.out_dir / "config.json")


def cmd_lesions(args) -> None:
    paths = sample_paths(args.pred_samples)
    s = load_samples(paths)
    pid = args.patient_id if args.patient_id is not None else Path(paths[0]).resolve().parent.name
    mean, lesions, uncs = lesion_uncertainties(s, args.threshold, args.connectivity, args.min_size)
    masks = args.masks or args.out.with_suffix(".nii")
    _parent(args.out)
    write_text(lesions_text(lesion_rows(pid, mean, lesions, uncs)), args.out)
    write_nifti(label_volume(lesions, s.like), masks)
    dump_json(_config(args, M=s.M, samples=[str(p) for p in paths], masks=str(masks)), _sidecar(args.out))


def cmd_features(args) -> None:
    rows = read_lesions(args.lesions)
    masks = args.masks or args.lesions.with_suffix(".nii")
    labels = read_nifti(masks, "label")
    image = read_nifti(args.image, "intensity")
    if not image.same_grid(labels):
        raise LesionUncError(f"image grid {image.dims} differs from lesion masks {labels.dims}")
    by_id = {L.id: L for L in instances_from_labels(labels, source=Source.FINAL)}
    missing = [r["lesion_id"] for r in rows if r["lesion_id"] not in by_id]
    if missing:
        raise LesionUncError(f"lesion ids {missing} absent from {masks}")
    lesions = [by_id[r["lesion_id"]] for r in rows]
    pids = {r["patient_id"] for r in rows}
    if len(pids) > 1:
        raise LesionUncError("lesions CSV mixes several patients")
    pid = pids.pop() if pids else ""

    atlas = read_nifti(args.atlas, "label") if args.atlas else None
    centroids = names = None
    if args.atlas_centroids:
        centroids, names = read_centroids(args.atlas_centroids)
    iou_adj = None
    if args.gt:
        gts = _instances(read_nifti(args.gt), DEFAULT_THRESHOLD, args.connectivity, Source.GROUND_TRUTH)
        iou_adj = {m.pred_id: m.iou_adj for m in match_predictions(lesions, gts, args.tau)}
    fm = feature_matrix(pid, image, lesions, {r["lesion_id"]: r["lsu"] for r in rows},
                        atlas, centroids, names, args.bins, iou_adj)
    _parent(args.out)
    write_table(fm, args.out)
    dump_json(_config(args, masks=str(masks)), _sidecar(args.out))


def cmd_eval(args) -> None:
    pred = read_nifti(args.pred)
    gt = read_nifti(args.gt)
    if not pred.same_grid(gt):
        raise LesionUncError(f"prediction grid {pred.dims} differs from ground truth {gt.dims}")
    preds = _instances(pred, args.threshold, args.connectivity, Source.FINAL)
    gts = _instances(gt, args.threshold, args.connectivity, Source.GROUND_TRUTH)
    per_lesion = args.per_lesion or args.out.with_suffix(".csv")
    _parent(args.out)
    dump_json(detection_f1(preds, gts, args.tau), args.out)
    write_text(eval_text(args.patient_id, match_predictions(preds, gts, args.tau)), per_lesion)
    dump_json(_config(args, per_lesion=str(per_lesion)), _sidecar(args.out))


def cmd_fit(args) -> None:
    train = feature_set(read_table(args.train), args.feature_set)
    test = feature_set(read_table(args.test), args.feature_set) if args.test else None
    if test is not None and test.names != train.names:
        raise LesionUncError("train and test tables have different feature columns")
    grid = _grid(args.grid)
    report = fit_report(train, test, grid, args.seed, args.target, label=args.feature_set)
    _parent(args.out)
    dump_json(report, args.out)
    dump_json(_config(args, grid_values=grid.to_dict()), _sidecar(args.out))


def cmd_report(args) -> None:
    import json

    from .pipeline import reports_of

    try:
        doc = json.loads(args.report.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise LesionUncError(f"{args.report}: not valid JSON ({exc})") from None
    reports = reports_of(doc)
    text = render(reports)
    if args.out:
        _parent(args.out)
        write_text(text, args.out)
    else:
        sys.stdout.write(text)
    if args.coefficients:
        _parent(args.coefficients)
        write_text(coefficients_csv(reports), args.coefficients)


def cmd_pipeline(args) -> None:
    jobs = resolve_jobs(args.jobs)
    settings = Settings(args.threshold, args.connectivity, args.bins, args.tau, args.min_size)
    grid = _grid(args.grid)
    run_pipeline(args.data, args.out_dir, settings, args.seed, grid, args.test_fraction, jobs, args.target)
    # jobs changes scheduling only, so it stays out of the echoed config
    cfg = _config(args, grid_values=grid.to_dict())
    cfg.pop("jobs")
    dump_json(cfg, args.out_dir / "config.json")


COMMANDS = {
    "synth": cmd_synth,
    "lesions": cmd_lesions,
    "features": cmd_features,
    "eval": cmd_eval,
    "fit": cmd_fit,
    "report": cmd_report,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except (LesionUncError, ValueError, KeyError, OSError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # never surface a traceback
        print(f"{PROG}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
