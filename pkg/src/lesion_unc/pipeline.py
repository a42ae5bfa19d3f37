"""Directory-level plumbing: per-patient lesion, feature and evaluation passes,
dataset splitting and the multi-feature-set regression run.

A dataset directory holds one sub-directory per patient::

    <patient>/image.nii         intensity image
    <patient>/pred_00.nii ...   M probability samples (lexicographic order)
    <patient>/gt.nii            ground-truth mask (optional)
    <patient>/atlas.nii         structure labels (optional)
    <patient>/centroids.csv     label,name,cx,cy,cz (optional)
"""
from __future__ import annotations

import csv
import glob
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import IoFailure, LesionUncError, TableError
from .evaluation import DEFAULT_TAU, detection_f1, match_predictions
from .features import DEFAULT_BINS, lesion_features, read_centroids, write_centroids
from .instance import (
    DEFAULT_CONNECTIVITY,
    DEFAULT_THRESHOLD,
    Source,
    connected_components,
    label_volume,
)
from .regress import FeatureMatrix, Grid, fit_report
from .uncertainty import SampleSet, lesion_uncertainties, mean_lesion_entropy
from .volio import ensure_dir, format_float, read_nifti, write_nifti, write_table

SAMPLE_GLOB = "pred_*.nii"
LESION_COLUMNS = ("patient_id", "lesion_id", "lsu", "volume_mm3",
                  "centroid_x", "centroid_y", "centroid_z", "mean_entropy")
FEATURE_SETS = ("only_iou_adj", "no_iou_adj", "all")
JOBS_ENV = "LESION_UNC_JOBS"


@dataclass(frozen=True)
class Settings:
    threshold: float = DEFAULT_THRESHOLD
    connectivity: int = DEFAULT_CONNECTIVITY
    bins: int = DEFAULT_BINS
    tau: float = DEFAULT_TAU
    min_size: int = 0


def dump_json(obj, path) -> None:
    try:
        Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_text(text: str, path) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def resolve_jobs(jobs: int | None) -> int:
    """Explicit ``jobs`` wins; otherwise ``$LESION_UNC_JOBS``; otherwise 1."""
    if jobs is None:
        raw = os.environ.get(JOBS_ENV, "").strip()
        if not raw:
            return 1
        try:
            jobs = int(raw)
        except ValueError:
            raise ValueError(f"{JOBS_ENV} must be an integer, got {raw!r}") from None
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    return jobs


# ---------------------------------------------------------------------------
# phantom datasets on disk
# ---------------------------------------------------------------------------

def write_phantoms(ds, out_dir) -> list:
    """Write a :class:`~lesion_unc.synth.PhantomDataset` in the directory layout."""
    from .synth import STRUCTURE_NAMES

    out = ensure_dir(out_dir)
    dump_json(ds.spec.to_dict(), out / "spec.json")
    width = max(2, len(str(ds.spec.M - 1)))
    dirs = []
    for p in ds.patients:
        d = ensure_dir(out / p.patient_id)
        write_nifti(p.image, d / "image.nii")
        write_nifti(p.gt, d / "gt.nii")
        write_nifti(p.atlas, d / "atlas.nii")
        write_centroids(d / "centroids.csv", p.centroids, STRUCTURE_NAMES)
        for m, s in enumerate(p.samples):
            write_nifti(s, d / f"pred_{m:0{width}d}.nii")
        dirs.append(d)
    write_text(oracle_text(ds.oracle), out / "oracle.csv")
    return dirs


def oracle_text(rows) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.writer(buf, lineterminator="\n")
        cols = list(rows[0])
        writer.writerow(cols)
        for r in rows:
            writer.writerow([format_float(v) if isinstance(v, float) else v for v in (r[c] for c in cols)])
    return buf.getvalue()


def find_patients(data_dir) -> list:
    """``(patient_id, path)`` for every sub-directory holding samples, sorted."""
    root = Path(data_dir)
    if not root.is_dir():
        raise IoFailure(f"{data_dir} is not a directory")
    out = [(d.name, d) for d in sorted(root.iterdir())
           if d.is_dir() and any(d.glob(SAMPLE_GLOB))]
    if not out:
        raise IoFailure(f"no patient directories with {SAMPLE_GLOB} under {data_dir}")
    return out


def sample_paths(pattern) -> list:
    paths = sorted(glob.glob(str(pattern)))
    if not paths:
        raise IoFailure(f"no files match {pattern}")
    return paths


def load_samples(paths) -> SampleSet:
    return SampleSet([read_nifti(p, "probability") for p in paths])


# ---------------------------------------------------------------------------
# per-lesion tables
# ---------------------------------------------------------------------------

def lesion_rows(patient_id, mean, lesions, uncs) -> list:
    rows = []
    for L, u in zip(lesions, uncs):
        c = L.centroid_mm
        rows.append({
            "patient_id": patient_id, "lesion_id": L.id, "lsu": u.lsu,
            "volume_mm3": L.volume_mm3, "centroid_x": c[0], "centroid_y": c[1], "centroid_z": c[2],
            "mean_entropy": mean_lesion_entropy(L, mean),
        })
    return rows


def lesions_text(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LESION_COLUMNS)
    for r in rows:
        writer.writerow([r["patient_id"], r["lesion_id"],
                         *(format_float(r[c]) for c in LESION_COLUMNS[2:])])
    return buf.getvalue()


def read_lesions(path) -> list:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or not {"patient_id", "lesion_id", "lsu"} <= set(reader.fieldnames):
        raise TableError(f"{path}: needs patient_id, lesion_id and lsu columns")
    rows = []
    for k, r in enumerate(reader):
        try:
            rows.append({"patient_id": r["patient_id"], "lesion_id": int(r["lesion_id"]),
                         "lsu": float(r["lsu"])})
        except (TypeError, ValueError) as exc:
            raise TableError(f"{path}, line {k + 2}: {exc}") from None
    return rows


def eval_rows(matches) -> list:
    return [{"lesion_id": m.pred_id, "gt_id": m.gt_id, "iou": m.iou, "iou_adj": m.iou_adj,
             "tp": m.tp_flag} for m in matches]


def eval_text(patient_id, matches) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["patient_id", "lesion_id", "gt_id", "iou", "iou_adj", "tp"])
    for m in matches:
        writer.writerow([patient_id, m.pred_id, "" if m.gt_id is None else m.gt_id,
                         format_float(m.iou), format_float(m.iou_adj), int(m.tp_flag)])
    return buf.getvalue()


def feature_matrix(patient_id, image, lesions, lsu_by_id, atlas=None, centroids=None,
                   names=None, bins: int = DEFAULT_BINS, iou_adj_by_id=None) -> FeatureMatrix:
    """One row per lesion: features, then ``lsu`` (and ``iou_adj``) targets."""
    rows = [lesion_features(image, L, atlas, centroids, names, bins) for L in lesions]
    if rows:
        cols = list(rows[0])
    else:
        from .features import RADIOMIC_NAMES
        from .features.location import feature_name, structure_centroids
        cols = list(RADIOMIC_NAMES)
        if atlas is not None:
            cents = centroids if centroids is not None else structure_centroids(atlas)
            cols += [feature_name((names or {}).get(k, k)) for k in sorted(cents)]
    targets = {"lsu": [lsu_by_id[L.id] for L in lesions]}
    if iou_adj_by_id is not None:
        targets["iou_adj"] = [iou_adj_by_id[L.id] for L in lesions]
    X = np.array([[r[c] for c in cols] for r in rows], dtype=np.float64).reshape(len(rows), len(cols))
    return FeatureMatrix([patient_id] * len(lesions), [L.id for L in lesions], cols, X, targets)


# ---------------------------------------------------------------------------
# one patient
# ---------------------------------------------------------------------------

def _optional(path: Path):
    return path if path.exists() else None


def process_patient(patient_id: str, patient_dir, out_dir, settings: Settings = Settings()) -> dict:
    """Lesions, LSU, evaluation and features of one patient directory.

    Writes ``lesions.csv``, ``lesions.nii``, ``features.csv`` and, when a
    ground truth exists, ``eval.json`` / ``eval.csv`` under ``out_dir``.
    Returns ``{"features": FeatureMatrix, "detection": dict | None}``.
    """
    pdir = Path(patient_dir)
    out = ensure_dir(out_dir)
    s = load_samples(sample_paths(pdir / SAMPLE_GLOB))
    mean, lesions, uncs = lesion_uncertainties(s, settings.threshold, settings.connectivity,
                                               settings.min_size)
    write_text(lesions_text(lesion_rows(patient_id, mean, lesions, uncs)), out / "lesions.csv")
    write_nifti(label_volume(lesions, s.like), out / "lesions.nii")

    iou_adj_by_id, detection = None, None
    gt_path = _optional(pdir / "gt.nii")
    if gt_path is not None:
        gt = read_nifti(gt_path, "label")
        gts = connected_components(gt.data > 0, settings.connectivity, source=Source.GROUND_TRUTH)
        matches = match_predictions(lesions, gts, settings.tau)
        detection = detection_f1(lesions, gts, settings.tau)
        dump_json(detection, out / "eval.json")
        write_text(eval_text(patient_id, matches), out / "eval.csv")
        iou_adj_by_id = {m.pred_id: m.iou_adj for m in matches}

    image = read_nifti(pdir / "image.nii", "intensity")
    atlas_path = _optional(pdir / "atlas.nii")
    atlas = read_nifti(atlas_path, "label") if atlas_path else None
    centroids = names = None
    cpath = _optional(pdir / "centroids.csv")
    if atlas is not None and cpath is not None:
        centroids, names = read_centroids(cpath)
    fm = feature_matrix(patient_id, image, lesions, {u.lesion_id: u.lsu for u in uncs},
                        atlas, centroids, names, settings.bins, iou_adj_by_id)
    write_table(fm, out / "features.csv")
    return {"features": fm, "detection": detection}


def _process_one(args):
    return process_patient(*args)


def process_patients(patients, out_dir, settings: Settings = Settings(), jobs: int = 1) -> list:
    """Run :func:`process_patient` over ``patients``; results in input order."""
    out = Path(out_dir)
    tasks = [(pid, pdir, out / pid, settings) for pid, pdir in patients]
    if jobs <= 1 or len(tasks) <= 1:
        return [_process_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(_process_one, tasks))


# ---------------------------------------------------------------------------
# splitting and fitting
# ---------------------------------------------------------------------------

def split_patients(patient_ids, test_fraction: float, seed: int) -> tuple:
    """Seeded patient-level split; returns sorted ``(train_ids, test_ids)``."""
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError(f"test fraction must lie in [0, 1), got {test_fraction}")
    ids = sorted(set(patient_ids))
    n_test = int(round(test_fraction * len(ids)))
    if test_fraction > 0:
        n_test = min(max(n_test, 1), len(ids) - 1)
    perm = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED])).permutation(len(ids))
    test = sorted(ids[i] for i in perm[:n_test])
    return [p for p in ids if p not in test], test


def feature_set(fm: FeatureMatrix, name: str, target: str = "lsu") -> FeatureMatrix:
    """Columns of one comparison: IoU_adj alone, features without it, or both."""
    if name == "no_iou_adj":
        return fm
    if "iou_adj" not in fm.targets:
        raise TableError(f"feature set {name!r} needs an iou_adj column")
    withq = fm.with_target_as_feature("iou_adj")
    if name == "all":
        return withq
    if name == "only_iou_adj":
        return withq.select(["iou_adj"])
    raise ValueError(f"unknown feature set {name!r}; choose from {FEATURE_SETS}")


def fit_feature_sets(train: FeatureMatrix, test: FeatureMatrix, grid: Grid | None = None,
                     seed: int = 17, target: str = "lsu", sets=FEATURE_SETS) -> dict:
    return {
        name: fit_report(feature_set(train, name, target), feature_set(test, name, target),
                         grid, seed, target, label=name)
        for name in sets
    }


def pooled_detection(results) -> dict:
    counts = {"tp": 0, "fp": 0, "fn": 0}
    for r in results:
        if r["detection"] is not None:
            for k in counts:
                counts[k] += r["detection"][k]
    denom = 2 * counts["tp"] + counts["fp"] + counts["fn"]
    return {**counts, "f1": 1.0 if denom == 0 else 2 * counts["tp"] / denom}


def run_pipeline(data_dir, out_dir, settings: Settings = Settings(), seed: int = 17,
                 grid: Grid | None = None, test_fraction: float = 0.3, jobs: int = 1,
                 target: str = "lsu", sets=FEATURE_SETS) -> dict:
    """Whole dataset to ``report.json``; returns the report dict.

    Outputs under ``out_dir``: per-patient folders, ``features.csv``,
    ``train.csv``, ``test.csv``, ``eval.json``, ``report.json``,
    ``report.txt`` and ``coefficients.csv``.
    """
    from .regress.report import coefficients_csv, render

    out = ensure_dir(out_dir)
    patients = find_patients(data_dir)
    results = process_patients(patients, out, settings, jobs)
    fm = FeatureMatrix.concat([r["features"] for r in results])
    write_table(fm, out / "features.csv")
    dump_json({"pooled": pooled_detection(results),
               "per_patient": {pid: r["detection"] for (pid, _), r in zip(patients, results)}},
              out / "eval.json")

    train_ids, test_ids = split_patients(fm.patient_ids, test_fraction, seed)
    is_test = np.isin(np.asarray(fm.patient_ids, dtype=object), test_ids)
    train, test = fm.subset_rows(~is_test), fm.subset_rows(is_test)
    write_table(train, out / "train.csv")
    write_table(test, out / "test.csv")
    if train.n < 2:
        raise LesionUncError("fewer than two training lesions")

    reports = fit_feature_sets(train, test, grid, seed, target, sets)
    report = {
        "master_seed": int(seed),
        "settings": asdict(settings),
        "test_fraction": float(test_fraction),
        "train_patients": train_ids,
        "test_patients": test_ids,
        "feature_sets": reports,
    }
    dump_json(report, out / "report.json")
    write_text(render(reports), out / "report.txt")
    write_text(coefficients_csv(reports), out / "coefficients.csv")
    return report


def reports_of(doc: dict) -> dict:
    """``{feature_set: report}`` from either a single fit report or a pipeline report."""
    if "feature_sets" in doc:
        return doc["feature_sets"]
    if "coefficients" in doc:
        return {doc.get("label") or doc.get("target", "fit"): doc}
    raise TableError("not a fit or pipeline report")
