"""Atlas-based lesion location features.

A lesion belongs to the atlas structure it overlaps most (ties to the
smaller label). Its location feature for that structure is the distance in
millimetres between the lesion centroid and the structure centroid; every
other structure's feature is zero.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..errors import IoFailure, TableError


def feature_name(name) -> str:
    return f"Dist_{name}"


def structure_centroids(atlas) -> dict:
    """Centroid (mm) of every non-zero label of ``atlas``."""
    flat = atlas.flat
    fg = np.flatnonzero(flat)
    labels = flat[fg]
    coords = np.stack(np.unravel_index(fg, atlas.dims, order="F"), axis=1).astype(np.float64)
    out = {}
    for lab in np.unique(labels):
        c = coords[labels == lab].mean(axis=0)
        out[int(lab)] = tuple(atlas.to_physical(c))
    return out


def read_centroids(path) -> tuple:
    """Read ``label,name,cx,cy,cz`` rows; returns ``(centroids, names)``."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    rows = list(csv.DictReader(text.splitlines()))
    centroids, names = {}, {}
    for k, row in enumerate(rows):
        try:
            lab = int(row["label"])
            centroids[lab] = (float(row["cx"]), float(row["cy"]), float(row["cz"]))
            names[lab] = row["name"]
        except (KeyError, TypeError, ValueError) as exc:
            raise TableError(f"{path}, row {k + 2}: bad centroid row ({exc})") from None
    return centroids, names


def write_centroids(path, centroids: dict, names: dict) -> None:
    lines = ["label,name,cx,cy,cz"]
    for lab in sorted(centroids):
        cx, cy, cz = centroids[lab]
        lines.append(f"{lab},{names.get(lab, lab)},{float(cx)!r},{float(cy)!r},{float(cz)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def assign_structure(lesion, atlas) -> int | None:
    labels = atlas.flat[lesion.index]
    labels = labels[labels > 0]
    if labels.size == 0:
        return None
    counts = np.bincount(labels)
    return int(np.argmax(counts))  # argmax returns the first, i.e. smaller, label on ties


def location_features(lesion, atlas, centroids: dict | None = None, names: dict | None = None) -> dict:
    if centroids is None:
        centroids = structure_centroids(atlas)
    names = names or {}
    out = {feature_name(names.get(lab, lab)): 0.0 for lab in sorted(centroids)}
    lab = assign_structure(lesion, atlas)
    if lab is not None and lab in centroids:
        dist = np.linalg.norm(lesion.centroid_mm - np.asarray(centroids[lab], dtype=np.float64))
        out[feature_name(names.get(lab, lab))] = float(dist)
    return out
