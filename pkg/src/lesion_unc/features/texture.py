"""Gray-level run-length (GLRLM) and dependence (GLDM) texture features.

Both operate on a lesion discretised into ``Nb`` equal-width bins spanning
the lesion's own intensity range. Voxels outside the lesion carry level 0
and never take part in a run or a dependence.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

DEFAULT_BINS = 16

NAMES = (
    "GLDM_SmallDependenceEmphasis",
    "GLDM_SmallDependenceLowGrayLevelEmphasis",
    "GLRLM_ShortRunEmphasis",
    "GLRLM_RunLengthNonUniformity",
)

# one of each +/- pair: the first non-zero component is positive
DIRECTIONS_3D = tuple(
    d for d in itertools.product((-1, 0, 1), repeat=3)
    if any(d) and next(c for c in d if c) > 0
)
NEIGHBOURS_26 = tuple(d for d in itertools.product((-1, 0, 1), repeat=3) if any(d))


@dataclass(frozen=True, eq=False)
class DiscretizedRoi:
    """Lesion gray levels ``1..nb`` in a zero-padded box; 0 marks outside."""

    levels: np.ndarray
    nb: int

    @classmethod
    def from_levels(cls, levels, nb: int | None = None) -> "DiscretizedRoi":
        arr = np.asarray(levels, dtype=np.int64)
        while arr.ndim < 3:
            arr = arr[..., np.newaxis]
        arr = np.pad(arr, 1)
        if arr.max() < 1:
            raise ValueError("ROI has no voxels")
        return cls(arr, int(nb if nb is not None else arr.max()))

    @property
    def voxel_levels(self) -> np.ndarray:
        return self.levels[self.levels > 0]


def discretize(img, lesion, nb: int = DEFAULT_BINS) -> DiscretizedRoi:
    """Bin lesion intensities uniformly over ``[min, max]`` into ``1..nb``."""
    if nb < 2:
        raise ValueError(f"bin count must be >= 2, got {nb}")
    x = np.asarray(img.flat[lesion.index], dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty lesion")
    lo, hi = x.min(), x.max()
    if hi > lo:
        lv = np.minimum(nb, 1 + np.floor(nb * (x - lo) / (hi - lo)).astype(np.int64))
    else:
        lv = np.ones(x.size, dtype=np.int64)
    coords = lesion.coords
    local = coords - coords.min(axis=0) + 1
    box = np.zeros(tuple(local.max(axis=0) + 2), dtype=np.int64)
    box[tuple(local.T)] = lv
    return DiscretizedRoi(box, nb)


def run_lengths(levels: np.ndarray, direction) -> tuple:
    """Level and length of every maximal run along ``direction``.

    ``levels`` must carry a zero border so that no run leaves the array.
    """
    d = np.asarray(direction)
    inside = levels > 0
    shape = np.asarray(levels.shape)
    prev = np.zeros_like(levels)
    src = tuple(slice(max(0, -k), n - max(0, k)) for k, n in zip(d, shape))
    dst = tuple(slice(max(0, k), n - max(0, -k)) for k, n in zip(d, shape))
    prev[dst] = levels[src]  # prev[v] = levels[v - d]
    starts = np.argwhere(inside & (prev != levels))
    run_level = levels[tuple(starts.T)]
    length = np.ones(len(starts), dtype=np.int64)
    alive = np.ones(len(starts), dtype=bool)
    while alive.any():
        idx = np.flatnonzero(alive)
        nxt = starts[idx] + d * length[idx, None]
        ext = levels[tuple(nxt.T)] == run_level[idx]
        length[idx[ext]] += 1
        alive[idx[~ext]] = False
    return run_level, length


def glrlm_features(roi: DiscretizedRoi, directions=DIRECTIONS_3D) -> dict:
    """Short-run emphasis and run-length non-uniformity, averaged over directions."""
    sre, rln = [], []
    for d in directions:
        _, length = run_lengths(roi.levels, d)
        nr = length.size
        sre.append(np.sum(1.0 / length.astype(np.float64) ** 2) / nr)
        per_length = np.bincount(length).astype(np.float64)
        rln.append(np.sum(per_length ** 2) / nr)
    return {
        "GLRLM_ShortRunEmphasis": float(np.mean(sre)),
        "GLRLM_RunLengthNonUniformity": float(np.mean(rln)),
    }


def dependence_counts(levels: np.ndarray, alpha: int = 0) -> np.ndarray:
    """Per-voxel dependence ``1 + #{26-neighbours with |level diff| <= alpha}``."""
    inside = levels > 0
    dep = np.ones(levels.shape, dtype=np.int64)
    core = tuple(slice(1, n - 1) for n in levels.shape)
    centre = levels[core]
    for off in NEIGHBOURS_26:
        nb = levels[tuple(slice(1 + o, n - 1 + o) for o, n in zip(off, levels.shape))]
        dep[core] += (nb > 0) & (np.abs(nb - centre) <= alpha)
    return dep[inside]


def gldm_features(roi: DiscretizedRoi, alpha: int = 0) -> dict:
    i = roi.levels[roi.levels > 0].astype(np.float64)
    j = dependence_counts(roi.levels, alpha).astype(np.float64)
    nz = i.size
    return {
        "GLDM_SmallDependenceEmphasis": float(np.sum(1.0 / j ** 2) / nz),
        "GLDM_SmallDependenceLowGrayLevelEmphasis": float(np.sum(1.0 / (i ** 2 * j ** 2)) / nz),
    }


def texture(img, lesion, nb: int = DEFAULT_BINS) -> dict:
    roi = discretize(img, lesion, nb)
    return {**gldm_features(roi), **glrlm_features(roi)}
