"""Fusion of sampled predictions and voxel / lesion scale uncertainty.

Lesion structural uncertainty (LSU) of a predicted lesion ``L`` is one minus
the mean, over the ``M`` sampled predictions, of the IoU between ``L`` and its
best-matching connected component in that sample. Samples are binarised with
the same threshold as the fused prediction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch
from .instance import (
    DEFAULT_CONNECTIVITY,
    DEFAULT_THRESHOLD,
    LesionInstance,
    Source,
    connected_components,
    instances_from_labels,
    label_components,
    threshold,
)
from .volio import Volume


class SampleSet:
    """``M >= 2`` probability maps on one grid, in a fixed order."""

    def __init__(self, samples):
        samples = list(samples)
        if len(samples) < 2:
            raise ValueError(f"need at least 2 samples, got {len(samples)}")
        first = samples[0]
        for k, s in enumerate(samples):
            if not isinstance(s, Volume):
                raise TypeError("samples must be Volume objects")
            if not first.same_grid(s):
                raise DimMismatch(
                    f"sample {k} has dims {s.dims} / spacing {s.spacing}, "
                    f"expected {first.dims} / {first.spacing}"
                )
        self.samples = tuple(samples)

    @property
    def M(self) -> int:
        return len(self.samples)

    @property
    def like(self) -> Volume:
        return self.samples[0]

    def stack(self) -> np.ndarray:
        return np.stack([s.data for s in self.samples]).astype(np.float64)

    def __iter__(self):
        return iter(self.samples)

    def __len__(self):
        return self.M


def _sample_set(s) -> SampleSet:
    return s if isinstance(s, SampleSet) else SampleSet(s)


def mean_prediction(s) -> Volume:
    s = _sample_set(s)
    stack = s.stack()
    mean = np.clip(stack.mean(axis=0), 0.0, 1.0)
    # where all members agree the mean is that value, not a rounded copy
    agree = stack.min(axis=0) == stack.max(axis=0)
    mean[agree] = stack[0][agree]
    return s.like.with_data(mean, kind="probability")


def binary_entropy(p) -> np.ndarray:
    """Base-2 binary entropy with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=np.float64)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log2(p), 0.0) - np.where(q > 0, q * np.log2(q), 0.0)
    return np.clip(h, 0.0, 1.0)


def voxel_entropy(p: Volume) -> Volume:
    return p.with_data(binary_entropy(p.data), kind="intensity")


def voxel_mutual_information(s) -> Volume:
    """Entropy of the mean minus mean member entropy, clamped at zero."""
    s = _sample_set(s)
    stack = s.stack()
    mi = binary_entropy(stack.mean(axis=0)) - binary_entropy(stack).mean(axis=0)
    return s.like.with_data(np.maximum(mi, 0.0), kind="intensity")


def correspond(lesion: LesionInstance, candidates) -> tuple:
    """Best-matching candidate by IoU.

    Returns ``(id, iou)``; ``(None, 0.0)`` when no candidate touches the
    lesion. Ties go to the smallest candidate id.
    """
    best_id, best = None, 0.0
    for c in sorted(candidates, key=lambda c: c.id):
        inter = np.intersect1d(lesion.index, c.index, assume_unique=True).size
        if inter == 0:
            continue
        iou = inter / (lesion.size + c.size - inter)
        if iou > best:
            best_id, best = c.id, iou
    return best_id, best


class SampleComponents:
    """Components of one binarised sample, with a label map for lookups."""

    def __init__(self, sample: Volume, t: float, connectivity: int, m: int | None = None):
        labels, _ = label_components(threshold(sample.data, t), connectivity)
        self.flat_labels = labels.ravel(order="F")
        self.instances = {
            inst.id: inst
            for inst in instances_from_labels(labels, sample.spacing, sample.origin,
                                              Source.SAMPLE, m)
        }

    def candidates(self, lesion: LesionInstance) -> list:
        ids = np.unique(self.flat_labels[lesion.index])
        return [self.instances[int(i)] for i in ids if i != 0]

    def match(self, lesion: LesionInstance) -> tuple:
        return correspond(lesion, self.candidates(lesion))


@dataclass(frozen=True)
class LesionUncertainty:
    lesion_id: int
    per_sample_iou: tuple
    lsu: float
    matched_ids: tuple = ()


def sample_components(s, t: float = DEFAULT_THRESHOLD,
                      connectivity: int = DEFAULT_CONNECTIVITY) -> list:
    """Per-sample component caches, built once and shared by every lesion."""
    s = _sample_set(s)
    return [SampleComponents(v, t, connectivity, m) for m, v in enumerate(s)]


def lsu(lesion: LesionInstance, s, t: float = DEFAULT_THRESHOLD,
        connectivity: int = DEFAULT_CONNECTIVITY, cache=None) -> LesionUncertainty:
    """Lesion structural uncertainty of one fused-prediction lesion."""
    if cache is None:
        s = _sample_set(s)
        if s.like.dims != tuple(lesion.dims):
            raise DimMismatch(f"lesion grid {lesion.dims} vs samples {s.like.dims}")
        cache = sample_components(s, t, connectivity)
    matches = [c.match(lesion) for c in cache]
    ious = tuple(float(iou) for _, iou in matches)
    # exactly rounded sum: independent of sample order
    value = 1.0 - math.fsum(ious) / len(ious)
    return LesionUncertainty(lesion.id, ious, min(max(value, 0.0), 1.0),
                             tuple(mid for mid, _ in matches))


def lesion_uncertainties(s, t: float = DEFAULT_THRESHOLD,
                         connectivity: int = DEFAULT_CONNECTIVITY, min_size: int = 0) -> tuple:
    """Fuse samples, extract predicted lesions and score each with LSU.

    Returns ``(mean_volume, lesions, uncertainties)``.
    """
    s = _sample_set(s)
    mean = mean_prediction(s)
    lesions = connected_components(threshold(mean, t), connectivity, min_size=min_size)
    cache = sample_components(s, t, connectivity)
    return mean, lesions, [lsu(L, s, t, connectivity, cache=cache) for L in lesions]


def mean_lesion_entropy(lesion: LesionInstance, mean: Volume) -> float:
    """Average voxel entropy of the fused prediction over the lesion."""
    return float(binary_entropy(mean.flat[lesion.index]).mean())
