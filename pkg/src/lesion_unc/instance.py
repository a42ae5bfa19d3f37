"""Lesion instances as 3D connected components of binary masks."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage as ndi

from .volio import Volume

DEFAULT_CONNECTIVITY = 26
DEFAULT_THRESHOLD = 0.55

# face / face+edge / full Chebyshev neighbourhood
_RANK = {6: 1, 18: 2, 26: 3}


class Source(Enum):
    FINAL = "final"
    SAMPLE = "sample"
    GROUND_TRUTH = "gt"


@dataclass(frozen=True, eq=False)
class LesionInstance:
    """One connected component of a binary mask.

    ``index`` holds the sorted x-fastest linear indices of the component's
    voxels; ``coords`` the matching ``(n, 3)`` voxel coordinates.
    """

    id: int
    index: np.ndarray
    dims: tuple
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)
    source: Source = Source.FINAL
    sample: int | None = None

    @property
    def size(self) -> int:
        return int(self.index.size)

    @property
    def coords(self) -> np.ndarray:
        return np.stack(np.unravel_index(self.index, self.dims, order="F"), axis=1)

    @property
    def volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return self.size * sx * sy * sz

    @property
    def centroid_mm(self) -> np.ndarray:
        c = self.coords.mean(axis=0)
        return np.asarray(self.origin) + c * np.asarray(self.spacing)

    def mask(self) -> np.ndarray:
        m = np.zeros(int(np.prod(self.dims)), dtype=bool)
        m[self.index] = True
        return m.reshape(self.dims, order="F")


def _as_array(mask) -> np.ndarray:
    return mask.data if isinstance(mask, Volume) else np.asarray(mask)


def threshold(prob, t: float = DEFAULT_THRESHOLD):
    """Binarise a probability map: foreground iff ``prob > t``.

    Returns a label :class:`Volume` when given a :class:`Volume`, otherwise a
    boolean array.
    """
    if not 0.0 < t < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {t}")
    data = _as_array(prob)
    out = data > t
    if isinstance(prob, Volume):
        return prob.with_data(out, kind="label")
    return out


def structure(connectivity: int) -> np.ndarray:
    if connectivity not in _RANK:
        raise ValueError(f"connectivity must be 6, 18 or 26, got {connectivity}")
    return ndi.generate_binary_structure(3, _RANK[connectivity])


def label_components(mask, connectivity: int = DEFAULT_CONNECTIVITY) -> tuple:
    """Label map with ids ordered by each component's smallest linear index.

    Returns ``(labels, count)`` where ``labels`` is an int32 array indexed
    ``[x, y, z]``.
    """
    arr = _as_array(mask).astype(bool)
    raw, count = ndi.label(arr, structure=structure(connectivity))
    if count == 0:
        return raw.astype(np.int32), 0
    flat = raw.ravel(order="F")
    present, first = np.unique(flat, return_index=True)
    present, first = present[1:], first[1:]  # drop background
    order = np.argsort(first, kind="stable")
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[present[order]] = np.arange(1, count + 1, dtype=np.int32)
    return remap[raw], count


def instances_from_labels(labels, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0),
                          source: Source = Source.FINAL, sample: int | None = None,
                          min_size: int = 0) -> list:
    """Split a label map into one :class:`LesionInstance` per non-zero label.

    Labels keep their values as instance ids. Instances smaller than
    ``min_size`` voxels are dropped.
    """
    if isinstance(labels, Volume):
        spacing, origin = labels.spacing, labels.origin
    arr = _as_array(labels)
    dims = tuple(int(n) for n in arr.shape)
    flat = arr.ravel(order="F")
    fg = np.flatnonzero(flat)
    if fg.size == 0:
        return []
    ids = flat[fg]
    order = np.argsort(ids, kind="stable")  # keeps linear order within a label
    ids_sorted, idx_sorted = ids[order], fg[order]
    uniq, starts = np.unique(ids_sorted, return_index=True)
    bounds = np.append(starts, ids_sorted.size)
    out = []
    for k, lab in enumerate(uniq):
        idx = idx_sorted[bounds[k]:bounds[k + 1]]
        if idx.size < min_size:
            continue
        idx.setflags(write=False)
        out.append(LesionInstance(int(lab), idx, dims, tuple(spacing), tuple(origin), source, sample))
    return out


def connected_components(mask, connectivity: int = DEFAULT_CONNECTIVITY, *,
                         min_size: int = 0, source: Source = Source.FINAL,
                         sample: int | None = None) -> list:
    """Extract lesion instances from a binary mask.

    Ids run from 1 in the order of each component's smallest x-fastest linear
    index. With ``min_size > 0`` small components are removed *after*
    numbering, so ids stay tied to the unfiltered partition.
    """
    labels, _ = label_components(mask, connectivity)
    spacing = mask.spacing if isinstance(mask, Volume) else (1.0, 1.0, 1.0)
    origin = mask.origin if isinstance(mask, Volume) else (0.0, 0.0, 0.0)
    return instances_from_labels(labels, spacing, origin, source, sample, min_size)


def label_volume(instances, like: Volume) -> Volume:
    """Paint instances into a label volume on the grid of ``like``."""
    flat = np.zeros(like.nvox, dtype=np.int32)
    for inst in instances:
        flat[inst.index] = inst.id
    return Volume(flat.reshape(like.dims, order="F"), like.spacing, like.origin, "label")
