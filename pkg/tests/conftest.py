import itertools
import sys
from collections import deque

import numpy as np
import pytest

from lesion_unc.instance import LesionInstance, Source
from lesion_unc.volio import Volume


def offsets(connectivity):
    """Neighbour offsets of a voxel, built from the adjacency definition."""
    out = []
    for d in itertools.product((-1, 0, 1), repeat=3):
        nz = sum(1 for c in d if c)
        if nz == 0:
            continue
        if connectivity == 6 and nz > 1:
            continue
        if connectivity == 18 and nz > 2:
            continue
        out.append(d)
    return out


def flood_fill_partition(mask, connectivity):
    """Plain BFS labelling; returns a set of frozensets of voxel tuples."""
    mask = np.asarray(mask, dtype=bool)
    seen = np.zeros_like(mask)
    nbrs = offsets(connectivity)
    parts = set()
    for start in zip(*np.nonzero(mask)):
        if seen[start]:
            continue
        comp = []
        queue = deque([start])
        seen[start] = True
        while queue:
            v = queue.popleft()
            comp.append(tuple(int(c) for c in v))
            for d in nbrs:
                w = (v[0] + d[0], v[1] + d[1], v[2] + d[2])
                if all(0 <= w[i] < mask.shape[i] for i in range(3)) and mask[w] and not seen[w]:
                    seen[w] = True
                    queue.append(w)
        parts.add(frozenset(comp))
    return parts


def instance(voxels, dims, id=1, spacing=(1.0, 1.0, 1.0), source=Source.FINAL):
    """LesionInstance from a list of (x, y, z) voxel tuples."""
    idx = np.sort(np.ravel_multi_index(np.asarray(voxels).T, dims, order="F"))
    return LesionInstance(id, idx, tuple(dims), tuple(spacing), (0.0, 0.0, 0.0), source)


def image_from(values, voxels, dims):
    data = np.zeros(dims)
    for v, x in zip(voxels, values):
        data[tuple(v)] = x
    return Volume(data)


def ball(radius, pad=2):
    n = 2 * radius + 1 + 2 * pad
    g = np.indices((n, n, n)) - (n // 2)
    return (g ** 2).sum(axis=0) <= radius * radius


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        terminalreporter.write_line(results[key])
