import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import instance
from lesion_unc.errors import DimMismatch
from lesion_unc.instance import connected_components, threshold
from lesion_unc.uncertainty import (
    SampleSet,
    binary_entropy,
    correspond,
    lesion_uncertainties,
    lsu,
    mean_prediction,
    voxel_entropy,
    voxel_mutual_information,
)
from lesion_unc.volio import Volume


def prob(data):
    return Volume(np.asarray(data, dtype=np.float64), kind="probability")


def const(value, dims=(2, 2, 2)):
    return prob(np.full(dims, value))


def test_mean_prediction():
    v = prob(np.random.default_rng(0).random((3, 3, 3)))
    assert mean_prediction([v, v, v]).equals(v)
    assert np.all(mean_prediction([const(0), const(1)]).data == 0.5)
    s = [const(0.2), const(0.4), const(0.9)]
    assert mean_prediction(s).data[0, 0, 0] == pytest.approx(0.5, abs=1e-15)


def test_sample_set_needs_two_and_same_grid():
    with pytest.raises(ValueError):
        SampleSet([const(0.1)])
    with pytest.raises(DimMismatch):
        SampleSet([const(0.1), const(0.1, (2, 2, 3))])


def test_entropy_values():
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    assert binary_entropy(0.25) == pytest.approx(0.8112781, abs=1e-7)
    assert voxel_entropy(const(0.25)).data.max() == pytest.approx(0.8112781, abs=1e-7)


def test_mutual_information_values():
    assert np.all(voxel_mutual_information([const(0.3), const(0.3)]).data == 0)
    assert np.all(voxel_mutual_information([const(0.0), const(1.0)]).data == 1.0)
    assert np.all(voxel_mutual_information([const(0.5), const(0.5)]).data == 0.0)


@given(st.floats(0, 1))
def test_entropy_symmetric_and_bounded(p):
    h = binary_entropy(p)
    assert 0.0 <= h <= 1.0
    assert h == pytest.approx(binary_entropy(1 - p), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_mutual_information_below_entropy(M, seed):
    r = np.random.default_rng(seed)
    s = [prob(r.random((3, 3, 3))) for _ in range(M)]
    mi = voxel_mutual_information(s).data
    h = binary_entropy(mean_prediction(s).data)
    assert np.all(mi >= 0)
    assert np.all(mi <= h + 1e-12)


DIMS = (1, 1, 4)


def test_correspond_self_match():
    L = instance([(0, 0, 0), (0, 0, 1)], DIMS)
    assert correspond(L, [instance([(0, 0, 0), (0, 0, 1)], DIMS, id=3)]) == (3, 1.0)


def test_correspond_prefers_higher_iou():
    L = instance([(0, 0, 0), (0, 0, 1)], DIMS)  # {a, b}
    bc = instance([(0, 0, 1), (0, 0, 2)], DIMS, id=1)
    b = instance([(0, 0, 1)], DIMS, id=2)
    mid, iou = correspond(L, [bc, b])
    assert mid == 2 and iou == pytest.approx(0.5)


def test_correspond_disjoint():
    L = instance([(0, 0, 0)], DIMS)
    assert correspond(L, [instance([(0, 0, 3)], DIMS)]) == (None, 0.0)


def test_correspond_tie_goes_to_smaller_id():
    L = instance([(0, 0, 1), (0, 0, 2)], DIMS)
    a = instance([(0, 0, 0), (0, 0, 1)], DIMS, id=5)
    b = instance([(0, 0, 2), (0, 0, 3)], DIMS, id=4)
    assert correspond(L, [a, b])[0] == 4


def _mask_prob(voxels, dims=DIMS):
    d = np.zeros(dims)
    for v in voxels:
        d[v] = 1.0
    return prob(d)


def test_lsu_third():
    L = instance([(0, 0, 0), (0, 0, 1)], DIMS)
    s1 = _mask_prob([(0, 0, 0), (0, 0, 1)])
    s2 = _mask_prob([(0, 0, 1), (0, 0, 2)])
    u = lsu(L, [s1, s2])
    assert u.per_sample_iou == (1.0, pytest.approx(1 / 3))
    assert u.lsu == pytest.approx(1 / 3, abs=1e-12)


def test_lsu_extremes():
    L = instance([(0, 0, 1), (0, 0, 2)], DIMS)
    same = _mask_prob([(0, 0, 1), (0, 0, 2)])
    assert lsu(L, [same, same, same]).lsu == 0.0
    assert lsu(L, [_mask_prob([]), _mask_prob([])]).lsu == 1.0


def test_lsu_grid_mismatch():
    L = instance([(0, 0, 0)], (2, 2, 2))
    with pytest.raises(DimMismatch):
        lsu(L, [const(1.0, DIMS), const(1.0, DIMS)])


def _random_samples(r, M, dims=(10, 10, 8)):
    base = r.random(dims) < 0.15
    out = []
    for _ in range(M):
        flip = r.random(dims) < 0.05
        out.append(prob((base ^ flip).astype(float) * r.uniform(0.6, 1.0, dims)))
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_lsu_invariants(M, seed):
    r = np.random.default_rng(seed)
    s = _random_samples(r, M)
    mean, lesions, uncs = lesion_uncertainties(s)
    perm = [s[i] for i in r.permutation(M)]
    _, _, uncs_p = lesion_uncertainties(perm)
    for L, u, up in zip(lesions, uncs, uncs_p):
        assert 0.0 <= u.lsu <= 1.0
        assert u.lsu == up.lsu  # bitwise
        assert u.lsu == pytest.approx(1 - np.mean(u.per_sample_iou), abs=1e-12)
        exact = all(
            any(np.array_equal(c.index, L.index) for c in connected_components(threshold(v.data, 0.55)))
            for v in s
        )
        assert (u.lsu == 0.0) == exact


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_adding_the_fused_prediction_never_raises_lsu(M, seed):
    r = np.random.default_rng(seed)
    s = _random_samples(r, M)
    mean, lesions, uncs = lesion_uncertainties(s)
    fused = prob(threshold(mean.data, 0.55).astype(float))
    for L, u in zip(lesions, uncs):
        assert lsu(L, [*s, fused]).lsu <= u.lsu + 1e-15
