import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import instance
from lesion_unc.errors import BothEmpty
from lesion_unc.evaluation import detection_f1, iou, iou_adj, match_predictions, pairwise_iou_adj
from lesion_unc.instance import connected_components


def test_iou_basics():
    assert iou([1, 2, 3], [1, 2, 3]) == 1.0
    assert iou([1, 2], [3, 4]) == 0.0
    assert iou([1, 2], [2, 3]) == pytest.approx(1 / 3)
    with pytest.raises(BothEmpty):
        iou([], [])


def test_iou_adj_examples():
    a, b, c = 0, 1, 2
    assert iou_adj([a, b], [a, b, c], []) == iou([a, b], [a, b, c])
    assert iou_adj([a, b], [a, b, c], [b, c]) == 1.0
    assert iou_adj([a], [b, c], [b]) == 0.0
    assert iou_adj([a], [], []) == 0.0


DIMS = (1, 1, 12)


def inst(zs, id=1):
    return instance([(0, 0, z) for z in zs], DIMS, id=id)


def test_f1_identical_sets():
    g = [inst([0, 1], 1), inst([5, 6, 7], 2)]
    p = [inst([0, 1], 1), inst([5, 6, 7], 2)]
    assert detection_f1(p, g)["f1"] == 1.0


def test_f1_no_predictions():
    assert detection_f1([], [inst([0])]) == {"tp": 0, "fp": 0, "fn": 1, "f1": 0.0}
    assert detection_f1([], [])["f1"] == 1.0


def test_f1_two_thirds():
    g = [inst([0, 1], 1)]
    p = [inst([0], 1), inst([8, 9], 2)]  # IoU_adj 0.5 and disjoint
    out = detection_f1(p, g)
    assert out == {"tp": 1, "fp": 1, "fn": 0, "f1": pytest.approx(2 / 3)}


def test_each_gt_detected_once():
    g = [inst([0, 1, 2, 3], 1)]
    p = [inst([0, 1], 1), inst([3], 2)]
    # the second fragment's IoU_adj is 1/2 once the first explains two voxels
    out = detection_f1(p, g)
    assert out["tp"] == 1 and out["fp"] == 1


def test_match_results_fields():
    g = [inst([0, 1, 2], 1)]
    p = [inst([0, 1], 1), inst([2], 2), inst([9], 3)]
    res = {m.pred_id: m for m in match_predictions(p, g)}
    assert res[1].gt_id == 1 and res[1].iou == pytest.approx(2 / 3) and res[1].iou_adj == 1.0
    assert res[3].gt_id is None and res[3].iou_adj == 0.0 and not res[3].tp_flag
    assert res[1].tp_flag


def _random_instances(r, dims=(8, 8, 8), p=0.08):
    return connected_components(r.random(dims) < p, 26)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_iou_adj_bounds(seed):
    r = np.random.default_rng(seed)
    preds, gts = _random_instances(r), _random_instances(r)
    for (pid, gid), (plain, adj) in pairwise_iou_adj(preds, gts).items():
        assert 0.0 <= plain <= adj <= 1.0 + 1e-15
    for m in match_predictions(preds, gts):
        assert m.iou <= m.iou_adj
        if m.tp_flag:
            assert m.gt_id is not None


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_f1_invariant_to_relabelling(seed):
    r = np.random.default_rng(seed)
    preds, gts = _random_instances(r), _random_instances(r)
    base = detection_f1(preds, gts)
    perm = r.permutation(len(preds)) + 1
    relabelled = [instance(L.coords, L.dims, id=int(perm[k])) for k, L in enumerate(preds)]
    assert detection_f1(relabelled, gts) == base


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_extra_false_positive_never_helps(seed):
    r = np.random.default_rng(seed)
    dims = (8, 8, 9)
    mask = r.random(dims) < 0.08
    mask[:, :, 7:] = False
    preds = connected_components(mask & (r.random(dims) < 0.8), 26)
    gts = connected_components(mask, 26)
    fp = instance([(0, 0, 8), (1, 0, 8)], dims, id=len(preds) + 1)
    assert detection_f1([*preds, fp], gts)["f1"] <= detection_f1(preds, gts)["f1"]


def test_tau_range():
    with pytest.raises(ValueError):
        detection_f1([], [], tau=1.0)
