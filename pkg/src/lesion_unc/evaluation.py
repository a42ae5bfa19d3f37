"""Instance-level scoring of predicted lesions against ground truth.

The adjusted IoU of a predicted lesion ``P`` against its matched
ground-truth lesion ``G`` removes from the union the part of ``G`` that is
already covered by *other* predicted lesions::

    iou_adj = |P & G| / (|P | G| - |(G & others) - P|)

so a ground-truth lesion split across several predictions does not penalise
each fragment for the voxels its siblings explain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BothEmpty

DEFAULT_TAU = 0.25


def _index(x) -> np.ndarray:
    if isinstance(x, (list, tuple, np.ndarray)):
        return np.asarray(x, dtype=np.int64)
    return x.index


def iou(a, b) -> float:
    """IoU of two voxel sets (linear-index arrays or instances)."""
    a, b = np.unique(_index(a)), np.unique(_index(b))
    if a.size == 0 and b.size == 0:
        raise BothEmpty("IoU undefined for two empty sets")
    inter = np.intersect1d(a, b, assume_unique=True).size
    return inter / (a.size + b.size - inter)


def iou_adj(pred, gt, others=()) -> float:
    """Adjusted IoU; 0 when ``gt`` is empty."""
    p = np.unique(_index(pred))
    g = np.unique(_index(gt))
    if p.size == 0:
        raise ValueError("predicted lesion is empty")
    if g.size == 0:
        return 0.0
    o = np.unique(_index(others))
    inter = np.intersect1d(p, g, assume_unique=True).size
    union = p.size + g.size - inter
    explained = np.setdiff1d(np.intersect1d(g, o, assume_unique=True), p, assume_unique=True).size
    return inter / (union - explained)


@dataclass(frozen=True)
class MatchResult:
    pred_id: int
    gt_id: int | None
    iou: float
    iou_adj: float
    tp_flag: bool = False


def _overlaps(preds, gts) -> dict:
    """Intersection counts keyed by (pred_id, gt_id) for touching pairs."""
    if not preds or not gts:
        return {}
    dims = preds[0].dims
    gt_map = np.zeros(int(np.prod(dims)), dtype=np.int64)
    for g in gts:
        gt_map[g.index] = g.id
    out = {}
    for p in preds:
        ids, counts = np.unique(gt_map[p.index], return_counts=True)
        for gid, c in zip(ids, counts):
            if gid:
                out[(p.id, int(gid))] = int(c)
    return out


def _others_union(preds, exclude_id) -> np.ndarray:
    parts = [p.index for p in preds if p.id != exclude_id]
    return np.unique(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)


def pairwise_iou_adj(preds, gts) -> dict:
    """IoU and IoU_adj for every touching (pred, gt) pair."""
    preds, gts = list(preds), list(gts)
    gt_by_id = {g.id: g for g in gts}
    pred_by_id = {p.id: p for p in preds}
    out = {}
    for (pid, gid), inter in _overlaps(preds, gts).items():
        p, g = pred_by_id[pid], gt_by_id[gid]
        plain = inter / (p.size + g.size - inter)
        out[(pid, gid)] = (plain, iou_adj(p, g, _others_union(preds, pid)))
    return out


def match_predictions(preds, gts, tau: float = DEFAULT_TAU) -> list:
    """Per predicted lesion: matched gt (max IoU, ties to smaller id), IoU and IoU_adj.

    ``tp_flag`` follows the one-to-one assignment of :func:`detection_f1`.
    Unmatched predictions get ``iou = iou_adj = 0``.
    """
    preds, gts = list(preds), list(gts)
    pairs = pairwise_iou_adj(preds, gts)
    tp_pairs = set(_greedy_assign(pairs, tau))
    results = []
    for p in sorted(preds, key=lambda x: x.id):
        cands = sorted((gid, v) for (pid, gid), v in pairs.items() if pid == p.id)
        best_gid, best = None, (0.0, 0.0)
        for gid, v in cands:
            if v[0] > best[0]:
                best_gid, best = gid, v
        results.append(MatchResult(p.id, best_gid, best[0], best[1],
                                   (p.id, best_gid) in tp_pairs if best_gid is not None else False))
    return results


def _greedy_assign(pairs: dict, tau: float) -> list:
    ranked = sorted(pairs.items(), key=lambda kv: (-kv[1][1], kv[0][0], kv[0][1]))
    used_p, used_g, chosen = set(), set(), []
    for (pid, gid), (_, adj) in ranked:
        if adj <= tau:
            break
        if pid in used_p or gid in used_g:
            continue
        used_p.add(pid)
        used_g.add(gid)
        chosen.append((pid, gid))
    return chosen


def detection_f1(preds, gts, tau: float = DEFAULT_TAU) -> dict:
    """Lesion-wise detection counts and F1.

    A prediction is a true positive when it is assigned to a ground-truth
    lesion with ``iou_adj > tau``; assignment is one-to-one and greedy in
    descending IoU_adj.
    """
    if not 0.0 <= tau < 1.0:
        raise ValueError(f"tau must lie in [0, 1), got {tau}")
    preds, gts = list(preds), list(gts)
    tp = len(_greedy_assign(pairwise_iou_adj(preds, gts), tau))
    fp, fn = len(preds) - tp, len(gts) - tp
    denom = 2 * tp + fp + fn
    return {"tp": tp, "fp": fp, "fn": fn, "f1": 1.0 if denom == 0 else 2 * tp / denom}
