"""Standardisation, grouped cross-validation and repeated-seed model reports.

The explanatory pipeline is ``standardize -> rfe -> fit_elasticnet``. Its
hyperparameters (kept feature fraction, penalty strength, L1 share,
intercept) are chosen by patient-grouped 5-fold CV on R^2. The whole
selection is repeated for 10 seeds derived from one master seed; only the
fold assignment depends on the seed.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConstantTarget, TooFewGroups
from .elasticnet import fit_elasticnet
from .matrix import FeatureMatrix
from .tree import DEFAULT_MAX_DEPTH, DEFAULT_MIN_LEAF, elimination_order, selection_from_order

N_FOLDS = 5
N_REPEATS = 10


@dataclass
class Grid:
    keep_fraction: list = field(default_factory=lambda: [0.25, 0.5, 0.75, 1.0])
    alpha: list = field(default_factory=lambda: [float(a) for a in np.logspace(-4, 0, 9)])
    l1_ratio: list = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    fit_intercept: list = field(default_factory=lambda: [True, False])

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        unknown = set(d) - {"keep_fraction", "alpha", "l1_ratio", "fit_intercept"}
        if unknown:
            raise ValueError(f"unknown grid keys {sorted(unknown)}")
        g = cls()
        for k, v in d.items():
            v = list(v)
            if not v:
                raise ValueError(f"grid entry {k!r} is empty")
            setattr(g, k, [bool(x) for x in v] if k == "fit_intercept" else [float(x) for x in v])
        return g

    @classmethod
    def from_json(cls, path) -> "Grid":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def __len__(self):
        return len(self.keep_fraction) * len(self.alpha) * len(self.l1_ratio) * len(self.fit_intercept)


@dataclass(frozen=True)
class Choice:
    keep_fraction: float
    alpha: float
    l1_ratio: float
    fit_intercept: bool

    def tie_key(self):
        # preferred first: smaller alpha, larger l1_ratio, smaller keep, intercept on
        return (self.alpha, -self.l1_ratio, self.keep_fraction, not self.fit_intercept)


@dataclass
class Standardizer:
    names: list
    kept: list
    dropped: list
    mean: np.ndarray
    std: np.ndarray

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        idx = [self.names.index(n) for n in self.kept]
        return (X[:, idx] - self.mean) / self.std


def _is_constant(mean: float, std: float) -> bool:
    return std == 0.0 or std <= 1e-12 * abs(mean)


def standardize(X, names=None) -> tuple:
    """Z-score columns (population std); constant columns are dropped.

    Accepts a :class:`FeatureMatrix` or an array plus ``names``. Returns the
    standardised array of retained columns and the fitted
    :class:`Standardizer`.
    """
    if isinstance(X, FeatureMatrix):
        names, X = X.names, X.X
    X = np.asarray(X, dtype=np.float64)
    names = list(names) if names is not None else [str(j) for j in range(X.shape[1])]
    if X.shape[0] < 2:
        raise ValueError("standardisation needs at least two rows")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    keep = [j for j in range(X.shape[1]) if not _is_constant(mean[j], std[j])]
    st = Standardizer(
        names=names,
        kept=[names[j] for j in keep],
        dropped=[names[j] for j in range(X.shape[1]) if j not in keep],
        mean=mean[keep],
        std=std[keep],
    )
    return (X[:, keep] - st.mean) / st.std, st


def r2(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.size < 2:
        raise ValueError("R^2 needs at least two observations")
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise ConstantTarget("R^2 undefined for a constant target")
    return 1.0 - float(np.sum((y_true - y_pred) ** 2)) / ss_tot


def group_folds(groups, n_folds: int = N_FOLDS, seed: int = 0) -> np.ndarray:
    """Fold index per row; every group lands in exactly one fold.

    Groups are shuffled with ``seed`` and then dealt, largest first, to the
    fold currently holding the fewest rows (ties to the lower fold).
    """
    groups = np.asarray(groups, dtype=object)
    uniq = list(dict.fromkeys(groups.tolist()))
    if len(uniq) < n_folds:
        raise TooFewGroups(f"{len(uniq)} groups cannot fill {n_folds} folds")
    rng = np.random.default_rng(seed)
    perm = [uniq[i] for i in rng.permutation(len(uniq))]
    sizes = {g: int(np.sum(groups == g)) for g in uniq}
    perm.sort(key=lambda g: -sizes[g])  # stable: shuffled order breaks size ties
    load = [0] * n_folds
    fold_of = {}
    for g in perm:
        f = int(np.argmin(load))
        fold_of[g] = f
        load[f] += sizes[g]
    return np.array([fold_of[g] for g in groups.tolist()], dtype=np.int64)


@dataclass
class PipelineFit:
    """A fitted standardize -> rfe -> ElasticNet pipeline."""

    standardizer: Standardizer
    selected: list
    model: object

    def predict(self, X) -> np.ndarray:
        Z = self.standardizer.transform(X)
        cols = [self.standardizer.kept.index(n) for n in self.selected]
        return self.model.predict(Z[:, cols])

    def coefficients(self) -> dict:
        return dict(zip(self.selected, (float(w) for w in self.model.weights)))


def fit_pipeline(X, y, names, choice: Choice, max_depth: int = DEFAULT_MAX_DEPTH,
                 min_leaf: int = DEFAULT_MIN_LEAF) -> PipelineFit:
    Z, st = standardize(X, names)
    removed = elimination_order(Z, y, max_depth, min_leaf)
    cols = selection_from_order(Z.shape[1], removed, choice.keep_fraction)
    model = fit_elasticnet(Z[:, cols], y, choice.alpha, choice.l1_ratio, choice.fit_intercept,
                           names=[st.kept[j] for j in cols])
    return PipelineFit(st, [st.kept[j] for j in cols], model)


def _fold_scores(Xtr, ytr, Xva, yva, names, grid: Grid, max_depth, min_leaf) -> dict:
    """Validation R^2 of every grid point on one fold."""
    Ztr, st = standardize(Xtr, names)
    Zva = st.transform(Xva)
    removed = elimination_order(Ztr, ytr, max_depth, min_leaf)
    constant = float(np.sum((yva - yva.mean()) ** 2)) == 0.0
    scores = {}
    alphas = sorted(grid.alpha, reverse=True)  # warm start from strong to weak penalty
    for keep in grid.keep_fraction:
        cols = selection_from_order(Ztr.shape[1], removed, keep)
        A, B = Ztr[:, cols], Zva[:, cols]
        for l1, icpt in itertools.product(grid.l1_ratio, grid.fit_intercept):
            init = None
            for a in alphas:
                m = fit_elasticnet(A, ytr, a, l1, icpt, init=init)
                init = (m.weights, m.intercept)
                key = Choice(keep, a, l1, icpt)
                scores[key] = math.nan if constant else r2(yva, m.predict(B))
    return scores


def cv_select(X, y, groups, grid: Grid | None = None, seed: int = 0, names=None,
              n_folds: int = N_FOLDS, max_depth: int = DEFAULT_MAX_DEPTH,
              min_leaf: int = DEFAULT_MIN_LEAF) -> tuple:
    """Pick hyperparameters by grouped K-fold CV.

    Returns ``(choice, mean_validation_r2, all_scores)`` where ``all_scores``
    maps each :class:`Choice` to its fold-averaged R^2.
    """
    grid = grid or Grid()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    names = list(names) if names is not None else [str(j) for j in range(X.shape[1])]
    folds = group_folds(groups, n_folds, seed)
    per_fold = []
    for f in range(n_folds):
        va = folds == f
        per_fold.append(_fold_scores(X[~va], y[~va], X[va], y[va], names, grid, max_depth, min_leaf))
    mean_scores = {}
    for key in per_fold[0]:
        vals = [s[key] for s in per_fold if not math.isnan(s[key])]
        mean_scores[key] = float(np.mean(vals)) if vals else -math.inf
    best = max(mean_scores.values())
    winners = sorted((k for k, v in mean_scores.items() if v == best), key=Choice.tie_key)
    return winners[0], best, mean_scores


def repeat_seeds(master_seed: int, n: int = N_REPEATS) -> list:
    """Deterministic per-repetition seeds derived from one master seed."""
    children = np.random.SeedSequence(master_seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


def per_patient_r2(y, pred, groups) -> tuple:
    """Mean R^2 over patients with >= 2 lesions and a non-constant target.

    Returns ``(mean or None, used, skipped)``.
    """
    groups = np.asarray(groups, dtype=object)
    vals, skipped = [], 0
    for g in dict.fromkeys(groups.tolist()):
        m = groups == g
        if m.sum() < 2 or np.ptp(y[m]) == 0:
            skipped += 1
            continue
        vals.append(r2(y[m], pred[m]))
    return (float(np.mean(vals)) if vals else None), len(vals), skipped


def _mean_se(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    if v.size and np.all(v == v[0]):  # exact, free of summation rounding
        return {"mean": float(v[0]), "stderr": 0.0}
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return {"mean": float(v.mean()), "stderr": se}


def fit_report(train: FeatureMatrix, test: FeatureMatrix | None, grid: Grid | None = None,
               master_seed: int = 17, target: str = "lsu", seeds=None,
               max_depth: int = DEFAULT_MAX_DEPTH, min_leaf: int = DEFAULT_MIN_LEAF,
               label: str | None = None) -> dict:
    """Repeat CV selection and refitting over seeds; summarise R^2 and coefficients.

    Coefficients are in standardised units; a feature not selected for a
    seed contributes 0 for that seed. Test R^2 is averaged over patients.
    The returned dict is JSON-serialisable.
    """
    grid = grid or Grid()
    seeds = list(seeds) if seeds is not None else repeat_seeds(master_seed)
    names = list(train.names)
    y = train.y(target)
    has_test = test is not None and test.n > 0

    cv_scores, test_scores, pooled_scores, chosen, icpts = [], [], [], [], []
    coefs = {n: [] for n in names}
    selected_count = {n: 0 for n in names}
    used = skipped = 0
    for seed in seeds:
        choice, cv_r2, _ = cv_select(train.X, y, train.patient_ids, grid, seed, names,
                                     max_depth=max_depth, min_leaf=min_leaf)
        fit = fit_pipeline(train.X, y, names, choice, max_depth, min_leaf)
        cv_scores.append(cv_r2)
        chosen.append(asdict(choice))
        icpts.append(fit.model.intercept)
        c = fit.coefficients()
        for n in names:
            coefs[n].append(c.get(n, 0.0))
            selected_count[n] += n in c
        if has_test:
            yt = test.y(target)
            pred = fit.predict(test.select(names).X)
            mean, used, skipped = per_patient_r2(yt, pred, test.patient_ids)
            if mean is not None:
                test_scores.append(mean)
            if np.ptp(yt) > 0 and test.n >= 2:
                pooled_scores.append(r2(yt, pred))

    report = {
        "label": label,
        "target": target,
        "master_seed": int(master_seed),
        "seeds": [int(s) for s in seeds],
        "n_train": train.n,
        "n_test": test.n if test is not None else 0,
        "n_train_patients": len(train.patients()),
        "n_test_patients": len(test.patients()) if has_test else 0,
        "features": names,
        "grid": grid.to_dict(),
        "cv_r2": {**_mean_se(cv_scores), "per_seed": [float(v) for v in cv_scores]},
        "test_r2": None,
        "test_r2_pooled": None,
        "chosen": chosen,
        "intercept": _mean_se(icpts),
        "coefficients": {
            n: {**_mean_se(coefs[n]), "selected": selected_count[n]} for n in names
        },
    }
    if test_scores:
        report["test_r2"] = {
            **_mean_se(test_scores),
            "per_seed": [float(v) for v in test_scores],
            "patients_used": used,
            "patients_skipped": skipped,
        }
    if pooled_scores:
        report["test_r2_pooled"] = _mean_se(pooled_scores)
    return report
