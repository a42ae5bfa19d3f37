"""Column-aligned per-lesion design matrix."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DuplicateColumn

TARGET_COLUMNS = ("lsu", "iou_adj")


@dataclass(eq=False)
class FeatureMatrix:
    """Per-lesion rows with named feature columns.

    ``targets`` holds the non-explanatory columns (``lsu``, ``iou_adj``) keyed
    by name. ``patient_ids`` doubles as the grouping variable for
    cross-validation.
    """

    patient_ids: list
    lesion_ids: list
    names: list
    X: np.ndarray
    targets: dict = field(default_factory=dict)

    def __post_init__(self):
        self.patient_ids = [str(p) for p in self.patient_ids]
        self.lesion_ids = [str(i) for i in self.lesion_ids]
        self.names = [str(n) for n in self.names]
        self.X = np.asarray(self.X, dtype=np.float64).reshape(len(self.patient_ids), len(self.names))
        if len(set(self.names)) != len(self.names):
            dup = next(n for n in self.names if self.names.count(n) > 1)
            raise DuplicateColumn(f"column {dup!r} appears twice")
        if len(self.lesion_ids) != len(self.patient_ids):
            raise ValueError("patient_ids and lesion_ids differ in length")
        self.targets = {k: np.asarray(v, dtype=np.float64) for k, v in self.targets.items()}
        for k, v in self.targets.items():
            if v.shape != (self.n,):
                raise ValueError(f"target {k!r} has shape {v.shape}, expected ({self.n},)")

    @property
    def n(self) -> int:
        return len(self.patient_ids)

    @property
    def d(self) -> int:
        return len(self.names)

    @property
    def groups(self) -> np.ndarray:
        return np.asarray(self.patient_ids, dtype=object)

    def y(self, target: str = "lsu") -> np.ndarray:
        if target in self.targets:
            return self.targets[target]
        if target in self.names:
            return self.X[:, self.names.index(target)]
        raise KeyError(f"no target column {target!r}")

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.names.index(name)]

    def subset_rows(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        if idx.size == 0:
            idx = idx.astype(np.int64)
        elif idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return FeatureMatrix(
            [self.patient_ids[i] for i in idx],
            [self.lesion_ids[i] for i in idx],
            list(self.names),
            self.X[idx],
            {k: v[idx] for k, v in self.targets.items()},
        )

    def select(self, names) -> "FeatureMatrix":
        cols = [self.names.index(n) for n in names]
        return FeatureMatrix(self.patient_ids, self.lesion_ids, list(names),
                             self.X[:, cols], dict(self.targets))

    def drop(self, names) -> "FeatureMatrix":
        names = set(names)
        return self.select([n for n in self.names if n not in names])

    def with_target_as_feature(self, target: str) -> "FeatureMatrix":
        """Append target column ``target`` as an explanatory feature."""
        if target in self.names:
            return self
        return FeatureMatrix(self.patient_ids, self.lesion_ids, [*self.names, target],
                             np.column_stack([self.X, self.targets[target]]), dict(self.targets))

    def patients(self) -> list:
        """Distinct patient ids in first-appearance order."""
        return list(dict.fromkeys(self.patient_ids))

    def equals(self, other: "FeatureMatrix") -> bool:
        return (
            self.patient_ids == other.patient_ids
            and self.lesion_ids == other.lesion_ids
            and self.names == other.names
            and self.X.tobytes() == other.X.tobytes()
            and self.targets.keys() == other.targets.keys()
            and all(self.targets[k].tobytes() == other.targets[k].tobytes() for k in self.targets)
        )

    @staticmethod
    def concat(parts) -> "FeatureMatrix":
        parts = list(parts)
        names = parts[0].names
        keys = parts[0].targets.keys()
        for p in parts[1:]:
            if p.names != names or p.targets.keys() != keys:
                raise ValueError("cannot concatenate tables with different columns")
        return FeatureMatrix(
            [pid for p in parts for pid in p.patient_ids],
            [lid for p in parts for lid in p.lesion_ids],
            list(names),
            np.vstack([p.X for p in parts]) if parts else np.zeros((0, len(names))),
            {k: np.concatenate([p.targets[k] for p in parts]) for k in keys},
        )
