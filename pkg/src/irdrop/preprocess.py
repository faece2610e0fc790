"""Two-stage feature normalisation: log1p, then min-max scaling to [0, 1]."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from ._validation import as_matrix
from .exceptions import ValidationError


def log_transform(matrix) -> np.ndarray:
    """Element-wise ``ln(1 + x)``; negative entries are rejected."""
    x = np.asarray(matrix, dtype=float)
    if np.any(x < 0):
        bad = np.argwhere(x < 0)[0]
        where = f"row {bad[0]}, column {bad[1]}" if x.ndim == 2 else f"index {tuple(bad)}"
        raise ValidationError(f"log_transform needs non-negative input; negative value at {where}")
    return np.log1p(x)


@dataclass(frozen=True)
class ScalerParams:
    mins: tuple
    maxs: tuple
    columns: tuple
    epsilon: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mins", tuple(float(v) for v in self.mins))
        object.__setattr__(self, "maxs", tuple(float(v) for v in self.maxs))
        object.__setattr__(self, "columns", tuple(self.columns))
        if not len(self.mins) == len(self.maxs) == len(self.columns):
            raise ValidationError("scaler mins/maxs/columns lengths differ")
        if any(hi < lo for lo, hi in zip(self.mins, self.maxs)):
            raise ValidationError("scaler max < min in some column")

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    def to_dict(self) -> dict:
        return {"mins": list(self.mins), "maxs": list(self.maxs), "columns": list(self.columns), "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(mins=d["mins"], maxs=d["maxs"], columns=d["columns"], epsilon=d.get("epsilon", 0.0))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def fit_scaler(train_matrix, columns: Optional[Sequence[str]] = None) -> ScalerParams:
    """Fit per-column min/max of the log-transformed training rows."""
    x = log_transform(as_matrix(train_matrix, name="train_matrix", min_rows=1))
    if columns is None:
        columns = tuple(f"f{j}" for j in range(x.shape[1]))
    if len(columns) != x.shape[1]:
        raise ValidationError(f"{len(columns)} column names for a {x.shape[1]}-column matrix")
    return ScalerParams(mins=x.min(axis=0), maxs=x.max(axis=0), columns=tuple(columns))


def apply_scaler(matrix, params: ScalerParams) -> np.ndarray:
    x = log_transform(as_matrix(matrix, name="matrix"))
    if x.shape[1] != params.n_columns:
        raise ValidationError(
            f"scaler fitted on {params.n_columns} columns, matrix has {x.shape[1]}"
        )
    lo = np.array(params.mins)
    span = np.array(params.maxs) - lo
    out = np.zeros_like(x)
    live = span > 0
    # Constant columns map to 0.
    out[:, live] = (x[:, live] - lo[live]) / span[live]
    return np.clip(out, 0.0, 1.0)


class LogMinMaxScaler(TransformerMixin, BaseEstimator):
    """Transformer wrapper around :func:`fit_scaler` / :func:`apply_scaler`.

    >>> import numpy as np
    >>> LogMinMaxScaler().fit_transform(np.array([[0.0], [np.e - 1]])).ravel().tolist()
    [0.0, 1.0]
    """

    def __init__(self, columns=None):
        self.columns = columns

    def fit(self, X, y=None):
        self.params_ = fit_scaler(X, self.columns)
        self.n_features_in_ = self.params_.n_columns
        return self

    def transform(self, X):
        if not hasattr(self, "params_"):
            raise NotFittedError("LogMinMaxScaler is not fitted yet")
        return apply_scaler(X, self.params_)
