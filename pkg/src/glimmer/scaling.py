"""Per-feature z-scoring of window inputs, fitted on the training split only."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin


def _as_feature_rows(x: np.ndarray) -> np.ndarray:
    """Accept (n, features) or (n, steps, features) and return stacked rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x
    if x.ndim == 3:
        return x.reshape(-1, x.shape[2])
    raise ValueError(f"expected 2-D or 3-D input, got shape {x.shape}")


class WindowScaler(BaseEstimator, TransformerMixin):
    """Z-score each feature column using population statistics.

    Works on flat (n, features) matrices and on window stacks
    (n, steps, features). Constant columns get their scale clamped to 1 so
    they map to 0 instead of dividing by zero. Targets are never scaled;
    this transformer only touches inputs.
    """

    def fit(self, X, y=None):
        rows = _as_feature_rows(X)
        if rows.shape[0] == 0:
            raise ValueError("cannot fit a scaler on an empty training set")
        self.mean_ = rows.mean(axis=0)
        std = rows.std(axis=0)
        std[std == 0.0] = 1.0
        self.scale_ = std
        self.n_features_in_ = rows.shape[1]
        return self

    def transform(self, X):
        x = np.asarray(X, dtype=np.float64)
        self._check_fitted(x)
        return (x - self.mean_) / self.scale_

    def inverse_transform(self, X):
        x = np.asarray(X, dtype=np.float64)
        self._check_fitted(x)
        return x * self.scale_ + self.mean_

    def _check_fitted(self, x: np.ndarray) -> None:
        if not hasattr(self, "mean_"):
            raise ValueError("WindowScaler is not fitted yet; call fit first")
        if x.ndim not in (2, 3) or x.shape[-1] != self.n_features_in_:
            raise ValueError(
                f"expected trailing feature axis of {self.n_features_in_}, got shape {x.shape}"
            )

    @classmethod
    def from_stats(cls, mean: np.ndarray, std: np.ndarray) -> "WindowScaler":
        """Rebuild a fitted scaler from stored statistics (checkpoint load path)."""
        scaler = cls()
        scaler.mean_ = np.asarray(mean, dtype=np.float64)
        scaler.scale_ = np.asarray(std, dtype=np.float64)
        scaler.n_features_in_ = scaler.mean_.shape[0]
        return scaler
