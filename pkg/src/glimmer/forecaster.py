"""Sklearn-style estimator wrapping the window pipeline: scale, train, predict.

``GlucoseForecaster`` takes raw (un-normalized) window inputs in mg/dL,
fits the scaler on its training portion only, trains the conv/LSTM/dense
stack with the configured loss, and predicts raw mg/dL targets. It plays
by the scikit-learn rules (``get_params``/``set_params``/``clone``), so it
composes with model selection utilities that expect that interface.
"""

from __future__ import annotations

from typing import IO

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from . import network
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Thresholds, chronological_split
from .errors import ShapeError
from .losses import LossWeights
from .network import ArchConfig, EpochStats, TrainConfig
from .scaling import WindowScaler


def _check_windows(x, name: str = "X") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"{name} must be (n_windows, input_len, n_features), got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def _check_targets(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] != n:
        raise ValueError(f"y must be (n_windows, output_len) aligned with X, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")
    return y


class GlucoseForecaster(BaseEstimator, RegressorMixin):
    """Multi-step glucose forecaster: conv stack + LSTM + dense head.

    Parameters
    ----------
    conv_layers : tuple of (filters, kernel) pairs
    lstm_units : hidden size of the LSTM layer
    dense_hidden : optional hidden dense width (0 = single dense head)
    loss : "weighted" (region-weighted MAE) or "plain" (global MAE)
    w_hypo, w_hyper : region weights for the weighted loss
    t_hypo, t_hyper : glucose region boundaries in mg/dL
    batch_size, epochs, learning_rate, seed : training knobs
    val_fraction : tail share of (X, y) held out chronologically for
        epoch selection when no explicit validation set is passed to fit

    Attributes (after fit)
    ----------------------
    params_ : trained model parameters (epoch with lowest validation loss)
    scaler_ : WindowScaler fitted on the training portion
    history_ : per-epoch train/val loss
    best_epoch_ : index of the selected epoch
    """

    def __init__(
        self,
        conv_layers=((32, 4), (16, 4), (8, 4)),
        lstm_units=8,
        dense_hidden=0,
        loss="weighted",
        w_hypo=3.296,
        w_hyper=2.382,
        t_hypo=70.0,
        t_hyper=180.0,
        batch_size=48,
        epochs=30,
        learning_rate=1e-3,
        seed=0,
        val_fraction=0.2,
    ):
        self.conv_layers = conv_layers
        self.lstm_units = lstm_units
        self.dense_hidden = dense_hidden
        self.loss = loss
        self.w_hypo = w_hypo
        self.w_hyper = w_hyper
        self.t_hypo = t_hypo
        self.t_hyper = t_hyper
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.seed = seed
        self.val_fraction = val_fraction

    # ------------------------------------------------------------------
    # Config assembly
    # ------------------------------------------------------------------

    def _arch(self, input_len: int, input_features: int, output_len: int) -> ArchConfig:
        return ArchConfig(
            conv_layers=tuple(tuple(fk) for fk in self.conv_layers),
            lstm_units=self.lstm_units,
            dense_hidden=self.dense_hidden,
            input_len=input_len,
            input_features=input_features,
            output_len=output_len,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            seed=self.seed,
            loss_weights=LossWeights(hypo=self.w_hypo, hyper=self.w_hyper),
            thresholds=Thresholds(hypo=self.t_hypo, hyper=self.t_hyper),
            loss_mode=self.loss,
        )

    # ------------------------------------------------------------------
    # Estimator API
    # ------------------------------------------------------------------

    def fit(self, X, y, X_val=None, y_val=None, on_epoch=None):
        """Train on raw windows; targets stay in mg/dL.

        Without an explicit validation pair, the chronological tail
        ``val_fraction`` of (X, y) is held out for epoch selection.
        ``on_epoch`` is an optional callback receiving per-epoch stats.
        """
        X = _check_windows(X)
        y = _check_targets(y, X.shape[0])
        if (X_val is None) != (y_val is None):
            raise ValueError("pass X_val and y_val together or neither")
        if X_val is None:
            X, X_val = chronological_split(X, 1.0 - self.val_fraction)
            y, y_val = chronological_split(y, 1.0 - self.val_fraction)
        else:
            X_val = _check_windows(X_val, "X_val")
            y_val = _check_targets(y_val, X_val.shape[0])

        arch = self._arch(X.shape[1], X.shape[2], y.shape[1])
        self.scaler_ = WindowScaler().fit(X)
        result = network.train(
            self.scaler_.transform(X),
            y,
            self.scaler_.transform(X_val),
            y_val,
            arch,
            self._train_config(),
            on_epoch=on_epoch,
        )
        self.params_ = result.params
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.n_features_in_ = X.shape[2]
        return self

    def predict(self, X) -> np.ndarray:
        """Forecast (n_windows, output_len) raw glucose values in mg/dL."""
        if not hasattr(self, "params_"):
            raise ValueError("GlucoseForecaster is not fitted yet; call fit or load first")
        X = _check_windows(X)
        arch = self.params_.arch
        if X.shape[1] != arch.input_len or X.shape[2] != arch.input_features:
            raise ShapeError(
                f"expected windows ({arch.input_len}, {arch.input_features}), "
                f"got ({X.shape[1]}, {X.shape[2]})"
            )
        return network.predict_batched(self.params_, self.scaler_.transform(X))

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def save(self, sink: str | IO) -> None:
        """Write the fitted parameters and scaler as a checkpoint document."""
        if not hasattr(self, "params_"):
            raise ValueError("nothing to save: estimator is not fitted")
        save_checkpoint(sink, self.params_, self.scaler_.mean_, self.scaler_.scale_)

    @classmethod
    def load(cls, source: str | IO, expect_arch: ArchConfig | None = None) -> "GlucoseForecaster":
        """Rebuild a fitted forecaster from a checkpoint."""
        params, mean, std = load_checkpoint(source, expect_arch)
        arch = params.arch
        est = cls(
            conv_layers=arch.conv_layers,
            lstm_units=arch.lstm_units,
            dense_hidden=arch.dense_hidden,
        )
        est.params_ = params
        if mean is None:
            # identity scaler: checkpoint was saved without normalization stats
            mean = np.zeros(arch.input_features)
            std = np.ones(arch.input_features)
        est.scaler_ = WindowScaler.from_stats(mean, std)
        est.history_ = []
        est.best_epoch_ = -1
        est.n_features_in_ = arch.input_features
        return est


__all__ = ["GlucoseForecaster", "EpochStats"]
