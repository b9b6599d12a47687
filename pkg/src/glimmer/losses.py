"""Training losses: region-weighted mean absolute error and the plain-MAE baseline.

The weighted loss splits the pooled scalar targets of a batch into the three
glucose regions of their TRUE values, takes the MAE inside each region, and
sums the region MAEs scaled by their weights. Regions with no members
contribute nothing. The gradient is the per-element subgradient, with
sign(0) = 0 at the kink.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import HYPO_REGION, NORMAL_REGION, HYPER_REGION, Thresholds, region_labels


@dataclass(frozen=True)
class LossWeights:
    """Multipliers on per-region MAE. The normal-region weight stays fixed at 1."""

    hypo: float = 3.296
    hyper: float = 2.382
    normal: float = 1.0

    def __post_init__(self):
        if not (self.hypo > 0.0 and self.hyper > 0.0 and self.normal > 0.0):
            raise ValueError(f"loss weights must be positive, got {self}")


def _check_pair(pred: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs truth {truth.shape}")
    if pred.size == 0:
        raise ValueError("need at least one element")
    return pred, truth


def weighted_region_loss(
    pred: np.ndarray,
    truth: np.ndarray,
    weights: LossWeights,
    thresholds: Thresholds = Thresholds(),
) -> tuple[float, tuple[int, int, int]]:
    """Region-weighted MAE over the pooled elements, plus per-region counts.

    Region membership comes from the true value of each element. Returns
    ``(loss, (n_hypo, n_normal, n_hyper))``.
    """
    pred, truth = _check_pair(pred, truth)
    regions = region_labels(truth.ravel(), thresholds)
    abs_err = np.abs(truth.ravel() - pred.ravel())

    loss = 0.0
    counts = []
    for region, w in (
        (HYPO_REGION, weights.hypo),
        (NORMAL_REGION, weights.normal),
        (HYPER_REGION, weights.hyper),
    ):
        mask = regions == region
        n_r = int(np.count_nonzero(mask))
        counts.append(n_r)
        if n_r > 0:
            loss += w * (float(np.sum(abs_err[mask])) / n_r)
    return loss, (counts[0], counts[1], counts[2])


def weighted_region_loss_grad(
    pred: np.ndarray,
    truth: np.ndarray,
    weights: LossWeights,
    thresholds: Thresholds = Thresholds(),
) -> np.ndarray:
    """d(loss)/d(pred): (w_r / n_r) * sign(pred - truth) per element, same shape as pred."""
    pred, truth = _check_pair(pred, truth)
    regions = region_labels(truth.ravel(), thresholds).reshape(pred.shape)
    grad = np.sign(pred - truth)
    for region, w in (
        (HYPO_REGION, weights.hypo),
        (NORMAL_REGION, weights.normal),
        (HYPER_REGION, weights.hyper),
    ):
        mask = regions == region
        n_r = np.count_nonzero(mask)
        if n_r > 0:
            grad[mask] *= w / n_r
    return grad


def plain_mae_loss(pred: np.ndarray, truth: np.ndarray) -> float:
    """Global MAE over all pooled elements."""
    pred, truth = _check_pair(pred, truth)
    return float(np.mean(np.abs(truth - pred)))


def plain_mae_grad(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """d(MAE)/d(pred): sign(pred - truth) / n, with sign(0) = 0."""
    pred, truth = _check_pair(pred, truth)
    return np.sign(pred - truth) / pred.size


class RegionWeightedMae:
    """Loss object for the training loop: weighted per-region MAE."""

    name = "weighted"

    def __init__(self, weights: LossWeights, thresholds: Thresholds = Thresholds()):
        self.weights = weights
        self.thresholds = thresholds

    def value(self, pred: np.ndarray, truth: np.ndarray) -> float:
        loss, _ = weighted_region_loss(pred, truth, self.weights, self.thresholds)
        return loss

    def grad(self, pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
        return weighted_region_loss_grad(pred, truth, self.weights, self.thresholds)


class PlainMae:
    """Loss object for the training loop: global MAE (the unweighted baseline)."""

    name = "plain"

    def value(self, pred: np.ndarray, truth: np.ndarray) -> float:
        return plain_mae_loss(pred, truth)

    def grad(self, pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
        return plain_mae_grad(pred, truth)
