"""Independent oracles used by the test suite.

Everything here is deliberately written the dumb way (plain loops, central
differences, exhaustive counting) and never calls the code paths it checks.
"""

from __future__ import annotations

import math

import numpy as np

FD_STEP = 1e-5
# Below this margin a ReLU/|.| kink sits too close to the evaluation point
# for central differences to be meaningful.
KINK_MARGIN = 1e-6


def central_differences(f, vec: np.ndarray, h: float = FD_STEP):
    """FD gradient of ``f`` plus a per-coordinate validity mask.

    ``f`` maps a parameter vector to ``(value, kink_quantities)`` where the
    kink quantities are the signed distances to every non-smooth point of
    the function (ReLU pre-activations, absolute-value residuals). A
    coordinate is marked invalid when either evaluation sits within
    KINK_MARGIN of a kink or the two evaluations fall on different sides of
    one, because the difference quotient then straddles a gradient jump.
    """
    grad = np.zeros_like(vec)
    valid = np.ones(vec.size, dtype=bool)
    for j in range(vec.size):
        bumped = vec.copy()
        bumped[j] = vec[j] + h
        f_plus, kinks_plus = f(bumped)
        bumped[j] = vec[j] - h
        f_minus, kinks_minus = f(bumped)
        grad[j] = (f_plus - f_minus) / (2.0 * h)
        if (
            np.min(np.abs(kinks_plus)) < KINK_MARGIN
            or np.min(np.abs(kinks_minus)) < KINK_MARGIN
            or np.any(np.sign(kinks_plus) != np.sign(kinks_minus))
        ):
            valid[j] = False
    return grad, valid


def max_relative_error(analytic: np.ndarray, fd: np.ndarray, mask, atol: float = 1e-7) -> float:
    """Worst relative disagreement over masked coordinates.

    Differences below ``atol`` count as exact agreement: central differences
    on an O(100) loss carry ~1e-9 of rounding noise, so near-zero gradients
    cannot be compared relatively.
    """
    worst = 0.0
    for a, b, ok in zip(analytic, fd, mask):
        if not ok:
            continue
        diff = abs(a - b)
        if diff <= atol:
            continue
        worst = max(worst, diff / max(abs(a), abs(b)))
    return worst


def brute_confusion(truth_labels, pred_labels, target: set) -> tuple[int, int, int]:
    """(TP, FP, FN) by walking the label pairs one at a time."""
    tp = fp = fn = 0
    for t, p in zip(truth_labels, pred_labels):
        t_pos = t in target
        p_pos = p in target
        if t_pos and p_pos:
            tp += 1
        elif p_pos:
            fp += 1
        elif t_pos:
            fn += 1
    return tp, fp, fn


def brute_precision_recall_f1(truth_labels, pred_labels, target: set):
    tp, fp, fn = brute_confusion(truth_labels, pred_labels, target)
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def brute_rmse(truth, pred) -> float:
    total = 0.0
    for t, p in zip(truth, pred):
        total += (t - p) ** 2
    return math.sqrt(total / len(truth))


def brute_mae(truth, pred) -> float:
    total = 0.0
    for t, p in zip(truth, pred):
        total += abs(t - p)
    return total / len(truth)


def brute_region(value: float, hypo: float = 70.0, hyper: float = 180.0) -> int:
    if value < hypo:
        return 1
    if value > hyper:
        return 3
    return 2


def brute_region_slices(truth, pred, hypo: float = 70.0, hyper: float = 180.0):
    """Per-slice (rmse, mae, n) over pooled pairs grouped by the TRUE value's region."""
    groups = {"normal": [], "dysglycemia": [], "hyper": [], "hypo": []}
    for t, p in zip(truth, pred):
        region = brute_region(t, hypo, hyper)
        if region == 2:
            groups["normal"].append((t, p))
        else:
            groups["dysglycemia"].append((t, p))
            groups["hyper" if region == 3 else "hypo"].append((t, p))
    out = {}
    for name, pairs in groups.items():
        if pairs:
            ts = [t for t, _ in pairs]
            ps = [p for _, p in pairs]
            out[name] = (brute_rmse(ts, ps), brute_mae(ts, ps), len(pairs))
    return out


def brute_weighted_region_loss(pred, truth, w_hypo, w_normal, w_hyper,
                               hypo: float = 70.0, hyper: float = 180.0) -> float:
    """Region-weighted MAE computed with per-region Python loops."""
    sums = {1: 0.0, 2: 0.0, 3: 0.0}
    counts = {1: 0, 2: 0, 3: 0}
    for p, t in zip(pred, truth):
        region = brute_region(t, hypo, hyper)
        sums[region] += abs(t - p)
        counts[region] += 1
    weights = {1: w_hypo, 2: w_normal, 3: w_hyper}
    loss = 0.0
    for region in (1, 2, 3):
        if counts[region] > 0:
            loss += weights[region] * sums[region] / counts[region]
    return loss
