"""Forecast evaluation: RMSE/MAE, per-region slices, event metrics, Clarke Error Grid.

All metrics operate on pooled scalar (truth, prediction) pairs: every
horizon step of every window counts as one pair. Region membership for
error slicing uses the TRUE value; event classification thresholds truth
and prediction independently.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import IO, Mapping, Sequence

import numpy as np

from .data import Thresholds, region_labels

CEG_ZONES = ("A", "B", "C", "D", "E")

#: Region label sets behind each reported slice/event class.
REGION_SETS: Mapping[str, frozenset[int]] = {
    "normal": frozenset({2}),
    "dysglycemia": frozenset({1, 3}),
    "hyper": frozenset({3}),
    "hypo": frozenset({1}),
}


def _check_pair(truth, pred) -> tuple[np.ndarray, np.ndarray]:
    truth = np.asarray(truth, dtype=np.float64).ravel()
    pred = np.asarray(pred, dtype=np.float64).ravel()
    if truth.shape != pred.shape:
        raise ValueError(f"length mismatch: truth {truth.shape} vs pred {pred.shape}")
    if truth.size == 0:
        raise ValueError("need at least one (truth, pred) pair")
    return truth, pred


def rmse(truth, pred) -> float:
    """Root mean squared error in mg/dL."""
    truth, pred = _check_pair(truth, pred)
    diff = truth - pred
    return float(np.sqrt(np.mean(diff * diff)))


def mae(truth, pred) -> float:
    """Mean absolute error in mg/dL."""
    truth, pred = _check_pair(truth, pred)
    return float(np.mean(np.abs(truth - pred)))


@dataclass(frozen=True)
class SliceMetrics:
    rmse: float
    mae: float
    n: int


def region_slice_metrics(
    truth, pred, thresholds: Thresholds = Thresholds()
) -> dict[str, SliceMetrics]:
    """RMSE/MAE per region slice, keyed by REGION_SETS names.

    Dysglycemia pools the hypo and hyper pairs (one slice, not an average
    of slices). Slices with no members are absent from the result.
    """
    truth, pred = _check_pair(truth, pred)
    regions = region_labels(truth, thresholds)
    out: dict[str, SliceMetrics] = {}
    for name, labels in REGION_SETS.items():
        mask = np.isin(regions, list(labels))
        n = int(np.count_nonzero(mask))
        if n > 0:
            out[name] = SliceMetrics(rmse(truth[mask], pred[mask]), mae(truth[mask], pred[mask]), n)
    return out


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    undefined: bool  # some denominator was zero; affected metrics report 0


def classification_metrics(
    truth, pred, thresholds: Thresholds = Thresholds(), target: frozenset[int] = frozenset({1, 3})
) -> ClassMetrics:
    """Precision/recall/F1 for 'value lies in the target region set'.

    Truth and prediction are thresholded independently per sample. Zero
    denominators yield 0 for the affected metric and set ``undefined``.
    """
    truth, pred = _check_pair(truth, pred)
    truth_pos = np.isin(region_labels(truth, thresholds), list(target))
    pred_pos = np.isin(region_labels(pred, thresholds), list(target))
    tp = int(np.count_nonzero(truth_pos & pred_pos))
    fp = int(np.count_nonzero(~truth_pos & pred_pos))
    fn = int(np.count_nonzero(truth_pos & ~pred_pos))

    undefined = False
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision, undefined = 0.0, True
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall, undefined = 0.0, True
    if precision + recall > 0.0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1, undefined = 0.0, True
    return ClassMetrics(precision, recall, f1, tp, fp, fn, undefined)


# ---------------------------------------------------------------------------
# Clarke Error Grid
# ---------------------------------------------------------------------------


def clarke_zone(ref: float, pred: float) -> str:
    """Clinical-accuracy zone of one (reference, prediction) pair.

    Uses the classic piecewise boundaries; rules are checked in the order
    A, E, C, D with B as the fallback, and the first match wins.
    """
    if not (ref > 0.0 and pred > 0.0):
        raise ValueError(f"glucose values must be positive, got ref={ref}, pred={pred}")
    if (ref <= 70.0 and pred <= 70.0) or abs(pred - ref) <= 0.2 * ref:
        return "A"
    if (ref >= 180.0 and pred <= 70.0) or (ref <= 70.0 and pred >= 180.0):
        return "E"
    if (70.0 <= ref <= 290.0 and pred >= ref + 110.0) or (
        130.0 <= ref <= 180.0 and pred <= (7.0 / 5.0) * ref - 182.0
    ):
        return "C"
    if (
        (ref >= 240.0 and 70.0 <= pred <= 180.0)
        or (ref <= 175.0 / 3.0 and 70.0 <= pred <= 180.0)
        or (175.0 / 3.0 <= ref <= 70.0 and pred >= (6.0 / 5.0) * ref)
    ):
        return "D"
    return "B"


def clarke_zones(ref: np.ndarray, pred: np.ndarray) -> list[str]:
    """Zone per pair."""
    ref, pred = _check_pair(ref, pred)
    return [clarke_zone(float(r), float(p)) for r, p in zip(ref, pred)]


def ceg_summary(ref, pred) -> dict[str, float]:
    """Zone percentages over all pairs; guaranteed to sum to exactly 100.

    The zone with the most pairs absorbs the float residual so the
    percentages always add up to 100.
    """
    zones = clarke_zones(*_check_pair(ref, pred))
    n = len(zones)
    counts = {z: 0 for z in CEG_ZONES}
    for z in zones:
        counts[z] += 1
    pct = {z: counts[z] * 100.0 / n for z in CEG_ZONES}
    biggest = max(CEG_ZONES, key=lambda z: counts[z])
    pct[biggest] = 100.0 - sum(pct[z] for z in CEG_ZONES if z != biggest)
    return pct


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class EvalResult:
    """Every metric for one model on one test set."""

    n_samples: int
    rmse: float
    mae: float
    regions: dict[str, SliceMetrics]
    classes: dict[str, ClassMetrics]
    ceg: dict[str, float]

    def flat(self) -> dict[str, float]:
        """One flat name -> value mapping (used for CSV rows and seed averaging)."""
        out: dict[str, float] = {"n_samples": float(self.n_samples), "rmse": self.rmse, "mae": self.mae}
        for name, sm in self.regions.items():
            out[f"rmse_{name}"] = sm.rmse
            out[f"mae_{name}"] = sm.mae
            out[f"n_{name}"] = float(sm.n)
        for name, cm in self.classes.items():
            out[f"precision_{name}"] = cm.precision
            out[f"recall_{name}"] = cm.recall
            out[f"f1_{name}"] = cm.f1
        for zone, pct in self.ceg.items():
            out[f"ceg_{zone.lower()}"] = pct
        return out

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "rmse": self.rmse,
            "mae": self.mae,
            "regions": {k: vars(v) for k, v in self.regions.items()},
            "classes": {k: vars(v) for k, v in self.classes.items()},
            "ceg": dict(self.ceg),
        }


def evaluate_predictions(truth, pred, thresholds: Thresholds = Thresholds()) -> EvalResult:
    """All metrics over pooled scalar pairs."""
    truth, pred = _check_pair(truth, pred)
    classes = {
        name: classification_metrics(truth, pred, thresholds, target=labels)
        for name, labels in REGION_SETS.items()
    }
    return EvalResult(
        n_samples=truth.size,
        rmse=rmse(truth, pred),
        mae=mae(truth, pred),
        regions=region_slice_metrics(truth, pred, thresholds),
        classes=classes,
        ceg=ceg_summary(truth, pred),
    )


def evaluate_model(model, windows, thresholds: Thresholds = Thresholds()) -> EvalResult:
    """Predict a window set and score it; ``model`` needs a ``predict(x)`` method."""
    pred = model.predict(windows.x)
    return evaluate_predictions(windows.y.ravel(), np.asarray(pred).ravel(), thresholds)


@dataclass
class EvalReport:
    """Per-seed results plus mean +/- std aggregates.

    Std is the population standard deviation, so a single seed reports 0.
    Metrics missing for some seeds (an empty region slice) are averaged
    over the seeds that have them.
    """

    seeds: list[int]
    per_seed: list[EvalResult]

    def aggregate(self) -> dict[str, dict[str, float]]:
        keys: list[str] = []
        for result in self.per_seed:
            for key in result.flat():
                if key not in keys:
                    keys.append(key)
        out: dict[str, dict[str, float]] = {}
        for key in keys:
            values = [r.flat()[key] for r in self.per_seed if key in r.flat()]
            out[key] = {
                "mean": float(np.mean(values)),
                "std": float(np.std(values)),
                "n_seeds": float(len(values)),
            }
        return out

    def to_dict(self) -> dict:
        return {
            "seeds": list(self.seeds),
            "per_seed": [r.to_dict() for r in self.per_seed],
            "aggregate": self.aggregate(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False, sort_keys=True)


def write_report_json(report: EvalReport, sink: str | IO) -> None:
    text = report.to_json()
    if isinstance(sink, str):
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sink.write(text)


def write_report_csv(report: EvalReport, sink: str | IO) -> None:
    """Flat CSV: one row per metric with mean, std and seed count."""
    rows = report.aggregate()

    def _write(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "mean", "std", "n_seeds"])
        for key, stats in rows.items():
            writer.writerow([key, repr(stats["mean"]), repr(stats["std"]), int(stats["n_seeds"])])

    if isinstance(sink, str):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            _write(fh)
    else:
        _write(sink)


def write_ceg_pairs_csv(truth, pred, sink: str | IO) -> None:
    """Plot-ready dump: one row per pair with its zone."""
    truth, pred = _check_pair(truth, pred)
    zones = clarke_zones(truth, pred)

    def _write(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ref_mgdl", "pred_mgdl", "zone"])
        for r, p, z in zip(truth, pred, zones):
            writer.writerow([repr(float(r)), repr(float(p)), z])

    if isinstance(sink, str):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            _write(fh)
    else:
        _write(sink)


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and population std (0 for a single value)."""
    if len(values) == 0:
        raise ValueError("need at least one value")
    return float(np.mean(values)), float(np.std(values))
