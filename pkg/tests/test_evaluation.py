"""Metrics against brute-force oracles; Clarke zones against the frozen rule table."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glimmer.data import WindowSet
from glimmer.evaluation import (
    CEG_ZONES,
    REGION_SETS,
    EvalReport,
    ceg_summary,
    clarke_zone,
    clarke_zones,
    classification_metrics,
    evaluate_model,
    evaluate_predictions,
    mae,
    region_slice_metrics,
    rmse,
)

from oracles import (
    brute_mae,
    brute_precision_recall_f1,
    brute_region,
    brute_region_slices,
    brute_rmse,
)

# ---------------------------------------------------------------------------
# rmse / mae
# ---------------------------------------------------------------------------


def test_rmse_examples():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert abs(rmse([0.0, 0.0], [3.0, 4.0]) - math.sqrt(12.5)) < 1e-12
    assert rmse([10.0], [5.0]) == 5.0


def test_mae_examples():
    assert mae([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mae([0.0, 0.0], [-10.0, 10.0]) == 10.0
    assert mae([0.0, 0.0, 0.0], [1.0, 2.0, 3.0]) == 2.0


def test_rmse_mae_reject_empty_and_mismatch():
    for fn in (rmse, mae):
        with pytest.raises(ValueError):
            fn([], [])
        with pytest.raises(ValueError):
            fn([1.0], [1.0, 2.0])


@given(st.lists(st.floats(40.0, 400.0), min_size=1, max_size=50), st.integers(0, 10_000))
@settings(max_examples=100)
def test_rmse_at_least_mae(values, seed):
    truth = np.array(values)
    pred = truth + np.random.default_rng(seed).normal(0.0, 20.0, truth.size)
    assert rmse(truth, pred) >= mae(truth, pred) - 1e-12
    assert mae(truth, pred) >= 0.0


# ---------------------------------------------------------------------------
# region slices
# ---------------------------------------------------------------------------


def test_slices_single_region_collapse():
    truth = np.array([100.0, 150.0, 120.0])
    pred = truth + np.array([5.0, -10.0, 0.0])
    slices = region_slice_metrics(truth, pred)
    assert set(slices) == {"normal"}
    assert slices["normal"].rmse == rmse(truth, pred)
    assert slices["normal"].mae == mae(truth, pred)


def test_slices_hand_example():
    truth = np.array([60.0, 200.0])
    pred = np.array([70.0, 190.0])
    slices = region_slice_metrics(truth, pred)
    assert slices["hypo"].mae == 10.0
    assert slices["hyper"].mae == 10.0
    assert slices["dysglycemia"].mae == 10.0
    assert slices["dysglycemia"].n == 2


def test_dysglycemia_pools_hypo_and_hyper_pairs():
    rng = np.random.default_rng(3)
    truth = np.concatenate([rng.uniform(41, 69, 7), rng.uniform(181, 350, 9), rng.uniform(71, 179, 20)])
    pred = truth + rng.normal(0, 25, truth.size)
    pred = np.clip(pred, 1.0, None)
    slices = region_slice_metrics(truth, pred)
    mask = (truth < 70) | (truth > 180)
    assert slices["dysglycemia"].rmse == rmse(truth[mask], pred[mask])
    assert slices["dysglycemia"].n == 16


# ---------------------------------------------------------------------------
# classification metrics
# ---------------------------------------------------------------------------


def test_classification_hand_example():
    # truth regions [hypo, normal, hyper, hyper], predicted [hypo, hyper, hyper, normal]
    truth = np.array([60.0, 100.0, 200.0, 220.0])
    pred = np.array([65.0, 200.0, 210.0, 100.0])
    m = classification_metrics(truth, pred, target=frozenset({3}))
    assert (m.tp, m.fp, m.fn) == (1, 1, 1)
    assert (m.precision, m.recall, m.f1) == (0.5, 0.5, 0.5)
    assert not m.undefined


def test_classification_zero_denominator_convention():
    truth = np.array([100.0, 120.0])
    pred = np.array([110.0, 130.0])
    m = classification_metrics(truth, pred, target=frozenset({1}))
    assert (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0)
    assert m.undefined


def test_classification_precision_only():
    # 8 true positives, 2 false positives -> precision 0.8
    truth = np.array([50.0] * 8 + [100.0] * 2)
    pred = np.array([45.0] * 10)
    m = classification_metrics(truth, pred, target=frozenset({1}))
    assert m.precision == 0.8
    assert m.recall == 1.0


_LABEL_VALUES = {1: 50.0, 2: 120.0, 3: 250.0}  # one representative glucose per region
_TARGETS = [frozenset({1}), frozenset({2}), frozenset({3}), frozenset({1, 3})]


def _assert_matches_brute(truth_labels, pred_labels):
    truth = np.array([_LABEL_VALUES[t] for t in truth_labels])
    pred = np.array([_LABEL_VALUES[p] for p in pred_labels])
    for target in _TARGETS:
        m = classification_metrics(truth, pred, target=target)
        p, r, f1 = brute_precision_recall_f1(truth_labels, pred_labels, set(target))
        assert m.precision == p and m.recall == r and m.f1 == f1


def test_classification_exhaustive_short_vectors():
    # every (truth, pred) label vector pair up to length 4
    for length in range(1, 5):
        for joint in itertools.product(itertools.product((1, 2, 3), repeat=2), repeat=length):
            truth_labels = [t for t, _ in joint]
            pred_labels = [p for _, p in joint]
            _assert_matches_brute(truth_labels, pred_labels)


def test_classification_exhaustive_multisets_to_length_8():
    # Confusion counts only depend on the multiset of (truth, pred) label
    # pairs (order invariance is exercised separately), so enumerating
    # multisets covers every vector up to length 8.
    joint_labels = list(itertools.product((1, 2, 3), repeat=2))
    for length in range(1, 9):
        for combo in itertools.combinations_with_replacement(joint_labels, length):
            truth_labels = [t for t, _ in combo]
            pred_labels = [p for _, p in combo]
            _assert_matches_brute(truth_labels, pred_labels)


@given(st.lists(st.tuples(st.sampled_from([1, 2, 3]), st.sampled_from([1, 2, 3])),
                min_size=1, max_size=30),
       st.integers(0, 10_000))
@settings(max_examples=50)
def test_classification_permutation_invariant(pairs, seed):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(pairs))
    truth = np.array([_LABEL_VALUES[t] for t, _ in pairs])
    pred = np.array([_LABEL_VALUES[p] for _, p in pairs])
    for target in _TARGETS:
        a = classification_metrics(truth, pred, target=target)
        b = classification_metrics(truth[perm], pred[perm], target=target)
        assert a == b


# ---------------------------------------------------------------------------
# Clarke Error Grid
# ---------------------------------------------------------------------------

# Golden fixture spanning every zone, including one point per C and D
# sub-rule; zones were fixed by hand-evaluating the frozen rule table.
CLARKE_GOLDEN = [
    (100.0, 110.0, "A"),  # within 20% of reference
    (50.0, 50.0, "A"),  # joint hypo corner
    (200.0, 60.0, "E"),  # ref >= 180, pred <= 70
    (65.0, 190.0, "E"),  # ref <= 70, pred >= 180
    (100.0, 215.0, "C"),  # upper C: pred >= ref + 110
    (160.0, 30.0, "C"),  # lower C: pred <= 1.4*ref - 182
    (250.0, 100.0, "D"),  # right D: ref >= 240, pred in [70, 180]
    (55.0, 100.0, "D"),  # left D: ref <= 175/3, pred in [70, 180]
    (60.0, 75.0, "D"),  # wedge D: 175/3 <= ref <= 70, pred >= 1.2*ref
    (150.0, 190.0, "B"),
    (100.0, 75.0, "B"),
    (220.0, 170.0, "B"),
]


@pytest.mark.parametrize("ref,pred,zone", CLARKE_GOLDEN)
def test_clarke_golden_fixture(ref, pred, zone):
    assert clarke_zone(ref, pred) == zone


def test_clarke_rejects_nonpositive():
    with pytest.raises(ValueError):
        clarke_zone(0.0, 100.0)
    with pytest.raises(ValueError):
        clarke_zone(100.0, -3.0)


@given(st.floats(1.0, 500.0))
def test_clarke_identity_is_zone_a(value):
    assert clarke_zone(value, value) == "A"


@given(st.floats(1.0, 500.0), st.floats(1.0, 500.0))
@settings(max_examples=300)
def test_clarke_total_function(ref, pred):
    assert clarke_zone(ref, pred) in CEG_ZONES


def test_ceg_summary_identity():
    pct = ceg_summary([100.0, 200.0, 55.0], [100.0, 200.0, 55.0])
    assert pct["A"] == 100.0
    assert sum(pct.values()) == 100.0


def test_ceg_summary_half_and_half():
    pct = ceg_summary([100.0, 200.0], [110.0, 60.0])
    assert pct["A"] == 50.0
    assert pct["E"] == 50.0


def test_ceg_summary_rejects_empty():
    with pytest.raises(ValueError):
        ceg_summary([], [])


@given(st.lists(st.tuples(st.floats(1.0, 450.0), st.floats(1.0, 450.0)), min_size=1, max_size=200))
@settings(max_examples=100)
def test_ceg_percentages_always_sum_to_100(pairs):
    ref = [r for r, _ in pairs]
    pred = [p for _, p in pairs]
    pct = ceg_summary(ref, pred)
    assert abs(sum(pct.values()) - 100.0) < 1e-9
    counts = {z: 0 for z in CEG_ZONES}
    for z in clarke_zones(np.array(ref), np.array(pred)):
        counts[z] += 1
    assert sum(counts.values()) == len(pairs)  # zones partition the pairs


# ---------------------------------------------------------------------------
# 50-pair fixture against brute force
# ---------------------------------------------------------------------------


def _fifty_pair_fixture():
    # Integer-valued so sums are exact in float64 regardless of order.
    rng = np.random.default_rng(50)
    truth = np.concatenate([
        rng.integers(45, 70, 12),   # hypo
        rng.integers(70, 181, 26),  # normal (includes both boundaries)
        rng.integers(181, 340, 10), # hyper
        [70, 180],                  # exact boundaries
    ]).astype(np.float64)
    pred = truth + rng.integers(-60, 61, truth.size).astype(np.float64)
    pred = np.clip(pred, 1.0, None)
    assert truth.size == 50
    return truth, pred


def test_fifty_pair_fixture_matches_brute_force_exactly():
    truth, pred = _fifty_pair_fixture()
    assert rmse(truth, pred) == brute_rmse(truth, pred)
    assert mae(truth, pred) == brute_mae(truth, pred)

    slices = region_slice_metrics(truth, pred)
    brute = brute_region_slices(truth, pred)
    assert set(slices) == set(brute)
    for name, sm in slices.items():
        b_rmse, b_mae, b_n = brute[name]
        assert sm.rmse == b_rmse
        assert sm.mae == b_mae
        assert sm.n == b_n

    truth_labels = [brute_region(t) for t in truth]
    pred_labels = [brute_region(p) for p in pred]
    for name, target in REGION_SETS.items():
        m = classification_metrics(truth, pred, target=target)
        p, r, f1 = brute_precision_recall_f1(truth_labels, pred_labels, set(target))
        assert (m.precision, m.recall, m.f1) == (p, r, f1)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


class PerfectOracle:
    """Stub model that echoes each window's target."""

    def __init__(self, y):
        self._y = y

    def predict(self, x):
        return self._y


def _stub_windows(rng, n=30):
    # first horizon step hypo, middle ten normal, last hyper: all classes present
    x = rng.normal(size=(n, 72, 6))
    y = np.column_stack([
        rng.uniform(45.0, 65.0, (n, 1)),
        rng.uniform(80.0, 170.0, (n, 10)),
        rng.uniform(190.0, 300.0, (n, 1)),
    ])
    return WindowSet(x, y, np.arange(n, dtype=np.int64))


def test_perfect_oracle_stub_report(rng):
    windows = _stub_windows(rng)
    result = evaluate_model(PerfectOracle(windows.y), windows)
    assert result.rmse == 0.0
    assert result.mae == 0.0
    assert result.ceg["A"] == 100.0
    for name in REGION_SETS:
        assert result.classes[name].recall == 1.0  # every class present here
        assert result.regions[name].rmse == 0.0


def test_report_single_seed_std_zero(rng):
    windows = _stub_windows(rng)
    result = evaluate_model(PerfectOracle(windows.y), windows)
    report = EvalReport(seeds=[0], per_seed=[result])
    agg = report.aggregate()
    assert agg["rmse"]["std"] == 0.0
    assert agg["rmse"]["mean"] == 0.0


def test_report_mean_std_across_seeds(rng):
    windows = _stub_windows(rng)
    results = []
    for shift in (0.0, 6.0):
        pred = windows.y + shift
        results.append(evaluate_predictions(windows.y.ravel(), pred.ravel()))
    report = EvalReport(seeds=[0, 1], per_seed=results)
    agg = report.aggregate()
    assert agg["mae"]["mean"] == pytest.approx(3.0)
    assert agg["mae"]["std"] == pytest.approx(3.0)
    assert agg["mae"]["n_seeds"] == 2


def test_report_json_round_trip(rng):
    import json

    windows = _stub_windows(rng)
    result = evaluate_model(PerfectOracle(windows.y), windows)
    report = EvalReport(seeds=[0], per_seed=[result])
    doc = json.loads(report.to_json())
    assert doc["seeds"] == [0]
    assert doc["per_seed"][0]["rmse"] == 0.0
    assert doc["aggregate"]["ceg_a"]["mean"] == 100.0


def test_region_counts_consistent_with_n_samples(rng):
    truth = rng.uniform(41.0, 350.0, 200)
    pred = np.clip(truth + rng.normal(0, 30, 200), 1.0, None)
    result = evaluate_predictions(truth, pred)
    disjoint = [result.regions[k].n for k in ("hypo", "normal", "hyper") if k in result.regions]
    assert sum(disjoint) == result.n_samples
    if "dysglycemia" in result.regions:
        assert result.regions["dysglycemia"].n == sum(
            result.regions[k].n for k in ("hypo", "hyper") if k in result.regions
        )
