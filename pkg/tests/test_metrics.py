import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgmvp.encoding import EncodingSpec, bits_to_index, encode
from dgmvp.metrics import (
    DegenerateInstanceWarning,
    InstanceGroundTruth,
    MetricError,
    alpha_mean,
    alpha_mean_k,
    alpha_min,
    exact_report,
    feasible_costs,
    fit_power_law,
    ground_truth,
    lower_tail_mean,
    p_gm,
    p_min,
    sampled_report,
    shots_for_success,
)

A2 = 1 / 9
SPEC = EncodingSpec(2, 2)


def idx(*lots):
    return bits_to_index(encode(SPEC, lots))


def test_ground_truth_single_asset():
    t = ground_truth(EncodingSpec(1, 3), np.array([[0.7]]))
    assert t.f_min == t.f_max == pytest.approx(0.7)
    assert t.degenerate


def test_ground_truth_identity():
    t = ground_truth(SPEC, np.eye(2))
    assert t.f_min == pytest.approx(5 * A2)
    assert t.f_max == pytest.approx(9 * A2)
    assert set(t.argmin) == {idx(2, 1), idx(1, 2)}
    assert set(t.argmax) == {idx(3, 0), idx(0, 3)}


def test_alpha_mean_examples():
    t = ground_truth(SPEC, np.eye(2))
    assert alpha_mean(t.f_min, t) == 0
    assert alpha_mean(t.f_max, t) == pytest.approx(1)
    _, costs = feasible_costs(SPEC, np.eye(2))
    assert alpha_mean(costs.mean(), t) == pytest.approx(0.5)


def test_degenerate_warns():
    t = InstanceGroundTruth(1.0, 1.0, (0,), (0,))
    with pytest.warns(DegenerateInstanceWarning):
        assert alpha_mean(1.0, t) == 0.0


def test_tail_examples():
    t = InstanceGroundTruth(0.0, 1.0, (0,), (1,))
    assert alpha_mean_k([0.0, 1.0], [0.5, 0.5], 50, t) == 0
    assert alpha_mean_k([0.0, 1.0], [0.25, 0.75], 50, t) == pytest.approx(0.5)
    assert alpha_mean_k([0.0, 1.0], [0.25, 0.75], 100, t) == pytest.approx(alpha_mean(0.75, t))
    with pytest.raises(MetricError):
        lower_tail_mean([1.0], [1.0], 0)


def test_alpha_min_examples():
    t = InstanceGroundTruth(0.0, 2.0, (0,), (1,))
    assert alpha_min(np.array([0.0, 2.0, 1.0]), t) == 0
    assert alpha_min(np.array([2.0]), t) == 1
    assert alpha_min(np.array([0.0, 2.0]), t, probs=np.array([1e-13, 1.0])) == 1
    with pytest.raises(MetricError):
        alpha_min(np.array([]), t)


def test_p_gm_examples():
    t = ground_truth(SPEC, np.eye(2))
    indices = np.array([idx(3, 0), idx(2, 1), idx(1, 2), idx(0, 3)])
    assert p_gm(indices, np.array([1.0, 0, 0, 0]), t) == 0
    assert p_gm(indices, np.array([0, 0.5, 0.5, 0]), t) == 1


def test_p_min_uses_support():
    costs = np.array([1.0, 2.0, 3.0])
    assert p_min(costs, np.array([0.0, 0.4, 0.6])) == pytest.approx(0.4)


def test_shots_for_success():
    assert shots_for_success(0.5, 0.75) == pytest.approx(2.0)
    assert shots_for_success(1.0, 0.9) == 1.0
    assert shots_for_success(1 - 1e-15, 0.9) == pytest.approx(1.0, abs=0.1)
    assert shots_for_success(0.0, 0.9) == math.inf
    assert shots_for_success(0.1, 0.99) == pytest.approx(math.log(0.01) / math.log(0.9), rel=1e-12)
    assert shots_for_success(0.1, 0.99) == pytest.approx(43.7, abs=0.05)
    with pytest.raises(MetricError):
        shots_for_success(0.5, 1.0)


def test_power_law_recovery():
    sizes = np.array([4, 10, 20, 35, 56, 120], dtype=float)
    fit = fit_power_law(sizes, 2.0 * sizes**0.7)
    assert abs(fit.b - 0.7) < 1e-9
    assert abs(fit.a - 2.0) < 1e-9
    assert fit.b_stderr < 1e-9
    with pytest.raises(MetricError):
        fit_power_law([1, 2], [1, 2])
    with pytest.raises(MetricError):
        fit_power_law([1, 2, 3], [1, -2, 3])


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(-2.0, 2.0), st.integers(0, 2**32 - 1))
def test_power_law_recovers_any_exponent(a, b, seed):
    sizes = np.sort(np.random.default_rng(seed).uniform(2, 500, 6))
    if np.ptp(np.log(sizes)) < 1e-3:
        return
    fit = fit_power_law(sizes, a * sizes**b)
    assert abs(fit.b - b) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ratios_in_unit_interval_and_ordered(seed):
    rng = np.random.default_rng(seed)
    costs = rng.uniform(0, 1, 12)
    probs = rng.dirichlet(np.ones(12))
    t = InstanceGroundTruth(costs.min(), costs.max(), (0,), (1,))
    values = [alpha_mean_k(costs, probs, k, t) for k in (5, 20, 100)]
    assert all(-1e-12 <= v <= 1 + 1e-12 for v in values)
    assert values[0] <= values[1] + 1e-12 <= values[2] + 2e-12
    assert alpha_min(costs, t, probs) <= values[0] + 1e-12


def test_reports():
    t = ground_truth(SPEC, np.eye(2))
    indices, costs = feasible_costs(SPEC, np.eye(2))
    probs = np.full(4, 0.25)
    rep = exact_report(indices, probs, costs, t)
    assert rep.alpha_mean == pytest.approx(0.5)
    assert rep.p_gm == pytest.approx(0.5)
    assert rep.alpha_min == 0
    sample = np.array([indices[0]] * 3 + [indices[1]])
    srep = sampled_report(sample, costs[[0, 0, 0, 1]], t)
    assert srep.source == "sampled(4)"
    assert set(rep.as_row()) == set(srep.as_row())
