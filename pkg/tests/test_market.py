import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgmvp.market import (
    CovarianceMatrix,
    InsufficientDataError,
    MarketDataError,
    MissingTickerError,
    PriceParseError,
    PriceSeries,
    RaggedDatesError,
    compute_covariance,
    factor_model_covariance,
    load_prices,
    random_instance,
    synthetic_universe,
    write_prices_csv,
)


def write(path, text):
    path.write_text(text)
    return path


def test_load_two_tickers(tmp_path):
    f = write(tmp_path / "p.csv", "date,AAA,BBB\n2023-01-02,1.0,2.0\n2023-01-03,1.5,2.5\n2023-01-04,1.2,2.1\n")
    series = load_prices(f, ["AAA", "BBB"])
    assert [s.ticker for s in series] == ["AAA", "BBB"]
    assert all(len(s.prices) == 3 for s in series)
    assert series[1].prices[2] == pytest.approx(2.1)


def test_missing_ticker(tmp_path):
    f = write(tmp_path / "p.csv", "date,AAA\n2023-01-02,1.0\n2023-01-03,1.1\n")
    with pytest.raises(MissingTickerError):
        load_prices(f, ["AAA", "ZZZ"])


def test_missing_day_truncates_all(tmp_path):
    f = write(tmp_path / "p.csv", "date,AAA,BBB\n2023-01-02,1.0,2.0\n2023-01-03,,2.5\n2023-01-04,1.2,2.1\n")
    a, b = load_prices(f, ["AAA", "BBB"])
    assert a.dates == b.dates == ("2023-01-02", "2023-01-04")
    assert list(b.prices) == [2.0, 2.1]


def test_non_numeric_price(tmp_path):
    f = write(tmp_path / "p.csv", "date,AAA\n2023-01-02,1.0\n2023-01-03,abc\n")
    with pytest.raises(PriceParseError):
        load_prices(f, ["AAA"])


def test_ragged_dates():
    a = PriceSeries("A", ("2023-01-02", "2023-01-03"), np.array([1.0, 2.0]))
    b = PriceSeries("B", ("2023-01-02", "2023-01-04"), np.array([1.0, 2.0]))
    with pytest.raises(RaggedDatesError):
        compute_covariance([a, b])


def test_series_invariants():
    with pytest.raises(MarketDataError):
        PriceSeries("A", ("2023-01-03", "2023-01-02"), np.array([1.0, 2.0]))
    with pytest.raises(MarketDataError):
        PriceSeries("A", ("2023-01-02", "2023-01-03"), np.array([1.0, -2.0]))


def test_identical_series_perfectly_correlated():
    dates = tuple(f"2023-01-{d:02d}" for d in range(2, 12))
    x = np.linspace(1, 3, 10) ** 2
    cov = compute_covariance([PriceSeries("A", dates, x), PriceSeries("B", dates, x)])
    var = np.var(x, ddof=1)
    assert np.allclose(cov.sigma, var, rtol=1e-14)


def test_constant_series_zero_matrix():
    dates = ("2023-01-02", "2023-01-03", "2023-01-04")
    cov = compute_covariance([PriceSeries("A", dates, np.full(3, 5.0)), PriceSeries("B", dates, np.full(3, 7.0))])
    assert np.array_equal(cov.sigma, np.zeros((2, 2)))


def test_insufficient_data():
    with pytest.raises(InsufficientDataError):
        compute_covariance([PriceSeries("A", ("2023-01-02",), np.array([1.0]))])


def two_pass(x, y):
    mx, my = sum(x) / len(x), sum(y) / len(y)
    return sum((a - mx) * (b - my) for a, b in zip(x, y)) / (len(x) - 1)


def test_covariance_matches_two_pass_oracle():
    universe = synthetic_universe(np.random.default_rng(3), size=2, days=100)
    cov = compute_covariance(universe)
    x, y = universe[0].prices.tolist(), universe[1].prices.tolist()
    oracle = np.array([[two_pass(x, x), two_pass(x, y)], [two_pass(y, x), two_pass(y, y)]])
    assert np.allclose(cov.sigma, oracle, rtol=1e-12, atol=0)


def test_random_instance_whole_universe():
    universe = synthetic_universe(np.random.default_rng(0), size=5, days=30)
    cov = random_instance(np.random.default_rng(1), universe, 5)
    assert cov.subset == (0, 1, 2, 3, 4)
    assert np.array_equal(cov.sigma, compute_covariance(universe).sigma)


def test_random_instance_deterministic_and_recomputable():
    universe = synthetic_universe(np.random.default_rng(0), size=8, days=60)
    a = random_instance(np.random.default_rng(7), universe, 4)
    b = random_instance(np.random.default_rng(7), universe, 4)
    assert a.subset == b.subset
    assert np.array_equal(a.sigma, b.sigma)
    again = compute_covariance([universe[i] for i in a.subset])
    assert np.array_equal(a.sigma, again.sigma)


def test_random_instance_too_large():
    universe = synthetic_universe(np.random.default_rng(0), size=3, days=10)
    with pytest.raises(MarketDataError):
        random_instance(np.random.default_rng(0), universe, 4)


def test_json_round_trip_and_csv(tmp_path):
    universe = synthetic_universe(np.random.default_rng(2), size=3, days=12)
    write_prices_csv(tmp_path / "u.csv", universe)
    back = load_prices(tmp_path / "u.csv", [s.ticker for s in universe])
    assert np.allclose(compute_covariance(back).sigma, compute_covariance(universe).sigma, rtol=1e-12)
    cov = compute_covariance(universe)
    data = json.loads(cov.to_json())
    assert set(data) == {"tickers", "sigma"}
    assert CovarianceMatrix.from_json(cov.to_json()) == cov


def test_rejects_asymmetric_or_indefinite():
    with pytest.raises(MarketDataError):
        CovarianceMatrix.from_array([[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(MarketDataError):
        CovarianceMatrix.from_array([[1.0, 2.0], [2.0, 1.0]])


def test_factor_model_is_valid():
    for seed in range(10):
        cov = factor_model_covariance(np.random.default_rng(seed), 5)
        assert np.mean(np.diag(cov.sigma)) == pytest.approx(1.0)
        assert np.linalg.eigvalsh(cov.sigma).min() > 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.permutations(range(4)))
def test_covariance_permutation_equivariant(seed, perm):
    universe = synthetic_universe(np.random.default_rng(seed), size=4, days=20)
    base = compute_covariance(universe).sigma
    permuted = compute_covariance([universe[i] for i in perm]).sigma
    assert np.allclose(permuted, base[np.ix_(perm, perm)], rtol=1e-13, atol=0)
    assert np.linalg.eigvalsh(base).min() >= -1e-9 * np.trace(base)
