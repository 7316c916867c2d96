import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from dgmvp.pauli import (
    BRIDGE_CASES,
    IDENTITIES,
    PauliError,
    PauliSum,
    carry_minus,
    carry_plus,
    commutator,
    exchange_minus,
    exchange_plus,
    expm_antihermitian,
    identity_report_json,
    pauli_decompose,
    support_decompose,
    verify_bridges,
    verify_identities,
    z_string,
)

from conftest import transition_generator


def test_single_qubit_algebra():
    x = PauliSum.from_letters(1, {0: "X"})
    y = PauliSum.from_letters(1, {0: "Y"})
    z = PauliSum.from_letters(1, {0: "Z"})
    assert (x @ y).is_close(1j * z)
    assert (y @ x).is_close(-1j * z)
    assert (x @ x).is_close(PauliSum.identity(1))


def test_universe_mismatch():
    with pytest.raises(PauliError):
        PauliSum.identity(2) + PauliSum.identity(3)


def test_bad_pattern():
    with pytest.raises(PauliError):
        PauliSum(2, {"XQ": 1.0})


def test_to_dense_cap():
    with pytest.raises(PauliError):
        PauliSum.identity(6).to_dense()


def test_commutator_of_commuting_strings_is_zero():
    a = PauliSum(2, {"XX": 1.0})
    b = PauliSum(2, {"ZZ": 1.0})
    assert commutator(a, b).terms == {}


def test_lsb_first_dense_order():
    # qubit 0 is the least significant bit of the matrix index
    x0 = PauliSum.from_letters(2, {0: "X"}).to_dense()
    assert x0[1, 0] == 1 and x0[2, 0] == 0


def test_exchange_generator_matches_transition_oracle():
    # moves the excitation from the second qubit to the first
    g = exchange_minus(2, 0, 1).to_dense()
    oracle = transition_generator(2, {0: 0, 1: 1}, {0: 1, 1: 0})
    assert np.allclose(g, oracle, atol=1e-15)
    assert np.allclose(exchange_plus(2, 0, 1).to_dense(), np.abs(oracle), atol=1e-15)


def test_carry_generator_matches_transition_oracle():
    g = carry_minus(3, 0, 1, 2).to_dense()
    oracle = transition_generator(3, {0: 0, 1: 1, 2: 1}, {0: 1, 1: 0, 2: 0})
    assert np.allclose(g, oracle, atol=1e-15)
    assert np.allclose(carry_plus(3, 0, 1, 2).to_dense(), np.abs(oracle), atol=1e-15)


@pytest.mark.parametrize("ident", IDENTITIES, ids=lambda i: i.name)
def test_catalog_identity_dense(ident):
    assert np.max(np.abs(ident.lhs.to_dense() - ident.rhs.to_dense())) < 1e-12


@pytest.mark.parametrize("case", BRIDGE_CASES, ids=lambda c: c.name)
def test_bridge_coefficients(case):
    for beta in (0.0, 0.4, 1.3, 2.2, -0.7):
        dec = support_decompose(case.unitary(beta), case.basis)
        assert dec.residual < 1e-10
        assert np.allclose(dec.coefficients, case.coefficients(beta), atol=1e-10)


def test_bridge_unitary_matches_scipy():
    case = BRIDGE_CASES[0]
    beta = 0.83
    ab = expm(beta * exchange_minus(3, 0, 1).to_dense())
    bc = expm(beta * exchange_minus(3, 1, 2).to_dense())
    assert np.allclose(case.unitary(beta), ab @ bc @ ab, atol=1e-12)


def test_verify_identities_all_pass():
    results = verify_identities()
    assert all(r.passed for r in results), [r for r in results if not r.passed]
    report = json.loads(identity_report_json(results))
    assert set(report[0]) == {"name", "max_error", "pass", "note"}
    flagged = [r for r in report if r["note"]]
    assert flagged, "sign corrections should be annotated"


def test_verify_bridges_rejects_nonfinite():
    with pytest.raises(PauliError):
        verify_bridges([float("nan")])


@settings(max_examples=25, deadline=None)
@given(st.floats(-np.pi, np.pi, allow_nan=False))
def test_expm_antihermitian_matches_scipy(beta):
    g = carry_minus(3, 0, 2, 1)
    assert np.allclose(expm_antihermitian(g, beta), expm(beta * g.to_dense()), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_decompose_round_trip(seed):
    rng = np.random.default_rng(seed)
    patterns = ["".join(rng.choice(list("IXYZ"), 3)) for _ in range(5)]
    op = PauliSum(3, {p: complex(*rng.normal(size=2)) for p in patterns})
    assert pauli_decompose(op.to_dense()).is_close(op, 1e-12)


def test_z_string_diagonal():
    d = z_string(3, 0, 2).diagonal_values()
    idx = np.arange(8)
    assert np.array_equal(d, (1 - 2 * (idx & 1)) * (1 - 2 * ((idx >> 2) & 1)))
