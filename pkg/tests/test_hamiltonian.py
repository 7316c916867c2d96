import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgmvp.encoding import EncodingSpec, encode, index_to_bits, decode
from dgmvp.hamiltonian import (
    CostModelError,
    apply_cost_operator,
    build_cost_model,
    eval_cost,
    zz_term_count,
)
from dgmvp.market import factor_model_covariance

from conftest import random_state


def brute_cost(spec, sigma, index):
    _, w = decode(spec, index_to_bits(index, spec.num_qubits))
    w = np.array([float(x) for x in w])
    return w @ sigma @ w


def test_single_asset_single_bit():
    sigma = np.array([[2.0]])
    model = build_cost_model(EncodingSpec(1, 1), sigma)
    assert model.z_terms == ((0, -1.0),)
    assert model.zz_terms == ()
    assert model.constant == pytest.approx(1.0)
    assert np.allclose(model.ising_values(), [0.0, 2.0])


def test_identity_covariance_two_by_two():
    spec = EncodingSpec(2, 2)
    model = build_cost_model(spec, np.eye(2))
    bits = encode(spec, (3, 0))
    assert eval_cost(spec, np.eye(2), bits) == pytest.approx(1.0)
    assert dict(model.zz_terms).get((0, 2), 0.0) == 0.0


def test_merged_and_unmerged_agree():
    spec = EncodingSpec(3, 2)
    sigma = factor_model_covariance(np.random.default_rng(0), 3).sigma
    merged = build_cost_model(spec, sigma, merge=True)
    split = build_cost_model(spec, sigma, merge=False)
    assert len(split.zz_terms) == zz_term_count(3, 2)
    assert len(merged.zz_terms) < len(split.zz_terms)
    assert np.allclose(merged.ising_values(), split.ising_values(), atol=1e-12)


def test_dimension_mismatch():
    with pytest.raises(CostModelError):
        build_cost_model(EncodingSpec(3, 2), np.eye(2))


def test_pauli_sum_diagonal_matches_brute():
    spec = EncodingSpec(2, 3)
    sigma = factor_model_covariance(np.random.default_rng(4), 2).sigma
    model = build_cost_model(spec, sigma)
    diag = model.to_pauli_sum().diagonal_values()
    brute = np.array([brute_cost(spec, sigma, i) for i in range(1 << 6)])
    assert np.max(np.abs(diag - brute)) < 1e-10


def test_gates_match_diagonal_up_to_phase():
    spec = EncodingSpec(2, 2)
    model = build_cost_model(spec, factor_model_covariance(np.random.default_rng(2), 2).sigma)
    psi = random_state(4, np.random.default_rng(0))
    a = apply_cost_operator(psi.copy(), model, 0.37, "diagonal")
    b = apply_cost_operator(psi.copy(), model, 0.37, "gates")
    assert np.allclose(a, b, atol=1e-12)
    with pytest.raises(CostModelError):
        apply_cost_operator(psi.copy(), model, 0.1, "nope")


def test_program_and_json():
    spec = EncodingSpec(2, 2)
    model = build_cost_model(spec, np.eye(2))
    prog = model.gate_program(0.5, {"rz": 50e-9, "rzz": 650e-9})
    assert {e.kind for e in prog} <= {"rz", "rzz"}
    assert all(e.duration == (50e-9 if e.kind == "rz" else 650e-9) for e in prog)
    data = json.loads(model.to_json())
    assert data["terms"][0]["qubits"] == []


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_ising_expansion_equals_quadratic_form(n, l, seed):
    spec = EncodingSpec(n, l)
    sigma = factor_model_covariance(np.random.default_rng(seed), n).sigma
    model = build_cost_model(spec, sigma)
    assert np.max(np.abs(model.ising_values() - model.cost_table)) < 1e-10
