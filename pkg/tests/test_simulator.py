import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from dgmvp.simulator import (
    GateEvent,
    SimulatorError,
    apply_cnot,
    apply_event,
    apply_rz,
    apply_rzz,
    apply_three_excitation,
    apply_three_excitation_circuit,
    apply_two_excitation,
    apply_two_excitation_circuit,
    apply_x,
    basis_state,
    dump_statevector,
    expectation_diagonal,
    load_statevector,
    probabilities,
    run_program,
    sample,
    sample_from_probabilities,
    zero_state,
)

from conftest import dense_gate, random_state, z_diag


def test_x_flips_lsb_qubit():
    s = apply_x(zero_state(3), 1)
    assert s[0b010] == 1


def test_rz_dense():
    nq, theta = 3, 0.71
    psi = random_state(nq, np.random.default_rng(0))
    dense = expm(-0.5j * theta * np.diag(z_diag(nq, 2)))
    assert np.allclose(apply_rz(psi.copy(), 2, theta), dense @ psi, atol=1e-12)


def test_rzz_dense():
    nq, theta = 4, -1.3
    psi = random_state(nq, np.random.default_rng(1))
    dense = expm(-0.5j * theta * np.diag(z_diag(nq, 0) * z_diag(nq, 3)))
    assert np.allclose(apply_rzz(psi.copy(), 0, 3, theta), dense @ psi, atol=1e-12)


def test_cnot_dense():
    nq = 3
    psi = random_state(nq, np.random.default_rng(2))
    out = apply_cnot(psi.copy(), 2, 0)
    for i in range(8):
        j = i ^ 1 if (i >> 2) & 1 else i
        assert out[j] == pytest.approx(psi[i])


@pytest.mark.parametrize("a,b", [(0, 1), (1, 0), (3, 1), (0, 4)])
def test_two_excitation_dense(a, b):
    nq, beta = 5, 0.93
    psi = random_state(nq, np.random.default_rng(a * 7 + b))
    oracle = dense_gate(nq, {a: 1, b: 0}, {a: 0, b: 1}, beta)
    assert np.max(np.abs(apply_two_excitation(psi.copy(), a, b, beta) - oracle @ psi)) < 1e-12


@pytest.mark.parametrize("hi,b,c", [(2, 0, 1), (0, 1, 2), (4, 1, 3), (1, 4, 0)])
def test_three_excitation_dense(hi, b, c):
    nq, beta = 5, -0.41
    psi = random_state(nq, np.random.default_rng(hi + 10 * b + 100 * c))
    oracle = dense_gate(nq, {hi: 0, b: 1, c: 1}, {hi: 1, b: 0, c: 0}, beta)
    assert np.max(np.abs(apply_three_excitation(psi.copy(), hi, b, c, beta) - oracle @ psi)) < 1e-12


def test_two_excitation_basis_action():
    s = apply_two_excitation(basis_state(2, 0b01), 0, 1, 0.3)
    assert s[0b01] == pytest.approx(np.cos(0.3))
    assert s[0b10] == pytest.approx(np.sin(0.3))


@settings(max_examples=30, deadline=None)
@given(st.floats(-2 * np.pi, 2 * np.pi, allow_nan=False), st.integers(0, 2**32 - 1))
def test_circuit_decompositions_equal_unitaries(beta, seed):
    rng = np.random.default_rng(seed)
    psi = random_state(4, rng)
    a, b, c = rng.permutation(4)[:3]
    direct = apply_two_excitation(psi.copy(), a, b, beta)
    assert np.max(np.abs(apply_two_excitation_circuit(psi.copy(), a, b, beta) - direct)) < 1e-11
    direct = apply_three_excitation(psi.copy(), a, b, c, beta)
    assert np.max(np.abs(apply_three_excitation_circuit(psi.copy(), a, b, c, beta) - direct)) < 1e-11


def test_norm_drift_long_random_program():
    rng = np.random.default_rng(5)
    nq = 6
    psi = random_state(nq, rng)
    for _ in range(10_000):
        kind = rng.integers(4)
        q = rng.permutation(nq)[:3]
        angle = rng.uniform(-np.pi, np.pi)
        if kind == 0:
            apply_rz(psi, q[0], angle)
        elif kind == 1:
            apply_rzz(psi, q[0], q[1], angle)
        elif kind == 2:
            apply_two_excitation(psi, q[0], q[1], angle)
        else:
            apply_three_excitation(psi, q[0], q[1], q[2], angle)
    assert abs(np.linalg.norm(psi) - 1) < 1e-10


def test_batched_state_matches_rows():
    rng = np.random.default_rng(3)
    batch = np.stack([random_state(3, rng) for _ in range(4)])
    single = [apply_three_excitation(row.copy(), 2, 0, 1, 0.5) for row in batch]
    out = apply_three_excitation(batch.copy(), 2, 0, 1, 0.5)
    assert np.allclose(out, np.stack(single))


def test_gate_event_validation():
    with pytest.raises(SimulatorError):
        GateEvent("swap", (0, 1))
    with pytest.raises(SimulatorError):
        GateEvent("rzz", (1, 1), 0.2)
    with pytest.raises(SimulatorError):
        apply_event(zero_state(2), GateEvent("rz", (5,), 0.1))


def test_run_program_matches_direct_calls():
    prog = [GateEvent("pauli-x", (0,)), GateEvent("two-excitation", (0, 2), 0.4), GateEvent("rzz", (0, 2), 0.3)]
    a = run_program(zero_state(3), prog)
    b = apply_rzz(apply_two_excitation(apply_x(zero_state(3), 0), 0, 2, 0.4), 0, 2, 0.3)
    assert np.array_equal(a, b)


def test_expectation_shape_check():
    with pytest.raises(SimulatorError):
        expectation_diagonal(zero_state(2), np.zeros(3))


def test_sampling_frequencies():
    probs = np.array([0.1, 0.0, 0.6, 0.3])
    draws = sample_from_probabilities(probs, 50_000, np.random.default_rng(9))
    freq = np.bincount(draws, minlength=4) / draws.size
    assert freq[1] == 0
    assert np.allclose(freq, probs, atol=0.01)


def test_sample_deterministic():
    psi = random_state(4, np.random.default_rng(0))
    a = sample(psi, 100, np.random.default_rng(1))
    b = sample(psi, 100, np.random.default_rng(1))
    assert np.array_equal(a, b)
    assert np.isclose(probabilities(psi).sum(), 1)


def test_statevector_round_trip(tmp_path):
    psi = random_state(5, np.random.default_rng(0))
    sidecar = dump_statevector(psi, tmp_path / "psi.bin")
    assert sidecar.exists()
    assert np.array_equal(load_statevector(tmp_path / "psi.bin"), psi)
