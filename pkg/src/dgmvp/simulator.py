"""Dense statevector kernels.

A state is a complex array whose last axis has length ``2**num_qubits``; bit
``q`` of the index is the value of qubit ``q``.  Any leading axes are treated
as a batch, which the trajectory noise model uses to evolve many shots at
once.  Kernels update the array in place and also return it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

MAX_QUBITS = 24


class SimulatorError(ValueError):
    pass


def num_qubits_of(state: np.ndarray) -> int:
    dim = state.shape[-1]
    nq = dim.bit_length() - 1
    if dim != 1 << nq:
        raise SimulatorError(f"state length {dim} is not a power of two")
    return nq


def zero_state(num_qubits: int, batch: int | None = None) -> np.ndarray:
    if not 0 <= num_qubits <= MAX_QUBITS:
        raise SimulatorError(f"qubit count {num_qubits} outside [0, {MAX_QUBITS}]")
    shape = (1 << num_qubits,) if batch is None else (batch, 1 << num_qubits)
    state = np.zeros(shape, dtype=np.complex128)
    state[..., 0] = 1.0
    return state


def basis_state(num_qubits: int, index: int) -> np.ndarray:
    state = np.zeros(1 << num_qubits, dtype=np.complex128)
    state[index] = 1.0
    return state


def _tensor(state: np.ndarray, nq: int) -> np.ndarray:
    return state.reshape(state.shape[:-1] + (2,) * nq)


def _where(nq: int, fixed: dict[int, int]) -> tuple:
    # qubit q is axis nq-1-q of the tensor view (most significant bit first)
    idx: list = [slice(None)] * nq
    for q, v in fixed.items():
        idx[nq - 1 - q] = v
    return (Ellipsis, *idx)


def _check(nq: int, *qubits: int) -> None:
    for q in qubits:
        if not 0 <= q < nq:
            raise SimulatorError(f"qubit {q} out of range for {nq} qubits")
    if len(set(qubits)) != len(qubits):
        raise SimulatorError(f"qubit indices must be distinct, got {qubits}")


def apply_x(state: np.ndarray, qubit: int) -> np.ndarray:
    nq = num_qubits_of(state)
    _check(nq, qubit)
    t = _tensor(state, nq)
    s0, s1 = _where(nq, {qubit: 0}), _where(nq, {qubit: 1})
    tmp = t[s0].copy()
    t[s0] = t[s1]
    t[s1] = tmp
    return state


def apply_rz(state: np.ndarray, qubit: int, theta: float) -> np.ndarray:
    """``exp(-i theta Z / 2)``: bit 0 picks up ``exp(-i theta/2)``."""
    nq = num_qubits_of(state)
    _check(nq, qubit)
    t = _tensor(state, nq)
    t[_where(nq, {qubit: 0})] *= np.exp(-0.5j * theta)
    t[_where(nq, {qubit: 1})] *= np.exp(0.5j * theta)
    return state


def apply_rzz(state: np.ndarray, q1: int, q2: int, theta: float) -> np.ndarray:
    """``exp(-i theta Z Z / 2)``: even parity picks up ``exp(-i theta/2)``."""
    nq = num_qubits_of(state)
    _check(nq, q1, q2)
    t = _tensor(state, nq)
    even, odd = np.exp(-0.5j * theta), np.exp(0.5j * theta)
    for b1 in (0, 1):
        for b2 in (0, 1):
            t[_where(nq, {q1: b1, q2: b2})] *= odd if b1 ^ b2 else even
    return state


def apply_ry(state: np.ndarray, qubit: int, theta: float) -> np.ndarray:
    return apply_controlled_ry(state, (), qubit, theta)


def apply_cnot(state: np.ndarray, control: int, target: int) -> np.ndarray:
    nq = num_qubits_of(state)
    _check(nq, control, target)
    t = _tensor(state, nq)
    s0 = _where(nq, {control: 1, target: 0})
    s1 = _where(nq, {control: 1, target: 1})
    tmp = t[s0].copy()
    t[s0] = t[s1]
    t[s1] = tmp
    return state


def apply_controlled_ry(
    state: np.ndarray, controls: Sequence[int], target: int, theta: float
) -> np.ndarray:
    """Ry(theta) on ``target`` when every control qubit is 1."""
    nq = num_qubits_of(state)
    _check(nq, *controls, target)
    t = _tensor(state, nq)
    ctrl = {q: 1 for q in controls}
    s0 = _where(nq, {**ctrl, target: 0})
    s1 = _where(nq, {**ctrl, target: 1})
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    a0 = t[s0].copy()
    a1 = t[s1].copy()
    t[s0] = c * a0 - s * a1
    t[s1] = s * a0 + c * a1
    return state


def apply_cry(state: np.ndarray, control: int, target: int, theta: float) -> np.ndarray:
    return apply_controlled_ry(state, (control,), target, theta)


def apply_ccry(state: np.ndarray, c1: int, c2: int, target: int, theta: float) -> np.ndarray:
    return apply_controlled_ry(state, (c1, c2), target, theta)


def _givens(t: np.ndarray, src: tuple, dst: tuple, beta: float) -> None:
    c, s = np.cos(beta), np.sin(beta)
    x = t[src].copy()
    y = t[dst].copy()
    t[dst] = s * x + c * y
    t[src] = c * x - s * y


def apply_two_excitation(state: np.ndarray, q_a: int, q_b: int, beta: float) -> np.ndarray:
    """Exchange rotation moving an excitation from ``q_a`` to ``q_b``.

    Implements ``exp(beta G)`` with ``G = |01><10| - |10><01|`` on the pair
    (written as ``|a b>``), i.e. ``|10> -> cos(beta)|10> + sin(beta)|01>``.
    ``|00>`` and ``|11>`` are left untouched.
    """
    nq = num_qubits_of(state)
    _check(nq, q_a, q_b)
    t = _tensor(state, nq)
    _givens(t, _where(nq, {q_a: 1, q_b: 0}), _where(nq, {q_a: 0, q_b: 1}), beta)
    return state


def apply_three_excitation(
    state: np.ndarray, q_hi: int, q_b: int, q_c: int, beta: float
) -> np.ndarray:
    """Carry rotation ``|0,1,1> -> cos(beta)|0,1,1> + sin(beta)|1,0,0>`` on (hi, b, c).

    All other six basis patterns of the three qubits are left untouched.
    """
    nq = num_qubits_of(state)
    _check(nq, q_hi, q_b, q_c)
    t = _tensor(state, nq)
    _givens(
        t,
        _where(nq, {q_hi: 0, q_b: 1, q_c: 1}),
        _where(nq, {q_hi: 1, q_b: 0, q_c: 0}),
        beta,
    )
    return state


def apply_two_excitation_circuit(state: np.ndarray, q_a: int, q_b: int, beta: float) -> np.ndarray:
    """Same unitary as :func:`apply_two_excitation`, built from CNOT and controlled-Ry."""
    apply_cnot(state, q_a, q_b)
    apply_cry(state, q_b, q_a, -2.0 * beta)
    apply_cnot(state, q_a, q_b)
    return state


def apply_three_excitation_circuit(
    state: np.ndarray, q_hi: int, q_b: int, q_c: int, beta: float
) -> np.ndarray:
    """Same unitary as :func:`apply_three_excitation`, built from CNOTs and a doubly controlled Ry."""
    apply_cnot(state, q_hi, q_b)
    apply_cnot(state, q_hi, q_c)
    apply_ccry(state, q_b, q_c, q_hi, 2.0 * beta)
    apply_cnot(state, q_hi, q_c)
    apply_cnot(state, q_hi, q_b)
    return state


def apply_diagonal_phase(state: np.ndarray, phases: np.ndarray) -> np.ndarray:
    state *= phases
    return state


def probabilities(state: np.ndarray) -> np.ndarray:
    return state.real**2 + state.imag**2


def expectation_diagonal(state: np.ndarray, costs: np.ndarray) -> float:
    costs = np.asarray(costs, dtype=float)
    if costs.shape[-1] != state.shape[-1]:
        raise SimulatorError(f"cost table has {costs.shape[-1]} entries, state has {state.shape[-1]}")
    return float(probabilities(state) @ costs)


def sample_from_probabilities(probs: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF sampling of basis indices; one uniform draw per shot."""
    if shots < 1:
        raise SimulatorError("shots must be at least 1")
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(shots), side="right")
    return np.minimum(idx, len(cdf) - 1)


def sample(state: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``shots`` basis-state indices i.i.d. from ``|amp|**2``."""
    return sample_from_probabilities(probabilities(state), shots, rng)


GATE_KINDS = ("pauli-x", "rz", "rzz", "two-excitation", "three-excitation")
_ARITY = {"pauli-x": 1, "rz": 1, "rzz": 2, "two-excitation": 2, "three-excitation": 3}


@dataclass(frozen=True)
class GateEvent:
    kind: str
    targets: tuple[int, ...]
    angle: float = 0.0
    duration: float = 0.0

    def __post_init__(self):
        if self.kind not in _ARITY:
            raise SimulatorError(f"unknown gate kind {self.kind!r}")
        if len(self.targets) != _ARITY[self.kind]:
            raise SimulatorError(f"{self.kind} needs {_ARITY[self.kind]} targets, got {self.targets}")
        if len(set(self.targets)) != len(self.targets) or min(self.targets) < 0:
            raise SimulatorError(f"bad targets {self.targets}")


def apply_event(state: np.ndarray, event: GateEvent) -> np.ndarray:
    k, q = event.kind, event.targets
    if k == "pauli-x":
        return apply_x(state, q[0])
    if k == "rz":
        return apply_rz(state, q[0], event.angle)
    if k == "rzz":
        return apply_rzz(state, q[0], q[1], event.angle)
    if k == "two-excitation":
        return apply_two_excitation(state, q[0], q[1], event.angle)
    return apply_three_excitation(state, q[0], q[1], q[2], event.angle)


def run_program(state: np.ndarray, program: Sequence[GateEvent]) -> np.ndarray:
    for event in program:
        apply_event(state, event)
    return state


def dump_statevector(state: np.ndarray, path: str | Path) -> Path:
    """Write little-endian complex128 amplitudes plus a ``.json`` sidecar."""
    path = Path(path)
    nq = num_qubits_of(state)
    np.ascontiguousarray(state, dtype="<c16").tofile(path)
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(
        json.dumps(
            {
                "qubit_count": nq,
                "dtype": "complex128 little-endian",
                "ordering": "bit q of the amplitude index is qubit q; qubit q = asset*l + bit, LSB first",
            },
            indent=2,
        )
    )
    return sidecar


def load_statevector(path: str | Path) -> np.ndarray:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    state = np.fromfile(path, dtype="<c16").astype(np.complex128)
    if state.size != 1 << meta["qubit_count"]:
        raise SimulatorError("statevector file does not match its sidecar qubit count")
    return state
