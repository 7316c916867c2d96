"""Thermal relaxation by quantum trajectories, and post-selection.

Each shot is one trajectory.  Trajectories are evolved together as rows of a
``(shots, 2**N)`` array.  After every gate, each of its target qubits decays
for the gate's duration: an amplitude-damping jump to ``|0>`` with
probability ``p_jump * P(1)`` (else the no-jump Kraus update), followed by a
``Z`` flip with the probability that reproduces pure dephasing at rate
``1/T2 - 1/(2 T1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numba
import numpy as np

from .circuits import AnsatzConfig, ansatz_program
from .encoding import EncodingSpec, index_to_bits, bits_to_str
from .hamiltonian import CostModel
from .simulator import GateEvent, apply_event, num_qubits_of, probabilities, zero_state

SINGLE_QUBIT = 50e-9
TWO_QUBIT = 300e-9

# composite durations follow the CNOT / controlled-Ry decompositions
DEFAULT_DURATIONS = {
    "pauli-x": SINGLE_QUBIT,
    "rz": SINGLE_QUBIT,
    "rzz": 2 * TWO_QUBIT + SINGLE_QUBIT,
    "two-excitation": 3 * TWO_QUBIT,
    # 4 CNOTs around a doubly controlled Ry (itself 4 CNOTs + 4 single-qubit rotations)
    "three-excitation": 8 * TWO_QUBIT + 4 * SINGLE_QUBIT,
}
MEASUREMENT = 1e-6


class NoiseError(ValueError):
    pass


class EmptySelection(RuntimeError):
    """Every outcome was filtered out."""


@dataclass(frozen=True)
class NoiseParams:
    t1_mean: float = 50e-6
    t1_sd: float = 10e-6
    t2_mean: float = 70e-6
    t2_sd: float = 10e-6
    durations: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_DURATIONS))
    measurement: float = MEASUREMENT
    idle_decay: bool = False

    def __post_init__(self):
        if self.t1_mean <= 0 or self.t2_mean <= 0 or self.t1_sd < 0 or self.t2_sd < 0:
            raise NoiseError("relaxation time distributions need positive means and non-negative spreads")
        if any(d < 0 for d in self.durations.values()) or self.measurement < 0:
            raise NoiseError("durations must be non-negative")

    @classmethod
    def noiseless(cls) -> "NoiseParams":
        return cls(durations={k: 0.0 for k in DEFAULT_DURATIONS}, measurement=0.0)

    def to_dict(self) -> dict:
        return {
            "t1_mean": self.t1_mean, "t1_sd": self.t1_sd, "t2_mean": self.t2_mean, "t2_sd": self.t2_sd,
            "durations": dict(self.durations), "measurement": self.measurement, "idle_decay": self.idle_decay,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "NoiseParams":
        base = cls()
        durations = dict(base.durations)
        durations.update(data.get("durations", {}))
        return cls(
            data.get("t1_mean", base.t1_mean), data.get("t1_sd", base.t1_sd),
            data.get("t2_mean", base.t2_mean), data.get("t2_sd", base.t2_sd),
            durations, data.get("measurement", base.measurement), data.get("idle_decay", base.idle_decay),
        )


def sample_qubit_times(params: NoiseParams, num_qubits: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-qubit ``(T1, T2)`` from normals, redrawn until ``0 < T2 <= 2 T1``."""
    t1 = np.empty(num_qubits)
    t2 = np.empty(num_qubits)
    for q in range(num_qubits):
        for _ in range(10_000):
            a = rng.normal(params.t1_mean, params.t1_sd)
            b = rng.normal(params.t2_mean, params.t2_sd)
            if a > 0 and 0 < b <= 2 * a:
                t1[q], t2[q] = a, b
                break
        else:
            raise NoiseError("could not draw relaxation times satisfying T2 <= 2 T1")
    return t1, t2


def relaxation_probabilities(duration: float, t1: float, t2: float) -> tuple[float, float]:
    """Jump probability and Z-flip probability for one decay step."""
    if t1 <= 0 or t2 <= 0 or t2 > 2 * t1 * (1 + 1e-12):
        raise NoiseError(f"invalid relaxation times T1={t1}, T2={t2}")
    p_jump = -math.expm1(-duration / t1)
    rate = max(1.0 / t2 - 0.5 / t1, 0.0)
    p_flip = -0.5 * math.expm1(-duration * rate)
    return p_jump, p_flip


def apply_relaxation(
    state: np.ndarray, qubit: int, duration: float, t1: float, t2: float, rng: np.random.Generator
) -> np.ndarray:
    """One trajectory step on every row of ``state`` (in place).

    Zero duration is an exact no-op and consumes no random numbers.
    """
    if duration < 0:
        raise NoiseError("duration must be non-negative")
    if duration == 0:
        return state
    p_jump, p_flip = relaxation_probabilities(duration, t1, t2)
    nq = num_qubits_of(state)
    batch = state.reshape(-1, 1 << nq)
    view = batch.reshape(batch.shape[0], -1, 2, 1 << qubit)
    excited = view[:, :, 1, :]
    ground = view[:, :, 0, :]
    p1 = np.einsum("sij,sij->s", excited.conj(), excited).real

    jump = rng.random(batch.shape[0]) < p_jump * p1
    flip = rng.random(batch.shape[0]) < p_flip
    if jump.any():
        ground[jump] = excited[jump]
        excited[jump] = 0.0
    stay = ~jump
    if stay.any():
        excited[stay] *= math.sqrt(1.0 - p_jump)
    if flip.any():
        excited[flip] *= -1.0
    norms = np.sqrt(np.einsum("si,si->s", batch.conj(), batch).real)
    batch /= norms[:, None]
    return state


@dataclass(frozen=True)
class TrajectoryOutcome:
    bitstring: str
    feasible: bool


@dataclass
class NoisyOutcomes:
    """Measured basis indices of every trajectory plus their feasibility."""

    indices: np.ndarray
    feasible: np.ndarray
    num_qubits: int

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self) -> Iterator[TrajectoryOutcome]:
        for ix, ok in zip(self.indices, self.feasible):
            yield TrajectoryOutcome(bits_to_str(index_to_bits(int(ix), self.num_qubits)), bool(ok))


def feasibility_mask(spec: EncodingSpec, indices: np.ndarray) -> np.ndarray:
    total = np.zeros(len(indices), dtype=np.int64)
    for t in range(spec.n):
        total += (np.asarray(indices, dtype=np.int64) >> (t * spec.l)) & spec.max_lots
    return total == spec.max_lots


def measurement_rng(rng: np.random.Generator) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent child streams for in-circuit noise and terminal sampling."""
    gate_rng, meas_rng = rng.spawn(2)
    return gate_rng, meas_rng


def run_trajectories(
    program: Sequence[GateEvent],
    num_qubits: int,
    shots: int,
    t1: np.ndarray,
    t2: np.ndarray,
    rng: np.random.Generator,
    measurement: float = 0.0,
    idle_decay: bool = False,
) -> np.ndarray:
    """Evolve ``shots`` trajectories; returns the ``(shots, 2**N)`` final states."""
    states = zero_state(num_qubits, batch=shots)
    everyone = range(num_qubits)
    for event in program:
        apply_event(states, event)
        if event.duration > 0:
            for q in everyone if idle_decay else event.targets:
                apply_relaxation(states, q, event.duration, t1[q], t2[q], rng)
    if measurement > 0:
        for q in everyone:
            apply_relaxation(states, q, measurement, t1[q], t2[q], rng)
    return states


_KIND_CODE = {"pauli-x": 0, "rz": 1, "rzz": 2, "two-excitation": 3, "three-excitation": 4}


@numba.njit(cache=True)
def _trajectory_kernel(psi0, kinds, qubits, angles, step_start, step_qubit, step_jump, step_flip, uniforms, u_meas):
    shots = uniforms.shape[0]
    dim = psi0.shape[0]
    ngates = kinds.shape[0]
    out = np.empty(shots, dtype=np.int64)
    psi = np.empty(dim, dtype=np.complex128)
    for s in range(shots):
        psi[:] = psi0
        for g in range(ngates + 1):
            if g < ngates:
                kind = kinds[g]
                theta = angles[g]
                m0 = 1 << qubits[g, 0]
                if kind == 0:
                    for i in range(dim):
                        if i & m0 == 0:
                            tmp = psi[i]
                            psi[i] = psi[i | m0]
                            psi[i | m0] = tmp
                elif kind == 1:
                    lo = complex(math.cos(0.5 * theta), -math.sin(0.5 * theta))
                    hi = complex(math.cos(0.5 * theta), math.sin(0.5 * theta))
                    for i in range(dim):
                        psi[i] *= hi if i & m0 else lo
                elif kind == 2:
                    m1 = 1 << qubits[g, 1]
                    even = complex(math.cos(0.5 * theta), -math.sin(0.5 * theta))
                    odd = complex(math.cos(0.5 * theta), math.sin(0.5 * theta))
                    for i in range(dim):
                        psi[i] *= odd if ((i & m0) != 0) != ((i & m1) != 0) else even
                else:
                    c = math.cos(theta)
                    sn = math.sin(theta)
                    if kind == 3:
                        on = m0
                        off = 1 << qubits[g, 1]
                    else:
                        on = (1 << qubits[g, 1]) | (1 << qubits[g, 2])
                        off = m0
                    flip = on | off
                    for i in range(dim):
                        if i & flip == on:
                            j = i ^ flip
                            x = psi[i]
                            y = psi[j]
                            psi[j] = sn * x + c * y
                            psi[i] = c * x - sn * y
            for r in range(step_start[g], step_start[g + 1]):
                m = 1 << step_qubit[r]
                p1 = 0.0
                for i in range(dim):
                    if i & m:
                        p1 += psi[i].real ** 2 + psi[i].imag ** 2
                if uniforms[s, r, 0] < step_jump[r] * p1:
                    for i in range(dim):
                        if i & m:
                            psi[i ^ m] = psi[i]
                            psi[i] = 0.0
                else:
                    keep = math.sqrt(1.0 - step_jump[r])
                    for i in range(dim):
                        if i & m:
                            psi[i] *= keep
                if uniforms[s, r, 1] < step_flip[r]:
                    for i in range(dim):
                        if i & m:
                            psi[i] = -psi[i]
                norm = 0.0
                for i in range(dim):
                    norm += psi[i].real ** 2 + psi[i].imag ** 2
                scale = 1.0 / math.sqrt(norm)
                for i in range(dim):
                    psi[i] *= scale
        total = 0.0
        for i in range(dim):
            total += psi[i].real ** 2 + psi[i].imag ** 2
        acc = 0.0
        idx = 0
        for i in range(dim):
            acc += psi[i].real ** 2 + psi[i].imag ** 2
            if acc / total <= u_meas[s]:
                idx = i + 1
        out[s] = min(idx, dim - 1)
    return out


def _compile_program(program: Sequence[GateEvent], num_qubits: int, t1, t2, measurement: float, idle_decay: bool):
    ngates = len(program)
    kinds = np.array([_KIND_CODE[e.kind] for e in program], dtype=np.int64)
    qubits = np.zeros((ngates, 3), dtype=np.int64)
    angles = np.array([e.angle for e in program], dtype=float)
    starts, step_qubit, jumps, flips = [0], [], [], []

    def add(qs, duration):
        for q in qs:
            pj, pf = relaxation_probabilities(duration, t1[q], t2[q])
            step_qubit.append(q)
            jumps.append(pj)
            flips.append(pf)

    for g, e in enumerate(program):
        qubits[g, : len(e.targets)] = e.targets
        if e.duration > 0:
            add(range(num_qubits) if idle_decay else e.targets, e.duration)
        starts.append(len(step_qubit))
    if measurement > 0:
        add(range(num_qubits), measurement)
    starts.append(len(step_qubit))
    return (
        kinds, qubits, angles, np.array(starts, dtype=np.int64), np.array(step_qubit, dtype=np.int64),
        np.array(jumps, dtype=float), np.array(flips, dtype=float),
    )


def noisy_sample(
    config: AnsatzConfig,
    model: CostModel,
    spec: EncodingSpec,
    lots: Sequence[int],
    shots: int,
    params: NoiseParams,
    rng: np.random.Generator,
    qubit_times: tuple[np.ndarray, np.ndarray] | None = None,
    chunk: int = 1024,
) -> NoisyOutcomes:
    """Measure ``shots`` noisy trajectories of the ansatz.

    Relaxation times are drawn once per call (one simulated device) unless
    given.  All decay uniforms come from one child stream, drawn chunk by
    chunk in shot order, and terminal sampling from another; with every
    duration zero no noise draws happen and the outcomes equal
    :func:`noiseless_sample` with the same generator.
    """
    if shots < 1:
        raise NoiseError("shots must be at least 1")
    gate_rng, meas_rng = measurement_rng(rng)
    if qubit_times is None:
        qubit_times = sample_qubit_times(params, spec.num_qubits, gate_rng)
    t1, t2 = qubit_times
    program = ansatz_program(config, model, spec, lots, params.durations)
    compiled = _compile_program(program, spec.num_qubits, t1, t2, params.measurement, params.idle_decay)
    nsteps = len(compiled[4])
    psi0 = zero_state(spec.num_qubits)
    u = meas_rng.random(shots)
    out = np.empty(shots, dtype=np.int64)
    for start in range(0, shots, chunk):
        stop = min(start + chunk, shots)
        uniforms = gate_rng.random((stop - start, nsteps, 2))
        out[start:stop] = _trajectory_kernel(psi0, *compiled, uniforms, u[start:stop])
    return NoisyOutcomes(out, feasibility_mask(spec, out), spec.num_qubits)


def noiseless_sample(
    config: AnsatzConfig,
    model: CostModel,
    spec: EncodingSpec,
    lots: Sequence[int],
    shots: int,
    rng: np.random.Generator,
) -> NoisyOutcomes:
    """Reference path: one dense statevector, inverse-CDF sampling."""
    gate_rng, meas_rng = measurement_rng(rng)
    state = zero_state(spec.num_qubits)
    for event in ansatz_program(config, model, spec, lots):
        apply_event(state, event)
    cdf = np.cumsum(probabilities(state))
    cdf /= cdf[-1]
    u = meas_rng.random(shots)
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)
    return NoisyOutcomes(idx, feasibility_mask(spec, idx), spec.num_qubits)


def post_select(outcomes: NoisyOutcomes) -> tuple[np.ndarray, float]:
    """Keep feasible outcomes; returns (kept indices, kept fraction)."""
    total = len(outcomes)
    if total == 0:
        raise NoiseError("no outcomes to filter")
    kept = outcomes.indices[outcomes.feasible]
    if len(kept) == 0:
        raise EmptySelection("no feasible outcome survived post-selection")
    return kept, len(kept) / total
