"""Initial states, budget-preserving mixers and ansatz assembly.

Two execution paths share one gate list:

* the dense path applies gates to a full ``2**(n*l)`` statevector, and
* :class:`FeasibleAnsatz` runs the same rotations on the budget-feasible
  subspace only, with a compiled kernel.  Every mixer gate maps feasible
  states to feasible states, so restricting to that subspace is exact.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numba
import numpy as np

from .encoding import (
    EncodingSpec,
    bits_to_index,
    encode,
    feasible_indices,
    is_feasible,
    sample_feasible_uniform,
    lots_of,
)
from .hamiltonian import CostModel, apply_cost_operator, quadratic_cost, _sigma_array
from .simulator import (
    GateEvent,
    apply_event,
    apply_three_excitation,
    apply_two_excitation,
    apply_x,
    zero_state,
)

TWO_PI = 2.0 * math.pi
INITIAL_KINDS = ("maxbias", "warm_started", "equal_weighted", "random_weighted")


class CircuitError(ValueError):
    pass


# classical relaxation -----------------------------------------------------

def _min_variance_on(sigma: np.ndarray, support: list[int], ridge: float) -> np.ndarray:
    sub = sigma[np.ix_(support, support)] + ridge * np.eye(len(support))
    y = np.linalg.solve(sub, np.ones(len(support)))
    w = np.zeros(sigma.shape[0])
    w[support] = y / y.sum()
    return w


def gmvp_continuous(sigma, tol: float = 1e-12, max_ridge: float = 1e-6) -> np.ndarray:
    """Long-only minimum-variance weights by a primal active-set method.

    Negative weights are dropped from the support one at a time (most negative
    first) and excluded assets re-enter when their marginal risk undercuts the
    portfolio variance.  Singular blocks get a small ridge.
    """
    s = _sigma_array(sigma)
    n = s.shape[0]
    scale = max(float(np.trace(s)) / n, 1e-300)
    ridge = 0.0
    while True:
        try:
            support = list(range(n))
            for _ in range(20 * n + 20):
                w = _min_variance_on(s, support, ridge * scale)
                if not np.all(np.isfinite(w)):
                    raise np.linalg.LinAlgError("non-finite weights")
                neg = [i for i in support if w[i] < -tol]
                if neg:
                    support.remove(min(neg, key=lambda i: w[i]))
                    continue
                w = np.clip(w, 0.0, None)
                w /= w.sum()
                grad = s @ w
                level = float(w @ grad)
                outside = [i for i in range(n) if i not in support and grad[i] < level - 1e-12 * scale]
                if not outside:
                    return w
                support.append(min(outside, key=lambda i: grad[i]))
                support.sort()
            raise CircuitError("active-set iteration did not converge")
        except np.linalg.LinAlgError:
            ridge = 1e-12 if ridge == 0.0 else ridge * 100
            if ridge > max_ridge:
                raise CircuitError("covariance is singular beyond the ridge tolerance") from None


def kkt_residual(sigma, w: np.ndarray) -> float:
    """Largest violation of the long-only minimum-variance optimality conditions."""
    s = _sigma_array(sigma)
    grad = s @ w
    level = float(w @ grad)
    on = w > 1e-12
    stationarity = np.max(np.abs(grad[on] - level)) if on.any() else 0.0
    dual = np.max(np.clip(level - grad[~on], 0.0, None)) if (~on).any() else 0.0
    return float(max(stationarity, dual, abs(w.sum() - 1.0), max(0.0, -w.min())))


def warm_start_round(spec: EncodingSpec, weights: Sequence[float]) -> tuple[int, ...]:
    """Floor to the lot grid, then hand leftover lots to the largest remainders.

    Ties in the remainder go to the lower asset index.  Returns a lot vector.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (spec.n,):
        raise CircuitError(f"expected {spec.n} weights")
    scaled = w * spec.max_lots
    nearest = np.round(scaled)
    scaled = np.where(np.abs(scaled - nearest) < 1e-9, nearest, scaled)
    base = np.floor(scaled).astype(int)
    base = np.clip(base, 0, spec.max_lots)
    left = spec.max_lots - int(base.sum())
    remainder = np.round(scaled - base, 12)
    order = sorted(range(spec.n), key=lambda i: (-remainder[i], i))
    lots = base.copy()
    for i in order[: max(left, 0)]:
        lots[i] += 1
    if lots.sum() != spec.max_lots:
        raise CircuitError("warm-start rounding did not land on the budget")
    return tuple(int(x) for x in lots)


def equal_weighted_lots(spec: EncodingSpec) -> tuple[int, ...]:
    each, extra = divmod(spec.max_lots, spec.n)
    return tuple(each + (1 if t < extra else 0) for t in range(spec.n))


def maxbias_lots(spec: EncodingSpec) -> tuple[int, ...]:
    return (spec.max_lots,) + (0,) * (spec.n - 1)


def initial_lots(
    kind: str, spec: EncodingSpec, sigma=None, rng: np.random.Generator | None = None
) -> tuple[int, ...]:
    if kind == "maxbias":
        lots = maxbias_lots(spec)
    elif kind == "equal_weighted":
        lots = equal_weighted_lots(spec)
    elif kind == "warm_started":
        if sigma is None:
            raise CircuitError("warm start needs a covariance matrix")
        lots = warm_start_round(spec, gmvp_continuous(sigma))
    elif kind == "random_weighted":
        if rng is None:
            raise CircuitError("random-weighted start needs a random generator")
        lots = lots_of(spec, sample_feasible_uniform(spec, rng))
    else:
        raise CircuitError(f"unknown initial state {kind!r}")
    if sum(lots) != spec.max_lots:
        raise CircuitError(f"{kind} produced an infeasible lot vector {lots}")
    return tuple(lots)


def prepare_initial(state: np.ndarray, spec: EncodingSpec, lots: Sequence[int]) -> np.ndarray:
    """Flip the qubits of ``lots`` on a zero register with X gates."""
    for q, bit in enumerate(encode(spec, lots)):
        if bit:
            apply_x(state, q)
    if not is_feasible(spec, encode(spec, lots)):
        raise CircuitError("initial state is infeasible")
    return state


# mixers -------------------------------------------------------------------

def mixer_pairs(n: int, distance: int) -> list[tuple[int, int]]:
    """Ordered asset pairs ``(t, (t + d) mod n)`` for ``d = 1..distance``.

    Each unordered pair is visited once, in the orientation met first.
    """
    if n < 2:
        return []
    if not 1 <= distance <= max(1, n // 2):
        raise CircuitError(f"mixer distance {distance} outside [1, {max(1, n // 2)}]")
    seen: set[frozenset] = set()
    pairs = []
    for d in range(1, distance + 1):
        for t in range(n):
            u = (t + d) % n
            key = frozenset((t, u))
            if key not in seen:
                seen.add(key)
                pairs.append((t, u))
    return pairs


def block_gates(spec: EncodingSpec, t: int, u: int) -> list[tuple[str, tuple[int, ...]]]:
    """Excitation gates of one asset-pair block, in application order.

    Exchange layer on every bit, carries on odd then even bit offsets, and a
    second exchange layer.  Carries move one lot of significance ``2**k`` out
    of both bit ``k`` registers and into bit ``k + 1`` of asset ``t``.
    """
    if t == u or not (0 <= t < spec.n and 0 <= u < spec.n):
        raise CircuitError(f"bad asset pair ({t}, {u})")
    q = spec.qubit
    exchange = [("two-excitation", (q(t, k), q(u, k))) for k in range(spec.l)]
    # 1-based offsets k = 1..l-1 couple bit k-1 of both assets to bit k of asset t
    carry = lambda k: ("three-excitation", (q(t, k), q(t, k - 1), q(u, k - 1)))
    odd = [carry(k) for k in range(1, spec.l) if k % 2 == 1]
    even = [carry(k) for k in range(1, spec.l) if k % 2 == 0]
    return exchange + odd + even + exchange


def mixer_gates(spec: EncodingSpec, distance: int) -> list[tuple[int, str, tuple[int, ...]]]:
    """``(pair_index, kind, targets)`` for one mixer layer."""
    out = []
    for i, (t, u) in enumerate(mixer_pairs(spec.n, distance)):
        out.extend((i, kind, targets) for kind, targets in block_gates(spec, t, u))
    return out


def _pair_betas(beta, npairs: int) -> np.ndarray:
    betas = np.broadcast_to(np.asarray(beta, dtype=float), (npairs,)) if np.ndim(beta) == 0 else np.asarray(beta, dtype=float)
    if betas.shape != (npairs,):
        raise CircuitError(f"expected one beta or {npairs} per-pair betas")
    return betas


def apply_block(state: np.ndarray, spec: EncodingSpec, t: int, u: int, beta: float) -> np.ndarray:
    for kind, targets in block_gates(spec, t, u):
        if kind == "two-excitation":
            apply_two_excitation(state, *targets, beta)
        else:
            apply_three_excitation(state, *targets, beta)
    return state


def apply_mixer(state: np.ndarray, spec: EncodingSpec, distance: int, beta) -> np.ndarray:
    pairs = mixer_pairs(spec.n, distance)
    betas = _pair_betas(beta, len(pairs))
    for (t, u), b in zip(pairs, betas):
        apply_block(state, spec, t, u, b)
    return state


# ansatz -------------------------------------------------------------------

@dataclass
class AnsatzConfig:
    initial: str
    distance: int
    p: int
    params: list[float] = field(default_factory=list)
    seed: int | None = None
    initial_lots: tuple[int, ...] | None = None
    per_pair_beta: bool = False

    def __post_init__(self):
        if self.initial not in INITIAL_KINDS:
            raise CircuitError(f"unknown initial state {self.initial!r}")
        if self.p < 0:
            raise CircuitError("p must be non-negative")
        self.params = [float(x) % TWO_PI for x in self.params]

    def n_params(self, spec: EncodingSpec) -> int:
        if self.per_pair_beta:
            return self.p * (1 + len(mixer_pairs(spec.n, self.distance)))
        return 2 * self.p

    def gammas(self) -> list[float]:
        return self.params[: self.p]

    def betas(self, spec: EncodingSpec) -> list:
        rest = self.params[self.p :]
        if not self.per_pair_beta:
            return rest
        k = len(mixer_pairs(spec.n, self.distance))
        return [rest[i * k : (i + 1) * k] for i in range(self.p)]

    def with_params(self, params: Sequence[float]) -> "AnsatzConfig":
        return AnsatzConfig(self.initial, self.distance, self.p, list(params), self.seed, self.initial_lots, self.per_pair_beta)

    def to_json(self) -> str:
        data = asdict(self)
        data["initial_lots"] = list(self.initial_lots) if self.initial_lots is not None else None
        return json.dumps(data)

    @classmethod
    def from_json(cls, text: str) -> "AnsatzConfig":
        data = json.loads(text)
        if data.get("initial_lots") is not None:
            data["initial_lots"] = tuple(data["initial_lots"])
        return cls(**data)


def resolve_initial_lots(config: AnsatzConfig, spec: EncodingSpec, sigma=None, rng=None) -> tuple[int, ...]:
    if config.initial_lots is not None:
        return tuple(config.initial_lots)
    if rng is None and config.seed is not None:
        rng = np.random.default_rng(config.seed)
    return initial_lots(config.initial, spec, sigma, rng)


def _check_params(config: AnsatzConfig, spec: EncodingSpec) -> None:
    if len(config.params) != config.n_params(spec):
        raise CircuitError(f"expected {config.n_params(spec)} parameters, got {len(config.params)}")


def run_ansatz(
    config: AnsatzConfig,
    model: CostModel,
    spec: EncodingSpec,
    sigma=None,
    rng: np.random.Generator | None = None,
    cost_method: str = "diagonal",
) -> np.ndarray:
    """Dense statevector after the initial state and ``p`` cost/mixer layers."""
    _check_params(config, spec)
    state = zero_state(spec.num_qubits)
    prepare_initial(state, spec, resolve_initial_lots(config, spec, sigma, rng))
    for gamma, beta in zip(config.gammas(), config.betas(spec)):
        apply_cost_operator(state, model, gamma, cost_method)
        apply_mixer(state, spec, config.distance, beta)
    return state


def ansatz_program(
    config: AnsatzConfig,
    model: CostModel,
    spec: EncodingSpec,
    lots: Sequence[int],
    durations: Mapping[str, float] | None = None,
) -> list[GateEvent]:
    """Flat gate list of the ansatz, each gate tagged with its duration."""
    _check_params(config, spec)
    durations = durations or {}
    program = [
        GateEvent("pauli-x", (q,), 0.0, durations.get("pauli-x", 0.0))
        for q, bit in enumerate(encode(spec, lots))
        if bit
    ]
    gates = mixer_gates(spec, config.distance)
    for gamma, beta in zip(config.gammas(), config.betas(spec)):
        program += model.gate_program(gamma, durations)
        betas = _pair_betas(beta, len(mixer_pairs(spec.n, config.distance)))
        program += [GateEvent(kind, targets, betas[i], durations.get(kind, 0.0)) for i, kind, targets in gates]
    return program


def run_program_dense(program: Sequence[GateEvent], num_qubits: int) -> np.ndarray:
    state = zero_state(num_qubits)
    for event in program:
        apply_event(state, event)
    return state


# compiled feasible-subspace engine -----------------------------------------

@numba.njit(cache=True)
def _evolve(amps, energies, gammas, betas, gate_pair, gate_start, src, dst):
    # amps: complex subspace amplitudes, modified in place
    p = gammas.shape[0]
    m = amps.shape[0]
    ngates = gate_pair.shape[0]
    for layer in range(p):
        g = gammas[layer]
        for i in range(m):
            # energies already exclude the constant (global phase)
            ang = -g * energies[i]
            amps[i] = amps[i] * complex(math.cos(ang), math.sin(ang))
        for k in range(ngates):
            b = betas[layer, gate_pair[k]]
            c = math.cos(b)
            s = math.sin(b)
            for j in range(gate_start[k], gate_start[k + 1]):
                x = amps[src[j]]
                y = amps[dst[j]]
                amps[dst[j]] = s * x + c * y
                amps[src[j]] = c * x - s * y
    return amps


class FeasibleAnsatz:
    """The ansatz restricted to the budget-feasible basis states.

    Positions follow :func:`feasible_indices` order.  Results agree with
    :func:`run_ansatz` on those indices; every other amplitude is zero.
    """

    def __init__(self, spec: EncodingSpec, model: CostModel, distance: int):
        self.spec = spec
        self.model = model
        self.distance = distance
        self.indices = feasible_indices(spec)
        self.size = len(self.indices)
        self.position = {int(ix): i for i, ix in enumerate(self.indices)}
        lots = np.stack([(self.indices >> (t * spec.l)) & spec.max_lots for t in range(spec.n)], axis=1)
        self.costs = quadratic_cost(spec, model.sigma, lots)
        self._shifted = self.costs - model.constant
        self.npairs = len(mixer_pairs(spec.n, distance))

        pair_ids, starts, srcs, dsts = [], [0], [], []
        for pair, kind, targets in mixer_gates(spec, distance):
            if kind == "two-excitation":
                on, off = (targets[0],), (targets[1],)
            else:
                on, off = (targets[1], targets[2]), (targets[0],)
            on_mask = sum(1 << q for q in on)
            off_mask = sum(1 << q for q in off)
            flip = on_mask | off_mask
            sel = (self.indices & flip) == on_mask
            src_idx = self.indices[sel]
            srcs.append(np.array([self.position[int(i)] for i in src_idx], dtype=np.int64))
            dsts.append(np.array([self.position[int(i ^ flip)] for i in src_idx], dtype=np.int64))
            pair_ids.append(pair)
            starts.append(starts[-1] + len(src_idx))
        self.gate_pair = np.array(pair_ids, dtype=np.int64)
        self.gate_start = np.array(starts, dtype=np.int64)
        self.src = np.concatenate(srcs) if srcs else np.zeros(0, dtype=np.int64)
        self.dst = np.concatenate(dsts) if dsts else np.zeros(0, dtype=np.int64)

    def initial_amplitudes(self, lots: Sequence[int]) -> np.ndarray:
        amps = np.zeros(self.size, dtype=np.complex128)
        amps[self.position[bits_to_index(encode(self.spec, lots))]] = 1.0
        return amps

    def evolve(self, lots: Sequence[int], gammas: Sequence[float], betas) -> np.ndarray:
        gammas = np.asarray(gammas, dtype=float)
        betas = np.asarray(betas, dtype=float)
        width = max(self.npairs, 1)
        if betas.ndim == 1:
            betas = betas[:, None]
        if betas.shape[1] == 1:
            betas = np.repeat(betas, width, axis=1)
        if betas.shape != (gammas.shape[0], width):
            raise CircuitError(f"betas must have shape ({gammas.shape[0]}, {width}), got {betas.shape}")
        amps = self.initial_amplitudes(lots)
        return _evolve(amps, self._shifted, gammas, betas, self.gate_pair, self.gate_start, self.src, self.dst)

    def run(self, config: AnsatzConfig, lots: Sequence[int]) -> np.ndarray:
        _check_params(config, self.spec)
        betas = config.betas(self.spec)
        return self.evolve(lots, config.gammas(), np.asarray(betas, dtype=float).reshape(config.p, -1))

    def probabilities(self, config: AnsatzConfig, lots: Sequence[int]) -> np.ndarray:
        amps = self.run(config, lots)
        return amps.real**2 + amps.imag**2

    def embed(self, amps: np.ndarray) -> np.ndarray:
        full = np.zeros(1 << self.spec.num_qubits, dtype=np.complex128)
        full[self.indices] = amps
        return full
