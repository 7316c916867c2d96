"""Portfolio-risk cost function and its Ising form.

With ``x_i = sum_k 2**k z_i^k`` and ``z = (1 - Z)/2`` the risk
``a**2 x^T Sigma x`` becomes a sum of ``Z`` and ``ZZ`` terms plus a constant.
The constant is kept for metrics but dropped by the circuit (global phase).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .encoding import ENUMERATION_GUARD, EncodingError, EncodingSpec, lots_of
from .market import CovarianceMatrix
from .pauli import PauliSum
from .simulator import GateEvent, apply_diagonal_phase, apply_rz, apply_rzz, num_qubits_of


class CostModelError(ValueError):
    pass


def _sigma_array(sigma) -> np.ndarray:
    if isinstance(sigma, CovarianceMatrix):
        return np.asarray(sigma.sigma, dtype=float)
    return np.asarray(sigma, dtype=float)


def lots_table(spec: EncodingSpec) -> np.ndarray:
    """Lot vector of every basis index, shape ``(2**(n*l), n)``."""
    if spec.num_qubits > ENUMERATION_GUARD:
        raise EncodingError(f"{spec.num_qubits} qubits exceeds the enumeration guard")
    idx = np.arange(1 << spec.num_qubits, dtype=np.int64)
    mask = (1 << spec.l) - 1
    return np.stack([(idx >> (t * spec.l)) & mask for t in range(spec.n)], axis=1)


def quadratic_cost(spec: EncodingSpec, sigma, lots: np.ndarray) -> np.ndarray:
    """``a**2 x^T Sigma x`` for each row of ``lots``."""
    s = _sigma_array(sigma)
    x = np.asarray(lots, dtype=float)
    return np.einsum("bi,ij,bj->b", x, s, x) / spec.max_lots**2


def eval_cost(spec: EncodingSpec, sigma, bits) -> float:
    x = np.array([lots_of(spec, bits)], dtype=float)
    return float(quadratic_cost(spec, sigma, x)[0])


@dataclass(frozen=True)
class CostModel:
    spec: EncodingSpec
    sigma: np.ndarray
    zz_terms: tuple[tuple[tuple[int, int], float], ...]
    z_terms: tuple[tuple[int, float], ...]
    constant: float
    merged: bool = True
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def num_qubits(self) -> int:
        return self.spec.num_qubits

    @property
    def cost_table(self) -> np.ndarray:
        """``f(z)`` for every basis index (lazy, enumeration-guarded)."""
        if "table" not in self._cache:
            table = quadratic_cost(self.spec, self.sigma, lots_table(self.spec))
            table.setflags(write=False)
            self._cache["table"] = table
        return self._cache["table"]

    def ising_values(self) -> np.ndarray:
        """Evaluate the Z/ZZ expansion plus constant on every basis index."""
        nq = self.num_qubits
        idx = np.arange(1 << nq, dtype=np.int64)
        spin = lambda q: 1.0 - 2.0 * ((idx >> q) & 1)
        out = np.full(1 << nq, self.constant)
        for q, h in self.z_terms:
            out += h * spin(q)
        for (q1, q2), j in self.zz_terms:
            out += j * spin(q1) * spin(q2)
        return out

    def to_pauli_sum(self) -> PauliSum:
        nq = self.num_qubits
        terms: dict[str, complex] = {"I" * nq: self.constant}
        for q, h in self.z_terms:
            key = "".join("Z" if i == q else "I" for i in range(nq))
            terms[key] = terms.get(key, 0) + h
        for (q1, q2), j in self.zz_terms:
            key = "".join("Z" if i in (q1, q2) else "I" for i in range(nq))
            terms[key] = terms.get(key, 0) + j
        return PauliSum(nq, terms)

    def phases(self, gamma: float) -> np.ndarray:
        """Diagonal of ``exp(-i gamma (C - c))``."""
        return np.exp(-1j * gamma * (self.cost_table - self.constant))

    def gate_program(self, gamma: float, durations: Mapping[str, float] | None = None) -> list[GateEvent]:
        durations = durations or {}
        program = [GateEvent("rz", (q,), 2.0 * gamma * h, durations.get("rz", 0.0)) for q, h in self.z_terms]
        program += [
            GateEvent("rzz", pair, 2.0 * gamma * j, durations.get("rzz", 0.0)) for pair, j in self.zz_terms
        ]
        return program

    def to_json(self) -> str:
        terms = [{"qubits": [], "coefficient": self.constant}]
        terms += [{"qubits": [q], "coefficient": h} for q, h in self.z_terms]
        terms += [{"qubits": list(pair), "coefficient": j} for pair, j in self.zz_terms]
        return json.dumps({"n": self.spec.n, "l": self.spec.l, "merged": self.merged, "terms": terms}, indent=2)


def build_cost_model(spec: EncodingSpec, sigma, merge: bool = True) -> CostModel:
    s = _sigma_array(sigma)
    n, l = spec.n, spec.l
    if s.shape != (n, n):
        raise CostModelError(f"covariance is {s.shape}, encoding expects {n}x{n}")
    a = 1.0 / spec.max_lots
    weight = [float(1 << k) for k in range(l)]
    row_sums = s.sum(axis=1)

    z_terms = tuple(
        (spec.qubit(i, k), -0.5 * a * row_sums[i] * weight[k]) for i in range(n) for k in range(l)
    )
    zz: list[tuple[tuple[int, int], float]] = []
    for i in range(n):
        for j in range(i + 1, n):
            for k1 in range(l):
                for k2 in range(l):
                    zz.append(((spec.qubit(i, k1), spec.qubit(j, k2)), 0.5 * a * a * s[i, j] * weight[k1] * weight[k2]))
        for k1 in range(l):
            for k2 in range(l):
                if k1 == k2 or (merge and k2 < k1):
                    continue
                scale = 0.5 if merge else 0.25
                zz.append(((spec.qubit(i, k1), spec.qubit(i, k2)), scale * a * a * s[i, i] * weight[k1] * weight[k2]))
    constant = 0.25 * a * a * (spec.max_lots**2 * s.sum() + np.trace(s) * sum(w * w for w in weight))
    return CostModel(spec, s.copy(), tuple(zz), z_terms, float(constant), merge)


def apply_cost_operator(state: np.ndarray, model: CostModel, gamma: float, method: str = "diagonal") -> np.ndarray:
    """``exp(-i gamma C)`` up to the global phase of the constant."""
    if num_qubits_of(state) != model.num_qubits:
        raise CostModelError("state and cost model disagree on qubit count")
    if method == "diagonal":
        return apply_diagonal_phase(state, model.phases(gamma))
    if method == "gates":
        for q, h in model.z_terms:
            apply_rz(state, q, 2.0 * gamma * h)
        for (q1, q2), j in model.zz_terms:
            apply_rzz(state, q1, q2, 2.0 * gamma * j)
        return state
    raise CostModelError(f"unknown method {method!r}")


def zz_term_count(n: int, l: int) -> int:
    """Unmerged ZZ term count."""
    return l * l * n * (n - 1) // 2 + n * l * (l - 1)
