"""Sparse Pauli-sum arithmetic and Hilbert-Schmidt support decomposition.

Pauli strings are stored as text of length ``num_qubits`` over ``IXYZ``;
character ``q`` acts on qubit ``q``.  Dense matrices follow the simulator's
convention that bit ``q`` of a basis index is qubit ``q``.
"""
from __future__ import annotations

import functools
import itertools
import json
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

PRUNE = 1e-14
DENSE_QUBIT_CAP = 5

# single-qubit products: (a, b) -> (phase, letter) with a @ b = phase * letter
_PRODUCT = {
    ("I", "I"): (1, "I"), ("I", "X"): (1, "X"), ("I", "Y"): (1, "Y"), ("I", "Z"): (1, "Z"),
    ("X", "I"): (1, "X"), ("X", "X"): (1, "I"), ("X", "Y"): (1j, "Z"), ("X", "Z"): (-1j, "Y"),
    ("Y", "I"): (1, "Y"), ("Y", "X"): (-1j, "Z"), ("Y", "Y"): (1, "I"), ("Y", "Z"): (1j, "X"),
    ("Z", "I"): (1, "Z"), ("Z", "X"): (1j, "Y"), ("Z", "Y"): (-1j, "X"), ("Z", "Z"): (1, "I"),
}

_MATRIX = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class PauliError(ValueError):
    pass


@functools.lru_cache(maxsize=65536)
def _multiply_strings(a: str, b: str) -> tuple[complex, str]:
    phase: complex = 1
    out = []
    for x, y in zip(a, b):
        p, letter = _PRODUCT[(x, y)]
        phase *= p
        out.append(letter)
    return phase, "".join(out)


@dataclass(frozen=True)
class PauliSum:
    num_qubits: int
    terms: Mapping[str, complex]

    def __post_init__(self):
        clean: dict[str, complex] = {}
        for pattern, coeff in self.terms.items():
            if len(pattern) != self.num_qubits or set(pattern) - set("IXYZ"):
                raise PauliError(f"bad Pauli pattern {pattern!r} for {self.num_qubits} qubits")
            coeff = complex(coeff)
            if abs(coeff) > PRUNE:
                clean[pattern] = coeff
        object.__setattr__(self, "terms", clean)

    # construction
    @classmethod
    def zero(cls, num_qubits: int) -> "PauliSum":
        return cls(num_qubits, {})

    @classmethod
    def identity(cls, num_qubits: int, coeff: complex = 1.0) -> "PauliSum":
        return cls(num_qubits, {"I" * num_qubits: coeff})

    @classmethod
    def from_letters(cls, num_qubits: int, letters: Mapping[int, str], coeff: complex = 1.0) -> "PauliSum":
        pattern = ["I"] * num_qubits
        for q, letter in letters.items():
            if not 0 <= q < num_qubits:
                raise PauliError(f"qubit {q} out of range")
            pattern[q] = letter
        return cls(num_qubits, {"".join(pattern): coeff})

    # arithmetic
    def _same_universe(self, other: "PauliSum") -> None:
        if not isinstance(other, PauliSum):
            raise TypeError(f"expected PauliSum, got {type(other).__name__}")
        if other.num_qubits != self.num_qubits:
            raise PauliError(f"qubit universes differ: {self.num_qubits} vs {other.num_qubits}")

    def __add__(self, other: "PauliSum") -> "PauliSum":
        self._same_universe(other)
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0) + v
        return PauliSum(self.num_qubits, out)

    def __neg__(self) -> "PauliSum":
        return PauliSum(self.num_qubits, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + (-other)

    def __mul__(self, scalar) -> "PauliSum":
        if isinstance(scalar, PauliSum):
            return multiply(self, scalar)
        return PauliSum(self.num_qubits, {k: v * scalar for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __matmul__(self, other: "PauliSum") -> "PauliSum":
        return multiply(self, other)

    def dagger(self) -> "PauliSum":
        return PauliSum(self.num_qubits, {k: v.conjugate() for k, v in self.terms.items()})

    def distance(self, other: "PauliSum") -> float:
        """Largest coefficient difference."""
        diff = (self - other).terms
        return max((abs(v) for v in diff.values()), default=0.0)

    def is_close(self, other: "PauliSum", tol: float = 1e-13) -> bool:
        return self.distance(other) <= tol

    def to_dense(self) -> np.ndarray:
        if self.num_qubits > DENSE_QUBIT_CAP:
            raise PauliError(f"dense form capped at {DENSE_QUBIT_CAP} qubits")
        dim = 1 << self.num_qubits
        out = np.zeros((dim, dim), dtype=complex)
        for pattern, coeff in self.terms.items():
            out += coeff * pauli_matrix(pattern)
        return out

    def diagonal_values(self) -> np.ndarray:
        """Diagonal of a Z-only sum over all basis states, without building the matrix."""
        nq = self.num_qubits
        idx = np.arange(1 << nq)
        out = np.zeros(1 << nq)
        for pattern, coeff in self.terms.items():
            if set(pattern) - {"I", "Z"}:
                raise PauliError("diagonal_values needs a sum of I/Z strings")
            sign = np.ones(1 << nq)
            for q, letter in enumerate(pattern):
                if letter == "Z":
                    sign *= 1 - 2 * ((idx >> q) & 1)
            out += coeff.real * sign
        return out

    def __repr__(self) -> str:
        body = " + ".join(f"({v:.6g}){k}" for k, v in sorted(self.terms.items()))
        return f"PauliSum[{self.num_qubits}]({body or '0'})"


def pauli_matrix(pattern: str) -> np.ndarray:
    m = np.eye(1, dtype=complex)
    for letter in reversed(pattern):
        m = np.kron(m, _MATRIX[letter])
    return m


def multiply(a: PauliSum, b: PauliSum) -> PauliSum:
    a._same_universe(b)
    out: dict[str, complex] = {}
    for pa, ca in a.terms.items():
        for pb, cb in b.terms.items():
            phase, pattern = _multiply_strings(pa, pb)
            out[pattern] = out.get(pattern, 0) + phase * ca * cb
    return PauliSum(a.num_qubits, out)


def commutator(a: PauliSum, b: PauliSum) -> PauliSum:
    return multiply(a, b) - multiply(b, a)


def product(*ops: PauliSum) -> PauliSum:
    return functools.reduce(multiply, ops)


# named operators ---------------------------------------------------------

def z_string(num_qubits: int, *qubits: int) -> PauliSum:
    return PauliSum.from_letters(num_qubits, {q: "Z" for q in qubits})


def lowering(num_qubits: int, q: int) -> PauliSum:
    """``(X + iY)/2 = |0><1|``."""
    return PauliSum.from_letters(num_qubits, {q: "X"}, 0.5) + PauliSum.from_letters(num_qubits, {q: "Y"}, 0.5j)


def raising(num_qubits: int, q: int) -> PauliSum:
    """``(X - iY)/2 = |1><0|``."""
    return lowering(num_qubits, q).dagger()


def exchange_plus(num_qubits: int, a: int, b: int) -> PauliSum:
    """Symmetric exchange ``(X_a X_b + Y_a Y_b)/2``."""
    return (
        PauliSum.from_letters(num_qubits, {a: "X", b: "X"}, 0.5)
        + PauliSum.from_letters(num_qubits, {a: "Y", b: "Y"}, 0.5)
    )


def exchange_minus(num_qubits: int, a: int, b: int) -> PauliSum:
    """Antisymmetric exchange ``i(X_a Y_b - Y_a X_b)/2``; it moves an excitation from ``b`` to ``a``."""
    return (
        PauliSum.from_letters(num_qubits, {a: "X", b: "Y"}, 0.5j)
        - PauliSum.from_letters(num_qubits, {a: "Y", b: "X"}, 0.5j)
    )


def carry_plus(num_qubits: int, a: int, b: int, c: int) -> PauliSum:
    """``(X X X + Y X Y - X Y Y + Y Y X)/4`` on (a, b, c)."""
    f = PauliSum.from_letters
    return (
        f(num_qubits, {a: "X", b: "X", c: "X"}, 0.25)
        + f(num_qubits, {a: "Y", b: "X", c: "Y"}, 0.25)
        - f(num_qubits, {a: "X", b: "Y", c: "Y"}, 0.25)
        + f(num_qubits, {a: "Y", b: "Y", c: "X"}, 0.25)
    )


def carry_minus(num_qubits: int, a: int, b: int, c: int) -> PauliSum:
    """``i(X X Y + X Y X - Y X X + Y Y Y)/4``; moves excitations on b and c into a."""
    f = PauliSum.from_letters
    return (
        f(num_qubits, {a: "X", b: "X", c: "Y"}, 0.25j)
        + f(num_qubits, {a: "X", b: "Y", c: "X"}, 0.25j)
        - f(num_qubits, {a: "Y", b: "X", c: "X"}, 0.25j)
        + f(num_qubits, {a: "Y", b: "Y", c: "Y"}, 0.25j)
    )


def ladder_exchange(num_qubits: int, a: int, b: int, sign: int) -> PauliSum:
    """``Q+_a Q_b + sign * Q_a Q+_b`` built from ladder operators."""
    return raising(num_qubits, a) @ lowering(num_qubits, b) + sign * (lowering(num_qubits, a) @ raising(num_qubits, b))


def ladder_carry(num_qubits: int, a: int, b: int, c: int, sign: int) -> PauliSum:
    up = product(raising(num_qubits, a), lowering(num_qubits, b), lowering(num_qubits, c))
    down = product(lowering(num_qubits, a), raising(num_qubits, b), raising(num_qubits, c))
    return up + sign * down


# support decomposition ---------------------------------------------------

def hs_inner(a: np.ndarray, b: np.ndarray) -> complex:
    return complex(np.vdot(a, b))


@dataclass(frozen=True)
class Decomposition:
    coefficients: np.ndarray
    residual: float


def support_decompose(u: np.ndarray, basis: Iterable[PauliSum | np.ndarray], tol: float = 1e-10) -> Decomposition:
    """Project ``u`` on a Hilbert-Schmidt orthogonal operator basis.

    Returns the coefficients ``<b_i, u> / <b_i, b_i>`` and the Frobenius norm
    of what is left over.
    """
    mats = [b.to_dense() if isinstance(b, PauliSum) else np.asarray(b, dtype=complex) for b in basis]
    for i, bi in enumerate(mats):
        if bi.shape != u.shape:
            raise PauliError(f"basis element {i} has shape {bi.shape}, operator has {u.shape}")
    norms = [hs_inner(b, b).real for b in mats]
    for i in range(len(mats)):
        if norms[i] <= tol:
            raise PauliError(f"basis element {i} is zero")
        for j in range(i):
            overlap = abs(hs_inner(mats[i], mats[j])) / np.sqrt(norms[i] * norms[j])
            if overlap > tol:
                raise PauliError(f"basis elements {j} and {i} are not orthogonal (overlap {overlap:.3g})")
    coeffs = np.array([hs_inner(b, u) / nb for b, nb in zip(mats, norms)])
    rest = u - sum((c * b for c, b in zip(coeffs, mats)), np.zeros_like(u))
    return Decomposition(coeffs, float(np.linalg.norm(rest)))


def pauli_decompose(u: np.ndarray, tol: float = 1e-12) -> PauliSum:
    """Full Pauli expansion of a dense operator (at most the dense cap)."""
    nq = u.shape[0].bit_length() - 1
    if nq > DENSE_QUBIT_CAP:
        raise PauliError(f"dense form capped at {DENSE_QUBIT_CAP} qubits")
    terms = {}
    for letters in itertools.product("IXYZ", repeat=nq):
        pattern = "".join(letters)
        c = hs_inner(pauli_matrix(pattern), u) / (1 << nq)
        if abs(c) > tol:
            terms[pattern] = c
    return PauliSum(nq, terms)


def expm_antihermitian(generator: PauliSum, beta: float) -> np.ndarray:
    """Dense ``exp(beta G)`` for an anti-Hermitian Pauli sum ``G``."""
    g = generator.to_dense()
    h = 1j * g  # Hermitian
    w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
    return (v * np.exp(-1j * beta * w)) @ v.conj().T


# identity catalog ---------------------------------------------------------

A, B, C, D = 0, 1, 2, 3


@dataclass(frozen=True)
class Identity:
    name: str
    lhs: PauliSum
    rhs: PauliSum
    # set when the commonly quoted right-hand side differs from the true one
    note: str = ""


def _identities() -> list[Identity]:
    out: list[Identity] = []

    def add(name, lhs, rhs, note=""):
        out.append(Identity(name, lhs, rhs, note))

    n = 2
    sm, sp = exchange_minus(n, A, B), exchange_plus(n, A, B)
    za, zb, zab, one = z_string(n, A), z_string(n, B), z_string(n, A, B), PauliSum.identity(n)
    add("exchange_plus_from_ladders", ladder_exchange(n, A, B, +1), sp)
    add("exchange_minus_from_ladders", ladder_exchange(n, A, B, -1), sm)
    add("sm_za", sm @ za, sp)
    add("sm_zb", -(sm @ zb), sp)
    add("sp_za", sp @ za, sm)
    add("sp_zb", sp @ zb, -sm, "sign flipped: equals -S-, not S-")
    add("za_sm", za @ sm, -sp)
    add("zb_sm", -(zb @ sm), -sp)
    add("za_sm_anticommutes", za @ sm, -(sm @ za))
    add("za_sp", za @ sp, -sm, "sign flipped: equals -S-, not S-")
    add("zb_sp", zb @ sp, sm)
    add("za_sp_anticommutes", za @ sp, -(sp @ za))
    add("za_sp_commutator", commutator(za, sp), -2 * sm, "sign flipped: equals -2 S-, not 2 S-")
    add("sm_zazb", sm @ zab, -sm)
    add("zazb_sm", zab @ sm, -sm)
    add("sp_zazb", sp @ zab, -sp)
    add("zazb_sp", zab @ sp, -sp)
    add("sp_sm", sp @ sm, 0.5 * (za - zb))
    add("sm_sp", -(sm @ sp), 0.5 * (za - zb))
    add("sp_sp", sp @ sp, 0.5 * (one - zab))
    add("sm_sm", -(sm @ sm), 0.5 * (one - zab))

    n = 3
    sm_ab, sm_bc, sm_ac = exchange_minus(n, A, B), exchange_minus(n, B, C), exchange_minus(n, A, C)
    sp_ab, sp_bc, sp_ac = exchange_plus(n, A, B), exchange_plus(n, B, C), exchange_plus(n, A, C)
    zb3 = z_string(n, B)
    add("sm_bc_sm_ab", sm_bc @ sm_ab, 0.5 * sp_ac - 0.5 * (sm_ac @ zb3))
    add("sp_bc_sp_ab", sp_bc @ sp_ab, 0.5 * sp_ac - 0.5 * (sm_ac @ zb3))
    add("sm_ab_sm_bc", sm_ab @ sm_bc, 0.5 * (sm_ac @ zb3) + 0.5 * sp_ac)
    add("sm_ab_sm_bc_zazb", product(sm_ab, sm_bc, z_string(n, A, B)), 0.5 * (sm_ac @ zb3) + 0.5 * sp_ac)
    add("sm_ab_sm_bc_sm_ab", product(sm_ab, sm_bc, sm_ab), PauliSum.zero(n))

    pp, pm = carry_plus(n, A, B, C), carry_minus(n, A, B, C)
    z = lambda *q: z_string(n, *q)
    add("carry_plus_from_ladders", ladder_carry(n, A, B, C, +1), pp)
    add("carry_minus_from_ladders", ladder_carry(n, A, B, C, -1), pm)
    add("carry_plus_bc_symmetric", carry_plus(n, A, C, B), pp)
    add("carry_minus_bc_symmetric", carry_minus(n, A, C, B), pm)
    add("pp_za", pp @ z(A), pm)
    add("za_pp", -(z(A) @ pp), pm)
    add("pp_zb", pp @ z(B), -pm)
    add("pp_zc", pp @ z(C), -pm)
    add("zb_pp", -(z(B) @ pp), -pm)
    add("zc_pp", -(z(C) @ pp), -pm)
    add("pp_zazb", pp @ z(A, B), -pp)
    add("pp_zazc", pp @ z(A, C), -pp)
    add("zazb_pp", z(A, B) @ pp, -pp)
    add("zazc_pp", z(A, C) @ pp, -pp)
    add("pp_zbzc", pp @ z(B, C), pp)
    add("zbzc_pp", z(B, C) @ pp, pp)
    add("pp_zazbzc", pp @ z(A, B, C), pm)
    add("zazbzc_pp", z(A, B, C) @ pp, -pm, "sign flipped: equals -P-, not P-")

    n = 4
    pm_abc, pp_abc = carry_minus(n, A, B, C), carry_plus(n, A, B, C)
    sm_cd, sp_cd = exchange_minus(n, C, D), exchange_plus(n, C, D)
    sm_ad, sp_ad = exchange_minus(n, A, D), exchange_plus(n, A, D)
    pm_abd, pp_abd = carry_minus(n, A, B, D), carry_plus(n, A, B, D)
    pm_dbc, pp_dbc = carry_minus(n, D, B, C), carry_plus(n, D, B, C)
    zc, za4 = z_string(n, C), z_string(n, A)
    zero = PauliSum.zero(n)
    add("sm_cd_pm_abc", sm_cd @ pm_abc, 0.5 * (pp_abd - zc @ pm_abd))
    add("pm_abc_sm_cd", pm_abc @ sm_cd, 0.5 * (pp_abd + zc @ pm_abd))
    add("pp_abc_sp_cd", pp_abc @ sp_cd, pm_abc @ sm_cd)
    add("sm_cd_pm_abc_sm_cd", product(sm_cd, pm_abc, sm_cd), zero)
    add("pm_abc_sm_ad", pm_abc @ sm_ad, 0.5 * (za4 @ pm_dbc - pp_dbc))
    add("sm_ad_pm_abc", sm_ad @ pm_abc, -0.5 * (za4 @ pm_dbc + pp_dbc))
    add("pp_abc_sp_ad", pp_abc @ sp_ad, -(pm_abc @ sm_ad))
    add("sp_ad_pp_abc", sp_ad @ pp_abc, -(sm_ad @ pm_abc), "sign flipped: equals -S-P-, not S-P-")
    add("sm_ad_pm_abc_sm_ad", product(sm_ad, pm_abc, sm_ad), zero)

    # exchange and carry on one block pair commute: qubits (t^k, t'^k, t^{k+1}) = (0, 1, 2)
    n = 3
    add(
        "exchange_carry_commute",
        commutator(exchange_minus(n, 0, 1), carry_minus(n, 2, 0, 1)),
        PauliSum.zero(n),
    )
    return out


IDENTITIES: tuple[Identity, ...] = tuple(_identities())


def exchange_exponential_closed_form(num_qubits: int, a: int, b: int, beta: float) -> PauliSum:
    """``exp(beta S-) = cos^2(beta/2) + sin^2(beta/2) Z_a Z_b + sin(beta) S-``."""
    return (
        PauliSum.identity(num_qubits, np.cos(beta / 2) ** 2)
        + np.sin(beta / 2) ** 2 * z_string(num_qubits, a, b)
        + np.sin(beta) * exchange_minus(num_qubits, a, b)
    )


def carry_exponential_closed_form(num_qubits: int, a: int, b: int, c: int, beta: float) -> PauliSum:
    """``exp(beta P-) = (3 + cos beta)/4 + sin^2(beta/2)/2 (Z_aZ_b + Z_aZ_c - Z_bZ_c) + sin(beta) P-``."""
    z = lambda *q: z_string(num_qubits, *q)
    return (
        PauliSum.identity(num_qubits, (3 + np.cos(beta)) / 4)
        + 0.5 * np.sin(beta / 2) ** 2 * (z(a, b) + z(a, c) - z(b, c))
        + np.sin(beta) * carry_minus(num_qubits, a, b, c)
    )


@dataclass(frozen=True)
class BridgeCase:
    name: str
    num_qubits: int
    unitary: Callable[[float], np.ndarray]
    basis: tuple[PauliSum, ...]
    labels: tuple[str, ...]
    coefficients: Callable[[float], Sequence[float]]


def _bridge_cases() -> list[BridgeCase]:
    s, c = np.sin, np.cos
    ex = lambda n, a, b: (lambda beta: expm_antihermitian(exchange_minus(n, a, b), beta))
    cy = lambda n, a, b, cc: (lambda beta: expm_antihermitian(carry_minus(n, a, b, cc), beta))

    def sandwich(outer, inner):
        return lambda beta: outer(beta) @ inner(beta) @ outer(beta)

    def k_list(b):
        c2, s2 = c(b / 2) ** 2, s(b / 2) ** 2
        return [
            c2**3 + 0.25 * s(b) ** 2 * s2 - 0.5 * s(b) ** 2 * c2,
            c2 * s(b) ** 2,
            0.25 * s(b) ** 2 * c2 + s2**3 + 0.5 * s2 * s(b) ** 2,
            2 * s(b) * c2**2 - 0.5 * s(b) ** 3,
            s(b) * c2**2 - s2**2 * s(b),
            s(b) ** 2,
        ]

    def m_list(b, sign):
        c2, s2 = c(b / 2) ** 2, s(b / 2) ** 2
        t = 0.125 * s(b) ** 2 * c2 + 0.5 * s2**3
        return [
            0.25 * (3 + c(b)) * (0.25 * (3 + c(2 * b)) - 0.5 * s(b) ** 2),
            sign * (0.5 * s2**3 + 0.125 * s(b) ** 2 * c2 - 0.25 * s2 * s(b) ** 2),
            0.25 * s(b) ** 2 * (3 + c(b)),
            t + 0.25 * s2 * s(b) ** 2,
            -sign * (t + 0.25 * s2 * s(b) ** 2),
            sign * 0.5 * s2 * s(b) ** 2,
            0.25 * (3 + c(b)) * s(2 * b),
            sign * (0.25 * s(b) ** 3 - s2**2 * s(b)),
            c(b) * s(b),
            sign * s(b) ** 2,
        ]

    cases = []
    n = 3
    z3 = lambda *q: z_string(n, *q)
    basis3 = (PauliSum.identity(n), z3(A, B), z3(B, C), exchange_minus(n, A, B), exchange_minus(n, B, C), exchange_plus(n, A, C))
    labels3 = ("1", "ZaZb", "ZbZc", "S-ab", "S-bc", "S+ac")
    cases.append(BridgeCase("exchange_ab_bc_ab", n, sandwich(ex(n, A, B), ex(n, B, C)), basis3, labels3, k_list))
    # the mirrored sandwich swaps the roles of (ZaZb, ZbZc) and (S-ab, S-bc)
    mirror = lambda b: [k_list(b)[i] for i in (0, 2, 1, 4, 3, 5)]
    cases.append(BridgeCase("exchange_bc_ab_bc", n, sandwich(ex(n, B, C), ex(n, A, B)), basis3, labels3, mirror))

    n = 4
    z4 = lambda *q: z_string(n, *q)

    def carry_basis(ancilla_pair, spectators, partner, new_carry):
        x, y = ancilla_pair
        sm = exchange_minus(n, x, y)
        return (
            PauliSum.identity(n), z4(*spectators), z4(x, y), z4(*partner[0]), z4(*partner[1]),
            z4(A, B, C, D), sm, z4(*spectators) @ sm, carry_minus(n, A, B, C), carry_plus(n, *new_carry),
        )

    labels4 = ("1", "ZZ_spect", "ZZ_swap", "ZZ_p1", "ZZ_p2", "ZZZZ", "S-", "ZZ S-", "P-abc", "P+new")
    cases.append(BridgeCase(
        "carry_sandwich_cd", n, sandwich(ex(n, C, D), cy(n, A, B, C)),
        carry_basis((C, D), (A, B), ((A, C), (B, C)), (A, B, D)), labels4, lambda b: m_list(b, +1)))
    cases.append(BridgeCase(
        "carry_sandwich_bd", n, sandwich(ex(n, B, D), cy(n, A, B, C)),
        carry_basis((B, D), (A, C), ((A, B), (B, C)), (A, C, D)), labels4, lambda b: m_list(b, +1)))
    cases.append(BridgeCase(
        "carry_sandwich_ad", n, sandwich(ex(n, A, D), cy(n, A, B, C)),
        carry_basis((A, D), (B, C), ((A, B), (A, C)), (D, B, C)), labels4, lambda b: m_list(b, -1)))
    return cases


BRIDGE_CASES: tuple[BridgeCase, ...] = tuple(_bridge_cases())


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_error: float
    passed: bool
    note: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "max_error": self.max_error, "pass": self.passed, "note": self.note}


def verify_bridges(betas: Sequence[float], cases: Sequence[BridgeCase] = BRIDGE_CASES, tol: float = 1e-10) -> list[CheckResult]:
    """Decompose each sandwich unitary and compare with its closed-form coefficients."""
    out = []
    for case in cases:
        worst = 0.0
        for beta in betas:
            if not np.isfinite(beta):
                raise PauliError("beta must be finite")
            dec = support_decompose(case.unitary(beta), case.basis)
            err = np.max(np.abs(dec.coefficients - np.asarray(case.coefficients(beta))))
            worst = max(worst, float(err), dec.residual)
        out.append(CheckResult(case.name, worst, worst <= tol))
    return out


def verify_three_qubit_bridges(betas: Sequence[float], tol: float = 1e-10) -> list[CheckResult]:
    return verify_bridges(betas, [c for c in BRIDGE_CASES if c.name.startswith("carry")], tol)


def verify_identities(tol: float = 1e-13, betas: Sequence[float] = (0.0, 0.37, 1.1, 2.9)) -> list[CheckResult]:
    results = [CheckResult(i.name, i.lhs.distance(i.rhs), i.lhs.distance(i.rhs) <= tol, i.note) for i in IDENTITIES]
    worst_ex = worst_cy = 0.0
    for beta in betas:
        dense = expm_antihermitian(exchange_minus(2, A, B), beta)
        worst_ex = max(worst_ex, pauli_decompose(dense).distance(exchange_exponential_closed_form(2, A, B, beta)))
        dense = expm_antihermitian(carry_minus(3, A, B, C), beta)
        worst_cy = max(worst_cy, pauli_decompose(dense).distance(carry_exponential_closed_form(3, A, B, C, beta)))
    results.append(CheckResult("exchange_exponential", worst_ex, worst_ex <= 1e-12))
    results.append(CheckResult("carry_exponential", worst_cy, worst_cy <= 1e-12))
    results.extend(verify_bridges(betas))
    return results


def identity_report_json(results: Sequence[CheckResult]) -> str:
    return json.dumps([r.as_dict() for r in results], indent=2)
