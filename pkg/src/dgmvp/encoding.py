"""Binary block encoding of discrete portfolio weights.

Each of ``n`` assets holds an integer number of trading lots ``x_t`` in
``[0, 2**l - 1]`` stored in a block of ``l`` qubits.  Qubit ``q = t*l + k``
(0-based asset ``t`` and bit ``k``) carries the bit of significance ``2**k``,
so blocks are contiguous and least-significant-bit first.

A bitstring is written as a 0/1 string whose character ``q`` is the value of
qubit ``q``; the corresponding basis-state index has bit ``q`` set iff qubit
``q`` is 1.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

ENUMERATION_GUARD = 24

BitString = tuple[int, ...]


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class EncodingSpec:
    n: int
    l: int

    def __post_init__(self):
        if self.n < 1 or self.l < 1:
            raise EncodingError(f"need n >= 1 and l >= 1, got n={self.n}, l={self.l}")

    @property
    def max_lots(self) -> int:
        return 2**self.l - 1

    @property
    def lot(self) -> Fraction:
        return Fraction(1, self.max_lots)

    @property
    def num_qubits(self) -> int:
        return self.n * self.l

    def qubit(self, asset: int, bit: int) -> int:
        """Global qubit index of ``bit`` (0 = least significant) of ``asset``."""
        return asset * self.l + bit

    def block(self, asset: int) -> range:
        return range(asset * self.l, (asset + 1) * self.l)


def _as_bits(spec: EncodingSpec, bits) -> BitString:
    if isinstance(bits, str):
        bits = str_to_bits(bits)
    elif isinstance(bits, (int, np.integer)):
        return index_to_bits(int(bits), spec.num_qubits)
    bits = tuple(int(b) for b in bits)
    if len(bits) != spec.num_qubits:
        raise EncodingError(f"bitstring has length {len(bits)}, expected {spec.num_qubits}")
    if any(b not in (0, 1) for b in bits):
        raise EncodingError("bitstring entries must be 0 or 1")
    return bits


def str_to_bits(text: str) -> BitString:
    if any(ch not in "01" for ch in text):
        raise EncodingError(f"not a 0/1 string: {text!r}")
    return tuple(int(ch) for ch in text)


def bits_to_str(bits: Sequence[int]) -> str:
    return "".join(str(int(b)) for b in bits)


def bits_to_index(bits: Sequence[int]) -> int:
    return sum(int(b) << q for q, b in enumerate(bits))


def index_to_bits(index: int, num_qubits: int) -> BitString:
    return tuple((index >> q) & 1 for q in range(num_qubits))


def lots_of(spec: EncodingSpec, bits) -> tuple[int, ...]:
    bits = _as_bits(spec, bits)
    return tuple(
        sum(bits[spec.qubit(t, k)] << k for k in range(spec.l)) for t in range(spec.n)
    )


def decode(spec: EncodingSpec, bits) -> tuple[tuple[int, ...], tuple[Fraction, ...]]:
    """Return the lot vector and the exact weight vector of ``bits``."""
    x = lots_of(spec, bits)
    a = spec.lot
    return x, tuple(a * xi for xi in x)


def encode(spec: EncodingSpec, lots: Sequence[int]) -> BitString:
    if len(lots) != spec.n:
        raise EncodingError(f"expected {spec.n} lot counts, got {len(lots)}")
    bits = [0] * spec.num_qubits
    for t, x in enumerate(lots):
        x = int(x)
        if not 0 <= x <= spec.max_lots:
            raise EncodingError(f"lot count {x} outside [0, {spec.max_lots}]")
        for k in range(spec.l):
            bits[spec.qubit(t, k)] = (x >> k) & 1
    return tuple(bits)


def encode_index(spec: EncodingSpec, lots: Sequence[int]) -> int:
    return bits_to_index(encode(spec, lots))


def is_feasible(spec: EncodingSpec, bits) -> bool:
    return sum(lots_of(spec, bits)) == spec.max_lots


def feasible_count(n: int, l: int) -> int:
    """Number of budget-feasible portfolios, ``C(2**l + n - 2, n - 1)``."""
    return math.comb(2**l + n - 2, n - 1)


def compositions_count(n: int, total: int) -> int:
    """Ways to split ``total`` lots over ``n`` assets (unbounded parts)."""
    if n == 0:
        return int(total == 0)
    return math.comb(total + n - 1, n - 1)


def unconstrained_count(n: int, l: int) -> int:
    return 2 ** (n * l)


def rank_lots(lots: Sequence[int]) -> int:
    """Lexicographic rank of a composition among all with the same size and sum."""
    n = len(lots)
    remaining = sum(lots)
    rank = 0
    for i, x in enumerate(lots[:-1]):
        parts_left = n - i - 1
        for v in range(x):
            rank += compositions_count(parts_left, remaining - v)
        remaining -= x
    return rank


def unrank_lots(n: int, total: int, rank: int) -> tuple[int, ...]:
    size = compositions_count(n, total)
    if not 0 <= rank < size:
        raise EncodingError(f"rank {rank} outside [0, {size})")
    lots = []
    remaining = total
    for i in range(n - 1):
        parts_left = n - i - 1
        v = 0
        while True:
            block = compositions_count(parts_left, remaining - v)
            if rank < block:
                break
            rank -= block
            v += 1
        lots.append(v)
        remaining -= v
    lots.append(remaining)
    return tuple(lots)


def feasible_lots(spec: EncodingSpec) -> Iterator[tuple[int, ...]]:
    """All feasible lot vectors in lexicographic order."""
    n, total = spec.n, spec.max_lots
    # stars and bars: bar positions among total + n - 1 slots
    for bars in itertools.combinations(range(total + n - 1), n - 1):
        prev = -1
        lots = []
        for b in bars:
            lots.append(b - prev - 1)
            prev = b
        lots.append(total + n - 1 - prev - 1)
        yield tuple(lots)


def enumerate_feasible(spec: EncodingSpec) -> Iterator[BitString]:
    if spec.num_qubits > ENUMERATION_GUARD:
        raise EncodingError(
            f"{spec.num_qubits} qubits exceeds the enumeration guard of {ENUMERATION_GUARD}"
        )
    for lots in feasible_lots(spec):
        yield encode(spec, lots)


def feasible_indices(spec: EncodingSpec) -> np.ndarray:
    """Basis-state indices of the feasible set, in lexicographic lot order."""
    return np.fromiter(
        (bits_to_index(b) for b in enumerate_feasible(spec)),
        dtype=np.int64,
        count=feasible_count(spec.n, spec.l),
    )


def sample_feasible_uniform(spec: EncodingSpec, rng: np.random.Generator) -> BitString:
    """Draw a feasible bitstring uniformly at random by unranking."""
    size = feasible_count(spec.n, spec.l)
    rank = int(rng.integers(size))
    return encode(spec, unrank_lots(spec.n, spec.max_lots, rank))
