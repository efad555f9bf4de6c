"""Pauli strings, reduced strings and the action of a CZ layer on them.

A Pauli string on ``n`` qubits is a sequence of labels from ``{0, x, y, z}``
(``0`` is the identity factor). Strings are indexed by little-endian base-4
integers: qubit 0 is the least significant digit, with digit values

    0 -> identity, 1 -> x, 2 -> y, 3 -> z.

Reduced strings live on ``{0, z, ξ}^n`` where ``ξ`` stands for the symmetric
x/y class. They are indexed by little-endian base-3 integers with digit values

    0 -> identity, 1 -> z, 2 -> ξ.

Conjugation by CZ maps Pauli strings to Pauli strings up to a sign. Signs are
dropped here: the chains built on top only ever see squared coefficients.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

I, X, Y, Z = 0, 1, 2, 3
FULL_LABELS = "0xyz"

ZERO, ZED, XI = 0, 1, 2
REDUCED_LABELS = "0zξ"

_FULL_LOOKUP = {ch: k for k, ch in enumerate(FULL_LABELS)}
_REDUCED_LOOKUP = {ch: k for k, ch in enumerate(REDUCED_LABELS)}
_REDUCE_DIGIT = (ZERO, XI, XI, ZED)


def _parse(labels, lookup, name):
    if isinstance(labels, str):
        try:
            return tuple(lookup[ch] for ch in labels)
        except KeyError as exc:
            raise ValueError(f"unknown {name} label {exc.args[0]!r}") from None
    digits = tuple(int(d) for d in labels)
    if any(d < 0 or d >= len(lookup) for d in digits):
        raise ValueError(f"{name} digits must lie in [0, {len(lookup)})")
    return digits


@dataclass(frozen=True)
class PauliString:
    """Tensor product of identity and Pauli factors, signs ignored."""

    digits: tuple

    def __init__(self, labels):
        object.__setattr__(self, "digits", _parse(labels, _FULL_LOOKUP, "Pauli"))

    @property
    def n(self) -> int:
        return len(self.digits)

    @property
    def index(self) -> int:
        return encode(self.digits, 4)

    @classmethod
    def from_index(cls, index: int, n: int) -> "PauliString":
        return cls(decode(index, n, 4))

    def __str__(self):
        return "".join(FULL_LABELS[d] for d in self.digits)


@dataclass(frozen=True)
class ReducedString:
    """String over ``{0, z, ξ}``; each ξ stands for both x and y."""

    digits: tuple

    def __init__(self, labels):
        object.__setattr__(self, "digits", _parse(labels, _REDUCED_LOOKUP, "reduced"))

    @property
    def n(self) -> int:
        return len(self.digits)

    @property
    def index(self) -> int:
        return encode(self.digits, 3)

    @property
    def multiplicity(self) -> int:
        return 2 ** sum(1 for d in self.digits if d == XI)

    @classmethod
    def from_index(cls, index: int, n: int) -> "ReducedString":
        return cls(decode(index, n, 3))

    def __str__(self):
        return "".join(REDUCED_LABELS[d] for d in self.digits)


@dataclass(frozen=True)
class Topology:
    """Simple graph on ``n`` qubits whose edges each receive one CZ gate."""

    n: int
    edges: tuple = field(default=())
    kind: str = "explicit"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("topology needs at least one qubit")
        normalized = []
        seen = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-loop on qubit {a}")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise ValueError(f"edge ({a}, {b}) out of range for n={self.n}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            normalized.append(key)
        object.__setattr__(self, "edges", tuple(normalized))

    @classmethod
    def open_chain(cls, n: int) -> "Topology":
        return cls(n, tuple((i, i + 1) for i in range(n - 1)), "open")

    @classmethod
    def closed_chain(cls, n: int) -> "Topology":
        edges = [(i, i + 1) for i in range(n - 1)]
        if n > 2:
            edges.append((0, n - 1))
        return cls(n, tuple(edges), "closed")

    @classmethod
    def from_name(cls, name: str, n: int) -> "Topology":
        if name == "open":
            return cls.open_chain(n)
        if name == "closed":
            return cls.closed_chain(n)
        raise ValueError(f"unknown topology {name!r}")

    def describe(self) -> str:
        if self.kind in ("open", "closed"):
            return self.kind
        return "explicit:" + ";".join(f"{a}-{b}" for a, b in self.edges)


def encode(digits: Sequence[int], base: int) -> int:
    """Little-endian integer index of a digit sequence."""
    index = 0
    for d in reversed(digits):
        index = index * base + int(d)
    return index


def decode(index: int, n: int, base: int) -> tuple:
    digits = []
    for _ in range(n):
        index, d = divmod(index, base)
        digits.append(d)
    if index:
        raise ValueError("index too large for the given length")
    return tuple(digits)


def cz_conjugate_pair(a: int, b: int) -> tuple:
    """Image of the label pair ``(a, b)`` under conjugation by CZ, sign dropped.

    With the digit encoding 0/x/y/z = 0/1/2/3 the rule is compact: a label
    flips ``d -> 3 - d`` (0<->z or x<->y) whenever its partner is x or y.
    """
    if a not in (I, X, Y, Z) or b not in (I, X, Y, Z):
        raise ValueError("labels must be in {0, 1, 2, 3}")
    a_out = 3 - a if b in (X, Y) else a
    b_out = 3 - b if a in (X, Y) else b
    return a_out, b_out


def _check_length(s, t):
    if s.n != t.n:
        raise ValueError(f"string has {s.n} sites but topology has {t.n} qubits")


def apply_cz_layer(s: PauliString, t: Topology) -> PauliString:
    _check_length(s, t)
    digits = list(s.digits)
    for i, j in t.edges:
        digits[i], digits[j] = cz_conjugate_pair(digits[i], digits[j])
    return PauliString(digits)


def cz_reduced_pair(a: int, b: int) -> tuple:
    a_out = 1 - a if (b == XI and a != XI) else a
    b_out = 1 - b if (a == XI and b != XI) else b
    return a_out, b_out


def apply_cz_layer_reduced(s: ReducedString, t: Topology) -> ReducedString:
    _check_length(s, t)
    digits = list(s.digits)
    for i, j in t.edges:
        digits[i], digits[j] = cz_reduced_pair(digits[i], digits[j])
    return ReducedString(digits)


def reduce(s: PauliString) -> ReducedString:
    return ReducedString([_REDUCE_DIGIT[d] for d in s.digits])


def lift_class(s: ReducedString) -> set:
    """All Pauli strings that reduce to ``s``."""
    choices = []
    for d in s.digits:
        if d == ZERO:
            choices.append((I,))
        elif d == ZED:
            choices.append((Z,))
        else:
            choices.append((X, Y))
    return {PauliString(p) for p in itertools.product(*choices)}


# -- vectorized forms used to build transition matrices ----------------------


def digit_table(n: int, base: int) -> np.ndarray:
    """Array of shape ``(base**n, n)``; row ``k`` holds the digits of index ``k``."""
    idx = np.arange(base**n, dtype=np.int64)
    table = np.empty((base**n, n), dtype=np.int8)
    for q in range(n):
        table[:, q] = (idx // base**q) % base
    return table


def cz_permutation(t: Topology, space: str = "full") -> np.ndarray:
    """Index map ``perm`` with ``perm[k]`` the image of string ``k`` under the CZ layer."""
    base = 4 if space == "full" else 3
    n = t.n
    idx = np.arange(base**n, dtype=np.int64)
    out = idx.copy()
    touched = {q for e in t.edges for q in e}
    digits = {q: ((idx // base**q) % base).astype(np.int8) for q in touched}
    new = {q: d.copy() for q, d in digits.items()}
    for i, j in t.edges:
        di, dj = digits[i], digits[j]
        if space == "full":
            # partner membership in {x, y} never changes, so reading the
            # original digits is equivalent to sequential application
            new[i] = np.where((dj == X) | (dj == Y), 3 - new[i], new[i])
            new[j] = np.where((di == X) | (di == Y), 3 - new[j], new[j])
        else:
            new[i] = np.where((dj == XI) & (di != XI), 1 - new[i], new[i])
            new[j] = np.where((di == XI) & (dj != XI), 1 - new[j], new[j])
    for q in touched:
        out += (new[q].astype(np.int64) - digits[q]) * base**q
    return out


def multiplicities(n: int) -> np.ndarray:
    """``2**(number of ξ digits)`` for every reduced index."""
    table = digit_table(n, 3)
    return 2.0 ** (table == XI).sum(axis=1)


def all_strings(n: int) -> Iterable[PauliString]:
    for k in range(4**n):
        yield PauliString.from_index(k, n)
