"""Exact state-vector simulation of pseudo-random circuits.

States are complex numpy arrays of length ``2**n``; basis index bit ``q`` is
the value of qubit ``q``. Every kernel also accepts a leading batch axis, so
an ensemble of realizations can be pushed through the same circuit layer in
one call (``psi.shape == (R, 2**n)``, gates of shape ``(R, 2, 2)``).

Global phase is never fixed; compare states with :func:`fidelity`.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CapacityError
from .pauli import Topology

MAX_QUBITS = 24
MAX_PAULI_QUBITS = 8
WORKERS_ENV = "PRQC_WORKERS"

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def z_rotation(alpha):
    """``Z(alpha) = diag(1, exp(-i alpha))``.

    The sign matches measurement in the basis ``(|0> ± e^{i alpha}|1>)/sqrt(2)``
    on a cluster qubit, which teleports ``H Z(alpha)``. ``alpha`` may be an array,
    giving a stack of gates.
    """
    alpha = np.asarray(alpha, dtype=float)
    g = np.zeros(alpha.shape + (2, 2), dtype=complex)
    g[..., 0, 0] = 1.0
    g[..., 1, 1] = np.exp(-1j * alpha)
    return g


def x_rotation(beta):
    return HADAMARD @ z_rotation(beta) @ HADAMARD


def hz_gate(alpha):
    return HADAMARD @ z_rotation(alpha)


def is_unitary(g, atol=1e-12) -> bool:
    g = np.asarray(g)
    eye = np.eye(g.shape[-1])
    return bool(np.allclose(np.conj(np.swapaxes(g, -1, -2)) @ g, eye, atol=atol))


def sample_haar_su2(rng, size=None):
    """Haar-random SU(2) element(s) from a normalized Gaussian quaternion."""
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    q = rng.standard_normal(shape + (4,))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    a, b, c, d = np.moveaxis(q, -1, 0)
    g = np.empty(shape + (2, 2), dtype=complex)
    g[..., 0, 0] = a + 1j * b
    g[..., 0, 1] = c + 1j * d
    g[..., 1, 0] = -c + 1j * d
    g[..., 1, 1] = a - 1j * b
    return g


@dataclass(frozen=True)
class GateEnsemble:
    """Distribution over single-qubit gates.

    ``kind`` is one of ``haar``, ``hz``, ``zrot`` or ``mixture``. A mixture
    draws ``Z(alpha)`` with probability ``c`` and ``H Z(alpha)`` otherwise.
    """

    kind: str
    c: float = 0.0

    def __post_init__(self):
        if self.kind not in ("haar", "hz", "zrot", "mixture"):
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.kind == "mixture" and not 0.0 <= self.c <= 1.0:
            raise ValueError("mixture weight c must lie in [0, 1]")

    @classmethod
    def haar(cls):
        return cls("haar")

    @classmethod
    def hz(cls):
        return cls("hz")

    @classmethod
    def zrot(cls):
        return cls("zrot")

    @classmethod
    def mixture(cls, c: float):
        return cls("mixture", float(c))

    def label(self) -> str:
        return f"mixture({self.c:g})" if self.kind == "mixture" else self.kind

    def sample(self, rng, size=None):
        return sample_from_ensemble(self, rng, size)


def sample_from_ensemble(e: GateEnsemble, rng, size=None):
    if e.kind == "haar":
        return sample_haar_su2(rng, size)
    alpha = rng.uniform(0.0, 2 * np.pi, size)
    if e.kind == "hz":
        return hz_gate(alpha)
    if e.kind == "zrot":
        return z_rotation(alpha)
    keep_z = rng.random(size) < e.c
    gates = hz_gate(alpha)
    gates = np.where(np.asarray(keep_z)[..., None, None], z_rotation(alpha), gates)
    return gates


# -- kernels -----------------------------------------------------------------


def num_qubits(psi) -> int:
    dim = np.shape(psi)[-1]
    n = dim.bit_length() - 1
    if 1 << n != dim:
        raise ValueError(f"state dimension {dim} is not a power of two")
    return n


def zero_state(n: int, batch: Optional[int] = None):
    shape = (1 << n,) if batch is None else (batch, 1 << n)
    psi = np.zeros(shape, dtype=complex)
    psi[..., 0] = 1.0
    return psi


def apply_single_qubit_gate(psi, gate, qubit: int):
    """Return ``gate`` applied to ``qubit`` of ``psi`` (a new array)."""
    psi = np.asarray(psi)
    n = num_qubits(psi)
    if not 0 <= qubit < n:
        raise IndexError(f"qubit {qubit} out of range for n={n}")
    batch = psi.shape[:-1]
    view = psi.reshape(batch + (1 << (n - 1 - qubit), 2, 1 << qubit))
    gate = np.asarray(gate)
    if gate.ndim == 2:
        out = np.einsum("ab,...ibj->...iaj", gate, view)
    else:
        out = np.einsum("...ab,...ibj->...iaj", gate, view)
    return out.reshape(psi.shape)


def apply_local_layer(psi, gates):
    """Apply ``gates[..., q, :, :]`` to every qubit ``q``."""
    for q in range(num_qubits(psi)):
        psi = apply_single_qubit_gate(psi, gates[..., q, :, :], q)
    return psi


def _bits(n: int, q: int):
    return (np.arange(1 << n) >> q) & 1


def apply_cz(psi, q1: int, q2: int):
    psi = np.asarray(psi)
    n = num_qubits(psi)
    if q1 == q2:
        raise ValueError("CZ needs two distinct qubits")
    if not (0 <= q1 < n and 0 <= q2 < n):
        raise IndexError(f"CZ qubits ({q1}, {q2}) out of range for n={n}")
    sign = 1 - 2 * (_bits(n, q1) & _bits(n, q2))
    return psi * sign


def cz_layer_signs(t: Topology) -> np.ndarray:
    """Diagonal of the product of CZ gates over all edges of ``t``."""
    parity = np.zeros(1 << t.n, dtype=np.int64)
    for a, b in t.edges:
        parity ^= _bits(t.n, a) & _bits(t.n, b)
    return 1 - 2 * parity


def apply_cz_layer(psi, t: Topology):
    return np.asarray(psi) * cz_layer_signs(t)


def fidelity(psi, phi) -> float:
    return float(abs(np.vdot(psi, phi)) ** 2)


# -- pseudo-random circuits --------------------------------------------------


@dataclass(frozen=True)
class CircuitConfig:
    n: int
    iterations: int
    ensemble: GateEnsemble
    topology: Topology = None
    seed: int = 0
    cz_first: bool = False
    max_qubits: int = MAX_QUBITS

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one qubit")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.topology is None:
            object.__setattr__(self, "topology", Topology.open_chain(self.n))
        if self.topology.n != self.n:
            raise ValueError("topology size does not match n")


def pr_iteration(psi, cfg: CircuitConfig, rng, signs=None):
    """One pseudo-random iteration: fresh local gates, then the CZ layer."""
    if num_qubits(psi) != cfg.n:
        raise ValueError("state size does not match the configuration")
    if signs is None:
        signs = cz_layer_signs(cfg.topology)
    gates = cfg.ensemble.sample(rng, cfg.n)
    if cfg.cz_first:
        return apply_local_layer(psi * signs, gates)
    return apply_local_layer(psi, gates) * signs


def _check_capacity(cfg: CircuitConfig):
    if cfg.n > cfg.max_qubits:
        raise CapacityError(f"n={cfg.n} exceeds the state-vector limit of {cfg.max_qubits} qubits")


def run_pr_circuit(cfg: CircuitConfig, snapshot: Optional[Callable] = None):
    """Trajectory of a single realization starting from ``|0...0>``.

    Returns one entry per iteration (``iterations + 1`` in total, the first
    being the initial state). With ``snapshot`` given, entries are
    ``snapshot(psi)`` instead of copies of the state.
    """
    _check_capacity(cfg)
    rng = np.random.default_rng(cfg.seed)
    signs = cz_layer_signs(cfg.topology)
    psi = zero_state(cfg.n)
    record = (lambda s: s.copy()) if snapshot is None else snapshot
    out = [record(psi)]
    for _ in range(cfg.iterations):
        psi = pr_iteration(psi, cfg, rng, signs)
        out.append(record(psi))
    return out


def realization_rng(seed: int, index: int):
    """Independent stream for realization ``index`` of a seeded ensemble."""
    return np.random.default_rng([index, seed])


def _ensemble_chunk(cfg: CircuitConfig, indices: Sequence[int], metrics: dict):
    rngs = [realization_rng(cfg.seed, i) for i in indices]
    signs = cz_layer_signs(cfg.topology)
    psi = zero_state(cfg.n, len(rngs))
    out = {name: [f(psi)] for name, f in metrics.items()}
    for _ in range(cfg.iterations):
        gates = np.stack([cfg.ensemble.sample(r, cfg.n) for r in rngs])
        if cfg.cz_first:
            psi = apply_local_layer(psi * signs, gates)
        else:
            psi = apply_local_layer(psi, gates) * signs
        for name, f in metrics.items():
            out[name].append(f(psi))
    return {name: np.stack(v, axis=1) for name, v in out.items()}


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_ensemble(cfg: CircuitConfig, size: int, metrics: dict, chunk: int = 2048, workers=None):
    """Evaluate ``metrics`` along ``size`` independent realizations.

    ``metrics`` maps names to functions taking a batch of states ``(B, 2**n)``
    and returning per-state values ``(B, ...)``. The result maps each name to
    an array of shape ``(size, iterations + 1, ...)``.

    Realization ``i`` draws its gates from ``realization_rng(cfg.seed, i)``,
    so the output does not depend on chunking or on the number of workers.
    """
    _check_capacity(cfg)
    if size < 1:
        raise ValueError("ensemble size must be positive")
    blocks = [range(s, min(s + chunk, size)) for s in range(0, size, chunk)]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_ensemble_chunk, [cfg] * len(blocks), blocks, [metrics] * len(blocks)))
    else:
        parts = [_ensemble_chunk(cfg, b, metrics) for b in blocks]
    return {name: np.concatenate([p[name] for p in parts], axis=0) for name in metrics}


# -- Pauli coefficients ------------------------------------------------------


def _walsh_hadamard(a):
    """Unnormalized Walsh-Hadamard transform along the last axis."""
    a = np.array(a, dtype=complex)
    n = num_qubits(a)
    batch = a.shape[:-1]
    for q in range(n):
        v = a.reshape(batch + (1 << (n - 1 - q), 2, 1 << q))
        a = np.stack([v[..., 0, :] + v[..., 1, :], v[..., 0, :] - v[..., 1, :]], axis=-2).reshape(a.shape)
    return a


def _pauli_index_map(n: int) -> np.ndarray:
    """Base-4 Pauli index for each (x-mask, z-mask) pair, as a ``(2**n, 2**n)`` table."""
    xm = np.arange(1 << n)[:, None]
    zm = np.arange(1 << n)[None, :]
    index = np.zeros((1 << n, 1 << n), dtype=np.int64)
    for q in range(n):
        xb = (xm >> q) & 1
        zb = (zm >> q) & 1
        # (x, z) bits -> label: (0,0)=0, (1,0)=x, (1,1)=y, (0,1)=z
        label = np.where(xb == 1, np.where(zb == 1, 2, 1), np.where(zb == 1, 3, 0))
        index = index + label * 4**q
    return index


def pauli_sq_coefficients(psi, max_qubits: int = MAX_PAULI_QUBITS):
    """Squared Pauli-basis coefficients ``c_nu**2`` of ``|psi><psi|``.

    ``c_nu = Tr(rho P_nu) / 2**(n/2)`` so that the entries sum to ``Tr rho**2``,
    i.e. to one for a pure state. Output is indexed by base-4 Pauli index and
    keeps any leading batch axes.
    """
    psi = np.asarray(psi)
    n = num_qubits(psi)
    if n > max_qubits:
        raise CapacityError(f"n={n} exceeds the Pauli-coefficient limit of {max_qubits} qubits")
    dim = 1 << n
    batch = psi.shape[:-1]
    basis = np.arange(dim)
    out = np.zeros(batch + (4**n,))
    index = _pauli_index_map(n)
    for xm in range(dim):
        # <psi| X^x Z^z |psi> = sum_b (-1)^{z.b} conj(psi[b ^ x]) psi[b]
        g = np.conj(psi[..., basis ^ xm]) * psi
        vals = _walsh_hadamard(g)
        out[..., index[xm]] = np.abs(vals) ** 2 / dim
    return out
