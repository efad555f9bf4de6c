"""Second-moment Markov chains of pseudo-random circuits.

Ensemble averages of the squared Pauli coefficients of the state evolve
linearly: one iteration multiplies them by ``M = P_cz @ L`` where ``L`` is the
n-fold tensor power of a single-qubit averaged rotation and ``P_cz`` permutes
Pauli strings the way a CZ layer does. The full chain lives on ``4**n``
strings; when the local gates randomize the x-y plane it lumps onto ``3**n``
reduced strings without changing any non-zero eigenvalue.

Vectors over the reduced space hold class masses (the total weight of all x/y
assignments), so they sum to one just like full-space vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import CapacityError, ConvergenceError, DriftError, LumpingError, NotMarkovError
from .pauli import Topology, cz_permutation, digit_table, multiplicities
from .statevector import GateEnsemble

MAX_STATES = 2**26
MAX_DENSE = 7000

_PAULIS = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


@dataclass(frozen=True)
class AveragedRotation:
    """Column-stochastic ``to x from`` matrix of averaged squared rotation entries.

    Full form is 4x4 over ``(0, x, y, z)``, reduced form 3x3 over ``(0, z, ξ)``.
    """

    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape not in ((4, 4), (3, 3)):
            raise ValueError("averaged rotation must be 4x4 or 3x3")
        if np.any(m < -1e-12):
            raise ValueError("averaged rotation has negative entries")
        if not np.allclose(m.sum(axis=0), 1.0, atol=1e-12):
            raise ValueError("averaged rotation is not column-stochastic")
        e0 = np.eye(len(m))[0]
        if not (np.allclose(m[:, 0], e0) and np.allclose(m[0, :], e0)):
            raise ValueError("identity label must map only to itself")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def space(self) -> str:
        return "full" if self.matrix.shape == (4, 4) else "reduced"


def _full(x_to_x, x_to_y, x_to_z, y_to_x, y_to_y, y_to_z, z_to_x, z_to_y, z_to_z):
    m = np.zeros((4, 4))
    m[0, 0] = 1.0
    m[1:, 1] = x_to_x, x_to_y, x_to_z
    m[1:, 2] = y_to_x, y_to_y, y_to_z
    m[1:, 3] = z_to_x, z_to_y, z_to_z
    return m


_CLOSED_FORMS = {
    "haar": _full(*([1 / 3] * 9)),
    "hz": _full(0, 0.5, 0.5, 0, 0.5, 0.5, 1, 0, 0),
    "zrot": _full(0.5, 0.5, 0, 0.5, 0.5, 0, 0, 0, 1),
}


def rotation_coefficients(gates):
    """SO(3) matrices ``x[a, b]`` with ``U sigma_a U^dag = sum_b x[a, b] sigma_b``."""
    gates = np.asarray(gates)
    conj = np.conj(np.swapaxes(gates, -1, -2))
    rotated = np.einsum("...ij,ajk,...kl->...ail", gates, _PAULIS, conj)
    return 0.5 * np.einsum("bji,...aij->...ab", _PAULIS, rotated).real


def averaged_rotation(
    ensemble: GateEnsemble,
    method: str = "closed-form",
    samples: int = 100_000,
    rng=None,
    sigmas: float = 5.0,
) -> AveragedRotation:
    """4x4 averaged rotation of a gate ensemble.

    ``monte-carlo`` estimates the matrix from ``samples`` gates and rejects the
    ensemble with :class:`NotMarkovError` when some cross moment
    ``E(x_ab x_ac)`` or ``E(x_ab x_cb)`` sits more than ``sigmas`` standard
    errors away from zero.
    """
    if method == "closed-form":
        if ensemble.kind == "mixture":
            m = ensemble.c * _CLOSED_FORMS["zrot"] + (1 - ensemble.c) * _CLOSED_FORMS["hz"]
        else:
            m = _CLOSED_FORMS[ensemble.kind]
        return AveragedRotation(m, ensemble.label())
    if method != "monte-carlo":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng() if rng is None else rng
    return averaged_rotation_from_samples(ensemble.sample(rng, samples), ensemble.label(), sigmas)


def averaged_rotation_from_samples(gates, label: str = "samples", sigmas: float = 5.0) -> AveragedRotation:
    x = rotation_coefficients(gates)
    count = x.shape[0]
    for a in range(3):
        for b in range(3):
            for c in range(3):
                if b == c:
                    continue
                for prod in (x[:, a, b] * x[:, a, c], x[:, b, a] * x[:, c, a]):
                    mean = prod.mean()
                    err = prod.std(ddof=1) / math.sqrt(count)
                    if abs(mean) > sigmas * err + 1e-12:
                        raise NotMarkovError(
                            f"cross moment {mean:.3g} is {abs(mean) / max(err, 1e-300):.1f} "
                            "standard errors from zero; ensemble is not Markov-representable"
                        )
    block = np.mean(x**2, axis=0)  # block[a, b] = E(x_ab^2)
    m = np.zeros((4, 4))
    m[0, 0] = 1.0
    m[1:, 1:] = block.T
    return AveragedRotation(m, label)


def reduced_rotation(c: float) -> AveragedRotation:
    """Single-site block of the reduced chain, basis ``(0, z, ξ)``.

    ``c`` is the probability weight with which the z axis is left in place.
    """
    if not 0.0 <= c <= 1.0:
        raise ValueError("c must lie in [0, 1]")
    m = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, c, (1 - c) / 2],
            [0.0, 1 - c, (1 + c) / 2],
        ]
    )
    return AveragedRotation(m, f"R({c:g})")


def reduce_rotation(full: AveragedRotation, atol: float = 1e-9) -> AveragedRotation:
    """Lump the x and y labels of a 4x4 averaged rotation into ξ."""
    m = full.matrix
    if m.shape != (4, 4):
        raise ValueError("expected a 4x4 averaged rotation")
    x, y, z = 1, 2, 3
    checks = {
        "identity weight": (m[0, x], m[0, y]),
        "x/y -> z weight": (m[z, x], m[z, y]),
        "x/y -> xy-plane weight": (m[x, x] + m[y, x], m[x, y] + m[y, y]),
    }
    for name, (u, v) in checks.items():
        if abs(u - v) > atol:
            raise LumpingError(f"x and y columns differ in {name}: {u:.6g} vs {v:.6g}")
    r = np.zeros((3, 3))
    r[0, 0] = 1.0
    r[1, 1] = m[z, z]
    r[2, 1] = m[x, z] + m[y, z]
    r[0, 2] = 0.5 * (m[0, x] + m[0, y])
    r[1, 2] = 0.5 * (m[z, x] + m[z, y])
    r[2, 2] = 0.5 * (m[x, x] + m[y, x] + m[x, y] + m[y, y])
    return AveragedRotation(r, full.label)


class TransitionMatrix:
    """One pseudo-random iteration acting on (squared) Pauli coefficients.

    Products with vectors use the factored form (tensor power of the single-site
    block followed by the CZ index relabeling), so no ``d**n x d**n`` storage is
    needed. :meth:`sparse` materializes the CSC matrix when asked.
    """

    def __init__(self, n: int, rotation: AveragedRotation, topology: Topology, remove_identity: bool = False):
        if topology.n != n:
            raise ValueError("topology size does not match n")
        self.n = n
        self.rotation = rotation
        self.topology = topology
        self.space = rotation.space
        self.base = rotation.matrix.shape[0]
        self.remove_identity = remove_identity
        self.perm = cz_permutation(topology, self.space)
        self._sparse = None

    @property
    def states(self) -> int:
        return self.base**self.n

    @property
    def dim(self) -> int:
        return self.states - (1 if self.remove_identity else 0)

    @property
    def shape(self):
        return (self.dim, self.dim)

    def describe(self) -> dict:
        return {
            "n": self.n,
            "rotation": self.rotation.label,
            "space": self.space,
            "topology": self.topology.describe(),
            "remove_identity": int(self.remove_identity),
        }

    def _local(self, v):
        r = self.rotation.matrix
        d = self.base
        batch = v.shape[:-1]
        for q in range(self.n):
            view = v.reshape(batch + (d ** (self.n - 1 - q), d, d**q))
            v = np.einsum("ab,...ibj->...iaj", r, view)
        return v.reshape(batch + (self.states,))

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.dim:
            raise ValueError(f"vector length {v.shape[-1]} does not match chain dimension {self.dim}")
        if self.remove_identity:
            full = np.zeros(v.shape[:-1] + (self.states,))
            full[..., 1:] = v
            v = full
        u = self._local(v)
        out = np.empty_like(u)
        out[..., self.perm] = u
        return out[..., 1:] if self.remove_identity else out

    __matmul__ = matvec

    def sparse(self) -> sp.csc_matrix:
        if self._sparse is None:
            block = sp.csr_matrix(self.rotation.matrix)
            local = sp.csr_matrix(np.ones((1, 1)))
            for _ in range(self.n):
                local = sp.kron(block, local, format="csr")
            local.eliminate_zeros()
            inverse = np.argsort(self.perm)
            m = local[inverse, :].tocsc()
            if self.remove_identity:
                m = m[1:, :][:, 1:].tocsc()
            self._sparse = m
        return self._sparse

    def toarray(self):
        return self.sparse().toarray()


def _check_states(count: int, limit: int, what: str):
    if count > limit:
        raise CapacityError(f"{what} has {count} states, above the limit of {limit}")


def build_chain(
    n: int,
    rotation: AveragedRotation,
    topology: Optional[Topology] = None,
    remove_identity: bool = False,
    max_states: int = MAX_STATES,
) -> TransitionMatrix:
    """Transition matrix of one iteration (local layer, then CZ layer).

    The space (full or reduced) follows the shape of ``rotation``.
    """
    topology = Topology.open_chain(n) if topology is None else topology
    _check_states(rotation.matrix.shape[0] ** n, max_states, f"{rotation.space} chain")
    return TransitionMatrix(n, rotation, topology, remove_identity)


def reduced_chain(n: int, c: float, topology: Optional[Topology] = None, remove_identity: bool = False, **kw):
    return build_chain(n, reduced_rotation(c), topology, remove_identity, **kw)


def _space_base(space: str) -> int:
    if space not in ("full", "reduced"):
        raise ValueError(f"unknown space {space!r}")
    return 4 if space == "full" else 3


def initial_distribution(n: int, space: str = "reduced", remove_identity: bool = False) -> np.ndarray:
    """Squared Pauli coefficients of ``|0...0>``: ``2**-n`` on every string over ``{0, z}``."""
    base = _space_base(space)
    z = 3 if space == "full" else 1
    table = digit_table(n, base)
    d = np.where(np.all((table == 0) | (table == z), axis=1), 2.0**-n, 0.0)
    if remove_identity:
        d = d[1:] / d[1:].sum()
    return d


def stationary_distribution(n: int, space: str = "reduced", remove_identity: bool = False) -> np.ndarray:
    """Fixed point of the ergodic chain: uniform over non-identity Pauli strings.

    In reduced coordinates each class carries its multiplicity. With the
    identity retained, it keeps its conserved mass ``2**-n``.
    """
    base = _space_base(space)
    weights = np.ones(base**n) if space == "full" else multiplicities(n)
    weights[0] = 0.0
    weights /= weights.sum()
    if remove_identity:
        return weights[1:]
    weights *= 1.0 - 2.0**-n
    weights[0] = 2.0**-n
    return weights


def _space_of(m: TransitionMatrix) -> tuple:
    return m.space, m.remove_identity


def evolve_distribution(m: TransitionMatrix, d, steps: int, atol: float = 1e-9) -> np.ndarray:
    """Trajectory ``d, M d, ..., M**steps d`` as an array of shape ``(steps + 1, dim)``.

    Raises :class:`DriftError` if the total mass moves by more than ``atol``.
    """
    d = np.asarray(d, dtype=float)
    if d.shape != (m.dim,):
        raise ValueError(f"distribution has shape {d.shape}, chain needs ({m.dim},)")
    total = d.sum()
    out = np.empty((steps + 1, m.dim))
    out[0] = d
    for k in range(steps):
        d = m.matvec(d)
        drift = abs(d.sum() - total)
        if drift > atol:
            raise DriftError(f"mass drifted by {drift:.3g} after {k + 1} steps")
        out[k + 1] = d
    return out


def tv_trajectory(m: TransitionMatrix, steps: int) -> np.ndarray:
    """``TV(l)`` between the chain started at ``|0...0>`` and its fixed point.

    The difference vector is evolved directly (rather than two nearly equal
    distributions), and its stationary component, zero in exact arithmetic, is
    projected out every step so round-off cannot build a floor.
    """
    pi = stationary_distribution(m.n, m.space, m.remove_identity)
    diff = initial_distribution(m.n, m.space, m.remove_identity) - pi
    direction = pi.copy()
    if not m.remove_identity:
        direction[0] = 0.0
    direction /= direction.sum()
    tv = np.empty(steps + 1)
    for k in range(steps + 1):
        tv[k] = 0.5 * np.abs(diff).sum()
        if k < steps:
            diff = m.matvec(diff)
            diff -= (diff.sum() - (diff[0] if not m.remove_identity else 0.0)) * direction
    return tv


def weight_one_mask(n: int, space: str) -> np.ndarray:
    table = digit_table(n, _space_base(space))
    return (table != 0).sum(axis=1) == 1


def expected_q(trajectory, n: int, space: str = "reduced") -> np.ndarray:
    """Ensemble mean of Meyer-Wallach ``Q`` implied by chain distributions.

    ``<sigma_a^i>**2 = 2**n c_nu**2`` for the weight-one string ``nu``, so the
    mean ``Q`` is linear in the chain distribution. Expects the identity retained.
    """
    trajectory = np.asarray(trajectory)
    mask = weight_one_mask(n, space)
    return 1.0 - (2.0**n / n) * trajectory[..., mask].sum(axis=-1)


@dataclass(frozen=True)
class SpectralReport:
    lambda1: float
    lambda2: float
    gap: float
    rate: float
    method: str
    note: str = ""
    iterations: int = 0


def _report(lambda1, lambda2, method, note="", iterations=0):
    gap = min(max(1.0 - lambda2, 0.0), 1.0)
    rate = math.inf if gap >= 1.0 else -math.log1p(-gap)
    return SpectralReport(float(lambda1), float(lambda2), gap, rate, method, note, iterations)


def _start_vectors(n: int):
    d0 = initial_distribution(n, "reduced", remove_identity=True)
    pi = stationary_distribution(n, "reduced", remove_identity=True)
    return d0, pi


def spectral_gap(
    n: int,
    c: float,
    topology: Optional[Topology] = None,
    method: str = "dense",
    overlap_tol: float = 1e-8,
    tol: float = 1e-10,
    max_iter: int = 300,
) -> SpectralReport:
    """Gap between 1 and the largest relevant eigenvalue modulus of the reduced chain.

    Only eigenvalues whose modes are excited by the initial condition
    ``|0...0>`` count. ``dense`` finds them through left-eigenvector overlaps
    with ``d0 - pi``; ``iterative`` runs Arnoldi from ``d0 - pi``, whose
    Krylov space holds only the excited modes.
    """
    topology = Topology.open_chain(n) if topology is None else topology
    chain = reduced_chain(n, c, topology, remove_identity=True)
    if method == "dense":
        return _dense_gap(chain, overlap_tol)
    if method == "iterative":
        return _iterative_gap(chain, tol, max_iter)
    raise ValueError(f"unknown method {method!r}")


def _dense_gap(chain: TransitionMatrix, overlap_tol: float) -> SpectralReport:
    _check_states(chain.dim, MAX_DENSE, "dense eigensolve")
    m = chain.toarray()
    w, vl, vr = scipy.linalg.eig(m, left=True, right=True)
    d0, pi = _start_vectors(chain.n)
    x = d0 - pi
    pairing = np.einsum("ij,ij->j", np.conj(vl), vr)
    coef = np.abs(np.conj(vl).T @ x) / np.maximum(np.abs(pairing), 1e-300)
    moduli = np.abs(w)
    relevant = coef > overlap_tol
    lambda1 = moduli.max()
    lambda2 = moduli[relevant].max() if relevant.any() else 0.0
    note = f"{int(relevant.sum())} of {len(w)} modes overlap the initial condition"
    return _report(lambda1, lambda2, "dense", note)


def _iterative_gap(chain: TransitionMatrix, tol: float, max_iter: int) -> SpectralReport:
    """Arnoldi iteration started from ``d0 - pi``.

    The Krylov space of the difference vector contains only the modes it
    excites, so the largest Ritz value is the relevant eigenvalue without any
    further filtering. The zero-sum subspace is invariant under the chain;
    re-projecting onto it stops round-off from reviving the stationary mode.
    """
    d0, pi = _start_vectors(chain.n)
    direction = pi / pi.sum()
    v = d0 - pi
    basis = [v / np.linalg.norm(v)]
    h = np.zeros((max_iter + 1, max_iter))
    previous = None
    estimate = math.nan
    for k in range(max_iter):
        w = chain.matvec(basis[k])
        w -= w.sum() * direction
        scale = np.linalg.norm(w)
        for _ in range(2):  # twice is enough for full orthogonality
            for j, q in enumerate(basis):
                coef = q @ w
                h[j, k] += coef
                w -= coef * q
        h[k + 1, k] = np.linalg.norm(w)
        ritz = np.abs(scipy.linalg.eigvals(h[: k + 1, : k + 1]))
        estimate = float(ritz.max())
        # what survives orthogonalization at this level is round-off, and
        # following it would let unexcited modes into the Krylov space
        if h[k + 1, k] < 1e-9 * scale:
            return _report(1.0, estimate, "iterative", "Krylov space exhausted", k + 1)
        if previous is not None and k >= 4 and abs(estimate - previous) < tol:
            return _report(1.0, estimate, "iterative", "Arnoldi on the excited subspace", k + 1)
        previous = estimate
        basis.append(w / h[k + 1, k])
    raise ConvergenceError(f"Arnoldi estimate not converged in {max_iter} steps", estimate)


@dataclass
class GapScan:
    n: int
    rows: list = field(default_factory=list)  # (c, gap, rate)
    gamma_ratio: Optional[float] = None

    @property
    def argmax(self):
        c, gap, _ = max(self.rows, key=lambda r: r[1])
        return c, gap


def gap_scan(
    n: int,
    c_grid: Iterable[float],
    topology: Optional[Topology] = None,
    method: str = "dense",
    **kw,
) -> GapScan:
    """Spectral gap over a grid of ``c`` plus the rate ratio ``Γ(0) / Γ(1/3)``."""
    grid = list(c_grid)
    if not grid:
        raise ValueError("empty c grid")
    scan = GapScan(n)
    cache = {}
    for c in grid:
        rep = spectral_gap(n, c, topology, method, **kw)
        cache[c] = rep
        scan.rows.append((float(c), rep.gap, rep.rate))
    g0 = cache[0.0] if 0.0 in cache else spectral_gap(n, 0.0, topology, method, **kw)
    g3 = cache.get(1 / 3) or spectral_gap(n, 1 / 3, topology, method, **kw)
    if g3.rate > 0:
        scan.gamma_ratio = g0.rate / g3.rate
    return scan


# -- sparse triplet export ---------------------------------------------------


def write_triplets(m: TransitionMatrix, path, c: Optional[float] = None):
    """Write the chain as ``row col value`` lines after a one-line header."""
    coo = m.sparse().tocoo()
    order = np.lexsort((coo.row, coo.col))
    meta = m.describe()
    header = f"# n={meta['n']} c={'' if c is None else repr(float(c))} space={meta['space']} topology={meta['topology']}"
    if m.remove_identity:
        header += " remove_identity=1"
    lines = [header]
    lines += [f"{coo.row[k]} {coo.col[k]} {float(coo.data[k])!r}" for k in order]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_triplets(path):
    """Inverse of :func:`write_triplets`: returns ``(header dict, csc matrix)``."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing header line")
        meta = dict(tok.split("=", 1) for tok in header[1:].split())
        rows, cols, vals = [], [], []
        for line in fh:
            r, c, v = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(v))
    n = int(meta["n"])
    base = 4 if meta["space"] == "full" else 3
    dim = base**n - (1 if meta.get("remove_identity") == "1" else 0)
    return meta, sp.csc_matrix((vals, (rows, cols)), shape=(dim, dim))
