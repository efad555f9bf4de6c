"""Cluster-state (measurement-based) versions of the pseudo-random circuits.

A pattern is an ``n x K`` lattice. Column 0 holds the input ``|0...0>``, every
other site starts in ``|+>``; horizontal CZs join each site to its right
neighbour and each column carries its own set of vertical CZs. Columns
``0..K-2`` are measured left to right in the x-y plane and the last column is
the output.

Measuring a site at angle ``theta`` (basis ``(|0> ± e^{i theta}|1>)/sqrt(2)``)
with outcome ``m`` teleports ``H Z(theta + pi m)`` onto its right neighbour,
which is what :func:`compile_to_circuit` emits.

Execution streams the lattice: a row's next site is attached, entangled and
the old site measured right away, so the simulated register never exceeds
``n + 1`` qubits whatever the number of columns.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CapacityError
from .pauli import Topology
from .statevector import (
    apply_cz_layer,
    apply_local_layer,
    hz_gate,
    num_qubits,
    realization_rng,
    worker_count,
    zero_state,
)

MAX_ROWS = 20
STANDARD_VERTICAL = ("after-triple", "on-third")


@dataclass(frozen=True)
class ClusterPattern:
    rows: int
    columns: int
    vertical_edges: tuple  # one tuple of row pairs per column
    angles: np.ndarray  # (rows, columns - 1) measurement angles
    mode: str = "enhanced"

    def __post_init__(self):
        if self.rows < 1 or self.columns < 1:
            raise ValueError("pattern needs at least one row and one column")
        if len(self.vertical_edges) != self.columns:
            raise ValueError("need one vertical edge set per column")
        angles = np.asarray(self.angles, dtype=float).reshape(self.rows, self.columns - 1)
        angles = np.mod(angles, 2 * np.pi)
        angles.setflags(write=False)
        object.__setattr__(self, "angles", angles)
        edges = tuple(Topology(self.rows, tuple(e)).edges for e in self.vertical_edges)
        object.__setattr__(self, "vertical_edges", edges)

    @property
    def measured_columns(self) -> int:
        return self.columns - 1

    def column_topology(self, k: int) -> Topology:
        return Topology(self.rows, self.vertical_edges[k])

    def iterations(self) -> int:
        """Circuit iterations simulated (CZ-carrying measured blocks)."""
        if self.mode == "standard":
            return (self.columns - 1) // 3
        return self.columns - 1

    # plain-text serialization

    def to_text(self) -> str:
        lines = [
            f"rows {self.rows}",
            f"columns {self.columns}",
            f"mode {self.mode}",
        ]
        for k, edges in enumerate(self.vertical_edges):
            if edges:
                lines.append(f"vertical {k} " + " ".join(f"{a}-{b}" for a, b in edges))
        for r in range(self.rows):
            lines.append(f"angles {r} " + " ".join(repr(float(a)) for a in self.angles[r]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ClusterPattern":
        fields = {}
        vertical = {}
        angles = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(" ")
            parts = rest.split()
            if key in ("rows", "columns"):
                fields[key] = int(parts[0])
            elif key == "mode":
                fields[key] = parts[0]
            elif key == "vertical":
                vertical[int(parts[0])] = tuple(tuple(int(x) for x in p.split("-")) for p in parts[1:])
            elif key == "angles":
                angles[int(parts[0])] = [float(x) for x in parts[1:]]
            else:
                raise ValueError(f"unknown pattern field {key!r}")
        rows, columns = fields["rows"], fields["columns"]
        grid = np.array([angles.get(r, []) for r in range(rows)], dtype=float).reshape(rows, columns - 1)
        edges = tuple(vertical.get(k, ()) for k in range(columns))
        return cls(rows, columns, edges, grid, fields.get("mode", "enhanced"))


@dataclass(frozen=True)
class MeasurementRecord:
    outcomes: np.ndarray  # (rows, columns - 1) bits
    policy: str


def haar_euler_angles(rng, size):
    """``(alpha, beta, gamma)`` making ``Z(gamma) X(beta) Z(alpha)`` Haar distributed."""
    alpha = rng.uniform(0.0, 2 * np.pi, size)
    beta = np.arccos(1.0 - 2.0 * rng.random(size))
    gamma = rng.uniform(0.0, 2 * np.pi, size)
    return alpha, beta, gamma


def _vertical(rows: int, topology: str):
    if rows == 1:
        return ()
    return Topology.from_name(topology, rows).edges


def build_pattern(
    n: int,
    iterations: int,
    mode: str = "enhanced",
    angles=None,
    rng=None,
    topology: str = "open",
    standard_vertical: str = "after-triple",
    euler: str = "haar",
) -> ClusterPattern:
    """Lattice for ``iterations`` pseudo-random iterations on ``n`` rows.

    standard
        ``3 * iterations + 1`` columns; with ``standard_vertical="after-triple"``
        the vertical CZs sit on columns ``3, 6, ...``, just after each
        three-site single-qubit gate. ``"on-third"`` puts them on the third
        measured column of each block instead. Random angles are Euler angles
        of a Haar-random gate (``euler="haar"``) or independent uniform angles
        (``euler="uniform"``).
    enhanced
        ``iterations + 1`` columns with vertical CZs on every column but the
        input one; random angles are uniform.

    ``angles`` (shape ``(n, columns - 1)``) overrides random sampling.
    """
    if n < 1 or iterations < 0:
        raise ValueError("need n >= 1 and iterations >= 0")
    if mode not in ("standard", "enhanced"):
        raise ValueError(f"unknown mode {mode!r}")
    if standard_vertical not in STANDARD_VERTICAL:
        raise ValueError(f"standard_vertical must be one of {STANDARD_VERTICAL}")
    columns = 3 * iterations + 1 if mode == "standard" else iterations + 1
    layer = _vertical(n, topology)
    if mode == "standard":
        shift = 0 if standard_vertical == "after-triple" else 1
        carrying = {3 * j - shift for j in range(1, iterations + 1)}
    else:
        carrying = set(range(1, columns))
    vertical = tuple(layer if k in carrying else () for k in range(columns))
    if angles is None:
        rng = np.random.default_rng() if rng is None else rng
        if mode == "standard" and euler == "haar":
            a, b, g = haar_euler_angles(rng, (n, iterations))
            angles = np.stack([a, b, g], axis=-1).reshape(n, columns - 1)
        elif mode == "standard" and euler != "uniform":
            raise ValueError(f"unknown Euler angle distribution {euler!r}")
        else:
            angles = rng.uniform(0.0, 2 * np.pi, (n, columns - 1))
    return ClusterPattern(n, columns, vertical, angles, mode)


def _measurement_vectors(theta, outcome):
    """Bra components ``<±_theta|`` as ``(..., 2)`` arrays."""
    phase = np.exp(-1j * np.asarray(theta))
    sign = 1 - 2 * np.asarray(outcome)
    return np.stack([np.ones_like(phase), sign * phase], axis=-1) / np.sqrt(2)


def _teleport_row(psi, row: int, theta, policy: str, uniforms):
    """Attach ``|+>`` to ``row``, CZ them, measure the old site; batched over axis 0.

    Returns the new register (the fresh site takes the row's slot) and the
    outcome bits.
    """
    batch, dim = psi.shape
    n = num_qubits(psi)
    # register with the ancilla as the most significant qubit
    plus = np.array([1.0, 1.0]) / np.sqrt(2)
    reg = np.einsum("s,bi->bsi", plus, psi).reshape(batch, 2 * dim)
    bits_row = (np.arange(2 * dim) >> row) & 1
    bits_anc = np.arange(2 * dim) >> n
    reg = reg * (1 - 2 * (bits_row & bits_anc))
    # axis layout (batch, ancilla, high, row, low)
    view = reg.reshape(batch, 2, 1 << (n - 1 - row), 2, 1 << row)
    branches = []
    for m in (0, 1):
        bra = _measurement_vectors(theta, np.full(batch, m))
        branches.append(np.einsum("bt,bshtl->bshl", bra, view))
    p0 = np.sum(np.abs(branches[0]) ** 2, axis=(1, 2, 3)) / np.sum(np.abs(reg) ** 2, axis=1)
    if policy == "forced-zero":
        outcome = np.zeros(batch, dtype=np.int8)
    else:
        outcome = (uniforms >= p0).astype(np.int8)
    chosen = np.where(outcome[:, None, None, None] == 0, branches[0], branches[1])
    # put the ancilla back in the measured row's slot: (batch, high, s, low)
    out = np.transpose(chosen, (0, 2, 1, 3)).reshape(batch, dim)
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    return out, outcome


def _stream(angles, vertical_edges, policy, rngs, snapshot=None):
    """Execute a batch of patterns sharing their vertical edges.

    ``angles`` has shape ``(batch, rows, columns - 1)``. Returns final states,
    outcome bits ``(batch, rows, columns - 1)`` and optional per-column snapshots.
    """
    batch, rows, measured = angles.shape
    columns = measured + 1
    topologies = [Topology(rows, e) for e in vertical_edges]
    psi = apply_cz_layer(zero_state(rows, batch), topologies[0])
    outcomes = np.zeros((batch, rows, measured), dtype=np.int8)
    snaps = [snapshot(psi)] if snapshot else None
    for k in range(measured):
        for r in range(rows):
            uniforms = np.array([g.random() for g in rngs]) if policy == "sampled" else None
            psi, outcomes[:, r, k] = _teleport_row(psi, r, angles[:, r, k], policy, uniforms)
        if topologies[k + 1].edges:
            psi = apply_cz_layer(psi, topologies[k + 1])
        if snapshot:
            snaps.append(snapshot(psi))
    return psi, outcomes, snaps


def _check_policy(policy):
    if policy not in ("sampled", "forced-zero"):
        raise ValueError(f"unknown record policy {policy!r}")


def execute_pattern(p: ClusterPattern, policy: str = "sampled", seed=None, max_rows: int = MAX_ROWS):
    """Measure the pattern column by column; return ``(output state, record)``."""
    _check_policy(policy)
    if p.rows > max_rows:
        raise CapacityError(f"{p.rows} rows exceed the limit of {max_rows}")
    rng = np.random.default_rng(seed)
    psi, outcomes, _ = _stream(p.angles[None], p.vertical_edges, policy, [rng])
    return psi[0], MeasurementRecord(outcomes[0], policy)


def peak_register_qubits(p: ClusterPattern) -> int:
    """Largest register held while executing ``p``."""
    return p.rows + 1 if p.columns > 1 else p.rows


def compile_to_circuit(p: ClusterPattern, record: MeasurementRecord):
    """Equivalent circuit as a list of ``("cz", Topology)`` / ``("gates", (rows, 2, 2))`` layers."""
    outcomes = np.asarray(record.outcomes)
    if outcomes.shape != (p.rows, p.columns - 1):
        raise ValueError("measurement record does not cover every measured site")
    layers = []
    for k in range(p.columns - 1):
        if p.vertical_edges[k]:
            layers.append(("cz", p.column_topology(k)))
        theta = p.angles[:, k] + np.pi * outcomes[:, k]
        layers.append(("gates", hz_gate(theta)))
    if p.vertical_edges[-1]:
        layers.append(("cz", p.column_topology(p.columns - 1)))
    return layers


def run_circuit(layers, n: int):
    """Apply compiled layers to ``|0...0>``."""
    psi = zero_state(n)
    for kind, payload in layers:
        psi = apply_cz_layer(psi, payload) if kind == "cz" else apply_local_layer(psi, payload)
    return psi


def run_cluster_ensemble(
    n: int,
    iterations: int,
    mode: str,
    size: int,
    metrics: dict,
    seed: int = 0,
    policy: str = "sampled",
    topology: str = "open",
    chunk: int = 512,
    workers=None,
    **pattern_kw,
):
    """Per-column metrics over ``size`` random patterns.

    Realization ``i`` draws its angles and outcomes from its own stream derived
    from ``(seed, i)``. Returns arrays of shape ``(size, columns, ...)``; entry
    ``t`` is the state of a lattice with ``t + 1`` columns. As with circuit
    ensembles the output does not depend on ``chunk`` or ``workers``.
    """
    _check_policy(policy)
    if n > MAX_ROWS:
        raise CapacityError(f"{n} rows exceed the limit of {MAX_ROWS}")
    blocks = [range(s, min(s + chunk, size)) for s in range(0, size, chunk)]
    args = (n, iterations, mode, metrics, seed, policy, topology, pattern_kw)
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_cluster_chunk, blocks, [args] * len(blocks)))
    else:
        parts = [_cluster_chunk(b, args) for b in blocks]
    return {name: np.concatenate([p[name] for p in parts], axis=0) for name in metrics}


def _cluster_chunk(indices, args):
    n, iterations, mode, metrics, seed, policy, topology, pattern_kw = args
    template = build_pattern(n, iterations, mode, rng=np.random.default_rng(0), topology=topology, **pattern_kw)
    rngs = [realization_rng(seed, i) for i in indices]
    angles = np.stack(
        [build_pattern(n, iterations, mode, rng=g, topology=topology, **pattern_kw).angles for g in rngs]
    )

    def snap(psi):
        return {name: f(psi) for name, f in metrics.items()}

    _, _, snaps = _stream(angles, template.vertical_edges, policy, rngs, snap)
    return {name: np.stack([s[name] for s in snaps], axis=1) for name in metrics}
