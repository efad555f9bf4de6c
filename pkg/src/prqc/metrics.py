"""Test functions for pseudo-random states and summaries of their trajectories."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .statevector import num_qubits


@dataclass(frozen=True)
class HistogramSpec:
    bins: int = 100
    y_max: float = 10.0

    @property
    def edges(self):
        return np.linspace(0.0, self.y_max, self.bins + 1)

    @property
    def width(self):
        return self.y_max / self.bins


@dataclass
class ComponentHistogram:
    """Histogram of rescaled squared amplitudes ``y = 2**n |psi_i|**2``.

    Values above ``y_max`` are counted in the last bin so the masses always
    sum to one.
    """

    edges: np.ndarray
    masses: np.ndarray
    count: int

    @property
    def density(self):
        return self.masses / np.diff(self.edges)

    @property
    def midpoints(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def component_histogram(states, spec: HistogramSpec = HistogramSpec()) -> ComponentHistogram:
    states = np.atleast_2d(np.asarray(states))
    if states.shape[0] == 0:
        raise ValueError("empty ensemble")
    dim = states.shape[-1]
    y = (dim * np.abs(states) ** 2).ravel()
    edges = spec.edges
    y = np.minimum(y, edges[-1])
    counts, _ = np.histogram(y, bins=edges)
    return ComponentHistogram(edges, counts / y.size, y.size)


def histogram_distance(hist: ComponentHistogram) -> float:
    """l2 distance between the histogram density and ``exp(-y)``."""
    diff = hist.density - np.exp(-hist.midpoints)
    return float(np.sqrt(np.sum(diff**2 * np.diff(hist.edges))))


def component_counts(states, spec: HistogramSpec = HistogramSpec()):
    """Per-state bin counts ``(B, bins)``; summing over states pools an ensemble."""
    states = np.atleast_2d(np.asarray(states))
    y = np.minimum(states.shape[-1] * np.abs(states) ** 2, spec.y_max)
    idx = np.minimum((y / spec.width).astype(np.int64), spec.bins - 1)
    out = np.zeros(idx.shape[:-1] + (spec.bins,), dtype=np.int64)
    flat = out.reshape(-1, spec.bins)
    for k, row in enumerate(idx.reshape(-1, idx.shape[-1])):
        flat[k] = np.bincount(row, minlength=spec.bins)
    return out


def distance_from_counts(counts, spec: HistogramSpec = HistogramSpec()) -> float:
    counts = np.asarray(counts)
    hist = ComponentHistogram(spec.edges, counts / counts.sum(), int(counts.sum()))
    return histogram_distance(hist)


def haar_states(n: int, size: int, rng):
    """Haar-random pure states from normalized complex Gaussian vectors."""
    v = rng.standard_normal((size, 1 << n)) + 1j * rng.standard_normal((size, 1 << n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def haar_control_distance(n: int, size: int, rng, spec: HistogramSpec = HistogramSpec()) -> float:
    """Porter-Thomas distance of ``size`` Haar states.

    This is the floor a converged ensemble of the same size reaches: sampling
    noise plus the finite-``2**n`` deviation of the component law from ``exp(-y)``.
    """
    return porter_thomas_distance(haar_states(n, size, rng), spec)


def porter_thomas_distance(states, spec: HistogramSpec = HistogramSpec()) -> float:
    """Distance of the pooled component distribution of ``states`` from Porter-Thomas.

    All ``2**n`` components of every state in the ensemble enter one histogram.
    """
    return histogram_distance(component_histogram(states, spec))


def bloch_vectors(psi):
    """Single-qubit Bloch vectors, shape ``(..., n, 3)`` with columns x, y, z."""
    psi = np.asarray(psi)
    n = num_qubits(psi)
    batch = psi.shape[:-1]
    out = np.empty(batch + (n, 3))
    for q in range(n):
        v = psi.reshape(batch + (1 << (n - 1 - q), 2, 1 << q))
        a0, a1 = v[..., 0, :], v[..., 1, :]
        cross = np.sum(np.conj(a0) * a1, axis=(-2, -1))
        out[..., q, 0] = 2 * cross.real
        out[..., q, 1] = 2 * cross.imag
        out[..., q, 2] = np.sum(np.abs(a0) ** 2 - np.abs(a1) ** 2, axis=(-2, -1))
    return out


def meyer_wallach_q(psi):
    """Meyer-Wallach global entanglement ``Q = 1 - mean_i |r_i|**2``.

    ``r_i`` is the Bloch vector of qubit ``i``; this equals twice the mean
    single-qubit linear entropy. Works on a batch of states.
    """
    r = bloch_vectors(psi)
    return 1.0 - np.mean(np.sum(r**2, axis=-1), axis=-1)


def q_random_expectation(n: int) -> Fraction:
    """Haar average of ``Q`` on ``n`` qubits, as an exact fraction."""
    if n < 1:
        raise ValueError("n must be positive")
    return Fraction(2**n - 2, 2**n + 1)


def tv_distance(p, q, multiplicity=None, atol=1e-9) -> float:
    """Total-variation distance ``0.5 * sum |p - q|``.

    With ``multiplicity`` given, ``p`` and ``q`` hold one representative value
    per class and each term counts ``multiplicity`` times.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    w = np.ones_like(p) if multiplicity is None else np.asarray(multiplicity, dtype=float)
    for name, v in (("p", p), ("q", q)):
        if abs(np.dot(w, v) - 1.0) > atol:
            raise ValueError(f"{name} is not normalized")
    return float(0.5 * np.dot(w, np.abs(p - q)))


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit ``log(value) = intercept - rate * step``.

    ``residual`` is the unexplained fraction ``1 - R**2`` of the log values;
    ``rms`` is the root-mean-square log residual.
    """

    rate: float
    intercept: float
    residual: float
    rms: float
    burn_in: int
    points: int


def _as_series(series):
    arr = np.asarray(series, dtype=float)
    if arr.ndim == 1:
        return np.arange(arr.size, dtype=float), arr
    if arr.ndim == 2 and arr.shape[1] == 2:
        return arr[:, 0], arr[:, 1]
    raise ValueError("series must be a value sequence or (step, value) pairs")


def fit_exponential_decay(series, burn_in: int = 0) -> DecayFit:
    """Fit an exponential to the points with ``step >= burn_in``.

    Raises ``ValueError`` on non-positive values: they usually mean the noise
    floor was reached and the caller should truncate the series first.
    """
    steps, values = _as_series(series)
    keep = steps >= burn_in
    steps, values = steps[keep], values[keep]
    if steps.size < 4:
        raise ValueError("need at least 4 points after burn-in")
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise ValueError("non-positive value after burn-in; truncate at the noise floor")
    logs = np.log(values)
    slope, intercept = np.polyfit(steps, logs, 1)
    resid = logs - (intercept + slope * steps)
    spread = np.sum((logs - logs.mean()) ** 2)
    frac = float(np.sum(resid**2) / spread) if spread > 0 else 0.0
    return DecayFit(
        rate=float(-slope),
        intercept=float(intercept),
        residual=frac,
        rms=float(np.sqrt(np.mean(resid**2))),
        burn_in=burn_in,
        points=int(steps.size),
    )


def truncate_at_floor(series, noise=None, factor: float = 3.0):
    """Leading part of ``series`` whose values stay above ``factor * noise``.

    ``noise`` is a per-point standard error (array or scalar); with no noise
    given, the cut is at the first non-positive value.
    """
    steps, values = _as_series(series)
    floor = 0.0 if noise is None else factor * np.broadcast_to(np.asarray(noise, float), values.shape)
    below = np.nonzero(values <= floor)[0]
    end = below[0] if below.size else values.size
    return np.column_stack([steps[:end], values[:end]])


@dataclass(frozen=True)
class CutoffReport:
    tau: int
    plateau: float
    rate: Optional[float]
    threshold: float


def detect_cutoff(series, threshold: float, start: int = 0, burn_in: int = 0) -> CutoffReport:
    """Length of the initial plateau of a trajectory.

    The plateau value is the value at position ``start``; ``tau`` is the step of
    the last point of the unbroken run that stays within ``threshold`` of it.
    A series that starts decaying right away gives the step at ``start``
    (0 for a plain value sequence). The post-plateau rate is fitted on
    the points after the plateau (up to the first non-positive value) and is
    ``None`` when fewer than four usable points remain.
    """
    steps, values = _as_series(series)
    if values.size == 0:
        raise ValueError("empty series")
    plateau = values[start]
    end = start
    while end + 1 < values.size and abs(values[end + 1] - plateau) <= threshold:
        end += 1
    tau = int(steps[end])
    tail = truncate_at_floor(np.column_stack([steps[end + 1 :], values[end + 1 :]]))
    rate = None
    try:
        rate = fit_exponential_decay(tail, burn_in=burn_in).rate
    except ValueError:
        pass
    return CutoffReport(tau=tau, plateau=float(plateau), rate=rate, threshold=float(threshold))


def post_plateau_fit(values, se=None, floor=None, noise_factor: float = 3.0):
    """Decay rate of a trajectory after its initial plateau.

    ``values`` is indexed by step. Noise is handled in one of two ways:

    * ``se``: per-step standard errors of a mean that converges to zero; the
      series is cut where it drops to ``noise_factor * se``.
    * ``floor``: the value a converged ensemble would show (for distances that
      stay positive); points are kept while above ``2 * floor`` and the floor is
      removed in quadrature.

    The plateau is located with :func:`detect_cutoff` from step 1 (step 0 is
    the unscrambled input) and the fit starts right after it.
    Returns ``(CutoffReport, DecayFit)``; the fit is ``None`` when fewer than
    four usable points follow the plateau.
    """
    values = np.asarray(values, dtype=float)
    steps = np.arange(values.size, dtype=float)
    start = 1 if values.size > 1 else 0
    if floor is not None:
        keep = values > 2 * floor
        end = values.size if keep[start:].all() else int(np.argmin(keep[start:])) + start
        end = max(end, 1)
        values = np.sqrt(np.maximum(values[:end] ** 2 - floor**2, 0.0))
        steps = steps[:end]
        start = min(start, end - 1)
        threshold = 1e-9
    elif se is not None:
        se = np.asarray(se, dtype=float)
        threshold = noise_factor * np.nan_to_num(se[start]) + 1e-9
    else:
        threshold = 1e-9
    series = np.column_stack([steps, values])
    report = detect_cutoff(series, threshold, start=start)
    tail = series[report.tau + 1 :]
    if se is not None and floor is None:
        tail = truncate_at_floor(tail, se[report.tau + 1 : report.tau + 1 + len(tail)], noise_factor)
    try:
        return report, fit_exponential_decay(tail)
    except ValueError:
        return report, None
