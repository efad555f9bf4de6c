import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prqc.metrics import (
    HistogramSpec,
    component_counts,
    component_histogram,
    detect_cutoff,
    distance_from_counts,
    fit_exponential_decay,
    haar_states,
    meyer_wallach_q,
    porter_thomas_distance,
    post_plateau_fit,
    q_random_expectation,
    truncate_at_floor,
    tv_distance,
)
from prqc.statevector import zero_state


def reduced_purities(psi, n):
    """Single-qubit purities by explicit partial trace."""
    t = psi.reshape([2] * n)  # axis k is qubit n-1-k
    out = []
    for q in range(n):
        axis = n - 1 - q
        m = np.moveaxis(t, axis, 0).reshape(2, -1)
        rho = m @ m.conj().T
        out.append(np.trace(rho @ rho).real)
    return np.array(out)


def test_pt_distance_of_product_state():
    # all mass at y=0 except one component at y=2**n, clipped into the last bin
    n = 6
    spec = HistogramSpec()
    masses = np.zeros(spec.bins)
    masses[0] = (2**n - 1) / 2**n
    masses[-1] = 1 / 2**n
    total = 0.0
    for k in range(spec.bins):
        mid = (k + 0.5) * spec.width
        total += (masses[k] / spec.width - math.exp(-mid)) ** 2 * spec.width
    assert porter_thomas_distance(zero_state(n)) == pytest.approx(math.sqrt(total), rel=1e-12)


def test_overflow_goes_to_last_bin():
    h = component_histogram(zero_state(4))
    assert h.masses.sum() == pytest.approx(1.0)
    assert h.masses[-1] == pytest.approx(1 / 16)


def test_haar_states_are_close_to_porter_thomas(rng):
    small = porter_thomas_distance(haar_states(6, 4000, rng))
    assert small < 0.02
    assert porter_thomas_distance(zero_state(6)) > 1.0


def test_counts_pool_to_histogram(rng):
    states = haar_states(4, 30, rng)
    counts = component_counts(states)
    assert counts.shape == (30, 100)
    h = component_histogram(states)
    assert np.allclose(counts.sum(axis=0) / counts.sum(), h.masses)
    assert distance_from_counts(counts.sum(axis=0)) == pytest.approx(porter_thomas_distance(states))


def test_q_of_special_states():
    n = 3
    assert meyer_wallach_q(zero_state(n)) == pytest.approx(0.0)
    ghz = np.zeros(8, complex)
    ghz[[0, 7]] = 1 / np.sqrt(2)
    assert meyer_wallach_q(ghz) == pytest.approx(1.0)
    w = np.zeros(8, complex)
    w[[1, 2, 4]] = 1 / np.sqrt(3)
    assert meyer_wallach_q(w) == pytest.approx(8 / 9)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_q_is_twice_mean_linear_entropy(n, seed):
    psi = haar_states(n, 1, np.random.default_rng(seed))[0]
    expected = 2 * np.mean(1 - reduced_purities(psi, n))
    assert meyer_wallach_q(psi) == pytest.approx(expected, abs=1e-12)


def test_q_random_expectation():
    assert q_random_expectation(6) == Fraction(62, 65)
    assert q_random_expectation(1) == 0
    with pytest.raises(ValueError):
        q_random_expectation(0)


def test_q_random_matches_haar_sampling(rng):
    q = meyer_wallach_q(haar_states(5, 4000, rng))
    assert abs(q.mean() - float(q_random_expectation(5))) < 4 * q.std() / np.sqrt(q.size)


def test_tv_brute_force(rng):
    p = rng.random(9)
    q = rng.random(9)
    p /= p.sum()
    q /= q.sum()
    assert tv_distance(p, q) == pytest.approx(sum(abs(a - b) for a, b in zip(p, q)) / 2)
    assert tv_distance(p, p) == 0.0


def test_tv_with_multiplicity_matches_expansion(rng):
    mult = np.array([1, 2, 4])
    p = rng.random(3)
    q = rng.random(3)
    p /= p @ mult
    q /= q @ mult
    expanded = lambda v: np.repeat(v, mult)
    assert tv_distance(p, q, mult) == pytest.approx(tv_distance(expanded(p), expanded(q)))


def test_tv_rejects_bad_input():
    with pytest.raises(ValueError):
        tv_distance([0.5, 0.5], [1.0])
    with pytest.raises(ValueError):
        tv_distance([0.5, 0.6], [0.5, 0.5])


def test_fit_exact_exponential():
    steps = np.arange(20)
    fit = fit_exponential_decay(3.0 * np.exp(-0.4 * steps))
    assert fit.rate == pytest.approx(0.4)
    assert fit.intercept == pytest.approx(math.log(3.0))
    assert fit.residual < 1e-20 and fit.points == 20


def test_fit_burn_in_skips_transient():
    values = np.exp(-0.3 * np.arange(15))
    values[:3] = 1.0
    assert fit_exponential_decay(values, burn_in=3).rate == pytest.approx(0.3)


def test_fit_errors():
    with pytest.raises(ValueError):
        fit_exponential_decay([1.0, 0.5, 0.25])
    with pytest.raises(ValueError):
        fit_exponential_decay([1.0, 0.5, 0.0, 0.1])


def test_truncate_at_floor():
    out = truncate_at_floor([1.0, 0.5, 0.02, 0.3], noise=0.01, factor=3)
    assert out[:, 1].tolist() == [1.0, 0.5]


def test_cutoff_plateau():
    values = [1.0, 1.0, 1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125]
    rep = detect_cutoff(values, 1e-9)
    assert rep.tau == 2 and rep.plateau == 1.0
    assert rep.rate == pytest.approx(math.log(2))


def test_cutoff_from_later_start():
    values = [0.0, 1.0, 1.0, 1.0, 0.9, 0.5]
    assert detect_cutoff(values, 1e-9, start=1).tau == 3


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 2.0), st.integers(5, 40))
def test_geometric_series_has_no_cutoff(rate, length):
    values = np.exp(-rate * np.arange(length))
    rep = detect_cutoff(values, 0.01 * values[0])
    assert rep.tau == 0
    assert rep.rate == pytest.approx(rate, rel=1e-9)


def test_post_plateau_fit_with_floor():
    floor = 0.01
    clean = 2.0 * np.exp(-0.5 * np.arange(1, 12))
    values = np.concatenate([[5.0], np.sqrt(clean**2 + floor**2)])
    report, fit = post_plateau_fit(values, floor=floor)
    assert report.tau == 1
    assert fit.rate == pytest.approx(0.5, rel=1e-6)


def test_post_plateau_fit_with_errors():
    values = np.concatenate([[1.0, 0.5, 0.5, 0.5], 0.5 * np.exp(-0.2 * np.arange(1, 30))])
    se = np.full(values.size, 1e-3)
    report, fit = post_plateau_fit(values, se=se)
    assert report.tau == 3
    assert fit.rate == pytest.approx(0.2, rel=1e-9)
    assert fit.points == int(np.sum(values[4:] > 3e-3))


def test_post_plateau_fit_too_short():
    report, fit = post_plateau_fit([1.0, 0.5, 0.2])
    assert fit is None
