import functools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cz_matrix, pauli_matrix
from prqc.errors import CapacityError
from prqc.pauli import PauliString, Topology
from prqc.statevector import (
    HADAMARD,
    CircuitConfig,
    GateEnsemble,
    apply_cz,
    apply_cz_layer,
    apply_local_layer,
    apply_single_qubit_gate,
    hz_gate,
    is_unitary,
    pauli_sq_coefficients,
    run_ensemble,
    run_pr_circuit,
    sample_haar_su2,
    x_rotation,
    z_rotation,
    zero_state,
)


def random_state(rng, n, batch=()):
    v = rng.standard_normal(batch + (1 << n,)) + 1j * rng.standard_normal(batch + (1 << n,))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def embed(gate, q, n):
    """``gate`` on qubit ``q`` as a dense matrix (qubit 0 least significant)."""
    mats = [gate if k == q else np.eye(2) for k in reversed(range(n))]
    return functools.reduce(np.kron, mats)


def test_gate_conventions():
    t = 0.7
    assert np.allclose(z_rotation(t), np.diag([1, np.exp(-1j * t)]))
    assert np.allclose(hz_gate(t), HADAMARD @ z_rotation(t))
    assert np.allclose(x_rotation(t), HADAMARD @ z_rotation(t) @ HADAMARD)
    assert is_unitary(hz_gate(1.3)) and not is_unitary(2 * HADAMARD)


def test_haar_samples_are_su2(rng):
    u = sample_haar_su2(rng, 1000)
    assert np.allclose(u @ np.conj(np.swapaxes(u, -1, -2)), np.eye(2), atol=1e-12)
    assert np.allclose(np.linalg.det(u), 1.0)


def test_haar_moments(rng):
    # Haar on U(2): E|u00|^2 = 1/2, E|u00|^4 = 1/3, E u00 = 0
    u = sample_haar_su2(rng, 200_000)
    a = np.abs(u[:, 0, 0]) ** 2
    for values, target in ((a, 0.5), (a**2, 1 / 3)):
        se = values.std() / np.sqrt(values.size)
        assert abs(values.mean() - target) < 5 * se
    assert abs(u[:, 0, 0].mean()) < 5 / np.sqrt(values.size)


@pytest.mark.parametrize("kind", ["haar", "hz", "zrot"])
def test_ensembles_sample_unitaries(kind, rng):
    g = getattr(GateEnsemble, kind)().sample(rng, 50)
    assert g.shape == (50, 2, 2)
    assert all(is_unitary(x) for x in g)


def test_mixture_endpoints(rng):
    g = GateEnsemble.mixture(1.0).sample(rng, 20)
    assert np.allclose(np.abs(g[:, 0, 1]), 0)  # diagonal: pure z rotations
    g = GateEnsemble.mixture(0.0).sample(rng, 20)
    assert np.allclose(np.abs(g), 1 / np.sqrt(2))


@pytest.mark.parametrize("q", [0, 1, 2])
def test_single_qubit_gate_matches_kron(q, rng):
    psi = random_state(rng, 3)
    g = sample_haar_su2(rng)
    assert np.allclose(apply_single_qubit_gate(psi, g, q), embed(g, q, 3) @ psi)


def test_batched_gates_match_loop(rng):
    psi = random_state(rng, 3, (5,))
    gates = sample_haar_su2(rng, (5, 3))
    out = apply_local_layer(psi, gates)
    for b in range(5):
        ref = psi[b]
        for q in range(3):
            ref = embed(gates[b, q], q, 3) @ ref
        assert np.allclose(out[b], ref)


def test_cz_matches_matrix(rng):
    psi = random_state(rng, 4)
    assert np.allclose(apply_cz(psi, 0, 3), cz_matrix(4, [(0, 3)]) @ psi)
    t = Topology.closed_chain(4)
    assert np.allclose(apply_cz_layer(psi, t), cz_matrix(4, t.edges) @ psi)
    with pytest.raises(ValueError):
        apply_cz(psi, 1, 1)
    with pytest.raises(IndexError):
        apply_cz(psi, 0, 4)


def test_bad_dimension():
    with pytest.raises(ValueError):
        apply_single_qubit_gate(np.ones(6), np.eye(2), 0)


def test_circuit_is_reproducible_and_normalized():
    cfg = CircuitConfig(4, 6, GateEnsemble.haar(), seed=9)
    a = run_pr_circuit(cfg)
    b = run_pr_circuit(cfg)
    assert len(a) == 7
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert np.allclose([np.linalg.norm(x) for x in a], 1.0)


def test_iteration_order_matches_explicit_product():
    cfg = CircuitConfig(3, 1, GateEnsemble.hz(), seed=4)
    out = run_pr_circuit(cfg)[-1]
    gates = GateEnsemble.hz().sample(np.random.default_rng(4), 3)
    local = functools.reduce(np.kron, [gates[q] for q in reversed(range(3))])
    ref = cz_matrix(3, cfg.topology.edges) @ local @ zero_state(3)
    assert np.allclose(out, ref)


def test_capacity_guard():
    with pytest.raises(CapacityError):
        run_pr_circuit(CircuitConfig(5, 1, GateEnsemble.haar(), max_qubits=4))


def _norms(psi):
    return np.linalg.norm(psi, axis=-1)


def test_ensemble_independent_of_chunking_and_workers():
    cfg = CircuitConfig(3, 4, GateEnsemble.haar(), seed=2)
    metrics = {"amp": np.abs, "norm": _norms}
    a = run_ensemble(cfg, 10, metrics, chunk=3, workers=1)
    b = run_ensemble(cfg, 10, metrics, chunk=4, workers=2)
    assert a["amp"].shape == (10, 5, 8)
    assert np.array_equal(a["amp"], b["amp"])
    assert np.allclose(a["norm"], 1.0)


def test_ensemble_realization_matches_single_run():
    from prqc.statevector import realization_rng

    cfg = CircuitConfig(3, 3, GateEnsemble.hz(), seed=5)
    out = run_ensemble(cfg, 4, {"psi": lambda p: p.copy()}, workers=1)["psi"]
    rng = realization_rng(5, 2)
    psi = zero_state(3)
    for _ in range(3):
        psi = apply_cz_layer(apply_local_layer(psi, cfg.ensemble.sample(rng, 3)), cfg.topology)
    assert np.allclose(out[2, -1], psi)


def test_pauli_coefficients_match_trace(rng):
    n = 3
    psi = random_state(rng, n)
    rho = np.outer(psi, psi.conj())
    sq = pauli_sq_coefficients(psi)
    for k in range(4**n):
        p = pauli_matrix(PauliString.from_index(k, n).digits)
        assert sq[k] == pytest.approx(abs(np.trace(rho @ p)) ** 2 / 2**n, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_pauli_coefficients_sum_to_purity(n, seed):
    psi = random_state(np.random.default_rng(seed), n, (2,))
    sq = pauli_sq_coefficients(psi)
    assert np.allclose(sq.sum(axis=-1), 1.0)
    assert np.allclose(sq[..., 0], 2.0**-n)


def test_pauli_coefficients_capacity():
    with pytest.raises(CapacityError):
        pauli_sq_coefficients(zero_state(3), max_qubits=2)
