import numpy as np
import pytest

from prqc.errors import CapacityError
from prqc.markov import averaged_rotation, rotation_coefficients
from prqc.mbqc import (
    ClusterPattern,
    MeasurementRecord,
    build_pattern,
    compile_to_circuit,
    execute_pattern,
    haar_euler_angles,
    peak_register_qubits,
    run_circuit,
    run_cluster_ensemble,
)
from prqc.metrics import meyer_wallach_q
from prqc.statevector import CircuitConfig, GateEnsemble, fidelity, hz_gate, run_ensemble, x_rotation, z_rotation


def dense_cluster_output(p: ClusterPattern, outcomes):
    """Build the whole graph state, then project every measured site."""
    rows, cols = p.rows, p.columns
    total = rows * cols
    site = lambda r, k: r + rows * k
    psi = np.ones(1 << total, dtype=complex)
    idx = np.arange(1 << total)
    bit = lambda q: (idx >> q) & 1
    for r in range(rows):
        psi[bit(site(r, 0)) == 1] = 0  # input column is |0>
    psi /= np.linalg.norm(psi)
    for k in range(cols):
        for r in range(rows):
            if k + 1 < cols:
                psi *= 1 - 2 * (bit(site(r, k)) & bit(site(r, k + 1)))
        for a, b in p.vertical_edges[k]:
            psi *= 1 - 2 * (bit(site(a, k)) & bit(site(b, k)))
    t = psi.reshape([2] * total)  # axis j holds qubit total-1-j
    # lowest sites sit on the highest axes; removing them first keeps the
    # remaining axis numbers valid
    for k in range(cols - 1):
        for r in range(rows):
            theta, m = p.angles[r, k], outcomes[r, k]
            bra = np.array([1.0, (1 - 2 * m) * np.exp(-1j * theta)]) / np.sqrt(2)
            t = np.tensordot(t, bra, axes=([t.ndim - 1], [0]))
    out = t.reshape(-1)
    return out / np.linalg.norm(out)


@pytest.mark.parametrize("mode,rows,iters", [("enhanced", 2, 3), ("standard", 2, 1), ("enhanced", 3, 2)])
def test_streaming_matches_dense_cluster(mode, rows, iters):
    for seed in range(5):
        p = build_pattern(rows, iters, mode, rng=np.random.default_rng(seed))
        psi, record = execute_pattern(p, "sampled", seed=seed)
        assert fidelity(psi, dense_cluster_output(p, record.outcomes)) == pytest.approx(1.0, abs=1e-12)


def test_single_wire_implements_hz():
    for theta in (0.0, 0.4, 2.0):
        for m in (0, 1):
            p = ClusterPattern(1, 2, ((), ()), [[theta]], "enhanced")
            out = run_circuit(compile_to_circuit(p, MeasurementRecord(np.array([[m]]), "x")), 1)
            assert fidelity(dense_cluster_output(p, np.array([[m]])), out) == pytest.approx(1.0)
            assert fidelity(out, hz_gate(theta + np.pi * m) @ np.array([1, 0])) == pytest.approx(1.0)


def test_three_sites_give_euler_rotation(rng):
    # first-measured angle acts first: H Z(g) X(b) Z(a) up to phase
    a, b, g = rng.uniform(0, 2 * np.pi, 3)
    p = ClusterPattern(1, 4, ((),) * 4, [[a, b, g]], "standard")
    psi, _ = execute_pattern(p, "forced-zero")
    target = hz_gate(g) @ x_rotation(b) @ z_rotation(a) @ np.array([1, 0])
    # two H's between the three HZ's turn the middle Z into an X
    assert fidelity(psi, target) == pytest.approx(1.0, abs=1e-12)


def test_haar_euler_angles_give_haar_averaged_rotation():
    rng = np.random.default_rng(3)
    a, b, g = haar_euler_angles(rng, 100_000)
    gates = hz_gate(g) @ hz_gate(b) @ hz_gate(a)
    x = rotation_coefficients(gates) ** 2
    se = x.std(axis=0) / np.sqrt(len(x))
    target = averaged_rotation(GateEnsemble.haar()).matrix[1:, 1:].T
    assert np.all(np.abs(x.mean(axis=0) - target) < 5 * se)


@pytest.mark.parametrize("mode", ["standard", "enhanced"])
def test_compiled_circuit_matches_execution(mode):
    for seed in range(20):
        rng = np.random.default_rng(seed)
        p = build_pattern(3, 2, mode, rng=rng, topology="closed")
        for policy in ("sampled", "forced-zero"):
            psi, record = execute_pattern(p, policy, seed=seed)
            assert fidelity(psi, run_circuit(compile_to_circuit(p, record), 3)) > 1 - 1e-10


def test_pattern_layout():
    p = build_pattern(4, 3, "standard", rng=np.random.default_rng(0))
    assert p.columns == 10 and p.angles.shape == (4, 9)
    assert [k for k, e in enumerate(p.vertical_edges) if e] == [3, 6, 9]
    q = build_pattern(4, 3, "standard", rng=np.random.default_rng(0), standard_vertical="on-third")
    assert [k for k, e in enumerate(q.vertical_edges) if e] == [2, 5, 8]
    e = build_pattern(4, 3, "enhanced", rng=np.random.default_rng(0))
    assert e.columns == 4 and [k for k, v in enumerate(e.vertical_edges) if v] == [1, 2, 3]
    assert p.iterations() == e.iterations() == 3


def test_pattern_text_roundtrip():
    p = build_pattern(3, 2, "standard", rng=np.random.default_rng(1), topology="closed")
    q = ClusterPattern.from_text(p.to_text())
    assert q.vertical_edges == p.vertical_edges and q.mode == p.mode
    assert np.array_equal(q.angles, p.angles)


def test_bad_inputs():
    with pytest.raises(ValueError):
        build_pattern(2, 1, "diagonal")
    with pytest.raises(ValueError):
        execute_pattern(build_pattern(2, 1, rng=np.random.default_rng(0)), policy="guess")
    with pytest.raises(CapacityError):
        execute_pattern(build_pattern(3, 1, rng=np.random.default_rng(0)), max_rows=2)
    p = build_pattern(2, 1, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        compile_to_circuit(p, MeasurementRecord(np.zeros((2, 5)), "sampled"))


def test_register_stays_small():
    p = build_pattern(5, 40, "standard", rng=np.random.default_rng(0))
    assert peak_register_qubits(p) == 6


def test_outcomes_are_fair_coins():
    outs = []
    for seed in range(200):
        p = build_pattern(2, 2, "enhanced", rng=np.random.default_rng(seed))
        outs.append(execute_pattern(p, seed=seed)[1].outcomes)
    freq = np.mean(outs)
    assert abs(freq - 0.5) < 5 * 0.5 / np.sqrt(np.size(outs))


def test_enhanced_lattice_reproduces_hz_circuit_statistics():
    # byproduct shifts leave uniform angles uniform, so the state ensembles agree
    size, iters = 400, 6
    cl = run_cluster_ensemble(4, iters, "enhanced", size, {"q": meyer_wallach_q}, seed=1)["q"]
    ci = run_ensemble(CircuitConfig(4, iters, GateEnsemble.hz(), seed=2), size, {"q": meyer_wallach_q})["q"]
    se = np.sqrt(cl.var(axis=0) / size + ci.var(axis=0) / size) + 1e-12
    assert np.all(np.abs(cl.mean(axis=0) - ci.mean(axis=0)) < 5 * se)


def test_cluster_ensemble_shapes_and_determinism():
    a = run_cluster_ensemble(3, 2, "standard", 5, {"q": meyer_wallach_q}, seed=4, chunk=2)
    b = run_cluster_ensemble(3, 2, "standard", 5, {"q": meyer_wallach_q}, seed=4, chunk=5)
    assert a["q"].shape == (5, 7)
    assert np.array_equal(a["q"], b["q"])
    assert np.allclose(a["q"][:, 0], 0.0)
