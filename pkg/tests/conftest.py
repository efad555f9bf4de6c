import functools

import numpy as np
import pytest

PAULI_MATS = [
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]]),
    np.array([[1, 0], [0, -1]], dtype=complex),
]


def pauli_matrix(digits):
    """Dense operator of a Pauli string; qubit 0 is the least significant bit."""
    return functools.reduce(np.kron, [PAULI_MATS[d] for d in reversed(digits)])


def cz_matrix(n, edges):
    idx = np.arange(1 << n)
    diag = np.ones(1 << n)
    for a, b in edges:
        diag *= 1 - 2 * (((idx >> a) & 1) & ((idx >> b) & 1))
    return np.diag(diag).astype(complex)


def match_pauli(op, n):
    """Digits of the Pauli string proportional to ``op`` (up to a sign)."""
    import itertools

    for digits in itertools.product(range(4), repeat=n):
        overlap = np.trace(pauli_matrix(digits).conj().T @ op) / (1 << n)
        if abs(abs(overlap) - 1) < 1e-12:
            return tuple(digits)
    raise AssertionError("not a Pauli string")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        terminalreporter.write_line(results[k])
