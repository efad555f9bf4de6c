"""Pseudo-random quantum states from circuits and cluster states, with Markov-chain convergence analysis."""

__version__ = "0.1.0"

from .errors import CapacityError, ConvergenceError, DriftError, LumpingError, NotMarkovError
from .markov import (
    AveragedRotation,
    TransitionMatrix,
    averaged_rotation,
    build_chain,
    evolve_distribution,
    gap_scan,
    initial_distribution,
    reduced_chain,
    reduced_rotation,
    spectral_gap,
    stationary_distribution,
    tv_trajectory,
)
from .mbqc import ClusterPattern, build_pattern, compile_to_circuit, execute_pattern, run_cluster_ensemble
from .metrics import (
    detect_cutoff,
    fit_exponential_decay,
    meyer_wallach_q,
    porter_thomas_distance,
    q_random_expectation,
    tv_distance,
)
from .pauli import PauliString, ReducedString, Topology
from .statevector import CircuitConfig, GateEnsemble, run_ensemble, run_pr_circuit
