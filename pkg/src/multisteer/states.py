"""The one-pair network state family and its noise model.

Qubit 0 is Alice, qubits 1..N are the Bobs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import P0, kron, partial_trace, projector, swap_qubits


@dataclass(frozen=True)
class StateFamilyParams:
    alpha: float
    n_bobs: int
    eta: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if int(self.n_bobs) != self.n_bobs or self.n_bobs < 1:
            raise ValueError(f"n_bobs must be an integer >= 1, got {self.n_bobs}")


def psi_alpha_vector(alpha: float) -> np.ndarray:
    """Amplitudes of sqrt(alpha)|11> + sqrt(1-alpha)|00>."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return np.array([np.sqrt(1 - alpha), 0, 0, np.sqrt(alpha)], dtype=complex)


def psi_alpha(alpha: float) -> np.ndarray:
    return projector(psi_alpha_vector(alpha))


def depolarize(rho: np.ndarray, eta: float) -> np.ndarray:
    """Two-qubit depolarizing channel ``eta rho + (1 - eta) I/4``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError(f"depolarize acts on two qubits, got shape {rho.shape}")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    return eta * rho + (1 - eta) * np.trace(rho) * np.eye(4) / 4


def target_pair(params: StateFamilyParams) -> np.ndarray:
    """The distributed pair, depolarized before it is embedded in the network."""
    pair = psi_alpha(params.alpha)
    return pair if params.eta == 1.0 else depolarize(pair, params.eta)


def _initial_network(params: StateFamilyParams) -> np.ndarray:
    return kron(target_pair(params), *([P0] * (params.n_bobs - 1)))


def rho_alpha_n(params: StateFamilyParams) -> np.ndarray:
    """Equal mixture over which Bob holds the partner of Alice's qubit."""
    base = _initial_network(params)
    terms = [base] + [swap_qubits(base, 1, n) for n in range(2, params.n_bobs + 1)]
    return sum(terms) / params.n_bobs


def random_swap(rho: np.ndarray, i: int, j: int, p: float) -> np.ndarray:
    """``p V_ij + (1 - p) id`` applied to a density matrix."""
    return p * swap_qubits(rho, i, j) + (1 - p) * rho


def swap_circuit_state(params: StateFamilyParams) -> np.ndarray:
    """Network state built by the sequence of N-1 random-swap gates.

    Gate n mixes Bob 1 with Bob n+1 at swap probability ``1/(N - n + 1)``.
    """
    n_bobs = params.n_bobs
    rho = _initial_network(params)
    for n in range(1, n_bobs):
        rho = random_swap(rho, 1, n + 1, swap_probability(n, n_bobs))
    return rho


def swap_probability(gate: int, n_bobs: int) -> float:
    if not 1 <= gate <= n_bobs - 1:
        raise ValueError(f"gate index {gate} out of range for {n_bobs} Bobs")
    return 1.0 / (n_bobs - gate + 1)


def sample_swap_trajectory(params: StateFamilyParams, rng: np.random.Generator) -> int:
    """Draw one run of the random-swap circuit; returns the Bob (1-based) holding the partner."""
    holder = 1
    for n in range(1, params.n_bobs):
        if rng.random() < swap_probability(n, params.n_bobs):
            # V_{1,n+1} exchanges the contents of Bob 1 and Bob n+1
            if holder == 1:
                holder = n + 1
            elif holder == n + 1:
                holder = 1
    return holder


def trajectory_state(params: StateFamilyParams, holder: int) -> np.ndarray:
    base = _initial_network(params)
    return base if holder == 1 else swap_qubits(base, 1, holder)


def reduced_pair(params: StateFamilyParams, bob_index: int = 1) -> np.ndarray:
    """Alice-Bob_n marginal, ``(|psi><psi| + (N-1) rho_A (x) |0><0|)/N``; the same for every Bob."""
    if not 1 <= bob_index <= params.n_bobs:
        raise ValueError(f"bob_index {bob_index} out of range 1..{params.n_bobs}")
    pair = target_pair(params)
    n = params.n_bobs
    rho_a = partial_trace(pair, [0])
    return (pair + (n - 1) * np.kron(rho_a, P0)) / n


def bob_marginal(params: StateFamilyParams) -> np.ndarray:
    return partial_trace(reduced_pair(params), [1])
