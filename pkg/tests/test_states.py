from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from multisteer.linalg import I2, P0, SZ, kron, partial_trace, random_density, swap_qubits
from multisteer.states import (
    StateFamilyParams,
    bob_marginal,
    depolarize,
    psi_alpha,
    reduced_pair,
    rho_alpha_n,
    sample_swap_trajectory,
    swap_circuit_state,
    swap_probability,
    trajectory_state,
)


def test_psi_alpha_limits():
    zero = np.zeros((4, 4))
    zero[0, 0] = 1
    assert np.allclose(psi_alpha(0.0), zero)
    bell = np.zeros((4, 4))
    bell[np.ix_([0, 3], [0, 3])] = 0.5
    assert np.allclose(psi_alpha(0.5), bell)


def test_single_bob_is_the_pair():
    p = StateFamilyParams(0.3, 1)
    assert np.allclose(rho_alpha_n(p), psi_alpha(0.3))
    assert np.allclose(swap_circuit_state(p), psi_alpha(0.3))
    assert np.allclose(reduced_pair(p), psi_alpha(0.3))


def test_three_party_state_is_equal_mixture():
    a = 0.2
    p = StateFamilyParams(a, 2)
    first = kron(psi_alpha(a), P0)
    second = swap_qubits(first, 1, 2)
    assert np.allclose(rho_alpha_n(p), (first + second) / 2)


@pytest.mark.parametrize("alpha", [0.1, 0.4, 0.9])
@pytest.mark.parametrize("n", [2, 3, 4])
def test_rank_bounded_by_bob_count(alpha, n):
    w = np.linalg.eigvalsh(rho_alpha_n(StateFamilyParams(alpha, n)))
    assert np.sum(w > 1e-10) <= n


def test_first_swap_probability():
    assert swap_probability(1, 2) == 0.5
    assert [swap_probability(g, 4) for g in (1, 2, 3)] == [0.25, 1 / 3, 0.5]
    with pytest.raises(ValueError):
        swap_probability(0, 3)


@pytest.mark.parametrize("n", range(1, 7))
@pytest.mark.parametrize("alpha", np.round(np.linspace(0, 1, 11), 1))
def test_circuit_equals_mixture(n, alpha):
    p = StateFamilyParams(float(alpha), n)
    assert np.max(np.abs(swap_circuit_state(p) - rho_alpha_n(p))) <= 1e-12


@pytest.mark.parametrize("n", [3, 4])
def test_mixture_symmetric_under_bob_swaps(n):
    rho = rho_alpha_n(StateFamilyParams(0.35, n))
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            assert np.max(np.abs(swap_qubits(rho, i, j) - rho)) <= 1e-12


@pytest.mark.parametrize("n", range(1, 6))
def test_alice_marginal(n):
    rho = rho_alpha_n(StateFamilyParams(0.27, n))
    assert np.allclose(partial_trace(rho, [0]), np.diag([0.73, 0.27]), atol=1e-12)


def test_reduced_pair_matches_brute_force_trace():
    p = StateFamilyParams(0.1, 2)
    full = rho_alpha_n(p)
    assert np.max(np.abs(partial_trace(full, [0, 1]) - reduced_pair(p, 1))) <= 1e-12
    assert np.max(np.abs(partial_trace(full, [0, 2]) - reduced_pair(p, 2))) <= 1e-12


@pytest.mark.parametrize("alpha,n", [(0.1, 2), (0.3, 5)])
def test_bob_marginal_closed_form(alpha, n):
    p = StateFamilyParams(alpha, n)
    assert np.allclose(bob_marginal(p), np.diag([1 - alpha / n, alpha / n]))
    assert np.allclose(bob_marginal(p), 0.5 * (I2 + (1 - 2 * alpha / n) * SZ))


def test_depolarize_limits():
    rho = psi_alpha(0.2)
    assert np.allclose(depolarize(rho, 1.0), rho)
    assert np.allclose(depolarize(rho, 0.0), np.eye(4) / 4)
    assert np.trace(depolarize(rho, 0.9931)).real == pytest.approx(1.0, abs=1e-12)


def test_noise_applied_to_the_pair_only():
    p = StateFamilyParams(0.2, 3, eta=0.9)
    rho = reduced_pair(p)
    pair = depolarize(psi_alpha(0.2), 0.9)
    expected = (pair + 2 * np.kron(partial_trace(pair, [0]), P0)) / 3
    assert np.allclose(rho, expected)


@given(st.integers(0, 2**31), st.floats(0, 1))
def test_depolarize_linear_and_trace_preserving(seed, eta):
    g = np.random.default_rng(seed)
    a = g.normal(size=(4, 4)) + 1j * g.normal(size=(4, 4))
    b = g.normal(size=(4, 4)) + 1j * g.normal(size=(4, 4))
    a, b = a + a.conj().T, b + b.conj().T
    assert np.allclose(depolarize(a + 2 * b, eta), depolarize(a, eta) + 2 * depolarize(b, eta))
    assert np.trace(depolarize(a, eta)) == pytest.approx(np.trace(a))


def test_trajectory_sampler_converges_to_mixture():
    p = StateFamilyParams(0.3, 3)
    g = np.random.default_rng(5)
    holders = [sample_swap_trajectory(p, g) for _ in range(30000)]
    freq = np.bincount(holders, minlength=4)[1:] / len(holders)
    assert np.allclose(freq, 1 / 3, atol=0.015)
    mix = sum(f * trajectory_state(p, h + 1) for h, f in enumerate(freq))
    assert np.max(np.abs(mix - rho_alpha_n(p))) < 0.02


def test_params_validation():
    with pytest.raises(ValueError):
        StateFamilyParams(1.2, 2)
    with pytest.raises(ValueError):
        StateFamilyParams(0.2, 0)
    with pytest.raises(ValueError):
        StateFamilyParams(0.2, 2, eta=-0.1)
    with pytest.raises(ValueError):
        reduced_pair(StateFamilyParams(0.2, 2), 3)


def test_random_states_are_densities(rng):
    rho = random_density(4, rng, rank=2)
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.sum(np.linalg.eigvalsh(rho) > 1e-10) == 2
