from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from multisteer.assemblages import analytic_assemblage
from multisteer.linalg import (
    I2,
    P0,
    SX,
    SZ,
    BlochVector,
    NotHermitianError,
    check_density,
    fidelity,
    hermitian_part,
    is_psd,
    kron,
    partial_trace,
    pauli_expand,
    pauli_synthesize,
    projector,
    random_density,
    rz,
)
from multisteer.states import depolarize, psi_alpha, psi_alpha_vector

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_kron_examples():
    assert np.allclose(kron(SZ, I2), np.diag([1, 1, -1, -1]))
    m = kron(P0, P0)
    assert m[0, 0] == 1 and np.count_nonzero(m) == 1
    assert kron(I2, I2).shape == (4, 4)


def test_partial_trace_examples():
    assert np.allclose(partial_trace(psi_alpha(0.5), [0]), I2 / 2)
    assert np.allclose(partial_trace(psi_alpha(0.3), [0]), np.diag([0.7, 0.3]))
    rho = random_density(2, np.random.default_rng(1))
    tau = random_density(2, np.random.default_rng(2))
    assert np.allclose(partial_trace(np.kron(rho, tau), [1]), tau, atol=1e-12)


def test_partial_trace_rejects_bad_input():
    with pytest.raises(ValueError):
        partial_trace(np.eye(3), [0])
    with pytest.raises(ValueError):
        partial_trace(np.eye(4) / 4, [2])


def test_pauli_expand_examples():
    assert pauli_expand(I2) == pytest.approx((1, 0, 0, 0))
    assert pauli_expand(SX) == pytest.approx((0, 1, 0, 0))
    rho_b = analytic_assemblage(0.1, 2).marginal(0)
    assert pauli_expand(rho_b)[3] == pytest.approx(0.45, abs=1e-12)


def test_is_psd_examples():
    assert is_psd(I2, 0.0)
    assert not is_psd(np.diag([1.0, -1e-3]), 1e-9)
    assert is_psd(analytic_assemblage(0.3, 2)[0, "-"])


def test_hermitian_part_rejects_large_asymmetry():
    with pytest.raises(NotHermitianError):
        hermitian_part(np.array([[0, 1], [0, 0]], dtype=complex))
    near = SX + 1e-12 * np.array([[0, 1], [0, 0]])
    assert np.allclose(hermitian_part(near), hermitian_part(near).conj().T)


def test_fidelity_examples():
    rho = random_density(4, np.random.default_rng(3))
    assert fidelity(rho, rho) == pytest.approx(1.0, abs=1e-9)
    assert fidelity(P0, np.diag([0, 1.0])) == pytest.approx(0.0, abs=1e-12)
    psi = psi_alpha(0.3)
    eta = 0.9931
    assert fidelity(psi, depolarize(psi, eta)) == pytest.approx(eta + (1 - eta) / 4, abs=1e-10)


def test_bloch_vector_angles_round_trip():
    b = BlochVector.from_angles(np.pi / 3, -np.pi / 4)
    r = b.vector
    assert np.linalg.norm(r) == pytest.approx(1.0)
    back = BlochVector.from_vector(r)
    assert back.theta == pytest.approx(np.pi / 3) and back.phi == pytest.approx(-np.pi / 4)


def test_rz_orientation_maps_x_to_y():
    # exp(-i theta Z/2) rotates the Bloch vector counter-clockwise about z
    u = rz(np.pi / 2)
    assert np.allclose(u @ SX @ u.conj().T, np.array([[0, -1j], [1j, 0]]))


def test_check_density_rejects_bad_states():
    with pytest.raises(ValueError):
        check_density(np.diag([0.5, 0.6]))
    with pytest.raises(ValueError):
        check_density(np.diag([1.5, -0.5]))
    with pytest.raises(ValueError):
        check_density(np.eye(4) / 4, qubits=1)


@given(seeds)
def test_partial_trace_order_independent(seed):
    rho = random_density(8, np.random.default_rng(seed))
    a = partial_trace(partial_trace(rho, [0, 1]), [0])
    b = partial_trace(partial_trace(rho, [0, 2]), [0])
    c = partial_trace(rho, [0])
    assert np.max(np.abs(a - c)) <= 1e-12
    assert np.max(np.abs(b - c)) <= 1e-12


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=4, max_size=4))
def test_pauli_round_trip(coeffs):
    h = pauli_synthesize(coeffs)
    assert np.max(np.abs(pauli_synthesize(pauli_expand(h)) - h)) <= 1e-12


@given(seeds)
def test_kron_trace_multiplicative(seed):
    g = np.random.default_rng(seed)
    a = g.normal(size=(2, 2)) + 1j * g.normal(size=(2, 2))
    b = g.normal(size=(4, 4)) + 1j * g.normal(size=(4, 4))
    assert abs(np.trace(kron(a, b)) - np.trace(a) * np.trace(b)) <= 1e-12 * max(1, abs(np.trace(a) * np.trace(b)))


@given(seeds, st.sampled_from([2, 4]))
def test_fidelity_symmetric(seed, dim):
    g = np.random.default_rng(seed)
    rho, sigma = random_density(dim, g), random_density(dim, g)
    assert abs(fidelity(rho, sigma) - fidelity(sigma, rho)) <= 1e-10


def test_projector_of_psi_alpha_amplitudes():
    assert np.allclose(psi_alpha_vector(0.1), [np.sqrt(0.9), 0, 0, np.sqrt(0.1)])
    assert np.allclose(projector(psi_alpha_vector(0.1)), psi_alpha(0.1))
