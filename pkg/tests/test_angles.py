from __future__ import annotations

import numpy as np
import pytest

from multisteer.angles import (
    ANGLE_BOUNDS,
    ANGLE_COLUMNS,
    DEConfig,
    angle_table_csv,
    angles_cutoff,
    differential_evolution,
    optimize_angles,
    pack_angles,
    pauli_angles,
    unpack_angles,
)
from multisteer.assemblages import compute_assemblage, settings_from_angles
from multisteer.bounds import analytic_cutoff, cutoff_efficiency
from multisteer.states import StateFamilyParams, reduced_pair

SMALL = DEConfig(population=8, generations=4, seed=3)


def sphere(x):
    return float(np.sum((x - 0.3) ** 2))


def rastrigin(x):
    return float(10 * len(x) + np.sum(x**2 - 10 * np.cos(2 * np.pi * x)))


def test_de_sphere():
    res = differential_evolution(sphere, DEConfig(population=20, generations=150, seed=1), [(-2, 2)] * 3)
    assert res.value < 1e-8
    assert np.allclose(res.x, 0.3, atol=1e-4)


def test_de_rastrigin():
    res = differential_evolution(rastrigin, DEConfig(population=40, generations=300, seed=2), [(-5.12, 5.12)] * 2)
    assert res.value < 1e-6


def test_de_history_monotone_and_deterministic():
    cfg = DEConfig(population=10, generations=30, seed=5)
    r1 = differential_evolution(sphere, cfg, [(-1, 1)] * 2)
    r2 = differential_evolution(sphere, cfg, [(-1, 1)] * 2)
    assert r1.history == r2.history
    assert np.array_equal(r1.x, r2.x)
    assert all(b <= a for a, b in zip(r1.history, r1.history[1:]))
    assert r1.evaluations == 10 * 31


def test_de_stays_in_bounds():
    seen = []

    def f(x):
        seen.append(x.copy())
        return float(-np.sum(x))

    differential_evolution(f, DEConfig(population=6, generations=20, seed=0, weight=1.9), [(0, 1), (-3, -2)])
    pts = np.array(seen)
    assert pts[:, 0].min() >= 0 and pts[:, 0].max() <= 1
    assert pts[:, 1].min() >= -3 and pts[:, 1].max() <= -2


def test_de_config_validation():
    for kw in ({"population": 3}, {"weight": 0.0}, {"crossover": 1.5}, {"generations": 0}):
        with pytest.raises(ValueError):
            DEConfig(**kw)
    with pytest.raises(ValueError):
        differential_evolution(sphere, DEConfig())
    with pytest.raises(ValueError):
        differential_evolution(sphere, DEConfig(), [(0, np.inf)])


def test_pack_roundtrip():
    p = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
    assert np.allclose(pack_angles(unpack_angles(p)), p)
    assert len(ANGLE_BOUNDS) == 5


def test_objective_is_the_cutoff():
    rho = reduced_pair(StateFamilyParams(0.1, 2))
    angles = [(0.3, 0.0), (1.2, 0.4), (2.0, -1.0)]
    direct = cutoff_efficiency(compute_assemblage(rho, settings_from_angles(angles))).epsilon_star
    assert angles_cutoff(rho, angles) == pytest.approx(direct, abs=1e-12)
    assert angles_cutoff(rho, pauli_angles()) == pytest.approx(analytic_cutoff(0.1, 2), abs=1e-6)


def test_optimize_never_worse_than_pauli():
    rho = reduced_pair(StateFamilyParams(0.1, 2))
    res = optimize_angles(rho, config=SMALL)
    assert res.epsilon_star <= res.pauli_epsilon_star + 1e-6
    assert res.pauli_epsilon_star == pytest.approx(analytic_cutoff(0.1, 2), abs=1e-6)
    assert len(res.degrees()) == 6
    again = optimize_angles(rho, config=SMALL)
    assert again.epsilon_star == res.epsilon_star


def test_gauge_rotation_about_z():
    rho = reduced_pair(StateFamilyParams(0.2, 3))
    angles = [(0.4, 0.0), (1.1, 0.7), (2.3, -0.9)]
    shifted = [(t, f + 0.6) for t, f in angles]
    assert angles_cutoff(rho, angles) == pytest.approx(angles_cutoff(rho, shifted), abs=1e-6)


def test_optimize_rejects_bad_input():
    rho = reduced_pair(StateFamilyParams(0.1, 2))
    with pytest.raises(ValueError):
        optimize_angles(rho, settings_count=2)
    with pytest.raises(ValueError):
        optimize_angles(np.eye(4), config=SMALL)


def test_angle_table_csv():
    rho = reduced_pair(StateFamilyParams(0.1, 2))
    res = optimize_angles(rho, config=DEConfig(population=5, generations=1))
    lines = angle_table_csv([(0.1, res)]).splitlines()
    assert tuple(lines[0].split(",")) == ANGLE_COLUMNS
    assert len(lines[1].split(",")) == len(ANGLE_COLUMNS)
