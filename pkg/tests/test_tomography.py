from __future__ import annotations

import numpy as np
import pytest

import multisteer.tomography as tomo
from multisteer.assemblages import (
    Outcome,
    analytic_assemblage,
    apply_efficiency,
    no_signalling_check,
)
from multisteer.linalg import trace_distance
from multisteer.states import StateFamilyParams
from multisteer.tomography import (
    COUNT_COLUMNS,
    FIXTURE_EXPECTED,
    CountRecord,
    born_probabilities,
    estimate_efficiency,
    expected_counts,
    fixture_assemblage,
    log_likelihood,
    mle_assemblage,
    monte_carlo_errorbars,
    pauli_povms,
    records_from_csv,
    records_to_csv,
    simulate_counts,
    simulate_experiment,
)


@pytest.fixture(scope="module")
def truth():
    return apply_efficiency(analytic_assemblage(0.1, 2), 0.73)


def test_group_totals(truth):
    c = simulate_counts(truth, shots=1234, rng_seed=1)
    assert np.all(c.group_totals() == 1234)
    assert c.total() == 9 * 1234


def test_born_probabilities_normalized(truth):
    p = born_probabilities(truth, pauli_povms())
    assert np.allclose(p.sum(axis=(1, 3)), 1)
    assert p.min() >= -1e-12


def test_law_of_large_numbers(truth):
    shots = 10**7
    c = simulate_counts(truth, shots=shots, rng_seed=7)
    p = born_probabilities(truth, pauli_povms())
    freq = c.counts / shots
    se = np.sqrt(np.maximum(p * (1 - p), 1e-300) / shots)
    dev = np.abs(freq - p) / se
    assert np.mean(dev <= 3) >= 0.95
    assert dev.max() <= 5


def test_same_seed_same_counts(truth):
    a = simulate_counts(truth, shots=1000, rng_seed=3).counts
    b = simulate_counts(truth, shots=1000, rng_seed=3).counts
    assert np.array_equal(a, b)


def test_invalid_inputs(truth):
    with pytest.raises(ValueError):
        simulate_counts(truth, povms=[(np.eye(2), np.eye(2))])
    with pytest.raises(ValueError):
        CountRecord(np.zeros((3, 2, 3, 2)))
    with pytest.raises(ValueError):
        CountRecord(-np.ones((3, 3, 3, 2)))


def test_efficiency_estimates(truth):
    c = np.zeros((3, 3, 3, 2), dtype=int)
    c[:, 0] = 5
    assert estimate_efficiency(CountRecord(c)) == 1.0
    c[:, 2] = 10
    c[:, 1] = 5
    assert estimate_efficiency(CountRecord(c)) == 0.5
    with pytest.raises(ValueError):
        estimate_efficiency(CountRecord(np.zeros((3, 3, 3, 2), dtype=int)))
    rec = simulate_experiment(StateFamilyParams(0.1, 2), 0.7259, seed=11)
    for r in rec.values():
        assert abs(estimate_efficiency(r) - 0.7259) < 0.005


def test_exact_frequencies_recover_truth(truth):
    counts = expected_counts(truth, shots=10**6)
    fit = mle_assemblage(CountRecord(counts))
    for k, m in truth.elements.items():
        assert np.max(np.abs(fit.assemblage[k] - m)) < 1e-4
    assert fit.epsilon == pytest.approx(0.73, abs=1e-9)


@pytest.mark.parametrize("alpha", [0.1, 0.3])
def test_round_trip(alpha):
    a = apply_efficiency(analytic_assemblage(alpha, 2), 0.73)
    c = simulate_counts(a, shots=10**5, rng_seed=int(alpha * 100))
    fit = mle_assemblage(c)
    assert abs(fit.epsilon - 0.73) < 0.01
    for k, m in a.elements.items():
        assert trace_distance(fit.assemblage[k], m) <= 0.02
    assert fit.constraint_residual() <= 1e-7
    ok, _ = no_signalling_check(fit.assemblage, 1e-8)
    assert ok
    assert log_likelihood(c, fit.assemblage) >= log_likelihood(c, a) - 1e-6
    assert fit.stationarity <= 1e-7


def test_null_members_tied_to_bob_state(truth):
    fit = mle_assemblage(simulate_counts(truth, shots=5000, rng_seed=2))
    for x in range(3):
        assert np.allclose(fit.assemblage[x, Outcome.NULL], (1 - fit.epsilon) * fit.rho_b, atol=1e-9)


def test_csv_round_trip(truth):
    recs = [simulate_counts(truth, shots=500, rng_seed=s, alpha=0.1, bob=s) for s in (1, 2)]
    text = records_to_csv(recs, ["seed 1"])
    assert text.splitlines()[1] == ",".join(COUNT_COLUMNS)
    back = records_from_csv(text)
    assert len(back) == 2
    for r, b in zip(recs, back):
        assert np.array_equal(r.counts, b.counts)
        assert (b.alpha, b.bob) == (r.alpha, r.bob)
    with pytest.raises(ValueError):
        records_from_csv("a,b\n1,2\n")


def test_monte_carlo_degenerate(truth, monkeypatch):
    c = simulate_counts(truth, shots=10**5, rng_seed=4)
    monkeypatch.setattr(tomo, "poisson_resample", lambda rec, rng: rec)
    eb = monte_carlo_errorbars(c, reps=3)
    assert eb.epsilon_exp_std == 0
    assert eb.epsilon_star_std == pytest.approx(0, abs=1e-12)
    assert eb.reps == 3


def test_monte_carlo_deterministic_across_jobs(truth):
    c = simulate_counts(truth, shots=10**4, rng_seed=4)
    one = monte_carlo_errorbars(c, reps=4, rng_seed=9)
    two = monte_carlo_errorbars(c, reps=4, rng_seed=9, jobs=2)
    assert one.epsilon_star_samples == two.epsilon_star_samples
    with pytest.raises(ValueError):
        monte_carlo_errorbars(c, reps=1)


def test_fixture_assemblage_valid():
    a = fixture_assemblage()
    ok, _ = no_signalling_check(a, 1e-10)
    assert ok
    for m in a.elements.values():
        assert np.linalg.eigvalsh(m)[0] >= -1e-12
    total = sum(np.trace(v) for v in FIXTURE_EXPECTED.values())
    assert np.allclose(a[0, Outcome.PLUS], FIXTURE_EXPECTED["+"] / total)


def test_fixture_reconstruction():
    a = fixture_assemblage()
    fit = mle_assemblage(simulate_counts(a, shots=10**5, rng_seed=0))
    for o in ("+", "-", "null"):
        assert np.max(np.abs(fit.assemblage[0, o] - FIXTURE_EXPECTED[o])) <= 0.02
