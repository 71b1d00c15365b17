from __future__ import annotations

import json
import math

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import given, settings, strategies as st

from multisteer.assemblages import Assemblage, Outcome, analytic_assemblage, apply_efficiency
from multisteer.hypothesis import (
    TestReport,
    calibration_rate,
    chi2_critical,
    chi2_sf,
    gamma_q,
    hypothesis_test,
    record_statistic,
    suite_test,
)
from multisteer.tomography import CountRecord, expected_counts, simulate_counts


@pytest.fixture(scope="module")
def truth():
    return apply_efficiency(analytic_assemblage(0.1, 2), 0.73)


def test_critical_values():
    assert chi2_critical(540, 0.05) == pytest.approx(595.168, abs=0.01)
    assert chi2_critical(1, 0.05) == pytest.approx(3.8415, abs=1e-3)
    for sig in (0.01, 0.05, 0.3):
        assert chi2_critical(2, sig) == pytest.approx(-2 * math.log(sig), abs=1e-8)


@settings(max_examples=50)
@given(st.integers(1, 800), st.floats(0.001, 0.999))
def test_critical_matches_scipy(dof, sig):
    assert chi2_critical(dof, sig) == pytest.approx(scipy.stats.chi2.isf(sig, dof), rel=1e-8, abs=1e-8)


@settings(max_examples=50)
@given(st.floats(0.1, 300), st.floats(0.0, 600))
def test_gamma_q_matches_scipy(a, x):
    assert gamma_q(a, x) == pytest.approx(scipy.special.gammaincc(a, x), rel=1e-9, abs=1e-14)


def test_parameter_checks():
    for bad in [(0, 0.05), (1.5, 0.05), (5, 0.0), (5, 1.0)]:
        with pytest.raises(ValueError):
            chi2_critical(*bad)
    with pytest.raises(ValueError):
        gamma_q(0, 1)
    with pytest.raises(ValueError):
        gamma_q(1, -1)
    assert chi2_sf(0.0, 3) == 1.0


def test_statistic_zero_on_exact_fit(truth):
    c = CountRecord(expected_counts(truth, shots=10**6))
    rep = hypothesis_test(c, truth)
    assert rep.statistic == pytest.approx(0, abs=1e-8)
    assert rep.accepted
    assert rep.dof == 45 and rep.groups == 9


def test_suite_shape_and_reported_statistic(truth):
    pairs = []
    for seed in range(12):
        c = simulate_counts(truth, shots=2000, rng_seed=seed, alpha=[0.015, 0.065, 0.1, 0.185, 0.3, 0.4, 0.5][seed // 2 % 7], bob=seed % 2 + 1)
        pairs.append((c, truth))
    rep = suite_test(pairs)
    assert rep.groups == 108 and rep.dof == 540
    assert rep.critical_value == pytest.approx(595.1683, abs=1e-3)
    reported = TestReport(572.8553, 540, rep.critical_value, 0.05, 572.8553 < rep.critical_value)
    assert reported.accepted


def test_suite_exclusions(truth):
    pairs = [(simulate_counts(truth, shots=500, rng_seed=s, alpha=a), truth) for s, a in enumerate((0.015, 0.1))]
    assert suite_test(pairs, exclude_alphas=(0.015,)).dof == 45
    assert suite_test(pairs, min_group_counts=500).dof == 90
    with pytest.raises(ValueError):
        suite_test(pairs, min_group_counts=501)


def test_reorder_invariance(truth):
    c = simulate_counts(truth, shots=3000, rng_seed=5)
    perm_x, perm_y = [2, 0, 1], [1, 2, 0]
    c2 = CountRecord(c.counts[perm_x][:, :, perm_y], [c.povms[i] for i in perm_y])
    elements = {(perm_x.index(x), o): m for (x, o), m in truth.elements.items()}
    t2 = Assemblage(elements, 3, True)
    assert record_statistic(c2, t2)[0] == pytest.approx(record_statistic(c, truth)[0], rel=1e-12)
    s1 = suite_test([(c, truth), (c2, t2)]).statistic
    s2 = suite_test([(c2, t2), (c, truth)]).statistic
    assert s1 == pytest.approx(s2, rel=1e-12)


def test_zero_probability_rejects(truth):
    c = simulate_counts(truth, shots=1000, rng_seed=1)
    # sigma_{+|0} supported on |0> only, so Bob's z-minus outcome has probability zero
    bad = dict(truth.elements)
    bad[(0, Outcome.PLUS)] = np.diag([0.5, 0.0]).astype(complex)
    counts = c.counts.copy()
    counts[0, 0, 0, 1] += 1
    rep = hypothesis_test(CountRecord(counts), Assemblage(bad, 3, True))
    assert math.isinf(rep.statistic)
    assert not rep.accepted
    assert json.loads(rep.to_json())["statistic"] == "inf"
    assert TestReport.from_json(rep.to_json()).statistic == math.inf


def test_report_json_round_trip(truth):
    rep = hypothesis_test(simulate_counts(truth, shots=1000, rng_seed=2), truth)
    assert TestReport.from_json(rep.to_json()) == rep
    assert rep.accepted == (rep.statistic < rep.critical_value)


def test_calibration(truth):
    assert calibration_rate(truth, 10**5, trials=100, seed=0) >= 0.90


def test_empty_record_rejected(truth):
    with pytest.raises(ValueError):
        hypothesis_test(CountRecord(np.zeros((3, 3, 3, 2), dtype=int)), truth)
