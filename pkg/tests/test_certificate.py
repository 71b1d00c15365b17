from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multisteer.bounds import OutOfRange, analytic_cutoff, cutoff_efficiency_symmetric
from multisteer.certificate import certificate_support_pattern, optimal_certificate


@pytest.mark.parametrize("alpha,n", [(0.1, 4), (0.3, 2), (0.05, 10), (0.2, 5)])
def test_certificate_checks(alpha, n):
    cert = optimal_certificate(alpha, n)
    assert all(cert.checks(1e-9).values())
    assert max(abs(h) for h in cert.h_scalars) < 1e-9
    assert min(np.linalg.eigvalsh(cert.h_mats[4])[0], np.linalg.eigvalsh(cert.h_mats[3])[0]) > -1e-9
    assert abs(np.linalg.eigvalsh(cert.h_mats[4])[0]) < 1e-9
    assert cert.gap < 1e-9
    assert cert.e == pytest.approx(analytic_cutoff(alpha, n), abs=1e-12)


def test_certificate_zero_pattern():
    cert = optimal_certificate(0.1, 4)
    assert certificate_support_pattern(cert, 1e-12) == (1, 4, 7, 8)


def test_certificate_matches_reduced_sdp():
    cert = optimal_certificate(0.1, 4)
    res = cutoff_efficiency_symmetric(0.1, 4)
    assert res.epsilon_star == pytest.approx(cert.e, abs=1e-7)


def test_certificate_rejects_out_of_range():
    with pytest.raises(OutOfRange):
        optimal_certificate(0.7, 2)
    with pytest.raises(OutOfRange):
        optimal_certificate(0.1, 1)


@settings(max_examples=40)
@given(st.integers(2, 40), st.floats(0.02, 0.98))
def test_certificate_random_points(n, frac):
    alpha = frac * 2 / (n + 1)
    if analytic_cutoff(alpha, n) <= 0.5 + 1e-6:
        return
    cert = optimal_certificate(alpha, n, tol=1e-8)
    assert cert.gap < 1e-8
