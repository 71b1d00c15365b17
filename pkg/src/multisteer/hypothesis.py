"""Multinomial likelihood-ratio goodness-of-fit test for reconstructed assemblages."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .assemblages import Assemblage
from .tomography import CountRecord, born_probabilities, simulate_counts

_EPS = 1e-16
_MAX_TERMS = 100_000


def _gamma_p_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_TERMS):
        ap += 1
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_cf(a: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1 - a
    c = 1 / tiny
    d = 1 / b
    h = d
    for i in range(1, _MAX_TERMS):
        an = -i * (i - a)
        b += 2
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1 / d
        delta = d * c
        h *= delta
        if abs(delta - 1) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function ``Q(a, x)``."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return 1.0
    if x < a + 1:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_cf(a, x)


def chi2_sf(x: float, dof: int) -> float:
    return gamma_q(dof / 2, x / 2)


def chi2_critical(dof: int, significance: float, tol: float = 1e-10) -> float:
    """Upper-tail quantile: the x with ``P(chi2_dof > x) = significance``, by bisection."""
    if int(dof) != dof or dof < 1:
        raise ValueError("dof must be a positive integer")
    if not 0.0 < significance < 1.0:
        raise ValueError("significance must lie in (0, 1)")
    lo, hi = 0.0, max(1.0, float(dof))
    while chi2_sf(hi, dof) > significance:
        lo, hi = hi, 2 * hi
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if chi2_sf(mid, dof) > significance:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class TestReport:
    __test__ = False  # not a pytest class

    statistic: float
    dof: int
    critical_value: float
    significance: float
    accepted: bool
    groups: int = 0

    def to_json(self) -> str:
        d = asdict(self)
        if not math.isfinite(d["statistic"]):
            d["statistic"] = "inf"
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TestReport":
        d = json.loads(text)
        d["statistic"] = float(d["statistic"])
        return cls(**d)


def _report(stat: float, dof: int, significance: float, groups: int) -> TestReport:
    crit = chi2_critical(dof, significance)
    return TestReport(stat, dof, crit, significance, bool(stat < crit), groups)


def record_statistic(c: CountRecord, fitted: Assemblage) -> tuple[float, int, int]:
    """``2 sum D ln(f / p)`` over all cells, its degrees of freedom and the number of groups.

    Each (x, y) group is one multinomial over its six joint outcomes; empty
    cells contribute zero, and a positive count at a zero fitted probability
    makes the statistic infinite.
    """
    p = born_probabilities(fitted, c.povms)
    stat = 0.0
    dof = 0
    groups = 0
    for x in range(c.counts.shape[0]):
        for y in range(c.counts.shape[2]):
            d = c.counts[x, :, y, :].reshape(-1).astype(float)
            n = d.sum()
            if n <= 0:
                continue
            q = p[x, :, y, :].reshape(-1)
            q = q / q.sum()
            groups += 1
            dof += d.size - 1
            mask = d > 0
            if np.any(q[mask] <= 0):
                stat = math.inf
                continue
            stat += 2.0 * float(np.sum(d[mask] * np.log(d[mask] / n / q[mask])))
    return stat, dof, groups


def hypothesis_test(c: CountRecord, fitted: Assemblage, significance: float = 0.05) -> TestReport:
    stat, dof, groups = record_statistic(c, fitted)
    if dof < 1:
        raise ValueError("no populated groups to test")
    return _report(stat, dof, significance, groups)


def suite_test(
    pairs: Iterable[tuple[CountRecord, Assemblage]],
    significance: float = 0.05,
    min_group_counts: int = 0,
    exclude_alphas: Sequence[float] = (),
) -> TestReport:
    """Pooled test over several (counts, fit) pairs: statistics and dof add.

    Records are dropped when their alpha is listed in ``exclude_alphas`` or when
    their smallest (x, y) group total falls below ``min_group_counts``.
    """
    stat, dof, groups = 0.0, 0, 0
    for c, fit in pairs:
        if c.alpha is not None and any(abs(c.alpha - a) < 1e-12 for a in exclude_alphas):
            continue
        if c.group_totals().min() < min_group_counts:
            continue
        s, d, g = record_statistic(c, fit)
        stat += s
        dof += d
        groups += g
    if dof < 1:
        raise ValueError("every record was excluded")
    return _report(stat, dof, significance, groups)


def calibration_rate(
    fitted: Assemblage,
    shots: int,
    trials: int = 100,
    significance: float = 0.05,
    seed: int = 0,
    povms=None,
) -> float:
    """Fraction of trials accepted when data are drawn from ``fitted`` and tested against it.

    No refit is done per trial, so the statistic is asymptotically chi-square
    with the nominal dof and the rate should approach ``1 - significance``.
    """
    accepted = 0
    for t in range(trials):
        c = simulate_counts(fitted, povms, shots, np.random.default_rng([seed, t]))
        accepted += hypothesis_test(c, fitted, significance).accepted
    return accepted / trials
