"""Closed-form optimal primal and dual points for the Pauli cutoff program.

The primal is an LHS ensemble over the nine rotation classes whose scaling
equals the closed-form cutoff; the dual is a feasible point of the dual program
with the same objective value, so both are optimal.

Conventions follow the rest of the package: the y setting points along -y,
which is the complex conjugate of the other common convention. In this frame
the off-diagonal Bloch directions of the two mixed ensemble members sit at
azimuth +pi/4 and the rotated x-multiplier picks up ``U_1 F U_1^dagger``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assemblages import Outcome, analytic_assemblage, bob_state
from .bounds import OutOfRange, _ensemble_residual, analytic_cutoff
from .linalg import I2, P0, P1, SX, SZ, BlochVector, bloch_operator, conjugate_by
from .strategies import rotate_assemblage_key, rotation_unitary, strategy_ecs, strategy_table, twirl

AZIMUTH = math.pi / 4
LIFT_DELTA = 1e-10
_PLUS, _MINUS = Outcome.PLUS, Outcome.MINUS


class CertificateError(AssertionError):
    """The constructed certificate failed a feasibility check: an implementation bug, not bad input."""


@dataclass
class Certificate:
    alpha: float
    n_bobs: int
    e: float
    theta3: float
    theta6: float
    primal: dict  # class index -> 2x2
    ensemble: dict  # strategy -> 2x2
    m: np.ndarray
    f: dict  # (x, Outcome) -> 2x2, covariant completion of F_{+|0}, F_{-|0}, F_{+|1}
    h_scalars: tuple[float, float, float]
    h_mats: dict  # class index 3..8 -> 2x2
    scalars: dict = field(default_factory=dict)  # mu0, mu1, c0, c1, c2, h3, h6
    primal_residual: float = float("nan")
    scalar_residual: float = float("nan")
    min_slack_eig: float = float("nan")
    min_primal_eig: float = float("nan")
    lifted_min_eig: float = float("nan")
    gap: float = float("nan")

    def checks(self, tol: float = 1e-9) -> dict[str, bool]:
        return {
            "primal_feasible": self.primal_residual <= tol and self.min_primal_eig >= -tol,
            "dual_feasible": self.min_slack_eig >= -tol
            and min(self.h_scalars) >= -tol
            and self.scalar_residual <= tol,
            "lifted_dual_feasible": self.lifted_min_eig >= -tol,
            "zero_gap": self.gap <= tol,
        }


def _state(theta: float, phi: float) -> np.ndarray:
    return 0.5 * (I2 + bloch_operator(BlochVector(theta, phi).vector))


def _primal(alpha: float, n: float, e: float):
    c3 = ((n - 3) * e + 1) / ((n + 1) * e - 1)
    theta3 = math.acos(max(-1.0, min(1.0, c3)))
    theta6 = math.acos(1 - 2 * alpha / n)
    zero = np.zeros((2, 2), dtype=complex)
    sig = {
        0: (alpha * (1 - e) + (2 - alpha) * n * e - n) / (4 * n) * P0,
        1: zero,
        2: (1 - e) * (n - alpha) / n * P0,
        3: alpha * (n - 1) * e / (2 * n * (1 + math.cos(theta3))) * _state(theta3, AZIMUTH),
        4: zero,
        5: alpha * e * (1 + 2 * (1 - n) / (n * (1 + math.cos(theta3)))) * P1,
        6: (1 - e) / 4 * _state(theta6, AZIMUTH),
        7: zero,
        8: zero,
    }
    return theta3, theta6, {k: np.asarray(v, dtype=complex) for k, v in sig.items()}


def _dual(alpha: float, n: float, e: float, theta3: float):
    q = math.sqrt(alpha * (n - alpha))
    s1a = math.sqrt((1 - alpha) * alpha)
    mu0 = alpha * e * (2 * e - 1) * n / (
        alpha**2 * (1 - 3 * e) + alpha * (3 * e - 1) * n - math.sqrt(2) * e * s1a * q
    )
    mu1 = -e * mu0 * (alpha - n + math.sqrt(2) * math.sqrt(1 - alpha) * math.sqrt(n - alpha)) / (alpha * (2 * e - 1))
    c2 = mu0 * q / (math.sqrt(2) * alpha)
    c1 = 0.25 * (mu0 + mu1 - math.sqrt(2) * c2 * n / q)
    c0 = mu0 * (n - 2 * q / math.sin(theta3)) / alpha - mu1
    h3 = math.sqrt(2) * c2 / math.sin(theta3)
    h6 = c2 * n / math.sqrt(2 * alpha * (n - alpha))
    m = np.diag([mu0, mu1]).astype(complex)
    f_plus0 = mu0 * P0
    f_minus0 = np.diag([c0, mu1]).astype(complex)
    f_plus1 = c1 * I2 + c2 * SX - c1 * SZ
    scalars = {"mu0": mu0, "mu1": mu1, "c0": c0, "c1": c1, "c2": c2, "h3": h3, "h6": h6}
    return m, f_plus0, f_minus0, f_plus1, scalars


def _covariant_completion(f_plus0, f_minus0, f_plus1) -> dict:
    f = {(0, _PLUS): f_plus0, (0, _MINUS): f_minus0}
    for k in range(4):
        key = rotate_assemblage_key(_PLUS, 1, k)
        f[key] = conjugate_by(rotation_unitary(k), f_plus1)
    return f


def optimal_certificate(alpha: float, n_bobs: int, tol: float = 1e-9, check: bool = True) -> Certificate:
    """Build and verify the closed-form primal/dual pair at ``(alpha, N)``.

    Raises :class:`CertificateError` when ``check`` is set and any feasibility or
    gap condition fails by more than ``tol``.
    """
    if n_bobs < 2:
        raise OutOfRange("need at least two Bobs")
    e = analytic_cutoff(alpha, n_bobs)
    if e <= 0.5:
        raise OutOfRange(f"closed form gives e={e} <= 1/2; the certificate needs e > 1/2")
    n = float(n_bobs)
    theta3, theta6, sig = _primal(alpha, n, e)
    _, classes = strategy_ecs()
    ensemble = {s: np.zeros((2, 2), dtype=complex) for s in strategy_table(3).strategies}
    for c, cls in enumerate(classes):
        if cls.cardinality == 1:
            ensemble[cls.representative] = twirl(sig[c])
        else:
            for k, s in enumerate(cls.members):
                ensemble[s] = conjugate_by(rotation_unitary(k), sig[c])
    assemblage = analytic_assemblage(alpha, n_bobs)
    rho_b = bob_state(alpha, n_bobs)

    m, f_plus0, f_minus0, f_plus1, scalars = _dual(alpha, n, e, theta3)
    f = _covariant_completion(f_plus0, f_minus0, f_plus1)

    def slack(strategy) -> np.ndarray:
        return m - sum((f[(x, o)] for x, o in enumerate(strategy) if o is not Outcome.NULL), np.zeros((2, 2), dtype=complex))

    reps = [cls.representative for cls in classes]
    h_scalars = tuple(float(np.real(slack(reps[c])[0, 0])) for c in range(3))
    h_mats = {c: slack(reps[c]) for c in range(3, 9)}
    scalar = float(
        np.real(
            np.trace(f_plus0 @ assemblage[0, _PLUS])
            + np.trace(f_minus0 @ assemblage[0, _MINUS])
            + 4 * np.trace(f_plus1 @ assemblage[1, _PLUS])
        )
    )
    full_scalar = float(sum(np.real(np.trace(f[k] @ assemblage[k])) for k in f))

    cert = Certificate(
        alpha=alpha,
        n_bobs=n_bobs,
        e=e,
        theta3=theta3,
        theta6=theta6,
        primal=sig,
        ensemble=ensemble,
        m=m,
        f=f,
        h_scalars=h_scalars,  # type: ignore[arg-type]
        h_mats=h_mats,
        scalars=scalars,
    )
    cert.primal_residual = _ensemble_residual(assemblage, ensemble, e, rho_b)
    cert.min_primal_eig = min(float(np.linalg.eigvalsh(v)[0]) for v in sig.values())
    cert.scalar_residual = max(abs(scalar - 1), abs(full_scalar - 1))
    cert.min_slack_eig = min(float(np.linalg.eigvalsh(h)[0]) for h in h_mats.values())
    cert.lifted_min_eig = _lifted_min_eig(m, f, assemblage)
    cert.gap = abs(float(np.real(np.trace(m @ rho_b))) - e)
    if check:
        failed = [k for k, ok in cert.checks(tol).items() if not ok]
        if failed:
            raise CertificateError(f"certificate at alpha={alpha}, N={n_bobs} failed: {', '.join(failed)}")
    return cert


def _lifted_min_eig(m: np.ndarray, f: dict, assemblage, delta: float = LIFT_DELTA) -> float:
    """Least slack eigenvalue of the full 27-strategy dual at ``M + delta I``.

    The ensemble members answering + on setting 0 live on |0><0|, so the reduced
    dual only constrains ``<0|.|0>`` of their slacks, and those entries vanish at
    the optimum while the off-diagonals do not. The full dual optimum is then
    approached but not attained: shifting M by ``delta I`` (raising the dual
    objective by exactly ``delta``) and subtracting ``t |1><1|`` from ``F_{+|0}``
    (invisible to every objective and scalar constraint, since its assemblage
    member has no |1> support) restores feasibility for ``t`` of order
    ``1/delta``.
    """
    best = -np.inf
    strategies = strategy_table(3).strategies
    shifted = m + delta * np.eye(2)
    for t in [0.0] + list(10.0 ** np.arange(-3, 16)):
        ff = dict(f)
        ff[(0, _PLUS)] = f[(0, _PLUS)] - t * P1
        lo = min(
            float(np.linalg.eigvalsh(shifted - sum((ff[(x, o)] for x, o in enumerate(s) if o is not Outcome.NULL), np.zeros((2, 2))))[0])
            for s in strategies
        )
        best = max(best, lo)
        if lo >= 0:
            break
    return best


def certificate_support_pattern(cert: Certificate, tol: float = 1e-12) -> tuple[int, ...]:
    """Classes with vanishing ensemble weight."""
    return tuple(c for c, v in cert.primal.items() if abs(np.trace(v)) <= tol)
