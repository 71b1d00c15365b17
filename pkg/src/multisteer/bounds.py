"""Cutoff detection efficiencies, LHS membership and scalability sweeps."""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .assemblages import (
    SIGNED,
    Assemblage,
    Outcome,
    analytic_assemblage,
    compute_assemblage,
    no_signalling_check,
    pauli_settings,
)
from .conic import ACCEPTABLE, OPTIMAL, ConicProblem, ConicSolution, ProblemBuilder, solve_sdp
from .linalg import conjugate_by, hermitian_part
from .states import StateFamilyParams, reduced_pair
from .strategies import (
    rotate_assemblage_key,
    rotation_unitary,
    strategy_ecs,
    strategy_table,
    twirl,
)

UNIT_CLAMP = 1e-6
RECONSTRUCTION_TOL = 1e-7


class InfeasibleAssemblage(ValueError):
    pass


class OutOfRange(ValueError):
    pass


@dataclass
class CutoffResult:
    epsilon_star: float
    primal_blocks: dict  # strategy (tuple of Outcome) -> 2x2 matrix; class index -> matrix for the reduced program
    ensemble: dict  # strategy -> matrix, always the full LHS ensemble
    dual_m: np.ndarray
    dual_f: dict  # (x, Outcome) -> matrix, sign chosen so that Tr(M rho_B) is the bound
    dual_slacks: list[np.ndarray]
    gap: float
    status: str
    reconstruction_residual: float
    solution: ConicSolution = field(repr=False)


def _prepare(a: Assemblage, rho_b: np.ndarray | None) -> tuple[Assemblage, np.ndarray]:
    if a.includes_null:
        a = a.postselected()
    ok, dev = no_signalling_check(a, 1e-8)
    if not ok:
        raise InfeasibleAssemblage(f"assemblage violates no-signalling (deviation {dev:.2e})")
    marg = a.marginal(0)
    tr = float(np.real(np.trace(marg)))
    if abs(tr - 1) > 1e-8:
        # a subnormalized non-null assemblage: condition on a click
        a = Assemblage({k: v / tr for k, v in a.elements.items()}, a.settings_count)
        marg = marg / tr
    if rho_b is None:
        rho_b = marg
    else:
        rho_b = hermitian_part(np.asarray(rho_b, dtype=complex))
        if np.max(np.abs(rho_b - marg)) > 1e-8:
            raise InfeasibleAssemblage("assemblage does not sum to the given Bob state")
    return a, rho_b


def _ensemble_residual(a: Assemblage, ensemble: dict, eps: float, rho_b: np.ndarray) -> float:
    res = float(np.max(np.abs(sum(ensemble.values()) - rho_b)))
    for x in range(a.settings_count):
        for o in SIGNED:
            recon = sum((m for s, m in ensemble.items() if s[x] is o), np.zeros((2, 2), dtype=complex))
            res = max(res, float(np.max(np.abs(recon - eps * a[x, o]))))
    return res


def _identity(m):
    return m


def _support(m: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Orthonormal basis (columns) of the range of a PSD matrix."""
    w, v = np.linalg.eigh(hermitian_part(m, 1e-9))
    return v[:, w > tol * max(1.0, float(np.max(np.abs(w))))]


def _common_support(mats: Sequence[np.ndarray], d: int = 2) -> np.ndarray:
    """Basis of the intersection of the ranges of the given PSD matrices.

    A PSD block that sums with others to a matrix of deficient rank must live
    inside that matrix's range; restricting blocks to this face up front keeps
    the conic program strictly feasible.
    """
    proj = np.eye(d, dtype=complex)
    for m in mats:
        v = _support(m)
        # range(P) cap range(V): kernel of (I - V V^+) restricted to range(P)
        q = _support(proj)
        outside = (np.eye(d) - v @ v.conj().T) @ q
        if outside.size == 0:
            return np.zeros((d, 0), dtype=complex)
        _, sv, vh = np.linalg.svd(outside)
        rank = int(np.sum(sv > 1e-9))
        null = vh[rank:].conj().T
        basis = q @ null
        proj = basis @ basis.conj().T
    return _support(proj) if np.trace(proj).real > 0.5 else np.zeros((d, 0), dtype=complex)


def _on_face(v: np.ndarray, op=None):
    """Map a reduced block ``Y`` to ``op(V Y V^dagger)``."""
    if op is None:
        return lambda y: v @ y @ v.conj().T
    return lambda y: op(v @ y @ v.conj().T)


def _rotated(k):
    u = rotation_unitary(k)
    return lambda m: conjugate_by(u, m)


def cutoff_efficiency(
    a: Assemblage,
    rho_b: np.ndarray | None = None,
    gap_tol: float = 1e-9,
    feas_tol: float = 1e-9,
) -> CutoffResult:
    """Largest epsilon for which the non-null assemblage scaled by epsilon admits an LHS model
    whose remaining weight is a valid null outcome; every deterministic strategy gets its own block."""
    a, rho_b = _prepare(a, rho_b)
    m = a.settings_count
    table = strategy_table(m)
    bld = ProblemBuilder()
    members = []  # (block, strategy, map from block to the strategy's state)
    for s in table.strategies:
        face = _common_support([a[x, o] for x, o in enumerate(s) if o is not Outcome.NULL] + [rho_b])
        if face.shape[1]:
            members.append((bld.add_block(face.shape[1], _strategy_label(s)), s, _on_face(face)))
    eps = bld.add_scalar("epsilon")
    bld.set_objective(eps, 1.0)
    for x in range(m):
        for o in SIGNED:
            target = a[x, o]
            terms = [(blk, op) for blk, s, op in members if s[x] is o]
            terms.append((eps, lambda e, t=target: -e[0, 0] * t))
            bld.add_matrix_equality(terms, np.zeros((2, 2)), name=f"F{o.value}|{x}")
    bld.add_matrix_equality([(blk, op) for blk, _, op in members], rho_b, name="M")
    prob = bld.build(maximize=True)
    sol = solve_sdp(prob, gap_tol=gap_tol, feas_tol=feas_tol)
    if sol.status not in ACCEPTABLE:
        raise InfeasibleAssemblage(f"cutoff program ended with status {sol.status}")
    zero = np.zeros((2, 2), dtype=complex)
    ensemble = {s: zero for s in table.strategies}
    ensemble.update({s: op(sol.blocks[blk]) for blk, s, op in members})
    e = float(np.real(sol.blocks[eps][0, 0]))
    return _result(prob, sol, ensemble, dict(ensemble), e, a, rho_b)


def _strategy_label(s) -> str:
    return "".join("0" if o is Outcome.NULL else o.value for o in s)


def _result(prob: ConicProblem, sol: ConicSolution, primal: dict, ensemble: dict, e: float, a, rho_b) -> CutoffResult:
    mult = dict(zip((g.name for g in prob.groups), sol.dual_multipliers))
    dual_m = mult.pop("M")
    dual_f = {}
    for name, v in mult.items():
        sign, x = name[1:].split("|")
        dual_f[(int(x), Outcome.parse(sign))] = -v
    slack = prob.A.T @ sol.y - prob.c
    return CutoffResult(
        epsilon_star=e,
        primal_blocks=primal,
        ensemble=ensemble,
        dual_m=dual_m,
        dual_f=dual_f,
        dual_slacks=prob.split(slack),
        gap=float(abs(sol.objective_value - np.real(np.trace(dual_m @ rho_b)))),
        status=sol.status,
        reconstruction_residual=_ensemble_residual(a, ensemble, e, rho_b),
        solution=sol,
    )


def covariance_deviation(a: Assemblage) -> float:
    """How far a three-setting assemblage is from covariance under quarter turns about z."""
    a = a.non_null()
    u = rotation_unitary(1)
    dev = 0.0
    for x in range(3):
        for o in SIGNED:
            x2, o2 = rotate_assemblage_key(o, x, 1)
            dev = max(dev, float(np.max(np.abs(conjugate_by(u, a[x, o]) - a[x2, o2]))))
    return dev


def symmetric_cutoff(
    a: Assemblage,
    rho_b: np.ndarray | None = None,
    gap_tol: float = 1e-9,
    feas_tol: float = 1e-9,
) -> CutoffResult:
    """Reduced cutoff program with one block per rotation class, for z-covariant three-setting assemblages."""
    a, rho_b = _prepare(a, rho_b)
    if a.settings_count != 3:
        raise ValueError("the reduced program needs exactly three settings")
    dev = covariance_deviation(a)
    if dev > 1e-8:
        raise ValueError(f"assemblage is not covariant under z quarter turns (deviation {dev:.2e})")
    _, classes = strategy_ecs()
    bld = ProblemBuilder()
    # every strategy with the linear map producing its state from the class block
    members = []
    class_blocks = {}
    for c, cls in enumerate(classes):
        rep = cls.representative
        face = _common_support([a[x, o] for x, o in enumerate(rep) if o is not Outcome.NULL] + [rho_b])
        if not face.shape[1]:
            continue
        blk = bld.add_block(face.shape[1], f"sigma{c}")
        class_blocks[c] = (blk, face)
        if cls.cardinality == 1:
            members.append((blk, rep, _on_face(face, twirl)))
        else:
            for k, s in enumerate(cls.members):
                members.append((blk, s, _on_face(face, _rotated(k))))
    eps = bld.add_scalar("epsilon")
    bld.set_objective(eps, 1.0)
    for x, o in ((0, Outcome.PLUS), (0, Outcome.MINUS), (1, Outcome.PLUS)):
        target = a[x, o]
        terms = [(blk, op) for blk, s, op in members if s[x] is o]
        terms.append((eps, lambda e, t=target: -e[0, 0] * t))
        bld.add_matrix_equality(terms, np.zeros((2, 2)), name=f"F{o.value}|{x}")
    bld.add_matrix_equality([(blk, op) for blk, _, op in members], rho_b, name="M")
    prob = bld.build(maximize=True)
    sol = solve_sdp(prob, gap_tol=gap_tol, feas_tol=feas_tol)
    if sol.status not in ACCEPTABLE:
        raise InfeasibleAssemblage(f"reduced cutoff program ended with status {sol.status}")
    primal = {c: np.zeros((2, 2), dtype=complex) for c in range(len(classes))}
    primal.update({c: face @ sol.blocks[blk] @ face.conj().T for c, (blk, face) in class_blocks.items()})
    ensemble = {s: op(sol.blocks[blk]) for blk, s, op in members}
    e = float(np.real(sol.blocks[eps][0, 0]))
    return _result(prob, sol, primal, ensemble, e, a, rho_b)


def family_assemblage(alpha: float, n_bobs: int, eta: float = 1.0) -> Assemblage:
    """Pauli assemblage of one Bob for the (optionally depolarized) network state."""
    if eta == 1.0:
        return analytic_assemblage(alpha, n_bobs)
    return compute_assemblage(reduced_pair(StateFamilyParams(alpha, n_bobs, eta)), pauli_settings())


def cutoff_efficiency_symmetric(alpha: float, n_bobs: int, eta: float = 1.0) -> CutoffResult:
    if not 0.0 < alpha < 1.0:
        raise OutOfRange(f"alpha must lie in (0, 1), got {alpha}")
    if n_bobs < 2:
        raise OutOfRange(f"need at least two Bobs, got {n_bobs}")
    return symmetric_cutoff(family_assemblage(alpha, n_bobs, eta))


# ---------------------------------------------------------------------------
# closed form


def analytic_cutoff(alpha: float, n_bobs: int) -> float:
    """Closed-form cutoff for Pauli settings, valid for 0 < alpha < 2/(N+1)."""
    n = float(n_bobs)
    if n_bobs < 2:
        raise OutOfRange("need at least two Bobs")
    if not 0.0 < alpha < 2.0 / (n + 1):
        raise OutOfRange(f"alpha={alpha} outside (0, {2 / (n + 1):.6g}) for N={n_bobs}")
    r = 2 * math.sqrt(2 * (1 - alpha)) * math.sqrt(n - alpha)
    z0 = 2 * n - alpha * (n + 1) + r
    z1 = math.sqrt(alpha * (n - 1) * ((alpha + 4) * n - 5 * alpha - 2 * r))
    z2 = 2 * (r + n + 2 - alpha - 2 * alpha * n)
    return (z0 + z1) / z2


def implicit_cutoff(alpha: float, n_bobs: int) -> float:
    """Root in (1/2, 1) of the implicit relation the closed form solves; an independent evaluation path."""
    n = float(n_bobs)

    def rel(e):
        lhs = e * math.sqrt(2 * alpha * (1 - alpha)) + (e - 1) * math.sqrt(alpha * (n - alpha))
        return lhs - alpha * math.sqrt(2 * e - 1) * math.sqrt((n - 1) * e)

    return brentq(rel, 0.5 + 1e-15, 1.0, xtol=1e-15, rtol=1e-15)


def cutoff_limit(n_bobs: int) -> float:
    return 1.0 / (1.0 + math.sqrt(2.0 / n_bobs))


# ---------------------------------------------------------------------------
# LHS models and verdicts


@dataclass
class LHSResult:
    local: bool
    weight: float  # largest total weight an LHS ensemble can carry under the assemblage
    ensemble: dict | None
    witness: dict | None  # (x, a) -> F with sum Tr(F sigma) < 0 certifying steering


def lhs_membership(a: Assemblage, tol: float = 1e-6) -> LHSResult:
    """Decide whether ``sigma_{a|x} = sum_lam D(a|x,lam) sigma_lam`` has a PSD solution.

    Solved as: maximize the trace of an ensemble fitting under the assemblage
    (``sigma_{a|x} - sum D sigma_lam`` PSD); the value is 1 iff an LHS model exists.
    """
    a = a.non_null()
    ok, dev = no_signalling_check(a, 1e-8)
    if not ok:
        raise InfeasibleAssemblage(f"assemblage violates no-signalling (deviation {dev:.2e})")
    # strategies that never answer null; null-valued ones could absorb weight trivially
    strategies = list(itertools.product(SIGNED, repeat=a.settings_count))
    total = float(np.real(np.trace(a.marginal(0))))
    bld = ProblemBuilder()
    members = []
    for st in strategies:
        face = _common_support([a[x, o] for x, o in enumerate(st)])
        if face.shape[1]:
            blk = bld.add_block(face.shape[1])
            bld.set_objective(blk, face.conj().T @ face / total)
            members.append((blk, st, _on_face(face)))
    keys = [(x, o) for x in range(a.settings_count) for o in SIGNED]
    for x, o in keys:
        terms = [(blk, op) for blk, st, op in members if st[x] is o]
        face = _support(a[x, o])
        if face.shape[1]:
            terms.append((bld.add_block(face.shape[1]), _on_face(face)))
        bld.add_matrix_equality(terms, a[x, o], name=f"{x}{o.value}")
    prob = bld.build(maximize=True)
    sol = solve_sdp(prob)
    if sol.status not in ACCEPTABLE:
        raise InfeasibleAssemblage(f"LHS program ended with status {sol.status}")
    weight = float(sol.objective_value)
    local = weight >= 1 - tol
    if local:
        zero = np.zeros((2, 2), dtype=complex)
        ensemble = {st: zero for st in strategies}
        ensemble.update({st: op(sol.blocks[blk]) for blk, st, op in members})
        return LHSResult(True, weight, ensemble, None)
    witness = _lift_witness(a, strategies, dict(zip(keys, sol.dual_multipliers)), weight, total)
    return LHSResult(False, weight, None, witness)


def _lift_witness(a: Assemblage, strategies, y: dict, weight: float, total: float) -> dict | None:
    """Turn face-restricted multipliers into a full-space steering witness.

    The multipliers satisfy ``Y >= 0`` and ``sum_x Y_{lam(x)|x} >= I/total`` only on
    the supports used by the reduced program. Adding ``t`` times the projector onto
    the kernel of each assemblage member leaves ``sum Tr(Y sigma)`` unchanged and, with
    a small identity shift for strictness, restores both conditions for large ``t``.
    The witness ``F = Y - I/(m total)`` then has a nonnegative value on every LHS
    assemblage and value ``< 0`` on this one.
    """
    m = a.settings_count
    delta = (1 - weight) / (2 * m * total)
    kernels = {k: np.eye(2) - _support(a[k]) @ _support(a[k]).conj().T for k in y}
    for t in 10.0 ** np.arange(0, 13):
        yy = {k: y[k] + delta * np.eye(2) + t * kernels[k] for k in y}
        if min(np.linalg.eigvalsh(v)[0] for v in yy.values()) < 0:
            continue
        if all(np.linalg.eigvalsh(sum(yy[(x, o)] for x, o in enumerate(st)) - np.eye(2) / total)[0] >= 0 for st in strategies):
            return {k: v - np.eye(2) / (m * total) for k, v in yy.items()}
    return None


def clamp_unit(eps: float, tol: float = UNIT_CLAMP) -> float:
    return 1.0 if eps >= 1 - tol else eps


def steering_verdict(eps_exp: float, cutoff: float) -> bool:
    """Steering is certified without postselection iff the measured efficiency strictly exceeds the cutoff."""
    for v in (eps_exp, cutoff):
        if not 0.0 < v <= 1.0 + 1e-9:
            raise ValueError(f"efficiencies must lie in (0, 1], got {v}")
    return eps_exp > clamp_unit(cutoff)


# ---------------------------------------------------------------------------
# sweeps


SWEEP_COLUMNS = ("N", "alpha", "eta", "settings_kind", "epsilon_star", "gap", "status")


@dataclass(frozen=True)
class SweepRow:
    n_bobs: int
    alpha: float
    eta: float
    settings_kind: str
    epsilon_star: float
    gap: float
    status: str

    def as_tuple(self):
        return (self.n_bobs, self.alpha, self.eta, self.settings_kind, self.epsilon_star, self.gap, self.status)


def _sweep_point(alpha: float, n_bobs: int, eta: float, settings_kind: str, de_config=None) -> SweepRow:
    try:
        if settings_kind == "pauli":
            r = cutoff_efficiency_symmetric(alpha, n_bobs, eta)
            return SweepRow(n_bobs, alpha, eta, "pauli", r.epsilon_star, r.gap, r.status)
        if settings_kind == "optimized":
            from .angles import optimize_angles

            res = optimize_angles(reduced_pair(StateFamilyParams(alpha, n_bobs, eta)), config=de_config)
            return SweepRow(n_bobs, alpha, eta, "optimized", res.epsilon_star, float("nan"), OPTIMAL)
    except InfeasibleAssemblage as exc:
        return SweepRow(n_bobs, alpha, eta, settings_kind, float("nan"), float("nan"), str(exc))
    raise ValueError(f"unknown settings kind {settings_kind!r}")


def cutoff_sweep(
    alphas: Sequence[float],
    n_values: Sequence[int],
    eta: float = 1.0,
    settings_kind: str = "pauli",
    jobs: int = 1,
    de_config=None,
) -> list[SweepRow]:
    """Cutoff efficiency on an (N, alpha) grid; rows come back in grid order regardless of ``jobs``."""
    points = [(a, n) for n in n_values for a in alphas]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda p: _sweep_point(p[0], p[1], eta, settings_kind, de_config), points))
    return [_sweep_point(a, n, eta, settings_kind, de_config) for a, n in points]


def sweep_csv(rows: Iterable[SweepRow], header_lines: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([r.n_bobs, repr(r.alpha), repr(r.eta), r.settings_kind, f"{r.epsilon_star:.10f}", f"{r.gap:.3e}", r.status])
    return buf.getvalue()


@dataclass
class ScalabilityReport:
    eta: float
    rows: list[SweepRow]
    min_cutoff: dict  # (settings_kind, N) -> (alpha at minimum, minimum epsilon*)
    largest_steerable: dict  # settings_kind -> largest N with min cutoff < 1, or None

    def curve(self, n_bobs: int, settings_kind: str = "pauli") -> list[tuple[float, float]]:
        return [(r.alpha, r.epsilon_star) for r in self.rows if r.n_bobs == n_bobs and r.settings_kind == settings_kind]


def max_steerable_bobs(
    eta: float,
    alpha_grid: Sequence[float],
    n_max: int,
    optimized: bool = False,
    jobs: int = 1,
    de_config=None,
) -> ScalabilityReport:
    """For N = 2..n_max, the minimum cutoff over the alpha grid and the largest N with a cutoff below 1.

    The optimized-settings column is off by default since each point runs a global search.
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    if any(not 0.0 < a < 1.0 for a in alpha_grid):
        raise ValueError("alpha grid must lie inside (0, 1)")
    kinds = ["pauli"] + (["optimized"] if optimized else [])
    ns = list(range(2, n_max + 1))
    rows: list[SweepRow] = []
    for kind in kinds:
        rows += cutoff_sweep(alpha_grid, ns, eta, kind, jobs, de_config)
    min_cut = {}
    largest = {}
    for kind in kinds:
        largest[kind] = None
        for n in ns:
            pts = [(r.alpha, r.epsilon_star) for r in rows if r.n_bobs == n and r.settings_kind == kind and np.isfinite(r.epsilon_star)]
            if not pts:
                continue
            best = min(pts, key=lambda p: p[1])
            min_cut[(kind, n)] = best
            if clamp_unit(best[1]) < 1.0:
                largest[kind] = n
    return ScalabilityReport(eta, rows, min_cut, largest)
