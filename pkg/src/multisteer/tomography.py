"""Simulated counts, efficiency estimation, likelihood reconstruction and error bars."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .assemblages import ALL_OUTCOMES, SIGNED, Assemblage, Outcome, apply_efficiency, compute_assemblage, pauli_settings
from .bounds import InfeasibleAssemblage, cutoff_efficiency
from .conic import ConicError, ProblemBuilder, hvec, solve_mle
from .linalg import I2, SX, SY, SZ, hermitian_part
from .states import StateFamilyParams, reduced_pair

COUNT_COLUMNS = ("alpha", "bob", "x", "a", "y", "b", "count")
_A_LABELS = ("+", "-", "null")
_B_LABELS = ("+", "-")


def pauli_povms() -> list[tuple[np.ndarray, np.ndarray]]:
    """Bob's tomography bases z, x, y; each is the pair of effects for outcomes +, -."""
    return [((I2 + p) / 2, (I2 - p) / 2) for p in (SZ, SX, SY)]


def validate_povm(effects: Sequence[np.ndarray], tol: float = 1e-9) -> None:
    total = sum(effects)
    if np.max(np.abs(total - I2)) > tol:
        raise ValueError("POVM effects do not sum to the identity")
    for e in effects:
        if np.linalg.eigvalsh(hermitian_part(e))[0] < -tol:
            raise ValueError("POVM effect is not positive semidefinite")


@dataclass
class CountRecord:
    """Counts indexed ``[x, a, y, b]`` with a in (+, -, null) and b in (+, -)."""

    counts: np.ndarray
    povms: list = field(default_factory=pauli_povms)
    alpha: float | None = None
    bob: int | None = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 4 or self.counts.shape[1] != 3 or self.counts.shape[3] != 2:
            raise ValueError(f"counts must have shape (X, 3, Y, 2), got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise ValueError("counts must be nonnegative")
        if len(self.povms) != self.counts.shape[2]:
            raise ValueError("one POVM per Bob setting y is required")
        for p in self.povms:
            validate_povm(p)

    @property
    def settings_count(self) -> int:
        return self.counts.shape[0]

    def group_totals(self) -> np.ndarray:
        """Shots per (x, y) group."""
        return self.counts.sum(axis=(1, 3))

    def total(self) -> int:
        return int(self.counts.sum())


def born_probabilities(a: Assemblage, povms: Sequence[Sequence[np.ndarray]]) -> np.ndarray:
    """``p[x, a, y, b] = Tr(E_{b|y} sigma_{a|x})`` for an assemblage with null outcomes."""
    if not a.includes_null:
        raise ValueError("assemblage must include the null outcome")
    p = np.zeros((a.settings_count, 3, len(povms), 2))
    for x in range(a.settings_count):
        for ia, o in enumerate(ALL_OUTCOMES):
            for y, effects in enumerate(povms):
                for b, e in enumerate(effects):
                    p[x, ia, y, b] = np.real(np.trace(e @ a[x, o]))
    return p


def simulate_counts(
    a: Assemblage,
    povms: Sequence[Sequence[np.ndarray]] | None = None,
    shots: int = 100_000,
    rng_seed=None,
    alpha: float | None = None,
    bob: int | None = None,
) -> CountRecord:
    """Draw one multinomial sample over the six joint outcomes for every (x, y) group."""
    povms = pauli_povms() if povms is None else list(povms)
    for p in povms:
        validate_povm(p)
    for x in range(a.settings_count):
        tr = float(np.real(np.trace(a.marginal(x))))
        if abs(tr - 1) > 1e-8:
            raise ValueError(f"setting {x} has total trace {tr}, expected 1")
    probs = born_probabilities(a, povms)
    rng = np.random.default_rng(rng_seed)
    counts = np.zeros(probs.shape, dtype=np.int64)
    for x in range(probs.shape[0]):
        for y in range(probs.shape[2]):
            p = np.clip(probs[x, :, y, :].reshape(-1), 0, None)
            counts[x, :, y, :] = rng.multinomial(shots, p / p.sum()).reshape(3, 2)
    return CountRecord(counts, povms, alpha, bob)


def expected_counts(a: Assemblage, povms=None, shots: int = 100_000) -> np.ndarray:
    povms = pauli_povms() if povms is None else povms
    return shots * born_probabilities(a, povms)


def simulate_experiment(
    params: StateFamilyParams,
    epsilon: float,
    shots: int = 100_000,
    seed: int = 0,
    settings=None,
    povms=None,
) -> dict[int, CountRecord]:
    """Counts for every Bob of the network.

    Each Bob's data are drawn independently from his reduced assemblage, with
    the stream for Bob n derived from ``(seed, n)``.
    """
    settings = pauli_settings() if settings is None else settings
    records = {}
    for bob in range(1, params.n_bobs + 1):
        a = apply_efficiency(compute_assemblage(reduced_pair(params, bob), settings), epsilon)
        records[bob] = simulate_counts(a, povms, shots, np.random.default_rng([seed, bob]), params.alpha, bob)
    return records


def estimate_efficiency(c: CountRecord) -> float:
    """Fraction of all recorded events with a non-null announcement."""
    total = c.counts.sum()
    if total <= 0:
        raise ValueError("no counts recorded")
    return float(c.counts[:, :2].sum() / total)


@dataclass
class MLEResult:
    assemblage: Assemblage  # includes null members
    rho_b: np.ndarray
    epsilon: float
    log_likelihood: float
    stationarity: float
    history: list[float]
    status: str

    def constraint_residual(self) -> float:
        a = self.assemblage
        res = abs(float(np.real(np.trace(self.rho_b))) - 1)
        for x in range(a.settings_count):
            res = max(res, float(np.max(np.abs(a[x, "+"] + a[x, "-"] - self.epsilon * self.rho_b))))
            res = max(res, float(np.max(np.abs(a[x, "null"] - (1 - self.epsilon) * self.rho_b))))
        return res


def log_likelihood(c: CountRecord, a: Assemblage) -> float:
    p = born_probabilities(a, c.povms)
    mask = c.counts > 0
    if np.any(p[mask] <= 0):
        return -np.inf
    return float(np.sum(c.counts[mask] * np.log(p[mask])))


def mle_assemblage(c: CountRecord, epsilon: float | None = None, stationarity_tol: float = 1e-7) -> MLEResult:
    """Most likely assemblage and Bob state for the counts, with the efficiency held fixed.

    The efficiency is estimated from the null fraction first unless given.
    Variables are the non-null members and Bob's state; the null members are
    ``(1 - epsilon) rho_B`` and enter the likelihood as linear forms of rho_B.
    """
    eps = estimate_efficiency(c) if epsilon is None else float(epsilon)
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"efficiency {eps} outside (0, 1]")
    if np.any(c.group_totals() <= 0):
        raise ValueError("every (x, y) group needs positive counts")
    m = c.settings_count
    bld = ProblemBuilder()
    rho = bld.add_block(2, "rho_B")
    sig = {(x, o): bld.add_block(2, f"sigma{o.value}|{x}") for x in range(m) for o in SIGNED}
    for x in range(m):
        bld.add_matrix_equality(
            [(sig[(x, Outcome.PLUS)], lambda s: s), (sig[(x, Outcome.MINUS)], lambda s: s), (rho, lambda r: -eps * r)],
            np.zeros((2, 2)),
            name=f"sum|{x}",
        )
    bld.add_scalar_equality([(rho, I2)], 1.0, name="trace")
    for x in range(m):
        for ia, o in enumerate(ALL_OUTCOMES):
            for y, effects in enumerate(c.povms):
                for b, e in enumerate(effects):
                    n = float(c.counts[x, ia, y, b])
                    if n <= 0:
                        continue
                    if o is Outcome.NULL:
                        if eps >= 1.0:
                            raise ValueError("null counts recorded but the efficiency is one")
                        bld.add_log_term(n, [(rho, (1 - eps) * e)])
                    else:
                        bld.add_log_term(n, [(sig[(x, o)], e)])
    prob = bld.build(maximize=True)
    # strictly feasible start: maximally mixed everywhere
    off = prob.offsets
    x0 = np.zeros(prob.size)
    x0[off[rho] : off[rho + 1]] = hvec(I2 / 2)
    for blk in sig.values():
        x0[off[blk] : off[blk + 1]] = hvec(eps * I2 / 4)
    try:
        sol = solve_mle(prob, x0=x0, stationarity_tol=stationarity_tol)
    except ConicError as exc:
        raise InfeasibleAssemblage(f"likelihood maximization failed: {exc}") from exc
    rho_b = sol.blocks[rho]
    elements = {k: sol.blocks[blk] for k, blk in sig.items()}
    for x in range(m):
        elements[(x, Outcome.NULL)] = (1 - eps) * rho_b
    a = Assemblage(elements, m, True, {"epsilon": eps})
    return MLEResult(a, rho_b, eps, sol.objective_value, sol.stationarity, sol.history, sol.status)


# ---------------------------------------------------------------------------
# Monte Carlo error bars


@dataclass
class ErrorBars:
    reps: int
    epsilon_exp_std: float
    epsilon_star_std: float
    epsilon_exp_samples: list[float]
    epsilon_star_samples: list[float]

    def as_dict(self) -> dict:
        return {
            "reps": self.reps,
            "epsilon_exp_std": self.epsilon_exp_std,
            "epsilon_star_std": self.epsilon_star_std,
        }


def analyse_counts(c: CountRecord) -> tuple[float, float, MLEResult]:
    """Efficiency, cutoff efficiency of the reconstructed assemblage, and the reconstruction."""
    fit = mle_assemblage(c)
    return fit.epsilon, cutoff_efficiency(fit.assemblage).epsilon_star, fit


def poisson_resample(c: CountRecord, rng: np.random.Generator) -> CountRecord:
    return CountRecord(rng.poisson(c.counts), c.povms, c.alpha, c.bob)


def monte_carlo_errorbars(c: CountRecord, reps: int = 200, rng_seed: int = 0, jobs: int = 1) -> ErrorBars:
    """Standard deviations of epsilon_exp and epsilon* over Poisson-resampled count tables.

    Repetition r draws from the stream ``(rng_seed, r)``, so results do not depend on ``jobs``.
    """
    if reps < 2:
        raise ValueError("need at least two repetitions")

    def one(r: int) -> tuple[float, float]:
        sample = poisson_resample(c, np.random.default_rng([rng_seed, r]))
        e, cut, _ = analyse_counts(sample)
        return e, cut

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(one, range(reps)))
    else:
        out = [one(r) for r in range(reps)]
    e = [o[0] for o in out]
    s = [o[1] for o in out]
    return ErrorBars(reps, float(np.std(e, ddof=1)), float(np.std(s, ddof=1)), e, s)


# ---------------------------------------------------------------------------
# files


def records_to_csv(records: Iterable[CountRecord], header_lines: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COUNT_COLUMNS)
    for r in records:
        alpha = "" if r.alpha is None else repr(r.alpha)
        bob = "" if r.bob is None else r.bob
        for (x, ia, y, b), n in np.ndenumerate(r.counts):
            w.writerow([alpha, bob, x, _A_LABELS[ia], y, _B_LABELS[b], int(n)])
    return buf.getvalue()


def records_from_csv(text: str, povms=None) -> list[CountRecord]:
    """Parse count tables; one record per (alpha, bob) pair, in order of first appearance."""
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or tuple(reader.fieldnames) != COUNT_COLUMNS:
        raise ValueError(f"expected CSV columns {COUNT_COLUMNS}, got {reader.fieldnames}")
    groups: dict[tuple[str, str], list[tuple[int, int, int, int, int]]] = {}
    for row in reader:
        key = (row["alpha"], row["bob"])
        ia = _A_LABELS.index(row["a"])
        b = _B_LABELS.index(row["b"])
        n = int(row["count"])
        if n < 0:
            raise ValueError("negative count in file")
        groups.setdefault(key, []).append((int(row["x"]), ia, int(row["y"]), b, n))
    out = []
    for (alpha, bob), rows in groups.items():
        nx = max(r[0] for r in rows) + 1
        ny = max(r[2] for r in rows) + 1
        counts = np.zeros((nx, 3, ny, 2), dtype=np.int64)
        for x, ia, y, b, n in rows:
            counts[x, ia, y, b] += n
        p = pauli_povms() if povms is None else povms
        out.append(CountRecord(counts, list(p)[:ny], float(alpha) if alpha else None, int(bob) if bob else None))
    return out


def assemblage_matrices(a: Assemblage) -> Mapping[str, list]:
    """JSON-ready ``{"x,a": [[re, im], ...]}`` view of an assemblage."""
    return {
        f"{x},{o.value}": [[float(np.real(v)), float(np.imag(v))] for v in m.reshape(-1)]
        for (x, o), m in a.elements.items()
    }


# ---------------------------------------------------------------------------
# reference assemblage at alpha = 0.1 (first setting, with null outcome)

FIXTURE_EXPECTED = {
    "+": np.array([[0.6017, 0.0166], [0.0166, 0.0017]]),
    "-": np.array([[0.1032, -0.0166], [-0.0166, 0.0183]]),
    "null": np.array([[0.2676, 0.0], [0.0, 0.0076]]),
}
FIXTURE_RECONSTRUCTED = {
    "+": np.array([[0.6073, 0.0121], [0.0121, 0.0027]]),
    "-": np.array([[0.0911, -0.0370], [-0.0370, 0.0388]]),
    "null": np.array([[0.2454, -0.0088], [-0.0088, 0.0146]]),
}


def fixture_assemblage() -> Assemblage:
    """Three-setting assemblage whose first setting is the tabulated expected one.

    The tabulated values are rounded to four digits, so they are renormalized
    to unit trace. The efficiency is the non-null weight and Bob's state the
    normalized non-null sum, so every null member is ``(1 - eps) rho`` (the
    tabulated null agrees with this to rounding). The other two settings are
    Alice's x and y projectors acting on the canonical purification of Bob's
    state, ``eps sqrt(rho) P^T sqrt(rho)``.
    """
    total = float(np.trace(sum(FIXTURE_EXPECTED.values())))
    first = {k: v.astype(complex) / total for k, v in FIXTURE_EXPECTED.items()}
    eps = float(np.real(np.trace(first["+"] + first["-"])))
    rho = (first["+"] + first["-"]) / eps
    w, q = np.linalg.eigh(rho)
    r = (q * np.sqrt(np.maximum(w, 0))) @ q.conj().T
    elements = {(0, Outcome.PLUS): first["+"], (0, Outcome.MINUS): first["-"]}
    for x, p in ((1, SX), (2, SY)):
        for o, sign in ((Outcome.PLUS, 1), (Outcome.MINUS, -1)):
            elements[(x, o)] = eps * r @ ((I2 + sign * p) / 2).T @ r
    for x in range(3):
        elements[(x, Outcome.NULL)] = (1 - eps) * rho
    return Assemblage(elements, 3, True, {"epsilon": eps})
