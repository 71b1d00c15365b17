"""Differential evolution over Alice's measurement directions."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .assemblages import compute_assemblage, pauli_settings, settings_from_angles
from .bounds import InfeasibleAssemblage, cutoff_efficiency
from .linalg import BlochVector, check_density


@dataclass(frozen=True)
class DEConfig:
    population: int = 30
    weight: float = 0.7
    crossover: float = 0.9
    generations: int = 200
    seed: int = 0
    bounds: tuple[tuple[float, float], ...] | None = None
    tol: float = 0.0  # stop early once the population spread in value falls below this

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("population must be at least 4")
        if not 0.0 < self.weight < 2.0:
            raise ValueError("weight F must lie in (0, 2)")
        if not 0.0 <= self.crossover <= 1.0:
            raise ValueError("crossover CR must lie in [0, 1]")
        if self.generations < 1:
            raise ValueError("need at least one generation")


@dataclass
class DEResult:
    x: np.ndarray
    value: float
    history: list[float] = field(default_factory=list)  # best value after each generation
    evaluations: int = 0


def _reflect(v: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    width = hi - lo
    safe = np.where(width > 0, width, 1.0)
    # fold into [lo, hi] by mirroring at the walls
    t = np.mod(v - lo, 2 * safe)
    t = np.where(t > safe, 2 * safe - t, t)
    return np.where(width > 0, lo + t, lo)


def differential_evolution(
    objective: Callable[[np.ndarray], float],
    config: DEConfig,
    bounds: Sequence[tuple[float, float]] | None = None,
    seed_points: Sequence[np.ndarray] = (),
) -> DEResult:
    """rand/1/bin differential evolution with reflection at the box walls.

    ``seed_points`` replace the first members of the random initial population,
    so a known good point is never lost (selection is elitist per slot).
    """
    bnds = bounds if bounds is not None else config.bounds
    if bnds is None:
        raise ValueError("bounds are required")
    b = np.asarray(bnds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2 or not np.all(np.isfinite(b)) or np.any(b[:, 1] < b[:, 0]):
        raise ValueError("bounds must be finite (low, high) pairs")
    lo, hi = b[:, 0], b[:, 1]
    d = len(lo)
    rng = np.random.default_rng(config.seed)
    np_ = config.population
    pop = lo + rng.random((np_, d)) * (hi - lo)
    for i, p in enumerate(seed_points[:np_]):
        pop[i] = np.clip(np.asarray(p, dtype=float), lo, hi)
    vals = np.array([objective(p) for p in pop], dtype=float)
    evals = np_
    history = []
    for _ in range(config.generations):
        for i in range(np_):
            choices = [j for j in range(np_) if j != i]
            r1, r2, r3 = rng.choice(choices, size=3, replace=False)
            mutant = _reflect(pop[r1] + config.weight * (pop[r2] - pop[r3]), lo, hi)
            cross = rng.random(d) < config.crossover
            cross[rng.integers(d)] = True
            trial = np.where(cross, mutant, pop[i])
            v = objective(trial)
            evals += 1
            if v <= vals[i]:
                pop[i], vals[i] = trial, v
        history.append(float(vals.min()))
        if config.tol > 0 and float(vals.max() - vals.min()) <= config.tol:
            break
    best = int(np.argmin(vals))
    return DEResult(pop[best].copy(), float(vals[best]), history, evals)


# ---------------------------------------------------------------------------
# measurement directions

# parameter vector: (theta1, theta2, phi2, theta3, phi3); phi1 is pinned to 0
ANGLE_BOUNDS = ((0.0, np.pi), (0.0, np.pi), (-np.pi, np.pi), (0.0, np.pi), (-np.pi, np.pi))


def unpack_angles(p: Sequence[float]) -> list[tuple[float, float]]:
    t1, t2, f2, t3, f3 = p
    return [(t1, 0.0), (t2, f2), (t3, f3)]


def pack_angles(angles: Sequence[tuple[float, float]]) -> np.ndarray:
    (t1, _), (t2, f2), (t3, f3) = angles
    return np.array([t1, t2, f2, t3, f3], dtype=float)


def angles_cutoff(rho_ab: np.ndarray, angles: Sequence[tuple[float, float]]) -> float:
    """Cutoff efficiency of the state under the given (theta, phi) settings; 1 if the program fails."""
    a = compute_assemblage(rho_ab, settings_from_angles(angles))
    try:
        return cutoff_efficiency(a).epsilon_star
    except InfeasibleAssemblage:
        return 1.0


def pauli_angles() -> list[tuple[float, float]]:
    return [(s.direction.theta, s.direction.phi) for s in pauli_settings()]


@dataclass
class AngleResult:
    directions: list[BlochVector]
    epsilon_star: float
    pauli_epsilon_star: float
    de: DEResult

    def degrees(self) -> list[float]:
        return [float(np.degrees(v)) for d in self.directions for v in (d.theta, d.phi)]


def optimize_angles(rho_ab: np.ndarray, settings_count: int = 3, config: DEConfig | None = None) -> AngleResult:
    """Search Alice's three directions for the smallest cutoff efficiency on ``rho_ab``.

    The Pauli directions seed the population, so the result never exceeds the
    Pauli cutoff. The first direction's azimuth is fixed to remove the common
    rotation about z.
    """
    if settings_count != 3:
        raise ValueError("only three settings are supported")
    rho_ab = check_density(rho_ab, qubits=2)
    config = config or DEConfig()
    pauli = pauli_angles()
    pauli_eps = angles_cutoff(rho_ab, pauli)
    res = differential_evolution(
        lambda p: angles_cutoff(rho_ab, unpack_angles(p)),
        config,
        bounds=ANGLE_BOUNDS,
        seed_points=[pack_angles(pauli)],
    )
    # the Pauli point sits in the population, but keep the guarantee explicit
    if res.value > pauli_eps:
        res = DEResult(pack_angles(pauli), pauli_eps, res.history, res.evaluations)
    dirs = [BlochVector.from_angles(t, f) for t, f in unpack_angles(res.x)]
    return AngleResult(dirs, res.value, pauli_eps, res)


ANGLE_COLUMNS = ("alpha", "theta1", "phi1", "theta2", "phi2", "theta3", "phi3", "epsilon_star")


def angle_table_csv(rows: Sequence[tuple[float, AngleResult]], header_lines: Sequence[str] = ()) -> str:
    """Angle table in degrees, one row per alpha."""
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ANGLE_COLUMNS)
    for alpha, r in rows:
        w.writerow([repr(alpha)] + [f"{v:.4f}" for v in r.degrees()] + [f"{r.epsilon_star:.8f}"])
    return buf.getvalue()
