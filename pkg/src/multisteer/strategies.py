"""Deterministic response strategies and their z-rotation equivalence classes."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .assemblages import ALL_OUTCOMES, Outcome
from .linalg import conjugate_by, rz

Strategy = tuple[Outcome, ...]

# representatives in the order used throughout (cardinalities 4, 4, 1 repeated)
_P, _M, _N = Outcome.PLUS, Outcome.MINUS, Outcome.NULL
CLASS_REPRESENTATIVES: tuple[Strategy, ...] = (
    (_P, _P, _P),
    (_P, _P, _N),
    (_P, _N, _N),
    (_M, _P, _P),
    (_M, _P, _N),
    (_M, _N, _N),
    (_N, _P, _P),
    (_N, _P, _N),
    (_N, _N, _N),
)


@dataclass(frozen=True)
class StrategyTable:
    settings_count: int
    strategies: tuple[Strategy, ...]

    def __len__(self) -> int:
        return len(self.strategies)

    def response(self, lam: int, x: int) -> Outcome:
        return self.strategies[lam][x]

    def d(self, a, x: int, lam: int) -> int:
        """Deterministic response function ``D(a|x, lam)``."""
        return int(self.strategies[lam][x] is Outcome.parse(a))

    def index(self, strategy: Strategy) -> int:
        return self.strategies.index(tuple(strategy))


@dataclass(frozen=True)
class EquivalenceClass:
    representative: Strategy
    members: tuple[Strategy, ...]  # members[k] is the image under rotation k

    @property
    def cardinality(self) -> int:
        return len(set(self.members))


def strategy_table(settings_count: int = 3) -> StrategyTable:
    if settings_count < 1:
        raise ValueError("need at least one setting")
    return StrategyTable(settings_count, tuple(itertools.product(ALL_OUTCOMES, repeat=settings_count)))


def rotation_unitary(k: int) -> np.ndarray:
    """``exp(-i pi k Z / 4)``: a quarter turn about z, k times."""
    return rz(np.pi * k / 2)


def _h(x: int, k: int) -> int:
    return ((k + x - 1) % 4) // 2


def f_outcome(a: Outcome, x: int, k: int) -> Outcome:
    """Outcome relabelling under rotation k (a sign flip on the equatorial settings)."""
    if a is Outcome.NULL or x == 0 or _h(x, k) == 0:
        return a
    return Outcome.MINUS if a is Outcome.PLUS else Outcome.PLUS


def g_setting(x: int, k: int) -> int:
    """Setting relabelling under rotation k (odd k swaps the x and y settings)."""
    if x != 0 and k % 2 == 1:
        return (x % 2) + 1
    return x


def rotate_strategy(strategy: Strategy, k: int) -> Strategy:
    """Strategy ``lam'`` with ``lam'(g(x,k)) = f(lam(x), x, k)``."""
    out: list[Outcome | None] = [None] * len(strategy)
    for x, a in enumerate(strategy):
        out[g_setting(x, k)] = f_outcome(a, x, k)
    return tuple(out)  # type: ignore[return-value]


def rotate_assemblage_key(a: Outcome, x: int, k: int) -> tuple[int, Outcome]:
    return g_setting(x, k), f_outcome(a, x, k)


def strategy_ecs() -> tuple[StrategyTable, tuple[EquivalenceClass, ...]]:
    """The 27 three-setting strategies and their nine classes under quarter turns about z."""
    table = strategy_table(3)
    classes = tuple(
        EquivalenceClass(rep, tuple(rotate_strategy(rep, k) for k in range(4))) for rep in CLASS_REPRESENTATIVES
    )
    covered = [s for c in classes for s in set(c.members)]
    if len(covered) != len(table) or set(covered) != set(table.strategies):
        raise AssertionError("equivalence classes do not partition the strategy set")
    for k in range(4):
        image = {rotate_strategy(s, k) for s in table.strategies}
        if image != set(table.strategies):
            raise AssertionError(f"rotation {k} does not permute the strategies")
    return table, classes


def twirl(m: np.ndarray) -> np.ndarray:
    """Average over the four quarter-turn rotations about z."""
    return sum(conjugate_by(rotation_unitary(k), m) for k in range(4)) / 4
