"""Measurement effects, assemblages and the analytic steering witness."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .linalg import (
    I2,
    P0,
    SX,
    SZ,
    BlochVector,
    bloch_operator,
    check_density,
    conjugate_by,
    hermitian_part,
    is_psd,
    partial_trace,
    rz,
)

NO_SIGNALLING_TOL = 1e-8


class Outcome(str, Enum):
    PLUS = "+"
    MINUS = "-"
    NULL = "null"

    @property
    def sign(self) -> int:
        if self is Outcome.NULL:
            raise ValueError("the null outcome has no sign")
        return 1 if self is Outcome.PLUS else -1

    @classmethod
    def parse(cls, a) -> "Outcome":
        if isinstance(a, Outcome):
            return a
        if a in (1, "+", "+1"):
            return cls.PLUS
        if a in (-1, "-", "-1"):
            return cls.MINUS
        if a in (None, "null", "0", "∅"):
            return cls.NULL
        raise ValueError(f"unknown outcome {a!r}")


SIGNED = (Outcome.PLUS, Outcome.MINUS)
ALL_OUTCOMES = (Outcome.PLUS, Outcome.MINUS, Outcome.NULL)


@dataclass(frozen=True)
class MeasurementSetting:
    direction: BlochVector
    label: int = 0

    def effect(self, outcome) -> np.ndarray:
        return measurement_effect(self.direction, Outcome.parse(outcome).sign)


def measurement_effect(direction: BlochVector, outcome: int) -> np.ndarray:
    """Projector ``(I + outcome * r . sigma) / 2`` for outcome +1 or -1."""
    if outcome not in (1, -1):
        raise ValueError(f"outcome must be +1 or -1, got {outcome}")
    return 0.5 * (I2 + outcome * bloch_operator(BlochVector(*direction).vector))


def settings_from_angles(angles: Sequence[tuple[float, float]]) -> list[MeasurementSetting]:
    return [MeasurementSetting(BlochVector.from_angles(t, p), x) for x, (t, p) in enumerate(angles)]


def pauli_settings() -> list[MeasurementSetting]:
    """Settings x = 0, 1, 2 along the z, x and y axes.

    The y setting points along -y. With the standard assemblage map
    ``Tr_A[(Pi (x) I) rho]`` this is the choice under which the y-conditioned
    states are the x-conditioned ones rotated by ``rz(pi/2)``, which the
    closed-form assemblage and the symmetry reduction both rely on.
    """
    return [
        MeasurementSetting(BlochVector(0.0, 0.0), 0),
        MeasurementSetting(BlochVector(np.pi / 2, 0.0), 1),
        MeasurementSetting(BlochVector(np.pi / 2, -np.pi / 2), 2),
    ]


@dataclass(frozen=True)
class Assemblage:
    """Subnormalized conditional states keyed by ``(x, Outcome)``."""

    elements: Mapping[tuple[int, Outcome], np.ndarray]
    settings_count: int
    includes_null: bool = False
    meta: Mapping[str, object] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        outcomes = ALL_OUTCOMES if self.includes_null else SIGNED
        expected = {(x, a) for x in range(self.settings_count) for a in outcomes}
        if set(self.elements) != expected:
            raise ValueError("assemblage elements do not match its settings and outcomes")

    @classmethod
    def from_array(cls, arr: np.ndarray, **meta) -> "Assemblage":
        """Build from an array of shape (settings, 2 or 3, 2, 2), outcomes ordered +, -, null."""
        arr = np.asarray(arr, dtype=complex)
        k = arr.shape[1]
        if k not in (2, 3):
            raise ValueError("second axis must hold 2 or 3 outcomes")
        elements = {
            (x, a): hermitian_part(arr[x, i]) for x in range(arr.shape[0]) for i, a in enumerate(ALL_OUTCOMES[:k])
        }
        return cls(elements, arr.shape[0], k == 3, meta)

    @property
    def outcomes(self) -> tuple[Outcome, ...]:
        return ALL_OUTCOMES if self.includes_null else SIGNED

    def __getitem__(self, key) -> np.ndarray:
        x, a = key
        return self.elements[(x, Outcome.parse(a))]

    def as_array(self) -> np.ndarray:
        return np.array([[self.elements[(x, a)] for a in self.outcomes] for x in range(self.settings_count)])

    def marginal(self, x: int = 0) -> np.ndarray:
        """Sum over outcomes for setting x (Bob's reduced state when nulls are included)."""
        return sum(self.elements[(x, a)] for a in self.outcomes)

    def probabilities(self) -> np.ndarray:
        return np.real(np.trace(self.as_array(), axis1=2, axis2=3))

    def non_null(self) -> "Assemblage":
        if not self.includes_null:
            return self
        return Assemblage({k: v for k, v in self.elements.items() if k[1] is not Outcome.NULL}, self.settings_count)

    def efficiency(self) -> float:
        """Average non-null weight per setting."""
        return float(np.mean([np.real(np.trace(self.non_null().marginal(x))) for x in range(self.settings_count)]))

    def postselected(self) -> "Assemblage":
        """Non-null members rescaled so that each setting sums to Bob's state."""
        nn = self.non_null()
        eps = nn.efficiency()
        if eps <= 0:
            raise ValueError("no non-null weight to condition on")
        return Assemblage({k: v / eps for k, v in nn.elements.items()}, self.settings_count)

    def to_json(self) -> str:
        entries = [
            {
                "x": x,
                "a": a.value,
                "re": np.real(m).tolist(),
                "im": np.imag(m).tolist(),
            }
            for (x, a), m in sorted(self.elements.items(), key=lambda kv: (kv[0][0], ALL_OUTCOMES.index(kv[0][1])))
        ]
        return json.dumps({"settings_count": self.settings_count, "includes_null": self.includes_null, "entries": entries})

    @classmethod
    def from_json(cls, text: str) -> "Assemblage":
        data = json.loads(text)
        elements = {
            (int(e["x"]), Outcome.parse(e["a"])): np.array(e["re"], dtype=float) + 1j * np.array(e["im"], dtype=float)
            for e in data["entries"]
        }
        return cls(elements, int(data["settings_count"]), bool(data["includes_null"]))


def compute_assemblage(rho_ab: np.ndarray, settings: Sequence[MeasurementSetting]) -> Assemblage:
    """``sigma_{a|x} = Tr_A[(Pi_{a|x} (x) I) rho_ab]`` for each setting and signed outcome."""
    rho_ab = check_density(rho_ab, qubits=2)
    elements = {}
    for x, s in enumerate(settings):
        for a in SIGNED:
            elements[(x, a)] = hermitian_part(partial_trace(np.kron(s.effect(a), I2) @ rho_ab, [1]), tol=1e-9)
    return Assemblage(elements, len(settings))


def analytic_assemblage(alpha: float, n_bobs: int) -> Assemblage:
    """Closed-form Pauli assemblage of the network state, identical for every Bob."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if n_bobs < 1:
        raise ValueError(f"n_bobs must be >= 1, got {n_bobs}")
    n = float(n_bobs)
    coherence = (2 / n) * np.sqrt(alpha * (1 - alpha))
    bias = 1 - 2 * alpha / n
    el = {
        (0, Outcome.PLUS): (1 - alpha) * P0,
        (0, Outcome.MINUS): 0.5 * alpha * (I2 + (1 - 2 / n) * SZ),
        (1, Outcome.PLUS): 0.25 * (I2 + coherence * SX + bias * SZ),
        (1, Outcome.MINUS): 0.25 * (I2 - coherence * SX + bias * SZ),
    }
    u = rz(np.pi / 2)
    for a in SIGNED:
        el[(2, a)] = conjugate_by(u, el[(1, a)])
    return Assemblage({k: np.asarray(v, dtype=complex) for k, v in el.items()}, 3)


def bob_state(alpha: float, n_bobs: int) -> np.ndarray:
    return 0.5 * (I2 + (1 - 2 * alpha / n_bobs) * SZ)


def apply_efficiency(a: Assemblage, eps: float) -> Assemblage:
    """Scale non-null members by ``eps`` and add the null member ``(1 - eps) rho_B``."""
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"efficiency must lie in (0, 1], got {eps}")
    nn = a.non_null()
    ok, dev = no_signalling_check(nn, NO_SIGNALLING_TOL)
    if not ok:
        raise ValueError(f"assemblage violates no-signalling (deviation {dev:.2e})")
    rho_b = nn.marginal(0)
    elements = {k: eps * v for k, v in nn.elements.items()}
    for x in range(nn.settings_count):
        elements[(x, Outcome.NULL)] = (1 - eps) * rho_b
    return Assemblage(elements, nn.settings_count, True, {"epsilon": eps})


def no_signalling_check(a: Assemblage, tol: float = NO_SIGNALLING_TOL) -> tuple[bool, float]:
    """Largest entrywise deviation between per-setting marginals, and whether it is within ``tol``."""
    margs = [a.marginal(x) for x in range(a.settings_count)]
    dev = max((float(np.max(np.abs(m - margs[0]))) for m in margs[1:]), default=0.0)
    return dev <= tol, dev


def is_valid_assemblage(a: Assemblage, tol: float = 1e-9) -> bool:
    return all(is_psd(m, tol) for m in a.elements.values()) and no_signalling_check(a)[0]


def spinning_top_violated(a: Assemblage) -> tuple[bool, float]:
    """Evaluate the spinning-top inequality on settings 0 (z) and 1 (x).

    Returns the violation flag and the margin ``lhs - rhs`` (positive when violated).
    """
    a = a.non_null()
    p_plus1 = np.real(np.trace(a[1, "+"]))
    if p_plus1 <= 0:
        raise ZeroDivisionError("p(+|x=1) is zero")
    lhs = np.real(np.trace(SX @ a[1, "+"])) / p_plus1
    rhs = 0.0
    for sign in SIGNED:
        p = np.real(np.trace(a[0, sign]))
        if p <= 0:
            continue
        z = np.real(np.trace(SZ @ a[0, sign])) / p
        rhs += p * np.sqrt(max(0.0, 1 - z * z))
    rhs /= np.sqrt(2)
    margin = float(lhs - rhs)
    return margin > 0, margin


def steerable_range(n_bobs: int) -> tuple[float, float]:
    return 0.0, 2.0 / (n_bobs + 1)


def assemblage_from_elements(pairs: Iterable[tuple[tuple[int, str], np.ndarray]], settings_count: int) -> Assemblage:
    elements = {(x, Outcome.parse(a)): np.asarray(m, dtype=complex) for (x, a), m in pairs}
    includes_null = any(a is Outcome.NULL for _, a in elements)
    return Assemblage(elements, settings_count, includes_null)
