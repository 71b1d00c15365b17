"""Small dense complex linear algebra for qubit operators (dimensions 1 to 16)."""

from __future__ import annotations

from functools import reduce
from typing import Iterable, NamedTuple, Sequence

import numpy as np

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-9
TRACE_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, SX, SY, SZ)

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
P0 = np.outer(KET0, KET0.conj())
P1 = np.outer(KET1, KET1.conj())


class NotHermitianError(ValueError):
    pass


class BlochVector(NamedTuple):
    """Direction on the Bloch sphere, ``theta`` in [0, pi] and ``phi`` in (-pi, pi]."""

    theta: float
    phi: float

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "BlochVector":
        """Canonicalize arbitrary real angles onto the stated ranges."""
        r = np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
        return cls.from_vector(r)

    @classmethod
    def from_vector(cls, r: Sequence[float]) -> "BlochVector":
        r = np.asarray(r, dtype=float)
        norm = np.linalg.norm(r)
        if norm == 0:
            raise ValueError("zero vector has no direction")
        x, y, z = r / norm
        theta = float(np.arccos(np.clip(z, -1.0, 1.0)))
        phi = float(np.arctan2(y, x)) if np.hypot(x, y) > 1e-15 else 0.0
        if phi <= -np.pi:
            phi += 2 * np.pi
        return cls(theta, phi)

    @property
    def vector(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.array([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)])


def kron(*ops: np.ndarray) -> np.ndarray:
    """Tensor product of any number of operators, left to right."""
    if not ops:
        raise ValueError("kron needs at least one operand")
    return reduce(np.kron, ops)


def dagger(m: np.ndarray) -> np.ndarray:
    return m.conj().T


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    return np.outer(psi, psi.conj())


def hermitian_part(m: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Return ``(m + m^dagger)/2``; asymmetry above ``tol`` is a bug, not roundoff."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    asym = np.max(np.abs(m - dagger(m))) if m.size else 0.0
    if asym > tol:
        raise NotHermitianError(f"matrix is not Hermitian (max asymmetry {asym:.3e})")
    return 0.5 * (m + dagger(m))


def eigh(m: np.ndarray, tol: float = HERMITIAN_TOL) -> tuple[np.ndarray, np.ndarray]:
    return np.linalg.eigh(hermitian_part(m, tol))


def eigvalsh(m: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    return np.linalg.eigvalsh(hermitian_part(m, tol))


def min_eig(m: np.ndarray) -> float:
    return float(eigvalsh(m)[0])


def is_psd(h: np.ndarray, tol: float = PSD_TOL) -> bool:
    """True iff the least eigenvalue of Hermitian ``h`` is at least ``-tol``."""
    return min_eig(h) >= -tol


def sqrtm_psd(m: np.ndarray) -> np.ndarray:
    w, v = eigh(m)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ dagger(v)


def funm_hermitian(m: np.ndarray, fn) -> np.ndarray:
    w, v = eigh(m)
    return (v * fn(w)) @ dagger(v)


def pauli_expand(h: np.ndarray) -> tuple[float, float, float, float]:
    """Coefficients ``(c0, cx, cy, cz)`` with ``h = c0 I + cx X + cy Y + cz Z``."""
    h = hermitian_part(h)
    if h.shape != (2, 2):
        raise ValueError("pauli_expand takes a 2x2 matrix")
    return tuple(float(np.real(np.trace(p @ h))) / 2 for p in PAULIS)  # type: ignore[return-value]


def pauli_synthesize(coeffs: Iterable[float]) -> np.ndarray:
    return sum(c * p for c, p in zip(coeffs, PAULIS))


def bloch_operator(r: Sequence[float]) -> np.ndarray:
    """``r . sigma`` for a real 3-vector."""
    return r[0] * SX + r[1] * SY + r[2] * SZ


def rz(theta: float) -> np.ndarray:
    """Rotation about z by ``theta``: ``exp(-i theta Z / 2)``."""
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def conjugate_by(u: np.ndarray, m: np.ndarray) -> np.ndarray:
    return u @ m @ dagger(u)


def _qubit_count(dim: int) -> int:
    k = int(round(np.log2(dim)))
    if 2**k != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return k


def partial_trace(rho: np.ndarray, keep: Iterable[int]) -> np.ndarray:
    """Reduce a multi-qubit operator onto the qubits in ``keep`` (kept in ascending order).

    Qubit 0 is the leftmost tensor factor.
    """
    rho = np.asarray(rho, dtype=complex)
    n = _qubit_count(rho.shape[0])
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep must be nonempty")
    if keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"qubit indices {keep} out of range for {n} qubits")
    t = rho.reshape([2] * (2 * n))
    traced = [q for q in range(n) if q not in keep]
    # trace out from the highest index so remaining axis numbers stay valid
    for count, q in enumerate(sorted(traced, reverse=True)):
        remaining = n - count
        t = np.trace(t, axis1=q, axis2=q + remaining)
    d = 2 ** len(keep)
    return t.reshape(d, d)


def swap_qubits(rho: np.ndarray, i: int, j: int) -> np.ndarray:
    """Conjugate ``rho`` by the SWAP of qubits ``i`` and ``j``."""
    n = _qubit_count(rho.shape[0])
    perm = list(range(n))
    perm[i], perm[j] = perm[j], perm[i]
    t = rho.reshape([2] * (2 * n)).transpose(perm + [p + n for p in perm])
    return t.reshape(rho.shape)


def check_density(rho: np.ndarray, qubits: int | None = None) -> np.ndarray:
    """Validate a density operator and return its Hermitian-symmetrized copy."""
    rho = hermitian_part(rho)
    n = _qubit_count(rho.shape[0])
    if qubits is not None and n != qubits:
        raise ValueError(f"expected a {qubits}-qubit state, got {n} qubits")
    tr = np.real(np.trace(rho))
    if abs(tr - 1) > TRACE_TOL:
        raise ValueError(f"trace {tr!r} is not 1")
    if not is_psd(rho, PSD_TOL):
        raise ValueError("state is not positive semidefinite")
    return rho


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity in the squared convention, ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    rho = hermitian_part(rho)
    sigma = hermitian_part(sigma)
    if rho.shape != sigma.shape:
        raise ValueError(f"dimension mismatch {rho.shape} vs {sigma.shape}")
    s = sqrtm_psd(rho)
    w = eigvalsh(s @ sigma @ s, tol=1e-8)
    f = float(np.sum(np.sqrt(np.clip(w, 0.0, None))) ** 2)
    return min(max(f, 0.0), 1.0)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(eigvalsh(a - b, tol=1e-8))))


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random state from the induced (Ginibre) measure."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ dagger(g)
    return rho / np.trace(rho).real
