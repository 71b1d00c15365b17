"""Dense interior-point solvers for tiny Hermitian-block conic programs.

Every variable block is a Hermitian PSD matrix; a 1x1 block is a nonnegative
scalar. Blocks are stored as real coordinate vectors in an orthonormal
Hermitian basis, so complex blocks are handled natively by real-linear maps
and ``Re Tr(A X)`` becomes an ordinary dot product.

``solve_sdp`` is a homogeneous self-dual primal-dual method with
Nesterov-Todd scaling and Mehrotra correction; it returns either an optimal
primal-dual pair or an improving ray certifying infeasibility.
``solve_mle`` maximizes a weighted sum of logarithms of linear forms over the
same feasible sets with a primal log-barrier Newton method.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITERATIONS = "max_iterations"
NEAR_OPTIMAL = "near_optimal"  # stalled with the best iterate within 1e3 x tolerance
ACCEPTABLE = (OPTIMAL, NEAR_OPTIMAL)


class ConicError(RuntimeError):
    pass


class DimensionMismatch(ConicError, ValueError):
    pass


@lru_cache(maxsize=None)
def _basis(d: int) -> np.ndarray:
    """Orthonormal basis (under Re Tr(AB)) of d x d Hermitian matrices, shape (d*d, d, d)."""
    out = []
    for i in range(d):
        m = np.zeros((d, d), dtype=complex)
        m[i, i] = 1
        out.append(m)
    r2 = np.sqrt(0.5)
    for i in range(d):
        for j in range(i + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[i, j] = m[j, i] = r2
            out.append(m)
            m = np.zeros((d, d), dtype=complex)
            m[i, j] = -1j * r2
            m[j, i] = 1j * r2
            out.append(m)
    return np.array(out)


def hvec(m: np.ndarray) -> np.ndarray:
    """Real coordinates of a Hermitian matrix."""
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    d = m.shape[0]
    return np.real(np.einsum("kij,ji->k", _basis(d), m))


def hmat(v: np.ndarray, d: int) -> np.ndarray:
    return np.einsum("k,kij->ij", np.asarray(v, dtype=float), _basis(d))


def _herm(m):
    return 0.5 * (m + m.conj().T)


@dataclass(frozen=True)
class EqualityGroup:
    """A named group of scalar rows; ``dim`` > 0 marks a Hermitian matrix equality."""

    name: str
    start: int
    stop: int
    dim: int = 0


@dataclass(frozen=True)
class LogTerms:
    """Objective ``sum_i weights[i] * log(forms[i] . x)``."""

    weights: np.ndarray
    forms: np.ndarray


@dataclass(frozen=True)
class ConicProblem:
    block_dims: tuple[int, ...]
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    maximize: bool = False
    groups: tuple[EqualityGroup, ...] = ()
    block_names: tuple[str, ...] = ()
    log_terms: LogTerms | None = None

    def __post_init__(self):
        n = self.size
        if self.c.shape != (n,):
            raise DimensionMismatch(f"objective has length {self.c.shape}, expected {n}")
        if self.A.ndim != 2 or self.A.shape[1] != n or self.A.shape[0] != self.b.shape[0]:
            raise DimensionMismatch(f"constraint matrix shape {self.A.shape} inconsistent with n={n}, m={self.b.shape}")

    @property
    def size(self) -> int:
        return int(sum(d * d for d in self.block_dims))

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([d * d for d in self.block_dims])])

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        off = self.offsets
        return [hmat(x[off[j] : off[j + 1]], d) for j, d in enumerate(self.block_dims)]

    def identity(self) -> np.ndarray:
        return np.concatenate([hvec(np.eye(d)) for d in self.block_dims])

    def to_json(self) -> str:
        """Blocks, objective coefficients and equality triplets (row, column, value)."""
        rows, cols = np.nonzero(self.A)
        data = {
            "block_dims": list(self.block_dims),
            "block_names": list(self.block_names),
            "maximize": self.maximize,
            "c": self.c.tolist(),
            "b": self.b.tolist(),
            "A": [[int(i), int(j), float(self.A[i, j])] for i, j in zip(rows, cols)],
            "groups": [[g.name, g.start, g.stop, g.dim] for g in self.groups],
        }
        if self.log_terms is not None:
            data["log_weights"] = self.log_terms.weights.tolist()
            data["log_forms"] = self.log_terms.forms.tolist()
        return json.dumps(data)

    @classmethod
    def from_json(cls, text: str) -> "ConicProblem":
        data = json.loads(text)
        b = np.array(data["b"], dtype=float)
        c = np.array(data["c"], dtype=float)
        A = np.zeros((len(b), len(c)))
        for i, j, v in data["A"]:
            A[i, j] = v
        log_terms = None
        if "log_weights" in data:
            log_terms = LogTerms(np.array(data["log_weights"], dtype=float), np.array(data["log_forms"], dtype=float))
        return cls(
            tuple(data["block_dims"]),
            c,
            A,
            b,
            bool(data["maximize"]),
            tuple(EqualityGroup(*g) for g in data["groups"]),
            tuple(data["block_names"]),
            log_terms,
        )


@dataclass
class ConicSolution:
    status: str
    blocks: list[np.ndarray]
    x: np.ndarray
    y: np.ndarray
    dual_multipliers: list
    objective_value: float
    dual_value: float
    duality_gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    certificate: np.ndarray | None = None
    stationarity: float = float("nan")
    history: list[float] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class ProblemBuilder:
    """Incremental assembly of a :class:`ConicProblem`.

    Matrix equalities take terms ``(block, op)`` where ``op`` maps the block's
    matrix to a d x d Hermitian matrix and must be real-linear.
    """

    def __init__(self):
        self.block_dims: list[int] = []
        self.block_names: list[str] = []
        self._c: dict[int, np.ndarray] = {}
        self._rows: list[tuple[dict[int, np.ndarray], float]] = []
        self.groups: list[EqualityGroup] = []
        self._log_w: list[float] = []
        self._log_f: list[dict[int, np.ndarray]] = []

    def add_block(self, dim: int, name: str = "") -> int:
        if dim < 1:
            raise ValueError("block dimension must be positive")
        self.block_dims.append(int(dim))
        self.block_names.append(name or f"X{len(self.block_dims) - 1}")
        return len(self.block_dims) - 1

    def add_scalar(self, name: str = "") -> int:
        return self.add_block(1, name)

    def set_objective(self, block: int, coeff) -> None:
        """Objective contribution ``Re Tr(coeff X_block)``; scalars accepted for 1x1 blocks."""
        d = self.block_dims[block]
        self._c[block] = self._c.get(block, 0) + hvec(_herm(np.asarray(coeff, dtype=complex).reshape(d, d)))

    def _linear_image(self, block: int, op: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        d = self.block_dims[block]
        cols = []
        for basis_el in _basis(d):
            img = np.atleast_2d(np.asarray(op(basis_el), dtype=complex))
            if np.max(np.abs(img - img.conj().T)) > 1e-12:
                raise ValueError("equality term does not map Hermitian matrices to Hermitian matrices")
            cols.append(hvec(img))
        return np.array(cols).T  # rows: output coordinates, cols: block coordinates

    def add_matrix_equality(self, terms: Sequence[tuple[int, Callable]], rhs, name: str = "") -> EqualityGroup:
        rhs = np.atleast_2d(np.asarray(rhs, dtype=complex))
        d = rhs.shape[0]
        rhs_v = hvec(_herm(rhs))
        coeffs: dict[int, np.ndarray] = {}
        for block, op in terms:
            img = self._linear_image(block, op)
            if img.shape[0] != d * d:
                raise DimensionMismatch("equality term output dimension differs from its right-hand side")
            coeffs[block] = coeffs.get(block, 0) + img
        start = len(self._rows)
        for r in range(d * d):
            self._rows.append(({blk: m[r] for blk, m in coeffs.items()}, float(rhs_v[r])))
        g = EqualityGroup(name or f"eq{len(self.groups)}", start, len(self._rows), d)
        self.groups.append(g)
        return g

    def add_scalar_equality(self, terms: Sequence[tuple[int, object]], rhs: float, name: str = "") -> EqualityGroup:
        """``sum_j Re Tr(C_j X_j) = rhs`` for Hermitian coefficients C_j."""
        coeffs: dict[int, np.ndarray] = {}
        for block, coeff in terms:
            d = self.block_dims[block]
            coeffs[block] = coeffs.get(block, 0) + hvec(_herm(np.asarray(coeff, dtype=complex).reshape(d, d)))
        start = len(self._rows)
        self._rows.append((coeffs, float(rhs)))
        g = EqualityGroup(name or f"eq{len(self.groups)}", start, start + 1, 0)
        self.groups.append(g)
        return g

    def add_log_term(self, weight: float, terms: Sequence[tuple[int, object]]) -> None:
        """Adds ``weight * log(sum_j Re Tr(E_j X_j))`` to a likelihood objective."""
        if weight < 0:
            raise ValueError("log-term weights must be nonnegative")
        coeffs: dict[int, np.ndarray] = {}
        for block, coeff in terms:
            d = self.block_dims[block]
            coeffs[block] = coeffs.get(block, 0) + hvec(_herm(np.asarray(coeff, dtype=complex).reshape(d, d)))
        self._log_w.append(float(weight))
        self._log_f.append(coeffs)

    def build(self, maximize: bool = False) -> ConicProblem:
        dims = tuple(self.block_dims)
        off = np.concatenate([[0], np.cumsum([d * d for d in dims])]).astype(int)
        n = int(off[-1])

        def dense(coeffs: dict[int, np.ndarray]) -> np.ndarray:
            v = np.zeros(n)
            for blk, vals in coeffs.items():
                v[off[blk] : off[blk + 1]] += vals
            return v

        c = dense(self._c)
        A = np.array([dense(r) for r, _ in self._rows]).reshape(len(self._rows), n)
        b = np.array([rhs for _, rhs in self._rows], dtype=float)
        log_terms = None
        if self._log_w:
            log_terms = LogTerms(np.array(self._log_w), np.array([dense(f) for f in self._log_f]))
        return ConicProblem(dims, c, A, b, maximize, tuple(self.groups), tuple(self.block_names), log_terms)


# ---------------------------------------------------------------------------
# equality preprocessing


@dataclass
class _Reduced:
    A: np.ndarray
    b: np.ndarray
    rows: np.ndarray
    inconsistent_ray: np.ndarray | None


def _reduce_equalities(A: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> _Reduced:
    """Drop linearly dependent rows; detect an inconsistent system."""
    m = A.shape[0]
    if m == 0:
        return _Reduced(A, b, np.arange(0), None)
    scale = max(1.0, float(np.max(np.abs(A))))
    _, r, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > tol * scale * max(A.shape)))
    keep = np.sort(piv[:rank])
    Ak, bk = A[keep], b[keep]
    # every dropped row is a combination of kept rows; b must agree
    coef, *_ = np.linalg.lstsq(Ak.T, A.T, rcond=None)
    implied = coef.T @ bk
    ray = None
    if np.max(np.abs(b - implied)) > 1e-9 * max(1.0, float(np.max(np.abs(b)))):
        ray = _farkas_ray(A, b)
    return _Reduced(Ak, bk, keep, ray)


def _farkas_ray(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vector y with A^T y = 0 and b . y > 0 for an inconsistent system."""
    u, s, vt = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(s > 1e-10 * max(1.0, s[0] if s.size else 1.0)))
    left_null = u[:, rank:]
    y = left_null @ (left_null.T @ b)
    return y / max(float(b @ y), 1e-300)


# ---------------------------------------------------------------------------
# cone helpers


def _stack_hmat(v: np.ndarray, d: int) -> np.ndarray:
    """Batched ``hmat``: rows of ``v`` to a stack of d x d matrices."""
    return np.einsum("bk,kij->bij", v, _basis(d))


def _stack_hvec(m: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("kij,bji->bk", _basis(m.shape[-1]), m))


def _stack_herm(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))


def _stack_fn(w: np.ndarray, q: np.ndarray, fw: np.ndarray) -> np.ndarray:
    """``q diag(fw) q^dagger`` for stacks."""
    return np.einsum("bij,bj,bkj->bik", q, fw, np.conj(q))


def _stack_quad(B: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Per-block matrices ``[l, m] = Re Tr(B_l W B_m W)``."""
    return np.real(np.einsum("lij,bjk,mkp,bpi->blm", B, W, B, W))


class _Cone:
    def __init__(self, dims: Sequence[int]):
        self.dims = list(dims)
        off = np.concatenate([[0], np.cumsum([d * d for d in dims])]).astype(int)
        self.slices = [slice(off[j], off[j + 1]) for j in range(len(dims))]
        self.n = int(off[-1])
        self.degree = int(sum(dims))
        self.scalar_idx = np.array([off[j] for j, d in enumerate(dims) if d == 1], dtype=int)
        # matrix blocks grouped by size: d -> (nblocks, d*d) coordinate indices
        groups: dict[int, list[np.ndarray]] = {}
        for j, d in enumerate(dims):
            if d > 1:
                groups.setdefault(d, []).append(np.arange(off[j], off[j + 1]))
        self.groups = [(d, np.array(ix)) for d, ix in sorted(groups.items())]

    def identity(self) -> np.ndarray:
        return np.concatenate([hvec(np.eye(d)) for d in self.dims]) if self.dims else np.zeros(0)

    def max_step(self, v: np.ndarray, dv: np.ndarray) -> float:
        """Largest alpha with v + alpha dv in the cone (inf if unbounded)."""
        step = np.inf
        if self.scalar_idx.size:
            neg = dv[self.scalar_idx] < 0
            if np.any(neg):
                step = min(step, float(np.min(-v[self.scalar_idx][neg] / dv[self.scalar_idx][neg])))
        for d, ix in self.groups:
            X = _stack_hmat(v[ix], d)
            dX = _stack_hmat(dv[ix], d)
            w, q = np.linalg.eigh(X)
            s = q / np.sqrt(np.maximum(w, 1e-300))[:, None, :]
            lam = np.linalg.eigvalsh(_stack_herm(np.conj(np.swapaxes(s, -1, -2)) @ dX @ s))[:, 0]
            lam = lam[lam < 0]
            if lam.size:
                step = min(step, float(np.min(-1.0 / lam)))
        return step

    def min_eig(self, v: np.ndarray) -> float:
        vals = [float(np.min(v[self.scalar_idx]))] if self.scalar_idx.size else []
        for d, ix in self.groups:
            vals.append(float(np.min(np.linalg.eigvalsh(_stack_hmat(v[ix], d))[:, 0])))
        return min(vals) if vals else 0.0


class _NTScaling:
    """Nesterov-Todd scaling point of (x, s) for every block."""

    def __init__(self, cone: _Cone, x: np.ndarray, s: np.ndarray):
        self.cone = cone
        n = cone.n
        self.H = np.zeros((n, n))
        self.groups = []
        if cone.scalar_idx.size:
            xi, si = x[cone.scalar_idx], s[cone.scalar_idx]
            if np.any(xi <= 0) or np.any(si <= 0):
                raise np.linalg.LinAlgError("iterate left the cone interior")
            self.H[cone.scalar_idx, cone.scalar_idx] = xi / si
            self.scal = (xi, si, np.sqrt(xi * si))  # lambda = sqrt(x s)
        else:
            self.scal = None
        for d, ix in cone.groups:
            X = _stack_hmat(x[ix], d)
            S = _stack_hmat(s[ix], d)
            ws, qs = np.linalg.eigh(S)
            if np.any(ws[:, 0] <= 0) or np.any(np.linalg.eigvalsh(X)[:, 0] <= 0):
                raise np.linalg.LinAlgError("iterate left the cone interior")
            s_half = _stack_fn(ws, qs, np.sqrt(ws))
            s_mhalf = _stack_fn(ws, qs, 1 / np.sqrt(ws))
            wm, qm = np.linalg.eigh(_stack_herm(s_half @ X @ s_half))
            mid = _stack_fn(wm, qm, np.sqrt(np.maximum(wm, 0)))
            W = _stack_herm(s_mhalf @ mid @ s_mhalf)
            ww, qw = np.linalg.eigh(W)
            G = _stack_fn(ww, qw, np.sqrt(ww))
            Ginv = _stack_fn(ww, qw, 1 / np.sqrt(ww))
            lv, qv = np.linalg.eigh(_stack_herm(Ginv @ X @ Ginv))
            self.H[ix[:, :, None], ix[:, None, :]] = _stack_quad(_basis(d), W)
            self.groups.append((ix, d, G, Ginv, lv, qv))

    def scaled(self, dx: np.ndarray, ds: np.ndarray):
        """Scaled directions G^{-1} dX G^{-1} and G dS G, per block group (scalars separately)."""
        out = []
        for ix, d, G, Ginv, lv, qv in self.groups:
            out.append((Ginv @ _stack_hmat(dx[ix], d) @ Ginv, G @ _stack_hmat(ds[ix], d) @ G))
        sc = None
        if self.scal is not None:
            xi, si, lam = self.scal
            idx = self.cone.scalar_idx
            sc = (dx[idx] * lam / xi, ds[idx] * lam / si)
        return out, sc

    def complementarity_rhs(self, sigma_mu: float, corr=None) -> np.ndarray:
        """T with dx + H ds = T, from V o (dx~ + ds~) = sigma mu I - V^2 - corr."""
        T = np.zeros(self.cone.n)
        for k, (ix, d, G, Ginv, lv, qv) in enumerate(self.groups):
            rhs = sigma_mu * np.eye(d) - _stack_fn(lv, qv, lv**2)
            if corr is not None:
                a, bb = corr[0][k]
                rhs = rhs - 0.5 * (a @ bb + bb @ a)
            qh = np.conj(np.swapaxes(qv, -1, -2))
            r_e = qh @ rhs @ qv
            r_e = 2 * r_e / (lv[:, :, None] + lv[:, None, :])
            R = qv @ r_e @ qh
            T[ix] = _stack_hvec(_stack_herm(G @ R @ G))
        if self.scal is not None:
            xi, si, lam = self.scal
            rhs = sigma_mu - lam**2
            if corr is not None:
                rhs = rhs - corr[1][0] * corr[1][1]
            R = rhs / lam
            # dx~ = dx * lam / x, so dx = x/lam R - (x/s) ds
            T[self.cone.scalar_idx] = xi / lam * R
        return T


# ---------------------------------------------------------------------------
# SDP


def solve_sdp(
    p: ConicProblem,
    gap_tol: float = 1e-9,
    feas_tol: float = 1e-9,
    max_iter: int = 100,
) -> ConicSolution:
    """Solve ``min/max c.x  s.t.  A x = b, x in the PSD block cone``."""
    if p.log_terms is not None:
        raise ConicError("problem has a likelihood objective; use solve_mle")
    sign = -1.0 if p.maximize else 1.0
    c = sign * p.c
    red = _reduce_equalities(p.A, p.b)
    cone = _Cone(p.block_dims)
    n = cone.n
    if red.inconsistent_ray is not None:
        y = -red.inconsistent_ray  # reported multipliers follow the dual objective b.y convention
        return ConicSolution(
            INFEASIBLE, p.split(np.zeros(n)), np.zeros(n), np.zeros(p.A.shape[0]),
            _group_multipliers(p, np.zeros(p.A.shape[0])), np.nan, np.nan, np.nan, np.inf, np.nan, 0,
            certificate=red.inconsistent_ray,
        )
    A, b = red.A, red.b
    m = A.shape[0]
    x = cone.identity()
    s = cone.identity()
    y = np.zeros(m)
    tau = kappa = 1.0
    nu = cone.degree
    bnorm = 1.0 + np.linalg.norm(b)
    cnorm = 1.0 + np.linalg.norm(c)
    status = MAX_ITERATIONS
    best = None
    it = 0
    for it in range(1, max_iter + 1):
        rp = b * tau - A @ x
        rd = c * tau - A.T @ y - s
        rg = kappa + c @ x - b @ y
        mu = (x @ s + tau * kappa) / (nu + 1)
        pobj = c @ x / tau
        dobj = b @ y / tau
        pres = np.linalg.norm(rp) / tau / bnorm
        dres = np.linalg.norm(rd) / tau / cnorm
        gap = abs(pobj - dobj)
        score = max(pres / feas_tol, dres / feas_tol, gap / gap_tol)
        if best is None or score < best[0]:
            best = (score, x.copy(), y.copy(), s.copy(), tau, kappa)
        elif score > 1e3 * best[0] and best[0] < 1e3:
            break  # numerical breakdown near the optimum; keep the best iterate
        if pres <= feas_tol and dres <= feas_tol and gap <= gap_tol * max(1.0, abs(pobj)):
            status = OPTIMAL
            break
        # infeasibility certificates from the homogeneous model
        by = b @ y
        cx = c @ x
        if by > 0 and np.linalg.norm(A.T @ y + s) <= feas_tol * by * 10 and tau < 1e-6 * max(1.0, kappa):
            status = INFEASIBLE
            break
        if cx < 0 and np.linalg.norm(A @ x) <= feas_tol * (-cx) * 10 and tau < 1e-6 * max(1.0, kappa):
            status = UNBOUNDED
            break
        try:
            nt = _NTScaling(cone, x, s)
        except np.linalg.LinAlgError:
            break
        H = nt.H
        AH = A @ H
        M = AH @ A.T
        K = np.zeros((m + 1, m + 1))
        K[:m, :m] = M
        AHc = AH @ c
        K[:m, m] = -(AHc + b)
        K[m, :m] = b - AHc
        K[m, m] = c @ H @ c + kappa / tau
        solve_k = _kkt_solver(K)
        if solve_k is None:
            break

        def direction(T, t, eta):
            rhs = np.empty(m + 1)
            Hrd = H @ rd
            rhs[:m] = eta * rp - A @ T + eta * (A @ Hrd)
            rhs[m] = eta * rg + c @ T - eta * (c @ Hrd) + t / tau
            sol = solve_k(rhs)
            dy, dtau = sol[:m], sol[m]
            ds = eta * rd - A.T @ dy + c * dtau
            dx = T - H @ ds
            dkappa = (t - kappa * dtau) / tau
            return dx, dy, ds, dtau, dkappa

        def step_to_boundary(dx, ds, dtau, dkappa):
            a = min(cone.max_step(x, dx), cone.max_step(s, ds))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        T_aff = nt.complementarity_rhs(0.0)
        d_aff = direction(T_aff, -tau * kappa, 1.0)
        a_aff = min(1.0, step_to_boundary(d_aff[0], d_aff[2], d_aff[3], d_aff[4]))
        sigma = (1 - a_aff) ** 3
        # corrector
        corr_blocks, corr_scal = nt.scaled(d_aff[0], d_aff[2])
        T = nt.complementarity_rhs(sigma * mu, (corr_blocks, corr_scal))
        t = sigma * mu - tau * kappa - d_aff[3] * d_aff[4]
        dx, dy, ds, dtau, dkappa = direction(T, t, 1.0 - sigma)
        a = min(1.0, 0.99 * step_to_boundary(dx, ds, dtau, dkappa))
        if a < 1e-8:
            # jammed against the boundary: take a pure centering step instead
            dx, dy, ds, dtau, dkappa = direction(nt.complementarity_rhs(mu), mu - tau * kappa, 0.0)
            a = min(1.0, 0.99 * step_to_boundary(dx, ds, dtau, dkappa))
        x = x + a * dx
        y = y + a * dy
        s = s + a * ds
        tau = tau + a * dtau
        kappa = kappa + a * dkappa
        if a < 1e-12:
            break
    if status != OPTIMAL and status not in (INFEASIBLE, UNBOUNDED) and best is not None:
        score, x, y, s, tau, kappa = best
        if score <= 1e3:
            status = NEAR_OPTIMAL
    return _package(p, red, sign, status, x, y, s, tau, kappa, it)


def _kkt_solver(K: np.ndarray):
    """LU solve of the reduced system, with a least-squares fallback when it is numerically singular."""
    if not np.all(np.isfinite(K)):
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            lu = scipy.linalg.lu_factor(K, check_finite=False)

            def solve(r):
                z = scipy.linalg.lu_solve(lu, r, check_finite=False)
                # one round of iterative refinement
                return z + scipy.linalg.lu_solve(lu, r - K @ z, check_finite=False)

            return solve
        except (ValueError, np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
            pass
    return lambda r: np.linalg.lstsq(K, r, rcond=1e-14)[0]


def _group_multipliers(p: ConicProblem, y_full: np.ndarray) -> list:
    out = []
    for g in p.groups:
        seg = y_full[g.start : g.stop]
        out.append(hmat(seg, g.dim) if g.dim else float(seg[0]))
    return out


def _package(p, red, sign, status, x, y, s, tau, kappa, it) -> ConicSolution:
    m_full = p.A.shape[0]
    cert = None
    if status == INFEASIBLE:
        y_full = np.zeros(m_full)
        y_full[red.rows] = y
        cert = y_full / (red.b @ y)
        xs = np.zeros_like(x)
        return ConicSolution(status, p.split(xs), xs, np.zeros(m_full), _group_multipliers(p, np.zeros(m_full)),
                             np.nan, np.nan, np.nan, np.inf, np.nan, it, certificate=cert)
    if status == UNBOUNDED:
        ray = x / max(-(sign * p.c) @ x, 1e-300)
        return ConicSolution(status, p.split(ray), ray, np.zeros(m_full), _group_multipliers(p, np.zeros(m_full)),
                             sign * -np.inf, np.nan, np.nan, np.nan, np.inf, it, certificate=ray)
    xs, ys = x / tau, y / tau
    y_full = np.zeros(m_full)
    y_full[red.rows] = sign * ys
    pobj = float(p.c @ xs)
    dobj = float(p.b @ y_full)
    pres = float(np.linalg.norm(p.A @ xs - p.b))
    dres = float(np.linalg.norm(sign * p.c - p.A.T @ (sign * y_full) - s / tau))
    return ConicSolution(
        status, p.split(xs), xs, y_full, _group_multipliers(p, y_full), pobj, dobj,
        float(abs(pobj - dobj)), pres, dres, it,
    )


# ---------------------------------------------------------------------------
# likelihood maximization


def _barrier_hessian(cone: _Cone, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Gradient and Hessian of -sum log det X_j, and the barrier value."""
    n = cone.n
    g = np.zeros(n)
    Hm = np.zeros((n, n))
    val = 0.0
    if cone.scalar_idx.size:
        xi = x[cone.scalar_idx]
        g[cone.scalar_idx] = -1 / xi
        Hm[cone.scalar_idx, cone.scalar_idx] = 1 / xi**2
        val -= float(np.sum(np.log(xi)))
    for d, ix in cone.groups:
        w, q = np.linalg.eigh(_stack_hmat(x[ix], d))
        Xi = _stack_fn(w, q, 1 / w)
        g[ix] = -_stack_hvec(Xi)
        Hm[ix[:, :, None], ix[:, None, :]] = _stack_quad(_basis(d), Xi)
        val -= float(np.sum(np.log(w)))
    return g, Hm, val


def find_interior_point(p: ConicProblem) -> np.ndarray:
    """Strictly feasible point of ``A x = b`` inside the cone, by maximizing a uniform eigenvalue margin."""
    cone_id = p.identity()
    n = p.size
    # A (Y + t I) = b
    A2 = np.hstack([p.A, (p.A @ cone_id)[:, None], np.zeros((p.A.shape[0], 1))])
    extra = np.zeros(n + 2)
    extra[n] = extra[n + 1] = 1.0  # t + slack = 1
    A2 = np.vstack([A2, extra])
    b2 = np.concatenate([p.b, [1.0]])
    c2 = np.zeros(n + 2)
    c2[n] = 1.0
    dims = tuple(p.block_dims) + (1, 1)
    aux = ConicProblem(dims, c2, A2, b2, maximize=True)
    sol = solve_sdp(aux, gap_tol=1e-8, feas_tol=1e-10)
    if sol.status != OPTIMAL or sol.x[n] <= 1e-9:
        raise ConicError("no strictly feasible point exists")
    # the solver returns an interior-ish Y; adding the margin back gives X = Y + t I
    return sol.x[:n] + sol.x[n] * cone_id


def solve_mle(
    p: ConicProblem,
    x0: np.ndarray | None = None,
    stationarity_tol: float = 1e-7,
    max_newton: int = 500,
) -> ConicSolution:
    """Maximize ``sum_i w_i log(f_i . x)`` subject to ``A x = b`` and PSD blocks.

    Works on the count-normalized objective (weights summing to one). A
    log-barrier with parameter mu is driven to zero; each centering step is
    an equality-constrained Newton iteration from a feasible point.
    """
    if p.log_terms is None:
        raise ConicError("problem has no likelihood objective")
    w_raw = np.asarray(p.log_terms.weights, dtype=float)
    F_all = np.asarray(p.log_terms.forms, dtype=float)
    if np.any(w_raw < 0):
        raise ConicError("log-term weights must be nonnegative")
    total = float(w_raw.sum())
    if total <= 0:
        raise ConicError("all log-term weights are zero")
    active = w_raw > 0
    w = w_raw[active] / total
    F = F_all[active]
    red = _reduce_equalities(p.A, p.b)
    if red.inconsistent_ray is not None:
        raise ConicError("equality constraints are inconsistent")
    A, b = red.A, red.b
    m = A.shape[0]
    cone = _Cone(p.block_dims)
    x = find_interior_point(p) if x0 is None else np.asarray(x0, dtype=float).copy()
    if cone.min_eig(x) <= 0:
        raise ConicError("starting point is not strictly inside the cone")
    if np.any(F @ x <= 0):
        raise ConicError("no positive-likelihood starting point")

    def loglik(v):
        return float(w @ np.log(F @ v))

    def phi(v, mu):
        ell = F @ v
        if np.any(ell <= 0) or cone.min_eig(v) <= 0:
            return np.inf
        return -float(w @ np.log(ell)) + mu * _barrier_hessian(cone, v)[2]

    mu = 1.0
    nu = cone.degree
    history = []
    nu_mult = np.zeros(m)
    newton_steps = 0
    last_grad = None
    last_dec = np.inf
    while True:
        for _ in range(100):
            ell = F @ x
            gb, Hb, _ = _barrier_hessian(cone, x)
            grad = -F.T @ (w / ell) + mu * gb
            hess = (F.T * (w / ell**2)) @ F + mu * Hb
            K = np.zeros((cone.n + m, cone.n + m))
            K[: cone.n, : cone.n] = hess
            K[: cone.n, cone.n :] = A.T
            K[cone.n :, : cone.n] = A
            rhs = np.concatenate([-grad, b - A @ x])
            try:
                sol = np.linalg.solve(K, rhs)
                dx, nu_mult = sol[: cone.n], sol[cone.n :]
            except np.linalg.LinAlgError:
                dx = _fallback_direction(A, grad, x, cone)
            newton_steps += 1
            dec = float(dx @ hess @ dx)
            last_dec = dec
            if dec < 1e-20:
                break
            step = min(1.0, 0.99 * cone.max_step(x, dx))
            neg = F @ dx < 0
            if np.any(neg):
                step = min(step, 0.99 * float(np.min(-(F @ x)[neg] / (F @ dx)[neg])))
            f0 = phi(x, mu)
            slope = float(grad @ dx)
            while phi(x + step * dx, mu) > f0 + 0.25 * step * slope and step > 1e-14:
                step *= 0.5
            x = x + step * dx
            if dec < 1e-16 or newton_steps >= max_newton:
                break
        last_grad = (-F.T @ (w / (F @ x)), mu)
        history.append(loglik(x))
        if mu * nu <= 0.1 * stationarity_tol or newton_steps >= max_newton:
            break
        mu *= 0.1
    # KKT quantities for the count-normalized problem
    g_obj, mu_fin = last_grad
    gb, _, _ = _barrier_hessian(cone, x)
    z = -mu_fin * gb  # mu X^{-1}
    if m:
        nu_mult = np.linalg.lstsq(A.T, z - g_obj, rcond=None)[0]
    kkt = g_obj + A.T @ nu_mult - z
    # projected-gradient norm in the local (Hessian) metric, i.e. the Newton decrement;
    # the Euclidean KKT residual is reported separately and is limited by conditioning
    # when the optimum sits on a low-rank face
    stationarity = max(float(np.sqrt(max(last_dec, 0.0))), float(x @ z))
    status = OPTIMAL if stationarity <= stationarity_tol else MAX_ITERATIONS
    y_full = np.zeros(p.A.shape[0])
    y_full[red.rows] = -nu_mult * total
    obj = float(w_raw[active] @ np.log(F @ x))
    return ConicSolution(
        status,
        p.split(x),
        x,
        y_full,
        _group_multipliers(p, y_full),
        obj,
        np.nan,
        float(x @ z) * total,
        float(np.linalg.norm(p.A @ x - p.b)),
        float(np.max(np.abs(kkt))) if kkt.size else 0.0,
        newton_steps,
        stationarity=stationarity,
        history=[h * total for h in history],
    )


def _fallback_direction(A: np.ndarray, grad: np.ndarray, x: np.ndarray, cone: _Cone) -> np.ndarray:
    """Damped steepest descent projected onto the null space of A."""
    if A.shape[0]:
        q, _ = np.linalg.qr(A.T)
        d = -(grad - q @ (q.T @ grad))
    else:
        d = -grad
    scale = cone.max_step(x, d)
    return d * min(1.0, 0.5 * scale) if np.isfinite(scale) else d
