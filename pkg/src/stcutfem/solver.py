"""Sparse direct solves, condition estimates and the Newton loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

__all__ = [
    "SolverError",
    "SingularMatrixError",
    "NonConvergenceError",
    "LinearSolveReport",
    "NewtonConfig",
    "NewtonResult",
    "SparseLU",
    "sparse_solve",
    "estimate_condition",
    "newton_solve",
]


class SolverError(RuntimeError):
    pass


class SingularMatrixError(SolverError):
    pass


class NonConvergenceError(SolverError):
    def __init__(self, msg, update_norms):
        super().__init__(msg)
        self.update_norms = update_norms


@dataclass
class LinearSolveReport:
    residual: float
    n: int
    nnz_factors: int = 0
    condition: float | None = None


class SparseLU:
    """SuperLU factorization with a residual check on every solve.

    Minimum-degree ordering on ``A^T + A`` with threshold partial pivoting
    keeps the fill small. A single dense last row and column with a zero
    corner (the mass constraint) is eliminated by a scalar Schur complement
    instead of being factorized, since the dense border ruins the ordering.
    The residual check on every solve guards the accuracy either way.
    """

    def __init__(
        self,
        A,
        rtol: float = 1e-10,
        permc_spec: str = "MMD_AT_PLUS_A",
        pivot_threshold: float = 0.01,
        border: bool | None = None,
    ):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise SolverError(f"matrix is not square: {A.shape}")
        self.A = A
        self.rtol = rtol
        self._opts = dict(permc_spec=permc_spec, diag_pivot_thresh=pivot_threshold)
        n = A.shape[0]
        if border is None:
            border = n > 50 and A[:, -1].nnz > n // 4 and A[-1, -1] == 0.0
        self.border = False
        if border:
            try:
                self._factor_bordered()
                self.border = True
            except SingularMatrixError:
                log.debug("interior block singular, factorizing the full matrix")
        if not self.border:
            self.lu = self._factor(A)

    def _factor(self, M):
        try:
            lu = spla.splu(M, **self._opts)
        except RuntimeError as exc:  # "Factor is exactly singular"
            raise SingularMatrixError(f"sparse LU failed: {exc}") from exc
        diag = np.abs(lu.U.diagonal())
        if not np.all(np.isfinite(diag)) or diag.min(initial=np.inf) == 0.0:
            raise SingularMatrixError(f"zero pivot at position {int(np.argmin(diag))}")
        return lu

    def _factor_bordered(self):
        A = self.A
        self.lu = self._factor(A[:-1, :-1].tocsc())
        self._col = A[:-1, -1].toarray().ravel()
        self._row = A[-1, :-1].toarray().ravel()
        self._u = self.lu.solve(self._col)
        self._ut = self.lu.solve(self._row, trans="T")
        self._schur = -self._row @ self._u
        if not np.isfinite(self._schur) or self._schur == 0.0:
            raise SingularMatrixError("zero Schur complement of the border")

    @property
    def nnz(self) -> int:
        return int(self.lu.L.nnz + self.lu.U.nnz) + (2 * self.A.shape[0] if self.border else 0)

    def raw_solve(self, b, trans: str = "N") -> np.ndarray:
        """Solve without the residual check."""
        b = np.asarray(b, dtype=float)
        if not self.border:
            return self.lu.solve(b, trans=trans)
        if trans == "N":
            u, side = self._u, self._row
        else:
            u, side = self._ut, self._col
        y = self.lu.solve(b[:-1], trans=trans)
        lam = (b[-1] - side @ y) / self._schur
        return np.append(y - u * lam, lam)

    def solve(self, b, trans: str = "N") -> tuple[np.ndarray, LinearSolveReport]:
        b = np.asarray(b, dtype=float)
        x = self.raw_solve(b, trans)
        M = self.A if trans == "N" else self.A.T
        nb = np.linalg.norm(b)
        res = np.linalg.norm(M @ x - b) / nb if nb > 0 else float(np.linalg.norm(M @ x))
        if not np.isfinite(res) or res > self.rtol:
            raise SolverError(f"linear solve residual {res:.3e} exceeds {self.rtol:.1e}")
        return x, LinearSolveReport(residual=float(res), n=self.A.shape[0], nnz_factors=self.nnz)


def sparse_solve(A, b, rtol: float = 1e-10) -> tuple[np.ndarray, LinearSolveReport]:
    """Solve ``A x = b`` by sparse LU with partial pivoting."""
    b = np.asarray(b, dtype=float)
    if A.shape[0] != len(b):
        raise SolverError(f"dimension mismatch: {A.shape} vs {len(b)}")
    return SparseLU(A, rtol).solve(b)


def estimate_condition(A, lu: SparseLU | None = None, exact_below: int = 0) -> float:
    """1-norm condition number ``||A||_1 * est(||A^-1||_1)``.

    The inverse norm comes from the block Hager/Higham estimator driven by the
    LU factors. Matrices smaller than ``exact_below`` are inverted densely
    instead. Returns ``inf`` for singular matrices.
    """
    A = sp.csc_matrix(A)
    n = A.shape[0]
    if n < exact_below:
        dense = A.toarray()
        try:
            return float(np.linalg.cond(dense, 1))
        except np.linalg.LinAlgError:
            return float("inf")
    try:
        lu = lu or SparseLU(A, rtol=np.inf)
    except SingularMatrixError:
        return float("inf")
    Ainv = spla.LinearOperator(
        (n, n),
        matvec=lambda x: lu.raw_solve(np.asarray(x, dtype=float).ravel()),
        rmatvec=lambda x: lu.raw_solve(np.asarray(x, dtype=float).ravel(), trans="T"),
        dtype=float,
    )
    norm_inv = spla.onenormest(Ainv, t=2)
    norm_a = abs(A).sum(axis=0).max()
    return float(norm_a * norm_inv)


@dataclass
class NewtonConfig:
    tol: float = 1e-10
    max_iters: int = 25
    # stop early once the residual has dropped this far below its initial size
    residual_rtol: float = 1e-13

    def __post_init__(self):
        if self.tol <= 0 or self.max_iters < 1:
            raise ValueError("need tol > 0 and max_iters >= 1")


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    update_norms: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)
    linear_residuals: list = field(default_factory=list)
    jacobian: object = None
    lu: SparseLU | None = None


def newton_solve(residual, jacobian, x0, config: NewtonConfig | None = None, affine: bool = False) -> NewtonResult:
    """Newton iteration ``x <- x - w`` with ``DF(x) w = F(x)``.

    Stops when the euclidean norm of the update is below ``config.tol`` or the
    residual after an update is negligible relative to the first residual.
    ``iterations`` counts linear solves. For an ``affine`` residual one solve
    is exact, so the loop stops after it.
    """
    config = config or NewtonConfig()
    x = np.array(x0, dtype=float)
    F = residual(x)
    f0 = np.linalg.norm(F)
    out = NewtonResult(x=x, iterations=0, residual_norms=[float(f0)])
    if f0 == 0.0:
        return out
    for it in range(1, config.max_iters + 1):
        J = jacobian(x)
        lu = SparseLU(J)
        w, rep = lu.solve(F)
        x = x - w
        nw = float(np.linalg.norm(w))
        out.update_norms.append(nw)
        out.linear_residuals.append(rep.residual)
        out.iterations = it
        out.jacobian, out.lu = J, lu
        F = residual(x)
        fn = float(np.linalg.norm(F))
        out.residual_norms.append(fn)
        log.debug("newton it=%d |w|=%.3e |F|=%.3e", it, nw, fn)
        if affine or nw <= config.tol or fn <= config.residual_rtol * f0:
            out.x = x
            return out
    raise NonConvergenceError(
        f"Newton did not converge in {config.max_iters} iterations (last update {out.update_norms[-1]:.3e})",
        out.update_norms,
    )
