"""Shared linear algebra kernels: SPD solves, saddle (KKT) solves,
generalized eigenpairs.

All entry points verify their own residuals and raise SolverError (or
DegenerateConstraintsError for rank-deficient constraint blocks) instead
of returning silently inaccurate results.  Direct factorizations are used
throughout — every system in this package is desk scale — with a couple
of rounds of iterative refinement to push residuals to the contract.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as dla
import scipy.sparse as sparse
import scipy.sparse.linalg as sla

from .errors import DegenerateConstraintsError, SolverError

_DENSE_EIG_CUTOFF = 400


def _as_csc(A):
    if sparse.issparse(A):
        return A.tocsc()
    return sparse.csc_matrix(np.atleast_2d(A))


def _refined_solve(lu, mat, rhs, tol, what, max_iter=3, mat_norm=0.0):
    """LU solve plus iterative refinement.

    Accepts once the residual drops below tol * (mat_norm*||x|| + ||rhs||);
    with mat_norm=0 that is the strict rhs-relative test, with the matrix
    norm it is the backward-error test appropriate for stiff KKT systems.
    """
    nrm = np.linalg.norm(rhs)
    if nrm == 0.0:
        return np.zeros_like(rhs)
    x = lu.solve(rhs)
    res = np.nan
    for _ in range(max_iter):
        r = rhs - mat @ x
        res = np.linalg.norm(r)
        if res <= tol * (mat_norm * np.linalg.norm(x) + nrm):
            return x
        x = x + lu.solve(r)
    res = np.linalg.norm(rhs - mat @ x)
    if res > tol * (mat_norm * np.linalg.norm(x) + nrm):
        denom = "(||K|| ||x|| + ||rhs||)" if mat_norm else "||rhs||"
        raise SolverError(f"{what}: residual {res:.3e} exceeds {tol:.1e} * {denom}")
    return x


class SPDSolver:
    """Factor once, solve many; keeps the refinement loop."""

    def __init__(self, A, tol=1e-10):
        self.A = _as_csc(A)
        self.tol = tol
        try:
            self.lu = sla.splu(self.A)
        except RuntimeError as exc:
            raise SolverError(f"SPD factorization failed: {exc}") from None

    def solve(self, b):
        return _refined_solve(self.lu, self.A, np.asarray(b, dtype=float),
                              self.tol, "SPD solve")


def solve_spd(A, b, tol=1e-10):
    """Solve SPD system with ||Ax-b|| <= tol*||b|| guaranteed."""
    return SPDSolver(A, tol).solve(b)


def _diagnose_constraints(C):
    Cd = np.asarray(C.todense()) if sparse.issparse(C) else np.asarray(C)
    U, s, _ = np.linalg.svd(Cd, full_matrices=False)
    if s.size and s[-1] <= 1e-10 * max(s[0], 1e-300):
        row = int(np.argmax(np.abs(U[:, -1])))
        raise DegenerateConstraintsError(
            f"constraint rows are rank deficient (sigma_min={s[-1]:.3e}); "
            f"dominant dependence in row {row}", row=row)


class SaddleSolver:
    """KKT solver for  [A C^T; C 0] [x; mu] = [b; c].

    Constraint rows are equilibrated to unit norm before factorization
    (multipliers are scaled back), which keeps residuals at the contract
    even when constraint entries are orders of magnitude below A's.
    """

    def __init__(self, A, C, tol=1e-9):
        self.A = _as_csc(A)
        self.C = _as_csc(C)
        self.n = self.A.shape[0]
        self.m = self.C.shape[0]
        self.tol = tol
        norms = sla.norm(self.C, axis=1) if self.m else np.empty(0)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise DegenerateConstraintsError(
                f"constraint row {zero[0]} is identically zero", row=int(zero[0]))
        self.row_scale = 1.0 / norms
        Cs = sparse.diags(self.row_scale) @ self.C
        self.Cs = _as_csc(Cs)
        self._a_norm = sla.norm(self.A, 1) if self.A.nnz else 0.0
        self._c_norm = sla.norm(self.C, 1) if self.C.nnz else 0.0
        K = sparse.bmat([[self.A, self.Cs.T],
                         [self.Cs, None]], format="csc")
        self.K = K
        try:
            self.lu = sla.splu(K)
        except RuntimeError:
            _diagnose_constraints(self.Cs)
            raise SolverError("saddle factorization failed") from None

    def solve(self, b, c):
        b = np.asarray(b, dtype=float).ravel()
        c = np.asarray(c, dtype=float).ravel()
        rhs = np.concatenate([b, self.row_scale * c])
        try:
            xz = _refined_solve(self.lu, self.K, rhs, self.tol, "saddle solve",
                                max_iter=5, mat_norm=self._a_norm + 1.0)
        except SolverError:
            _diagnose_constraints(self.Cs)
            raise
        if not np.all(np.isfinite(xz)):
            _diagnose_constraints(self.Cs)
            raise SolverError("saddle solve produced non-finite values")
        x, mu = xz[:self.n], self.row_scale * xz[self.n:]
        rhs_norm = max(np.linalg.norm(b), np.linalg.norm(c))
        if rhs_norm > 0.0:
            res = np.sqrt(np.linalg.norm(self.A @ x + self.C.T @ mu - b) ** 2
                          + np.linalg.norm(self.C @ x - c) ** 2)
            # backward-error denominator: ||K|| ||z|| + ||rhs||
            denom = ((self._a_norm + self._c_norm)
                     * (np.linalg.norm(x) + np.linalg.norm(mu)) + rhs_norm)
            if res > self.tol * denom:
                _diagnose_constraints(self.Cs)
                raise SolverError(
                    f"saddle solve: original-system residual {res:.3e} "
                    f"exceeds tolerance")
        return x, mu


def solve_saddle(A, C, b, c, tol=1e-9):
    """One-shot equality-constrained solve; returns (x, multipliers)."""
    return SaddleSolver(A, C, tol).solve(b, c)


@dataclass
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray  # columns, B-orthonormal, ascending values


def _check_eig_residuals(A, B, values, vectors, tol):
    scaleA = sla.norm(A, 1) if sparse.issparse(A) else np.linalg.norm(A, 1)
    scaleB = sla.norm(B, 1) if sparse.issparse(B) else np.linalg.norm(B, 1)
    for lam, v in zip(values, vectors.T):
        res = np.linalg.norm(A @ v - lam * (B @ v))
        if res > tol * (scaleA + abs(lam) * scaleB) * np.linalg.norm(v):
            raise SolverError(f"eigenpair residual {res:.3e} out of tolerance "
                              f"for eigenvalue {lam:.6e}")


def smallest_eigenpairs(A, B, k, tol=1e-8, seed=0):
    """k smallest eigenpairs of A v = lambda B v (A sym PSD, B SPD).

    Vectors come back B-orthonormal with ascending values.  Small pencils
    (or k close to the dimension) go through dense LAPACK; larger ones use
    shift-inverted Lanczos with a deterministic start vector.
    """
    n = A.shape[0]
    if not (1 <= k <= n):
        raise ValueError(f"need 1 <= k <= {n}, got k={k}")
    if n <= _DENSE_EIG_CUTOFF or k > n - 2:
        Ad = np.asarray(A.todense()) if sparse.issparse(A) else np.asarray(A)
        Bd = np.asarray(B.todense()) if sparse.issparse(B) else np.asarray(B)
        try:
            values, vectors = dla.eigh(Ad, Bd)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"dense eigensolve failed: {exc}") from None
        values, vectors = values[:k], vectors[:, :k]
    else:
        As, Bs = _as_csc(A), _as_csc(B)
        v0 = np.random.default_rng(seed).standard_normal(n)
        # small negative shift keeps A - sigma*B definite for PSD A
        scale = (As.diagonal().mean() or 1.0) / max(Bs.diagonal().mean(), 1e-300)
        try:
            values, vectors = sla.eigsh(As, k=k, M=Bs, sigma=-1e-3 * abs(scale),
                                        which="LM", v0=v0, tol=0)
        except Exception as exc:
            raise SolverError(f"iterative eigensolve failed: {exc}") from None
        order = np.argsort(values)
        values, vectors = values[order], vectors[:, order]
    # tighten B-orthonormality (harmless for LAPACK, helps ARPACK output)
    G = vectors.T @ (B @ vectors)
    try:
        L = np.linalg.cholesky((G + G.T) / 2.0)
    except np.linalg.LinAlgError:
        raise SolverError("eigenvector block lost B-orthogonality") from None
    vectors = dla.solve_triangular(L, vectors.T, lower=True).T
    _check_eig_residuals(A, B, values, vectors, tol)
    return EigenPairs(np.asarray(values, dtype=float), vectors)


def largest_eigenvalue(A, B, seed=0):
    """Largest eigenvalue of the pencil (A, B); used for sharp norms."""
    n = A.shape[0]
    if n <= _DENSE_EIG_CUTOFF:
        Ad = np.asarray(A.todense()) if sparse.issparse(A) else np.asarray(A)
        Bd = np.asarray(B.todense()) if sparse.issparse(B) else np.asarray(B)
        return float(dla.eigh(Ad, Bd, eigvals_only=True)[-1])
    v0 = np.random.default_rng(seed).standard_normal(n)
    try:
        values = sla.eigsh(_as_csc(A), k=1, M=_as_csc(B), which="LA",
                           v0=v0, return_eigenvectors=False, tol=1e-10,
                           maxiter=20000)
    except Exception as exc:
        raise SolverError(f"largest-eigenvalue solve failed: {exc}") from None
    return float(values[0])
