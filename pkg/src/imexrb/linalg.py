"""Sparse and dense linear-algebra kernels for the time integrators.

CSR matrix-vector products, full-memory GMRES with incomplete-LU
preconditioning, incremental thin-QR with a conditioning guard,
Gram-Schmidt basis extension, small dense solves, and iterative 2-norm
condition estimation.

Sparse matrices are plain ``scipy.sparse.csr_matrix`` objects in canonical
form (sorted indices, no duplicates); ``indptr``/``indices``/``data`` are
the row offsets, column indices and values of the compressed-sparse-row
layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import spilu

__all__ = [
    "SparseMatrix",
    "QRFactor",
    "IluPrecond",
    "GmresBreakdownError",
    "ZeroPivotError",
    "as_csr",
    "spmv",
    "gmres",
    "ilu_factor",
    "qr_init",
    "qr_append",
    "qr_delete_first",
    "orth_residual",
    "gs_extend",
    "dense_solve",
    "cond2_estimate",
]

SparseMatrix = sp.csr_matrix

# norms at or below sqrt(n) times this are treated as identically zero
ZERO_NORM_FACTOR = 1e-14


class GmresBreakdownError(RuntimeError):
    """GMRES produced a zero Krylov vector before reaching the tolerance."""


class ZeroPivotError(RuntimeError):
    """Incomplete LU hit an exactly zero pivot."""


def as_csr(matrix) -> sp.csr_matrix:
    """Convert to a canonical CSR matrix (float64, sorted, deduplicated)."""
    A = sp.csr_matrix(matrix, dtype=np.float64)
    A.sum_duplicates()
    A.sort_indices()
    return A


def spmv(A, x):
    """CSR matrix-vector product ``A @ x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise ValueError(
            f"dimension mismatch: matrix is {A.shape[0]}x{A.shape[1]}, "
            f"vector has shape {x.shape}"
        )
    return A @ x


def _givens(a, b):
    r = np.hypot(a, b)
    if r == 0.0:
        return 1.0, 0.0
    return a / r, b / r


def gmres(A, b, precond=None, rtol=1e-10, maxit=1000, x0=None):
    """Right-preconditioned GMRES without restarts.

    Builds the full Krylov basis (no restart) until the true relative
    residual ``||b - A x|| / ||b||`` drops below ``rtol`` or ``maxit``
    iterations are reached.

    Returns ``(x, iters, converged)``.  A zero Krylov vector that does not
    coincide with convergence raises :class:`GmresBreakdownError`; plain
    non-convergence is reported through ``converged=False``.
    """
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (n,):
        raise ValueError(f"right-hand side shape {b.shape} != ({n},)")
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side contains non-finite entries")
    if rtol <= 0.0:
        raise ValueError("rtol must be positive")

    apply_m = precond.apply if precond is not None else (lambda v: v)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0, True

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    r0 = b - A @ x if x0 is not None else b.copy()
    beta = np.linalg.norm(r0)
    if beta <= rtol * bnorm:
        return x, 0, True

    kmax = min(maxit, n)
    V = [r0 / beta]
    # Givens-rotated Hessenberg columns and the rotated residual vector
    H_cols = []
    cs, sn = [], []
    g = np.zeros(kmax + 1)
    g[0] = beta

    iters = 0
    for j in range(kmax):
        w = A @ apply_m(V[j])
        h = np.zeros(j + 2)
        for i in range(j + 1):
            h[i] = V[i] @ w
            w -= h[i] * V[i]
        h[j + 1] = np.linalg.norm(w)
        iters = j + 1

        # apply the accumulated rotations, then a new one zeroing h[j+1]
        for i in range(j):
            hi, hi1 = h[i], h[i + 1]
            h[i] = cs[i] * hi + sn[i] * hi1
            h[i + 1] = -sn[i] * hi + cs[i] * hi1
        c, s = _givens(h[j], h[j + 1])
        cs.append(c)
        sn.append(s)
        h[j] = c * h[j] + s * h[j + 1]
        g[j + 1] = -s * g[j]
        g[j] = c * g[j]
        H_cols.append(h[: j + 1].copy())
        res_est = abs(g[j + 1])

        if H_cols[-1][-1] == 0.0:
            # zero Krylov vector and singular restriction: the rotated
            # residual estimate is meaningless here, so this is a breakdown
            raise GmresBreakdownError(
                f"zero Krylov vector at iteration {iters} before reaching "
                f"rtol {rtol:.3e}"
            )
        if res_est <= rtol * bnorm:
            break
        V.append(w / h[j + 1])

    # back-substitute the triangularized least-squares system
    k = len(H_cols)
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - sum(H_cols[m][i] * y[m] for m in range(i + 1, k))) / H_cols[i][i]
    update = np.zeros(n)
    for i in range(k):
        update += y[i] * V[i]
    x = x + apply_m(update)

    true_res = np.linalg.norm(b - A @ x)
    converged = bool(true_res <= rtol * bnorm * (1.0 + 1e-9))
    return x, iters, converged


class IluPrecond:
    """Incomplete-LU preconditioner wrapping a SuperLU ILUTP factorization.

    ``apply`` computes ``M^{-1} v``; ``transpose()`` returns a view whose
    ``apply`` computes ``M^{-T} v`` (used for adjoint solves).
    """

    def __init__(self, lu, droptol, n):
        self._lu = lu
        self.droptol = droptol
        self.n = n

    def apply(self, v):
        return self._lu.solve(v)

    def transpose(self):
        return _TransposedIlu(self)

    @property
    def lower(self):
        return self._lu.L

    @property
    def upper(self):
        return self._lu.U


class _TransposedIlu:
    def __init__(self, parent):
        self._lu = parent._lu
        self.n = parent.n

    def apply(self, v):
        return self._lu.solve(v, trans="T")


def ilu_factor(A, droptol) -> IluPrecond:
    """Threshold incomplete-LU factorization of a square sparse matrix.

    Backed by SuperLU's ILUTP with drop tolerance ``droptol`` (entries are
    dropped by SuperLU's own threshold rule; ``droptol=0`` yields a complete
    factorization).  An exactly singular matrix raises
    :class:`ZeroPivotError`, naming the offending row when it can be
    identified.
    """
    n, m = A.shape
    if n != m:
        raise ValueError(f"matrix must be square, got {A.shape}")
    A = as_csr(A)
    row_nnz = np.diff(A.indptr)
    empty = np.flatnonzero(row_nnz == 0)
    if empty.size:
        raise ZeroPivotError(f"zero pivot: row {empty[0]} has no entries")
    try:
        lu = spilu(A.tocsc(), drop_tol=droptol)
    except RuntimeError as exc:
        diag = A.diagonal()
        zero_diag = np.flatnonzero(diag == 0.0)
        where = f" (zero diagonal in row {zero_diag[0]})" if zero_diag.size else ""
        raise ZeroPivotError(f"incomplete LU failed: {exc}{where}") from exc
    return IluPrecond(lu, droptol, n)


@dataclass
class QRFactor:
    """Thin QR factorization with column-orthonormal ``q`` and triangular ``r``."""

    q: np.ndarray
    r: np.ndarray

    @property
    def m(self) -> int:
        return self.q.shape[1]

    @property
    def n_rows(self) -> int:
        return self.q.shape[0]

    def orthonormality_defect(self) -> float:
        eye = np.eye(self.m)
        return float(np.linalg.norm(self.q.T @ self.q - eye, "fro"))


def qr_init(v) -> QRFactor:
    """Single-column QR of ``v``; falls back to the first unit vector.

    If ``||v||`` is at machine scale (``<= 1e-14 * sqrt(n)``) the basis is
    the unit vector ``e_1`` so downstream projections stay well defined.
    """
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[0]
    nv = np.linalg.norm(v)
    if nv <= ZERO_NORM_FACTOR * np.sqrt(n):
        q = np.zeros((n, 1))
        q[0, 0] = 1.0
        return QRFactor(q, np.array([[1.0]]))
    return QRFactor((v / nv).reshape(n, 1), np.array([[nv]]))


def qr_append(f: QRFactor, v, delta):
    """Append the normalized column ``v/||v||`` unless it is quasi-collinear.

    The candidate augmented R gets the new residual norm on its diagonal;
    if the reciprocal-condition proxy ``min|R_ii| / max|R_ii|`` does not
    exceed ``delta`` the update is skipped and the factor returned
    unchanged with ``inserted=False``.  Skipping is a normal outcome, not
    an error.  (This diagonal-ratio proxy is cheaper than a true rcond and
    monotone in the collinearity of the candidate column.)
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != f.n_rows:
        raise ValueError(f"vector length {v.shape[0]} != basis rows {f.n_rows}")
    nv = np.linalg.norm(v)
    if nv <= ZERO_NORM_FACTOR * np.sqrt(v.shape[0]):
        return f, False
    vhat = v / nv
    # two Gram-Schmidt passes keep the new column orthogonal to working precision
    w = f.q.T @ vhat
    res = vhat - f.q @ w
    w2 = f.q.T @ res
    res = res - f.q @ w2
    w = w + w2
    rho = np.linalg.norm(res)

    diag = np.abs(np.diag(f.r))
    cand = np.append(diag, rho)
    rcond = cand.min() / cand.max()
    if not rcond > delta:
        return f, False

    q_new = np.hstack([f.q, (res / rho).reshape(-1, 1)])
    m = f.m
    r_new = np.zeros((m + 1, m + 1))
    r_new[:m, :m] = f.r
    r_new[:m, m] = w
    r_new[m, m] = rho
    return QRFactor(q_new, r_new), True


def qr_delete_first(f: QRFactor) -> QRFactor:
    """Remove the oldest (first) column's contribution from the factorization.

    Deleting column 0 of the factored matrix leaves an upper-Hessenberg R;
    a sweep of Givens rotations restores triangularity while updating Q, so
    orthonormality is preserved.
    """
    m = f.m
    if m <= 1:
        raise ValueError("cannot delete the only column of a QR factor")
    R1 = f.r[:, 1:].copy()
    Q = f.q.copy()
    for i in range(m - 1):
        c, s = _givens(R1[i, i], R1[i + 1, i])
        top = R1[i, i:].copy()
        bot = R1[i + 1, i:].copy()
        R1[i, i:] = c * top + s * bot
        R1[i + 1, i:] = -s * top + c * bot
        qi = Q[:, i].copy()
        qi1 = Q[:, i + 1].copy()
        Q[:, i] = c * qi + s * qi1
        Q[:, i + 1] = -s * qi + c * qi1
    return QRFactor(Q[:, : m - 1], np.triu(R1[: m - 1, :]))


def orth_residual(Q, u):
    """Orthogonal complement ``r = u - Q(Q^T u)`` and the ratio ``||r||/||u||``."""
    u = np.asarray(u, dtype=np.float64)
    if Q.shape[1] == 0:
        r = u.copy()
    else:
        r = u - Q @ (Q.T @ u)
    un = np.linalg.norm(u)
    ratio = float(np.linalg.norm(r) / un) if un > 0.0 else 0.0
    return r, ratio


def gs_extend(Q, r):
    """Extend a column-orthonormal matrix with the normalized residual ``r``.

    ``r`` is expected to already be orthogonal to ``span(Q)`` up to
    round-off (the output of :func:`orth_residual`); one extra
    orthogonalization pass is applied so the orthonormality invariant holds
    after long enrichment sequences.
    """
    r = np.asarray(r, dtype=np.float64)
    nr = np.linalg.norm(r)
    if nr == 0.0:
        raise ValueError("cannot extend the basis with a zero-norm residual")
    v = r / nr
    if Q.shape[1]:
        v = v - Q @ (Q.T @ v)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            raise ValueError("residual lies in the span of the basis")
        v = v / nv
    return np.hstack([Q, v.reshape(-1, 1)])


def dense_solve(M, b):
    """Direct solve of a small dense system (LAPACK via SciPy).

    Raises ``scipy.linalg.LinAlgError`` on a singular matrix.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"matrix must be square, got shape {M.shape}")
    # assume_a='gen' keeps the LAPACK path that raises on singular input
    # (structure auto-detection would silently divide by zero instead)
    return scipy.linalg.solve(M, np.asarray(b, dtype=np.float64),
                              assume_a="gen")


def _iterate_to_tol(step, tol, maxit, needed=3):
    """Run ``step()`` until its scalar output stabilizes to ``tol`` relative."""
    prev = None
    hits = 0
    est = None
    for _ in range(maxit):
        est = step()
        if prev is not None and abs(est - prev) <= tol * max(abs(est), 1e-300):
            hits += 1
            if hits >= needed:
                break
        else:
            hits = 0
        prev = est
    return est


def cond2_estimate(A, tol, seed=0, ilu_droptol=5e-3, inner_rtol=1e-9):
    """Iterative estimate of the 2-norm condition number sigma_max/sigma_min.

    sigma_max comes from power iteration on ``A^T A``; sigma_min from
    inverse power iteration on ``(A^T A)^{-1}``, applied through
    ILU-preconditioned GMRES solves with ``A`` and ``A^T``.  Both
    iterations stop once the estimate is stable to ``0.1 * tol`` relative
    over three consecutive iterations.
    """
    n, m = A.shape
    if n != m:
        raise ValueError(f"matrix must be square, got {A.shape}")
    A = as_csr(A)
    if n == 1:
        val = abs(A[0, 0])
        if val == 0.0:
            raise ValueError("matrix is singular: zero 1x1 entry")
        return 1.0

    rng = np.random.default_rng(seed)
    inner_tol = 0.1 * tol

    y = rng.standard_normal(n)
    y /= np.linalg.norm(y)
    state = {"y": y}

    def power_step():
        w = A @ state["y"]
        z = A.T @ w
        nz = np.linalg.norm(z)
        if nz == 0.0:
            raise ValueError("matrix is singular: A^T A annihilated the iterate")
        state["y"] = z / nz
        return float(np.linalg.norm(w))

    sigma_max = _iterate_to_tol(power_step, inner_tol, maxit=20000)

    At = A.T.tocsr()
    try:
        ilu = ilu_factor(A, ilu_droptol)
    except ZeroPivotError as exc:
        raise ValueError(f"matrix is singular: {exc}") from exc
    ilu_t = ilu.transpose()
    gmres_maxit = min(n, 1000)

    y = rng.standard_normal(n)
    y /= np.linalg.norm(y)
    state_min = {"y": y}

    def inverse_step():
        w, _, ok_t = gmres(At, state_min["y"], precond=ilu_t, rtol=inner_rtol,
                           maxit=gmres_maxit)
        z, _, ok = gmres(A, w, precond=ilu, rtol=inner_rtol, maxit=gmres_maxit)
        if not (ok and ok_t):
            raise ValueError("matrix is singular or too ill-conditioned: "
                             "inner sparse solves did not converge")
        nz = np.linalg.norm(z)
        if not np.isfinite(nz) or nz > 1e280:
            raise ValueError("matrix is singular: sigma_min estimate underflows")
        state_min["y"] = z / nz
        return 1.0 / np.sqrt(nz)

    sigma_min = _iterate_to_tol(inverse_step, inner_tol, maxit=500)
    if sigma_min <= sigma_max * 1e-15:
        raise ValueError("matrix is singular: sigma_min estimate underflows")
    return float(sigma_max / sigma_min)
