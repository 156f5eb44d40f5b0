"""Classical stand-ins for the quantum linear solve.

``lu_solve`` (sparse LU, natural ordering) is what every Newton and QNM
iteration uses.  Time-marching grids give block lower-triangular systems;
passing ``block_size`` to :func:`factorize` factors only the diagonal
blocks and solves by block substitution, which avoids the dense fill a
single LU produces below the diagonal blocks.  ``cg_solve`` is only the classical-baseline solver for
cost comparisons.  ``estimate_kappa`` feeds the resource estimator.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg.lapack import dgbtrf as _gbtrf
from scipy.linalg.lapack import dgbtrs as _gbtrs

from .jacobian import SingularSystemError

__all__ = [
    "LinearSolveReport",
    "KappaEstimate",
    "BlockTriangularLU",
    "is_block_lower_triangular",
    "factorize",
    "lu_solve",
    "cg_solve",
    "estimate_kappa",
]

_PIVOT_RTOL = 1e-14


@dataclass
class LinearSolveReport:
    delta_x: np.ndarray
    residual_norm: float
    factor_time: float
    kappa_estimate: float | None = None
    iterations: int = 0
    converged: bool = True


@dataclass
class KappaEstimate:
    kappa: float
    sigma_max: float
    sigma_min: float
    converged: bool

    def __float__(self) -> float:
        return self.kappa


def _check_pivots(lu):
    diag = np.abs(lu.U.diagonal())
    scale = diag.max() if diag.size else 0.0
    bad = np.nonzero(diag <= _PIVOT_RTOL * scale)[0]
    if scale == 0.0 or bad.size:
        pivot = int(bad[0]) if bad.size else 0
        row = int(np.argsort(lu.perm_r)[pivot])
        raise SingularSystemError(f"numerically singular pivot at row {row}", row=row)


def _splu(A, permc_spec):
    try:
        return spla.splu(A, permc_spec=permc_spec)
    except RuntimeError as exc:  # SuperLU: "Factor is exactly singular"
        empty = np.flatnonzero(np.asarray(abs(A).sum(axis=1)).ravel() == 0)
        row = int(empty[0]) if empty.size else None
        raise SingularSystemError(f"LU factorization failed: {exc}", row=row) from exc


def is_block_lower_triangular(A, block_size: int) -> bool:
    """True when no entry of ``A`` lies right of its row's diagonal block."""
    A = sp.csr_matrix(A)
    n = A.shape[0]
    if block_size < 1 or n % block_size:
        return False
    rows = np.repeat(np.arange(n), np.diff(A.indptr))
    return bool(np.all(A.indices < (rows // block_size + 1) * block_size))


class BlockTriangularLU:
    """Block substitution over banded LU factors of the diagonal blocks.

    Each diagonal block is factored by LAPACK ``gbtrf`` with partial
    pivoting.  Mirrors the ``solve(rhs, trans)`` interface of SuperLU
    objects.
    """

    def __init__(self, A, block_size: int):
        A = sp.csr_matrix(A, copy=True)
        A.sort_indices()
        n = A.shape[0]
        bs = self.block_size = block_size
        self.shape = A.shape
        self.n_blocks = nb = n // bs
        rows = np.repeat(np.arange(n), np.diff(A.indptr))
        cols, vals = A.indices, A.data
        on_diag = cols // bs == rows // bs
        r, c = rows[on_diag] % bs, cols[on_diag] % bs
        kl = self.kl = int(max(0, (r - c).max(initial=0)))
        ku = self.ku = int(max(0, (c - r).max(initial=0)))
        ab = np.zeros((nb, 2 * kl + ku + 1, bs))
        ab[rows[on_diag] // bs, kl + ku + r - c, c] = vals[on_diag]
        self._lu = np.empty_like(ab)
        self._piv = np.empty((nb, bs), dtype=np.int32)
        for j in range(nb):
            lu, piv, info = _gbtrf(ab[j], kl, ku)
            if info > 0:
                raise SingularSystemError(f"zero pivot at row {j * bs + info - 1}", row=j * bs + info - 1)
            self._lu[j], self._piv[j] = lu, piv
        u_diag = self._lu[:, kl + ku, :]
        scale = np.abs(u_diag).max()
        bad = np.argwhere(np.abs(u_diag) <= _PIVOT_RTOL * scale)
        if bad.size:
            row = int(bad[0, 0] * bs + bad[0, 1])
            raise SingularSystemError(f"numerically singular pivot at row {row}", row=row)

        # strictly-lower-block entries, grouped by row block (CSR) and column block (CSC)
        off = sp.csr_matrix((np.where(on_diag, 0.0, vals), cols.copy(), A.indptr.copy()), shape=A.shape)
        off.eliminate_zeros()
        self._row_ptr = off.indptr[::bs]
        self._row_loc = np.repeat(np.arange(n), np.diff(off.indptr)) % bs
        self._row_col, self._row_val = off.indices, off.data
        off_c = off.tocsc()
        self._col_ptr = off_c.indptr[::bs]
        self._col_loc = np.repeat(np.arange(n), np.diff(off_c.indptr)) % bs
        self._col_row, self._col_val = off_c.indices, off_c.data

    def solve(self, rhs, trans: str = "N") -> np.ndarray:
        if trans not in ("N", "T"):
            raise ValueError("trans must be 'N' or 'T'")
        rhs = np.asarray(rhs, dtype=float)
        bs, kl, ku = self.block_size, self.kl, self.ku
        y = np.empty_like(rhs)
        if trans == "N":
            ptr, loc, idx, val = self._row_ptr, self._row_loc, self._row_col, self._row_val
            order = range(self.n_blocks)
        else:
            ptr, loc, idx, val = self._col_ptr, self._col_loc, self._col_row, self._col_val
            order = reversed(range(self.n_blocks))
        flag = 0 if trans == "N" else 1
        for j in order:
            a, b = ptr[j], ptr[j + 1]
            r = rhs[j * bs : (j + 1) * bs]
            if b > a:
                r = r - np.bincount(loc[a:b], val[a:b] * y[idx[a:b]], minlength=bs)
            y[j * bs : (j + 1) * bs] = _gbtrs(self._lu[j], kl, ku, r, self._piv[j], trans=flag)[0]
        return y


def factorize(A, permc_spec: str = "NATURAL", block_size: int | None = None):
    """Sparse LU of ``A``; raises :class:`SingularSystemError` on a zero pivot.

    With ``block_size`` and a block lower-triangular ``A`` the result is a
    :class:`BlockTriangularLU`; otherwise a SuperLU factorization of the
    whole matrix.
    """
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    if block_size is not None and block_size < A.shape[0] and is_block_lower_triangular(A, block_size):
        return BlockTriangularLU(A, block_size)
    A = sp.csc_matrix(A)
    lu = _splu(A, permc_spec)
    _check_pivots(lu)
    return lu


def lu_solve(A, rhs, lu=None) -> LinearSolveReport:
    """Solve ``A y = rhs`` by sparse LU (reusing ``lu`` when given)."""
    rhs = np.asarray(rhs, dtype=float)
    t0 = time.perf_counter()
    if lu is None:
        lu = factorize(A)
    factor_time = time.perf_counter() - t0
    y = lu.solve(rhs)
    if not np.all(np.isfinite(y)):
        raise SingularSystemError("LU solve produced non-finite values")
    res = float(np.linalg.norm(A @ y - rhs))
    return LinearSolveReport(delta_x=y, residual_norm=res, factor_time=factor_time)


def _is_symmetric(A) -> bool:
    diff = A - A.T
    return diff.nnz == 0 or abs(diff).max() <= 1e-14 * abs(A).max()


def cg_solve(A, rhs, tol: float = 1e-10, max_iters: int | None = None) -> LinearSolveReport:
    """Conjugate gradients; unsymmetric ``A`` is handled via ``A^T A y = A^T rhs``.

    Convergence is declared on the true residual ``||A y - rhs|| <= tol ||rhs||``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    A = sp.csr_matrix(A)
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.size
    if max_iters is None:
        max_iters = 10 * n
    t0 = time.perf_counter()

    normal = not _is_symmetric(A)
    if normal:
        op = lambda v: A.T @ (A @ v)  # noqa: E731
        g = A.T @ rhs
    else:
        op = lambda v: A @ v  # noqa: E731
        g = rhs

    y = np.zeros(n)
    target = tol * np.linalg.norm(rhs)
    if np.linalg.norm(rhs) == 0.0:
        return LinearSolveReport(y, 0.0, time.perf_counter() - t0, iterations=0)

    r = g.copy()
    p = r.copy()
    rr = r @ r
    it = 0
    true_res = np.linalg.norm(rhs)
    while it < max_iters:
        Ap = op(p)
        curv = p @ Ap
        if curv <= 0.0:
            raise ArithmeticError(f"CG breakdown: non-positive curvature {curv:.3e} at iteration {it}")
        step = rr / curv
        y += step * p
        r -= step * Ap
        it += 1
        true_res = float(np.linalg.norm(A @ y - rhs))
        if true_res <= target:
            break
        rr_new = r @ r
        if rr_new == 0.0:
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    return LinearSolveReport(
        delta_x=y,
        residual_norm=true_res,
        factor_time=time.perf_counter() - t0,
        iterations=it,
        converged=true_res <= target,
    )


def _power(apply, n, rng, rtol, max_iters):
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        w = apply(v)
        lam_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, True
        v = w / nw
        if lam_new > 0 and abs(lam_new - lam) <= rtol * lam_new:
            return lam_new, True
        lam = lam_new
    return lam, False


def estimate_kappa(A, lu=None, rtol: float = 1e-2, max_iters: int = 1000, seed: int = 0) -> KappaEstimate:
    """Estimate ``sigma_max / sigma_min`` by power iteration.

    ``sigma_max^2`` comes from ``A^T A``; ``sigma_min^-2`` from
    ``A^-1 A^-T`` applied through the LU factors.  Convergence is declared at
    relative change ``rtol`` of the Rayleigh quotient, so this is an estimate.
    """
    A = sp.csr_matrix(A)
    if lu is None:
        lu = factorize(A)
    n = A.shape[0]
    rng = np.random.default_rng(seed)
    big, ok_big = _power(lambda v: A.T @ (A @ v), n, rng, rtol, max_iters)
    inv, ok_inv = _power(lambda v: lu.solve(lu.solve(v, trans="T")), n, rng, rtol, max_iters)
    sigma_max = float(np.sqrt(big))
    sigma_min = float(1.0 / np.sqrt(inv)) if inv > 0 else 0.0
    kappa = sigma_max / sigma_min if sigma_min > 0 else float("inf")
    return KappaEstimate(kappa=kappa, sigma_max=sigma_max, sigma_min=sigma_min, converged=ok_big and ok_inv)
