"""Finite-difference assembly of the scaled Newton system.

Each iteration solves ``A y = -b / C_b`` with ``A = F'(x) / ||F'(x)||_max``
and ``C_b = ||F(x)||_2``.  Entries of ``F'`` come from forward differences
through the problem's row oracle, one support slot at a time, so only the
``d`` nonzeros per row are ever touched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .norm_tree import NormTree
from .problem import NonlinearProblem

__all__ = [
    "SingularSystemError",
    "ScaledSystem",
    "default_step",
    "fd_partial",
    "assemble",
    "dense_fd_jacobian",
]

_SQRT_EPS = float(np.sqrt(np.finfo(float).eps))


class SingularSystemError(ArithmeticError):
    """The Newton system cannot be solved (zero Jacobian or zero pivot)."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


def default_step(xk):
    """Forward-difference step ``sqrt(eps) * max(1, |x_k|)``."""
    return _SQRT_EPS * np.maximum(1.0, np.abs(xk))


@dataclass
class ScaledSystem:
    A: sp.csr_matrix
    f_max: float
    b: np.ndarray
    C_b: float

    @property
    def rhs(self) -> np.ndarray:
        """Normalized right-hand side ``-|b>``."""
        return -self.b / self.C_b

    def unscaled_jacobian(self) -> sp.csr_matrix:
        return self.A * self.f_max


def fd_partial(problem: NonlinearProblem, m: int, k: int, x_support, step: float | None = None) -> float:
    """``(f_m(x + step e_k) - f_m(x)) / step`` using two row evaluations.

    ``x_support`` is aligned with ``problem.row_support(m)``.
    """
    support = problem.row_support(m)
    hits = np.nonzero(support == k)[0]
    if hits.size == 0:
        raise ValueError(f"column {k} is not in the support of row {m}")
    vals = np.asarray(x_support, dtype=float).copy()
    if step is None:
        step = float(default_step(vals[hits[0]]))
    if not step > 0:
        raise ValueError("finite-difference step must be positive")
    f0 = problem.eval_residual(m, vals)
    vals[hits[0]] += step
    f1 = problem.eval_residual(m, vals)
    if not (np.isfinite(f0) and np.isfinite(f1)):
        raise FloatingPointError(f"non-finite residual in row {m}")
    return (f1 - f0) / step


def _fd_entries(problem: NonlinearProblem, x: np.ndarray, f0: np.ndarray, central: bool) -> np.ndarray:
    table = problem.support_table
    rows = np.arange(problem.dim, dtype=np.int64)
    base = problem.gather(x)
    entries = np.zeros(table.shape)
    for l in range(table.shape[1]):
        valid = table[:, l] >= 0
        if not valid.any():
            continue
        r = rows[valid]
        step = default_step(x[table[valid, l]])
        vals = base[valid].copy()
        vals[:, l] += step
        step = vals[:, l] - base[valid, l]  # representable step
        f_plus = problem.eval_rows(r, vals)
        if central:
            vals[:, l] -= 2 * step
            f_minus = problem.eval_rows(r, vals)
            entries[valid, l] = (f_plus - f_minus) / (2 * step)
        else:
            entries[valid, l] = (f_plus - f0[valid]) / step
    return entries


def assemble(problem: NonlinearProblem, tree: NormTree, central: bool = False) -> ScaledSystem:
    """Build ``A``, ``||F'||_max``, ``b = F(x)`` and ``C_b`` from the tree."""
    x = np.array(tree.x)
    b = np.array(tree.f)
    entries = _fd_entries(problem, x, b, central)
    if not np.all(np.isfinite(entries)):
        raise FloatingPointError("non-finite Jacobian entry")
    f_max = float(np.abs(entries).max())
    if f_max == 0.0:
        raise SingularSystemError("Jacobian is identically zero")

    table = problem.support_table
    widths = (table >= 0).sum(axis=1)
    indptr = np.concatenate([[0], np.cumsum(widths)])
    mask = table >= 0
    A = sp.csr_matrix((entries[mask] / f_max, table[mask], indptr), shape=(problem.dim, problem.dim))
    return ScaledSystem(A=A, f_max=f_max, b=b, C_b=tree.partial_norm_f(0, 0))


def dense_fd_jacobian(problem: NonlinearProblem, x, step: float | None = None) -> np.ndarray:
    """Brute-force dense forward-difference Jacobian: perturb every variable.

    Uses full residual vectors only, never the support structure; meant as
    an oracle for small systems.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    f0 = problem.residuals(x)
    J = np.empty((n, n))
    for k in range(n):
        dk = float(default_step(x[k])) if step is None else step
        xp = x.copy()
        xp[k] += dk
        J[:, k] = (problem.residuals(xp) - f0) / dk
    return J
