"""Sparse nonlinear systems ``F(x) = 0`` exposed through row-local oracles.

A problem answers two questions per equation ``m``: which variables appear
in ``f_m`` (:meth:`NonlinearProblem.row_support`) and what ``f_m`` evaluates
to given just those variables (:meth:`NonlinearProblem.eval_residual`).
Everything else (column adjacency, the padded support table, batched
evaluation) is derived from those two.

Two finite-difference benchmarks are provided:

* :class:`DiffusionProblem`: ``u_t = (-1 + x sin u) u_x + f`` on
  ``-1 < x < 1``, upwind in space, backward Euler in time.
* :class:`BeamProblem`: a variable-coefficient fourth-order beam equation
  with a cubic restoring force, central differences in space and a
  second-order backward difference in time.

Boundary and initial data are substituted inside the residual so the
unknowns are exactly the ``N1 * N2`` grid values.
"""

from __future__ import annotations

import abc
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "NonlinearProblem",
    "FunctionProblem",
    "StencilProblem",
    "DiffusionProblem",
    "BeamProblem",
    "make_problem",
]


class NonlinearProblem(abc.ABC):
    """Row-oriented access to a sparse system of ``dim`` equations."""

    dim: int
    # rows per diagonal block when the Jacobian is block lower triangular
    block_size: int | None = None

    @abc.abstractmethod
    def row_support(self, m: int) -> np.ndarray:
        """Sorted indices of the variables appearing in ``f_m``."""

    @abc.abstractmethod
    def _eval_aligned(self, m: int, values: np.ndarray) -> float:
        """``f_m`` from values aligned with ``row_support(m)``."""

    @abc.abstractmethod
    def initial_guess(self) -> np.ndarray:
        ...

    def _check_row(self, m: int) -> int:
        m = int(m)
        if not 0 <= m < self.dim:
            raise IndexError(f"row {m} out of range [0, {self.dim})")
        return m

    def eval_residual(self, m: int, values) -> float:
        """Evaluate ``f_m``.

        ``values`` is either a sequence aligned with ``row_support(m)`` or a
        mapping from variable index to value covering the whole support.
        """
        m = self._check_row(m)
        support = self.row_support(m)
        if isinstance(values, Mapping):
            missing = [int(k) for k in support if int(k) not in values]
            if missing:
                raise KeyError(f"row {m}: missing support values for {missing}")
            vals = np.array([values[int(k)] for k in support], dtype=float)
        else:
            vals = np.asarray(values, dtype=float).ravel()
            if vals.size != support.size:
                raise ValueError(
                    f"row {m}: expected {support.size} support values, got {vals.size}"
                )
        return float(self._eval_aligned(m, vals))

    # -- derived structure -------------------------------------------------

    @cached_property
    def support_table(self) -> np.ndarray:
        """``(dim, D)`` array of row supports, padded with ``-1``."""
        rows = [self.row_support(m) for m in range(self.dim)]
        width = max(r.size for r in rows)
        table = np.full((self.dim, width), -1, dtype=np.int64)
        for m, r in enumerate(rows):
            table[m, : r.size] = r
        return table

    @cached_property
    def _pattern(self) -> sp.csr_matrix:
        table = self.support_table
        rows, slots = np.nonzero(table >= 0)
        data = np.ones(rows.size)
        return sp.csr_matrix((data, (rows, table[rows, slots])), shape=(self.dim, self.dim))

    @cached_property
    def _adjacency(self) -> sp.csr_matrix:
        return self._pattern.T.tocsr()

    def column_adjacency(self, k: int) -> np.ndarray:
        """Sorted rows ``m`` with ``k`` in ``row_support(m)``."""
        k = self._check_row(k)
        adj = self._adjacency
        return np.sort(adj.indices[adj.indptr[k] : adj.indptr[k + 1]]).astype(np.int64)

    def rows_touching(self, columns: np.ndarray) -> np.ndarray:
        """Union of ``column_adjacency(k)`` over ``columns``, sorted."""
        columns = np.asarray(columns, dtype=np.int64)
        if columns.size == 0:
            return columns
        if columns.size == self.dim:
            return np.arange(self.dim, dtype=np.int64)
        sub = self._adjacency[columns]
        return np.unique(sub.indices).astype(np.int64)

    @cached_property
    def max_row_nnz(self) -> int:
        """Sparsity ``d``: the larger of the max row and max column counts."""
        pat = self._pattern
        return int(max(np.diff(pat.indptr).max(), np.diff(self._adjacency.indptr).max()))

    # -- batched evaluation ------------------------------------------------

    def eval_rows(self, rows: np.ndarray, values: np.ndarray) -> np.ndarray:
        """Evaluate many rows at once.

        ``values[r, l]`` is the value of variable ``support_table[rows[r], l]``;
        padded slots are ignored.  Subclasses override this for speed.
        """
        rows = np.asarray(rows, dtype=np.int64)
        out = np.empty(rows.size)
        for r, m in enumerate(rows):
            width = self.row_support(m).size
            out[r] = self._eval_aligned(int(m), np.asarray(values[r, :width], dtype=float))
        return out

    def gather(self, x: np.ndarray, rows: np.ndarray | None = None) -> np.ndarray:
        """Support values of ``x`` for ``rows`` laid out like ``support_table``."""
        table = self.support_table if rows is None else self.support_table[rows]
        return np.where(table >= 0, np.asarray(x)[np.maximum(table, 0)], 0.0)

    def residuals(self, x, rows: np.ndarray | None = None) -> np.ndarray:
        """``F(x)`` restricted to ``rows`` (all rows by default)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"x must have shape ({self.dim},), got {x.shape}")
        if rows is None:
            rows = np.arange(self.dim, dtype=np.int64)
        rows = np.asarray(rows, dtype=np.int64)
        return self.eval_rows(rows, self.gather(x, rows))


class FunctionProblem(NonlinearProblem):
    """Small problem defined by explicit supports and a per-row callable.

    ``row_fn(m, values)`` receives the values aligned with ``supports[m]``.
    Intended for tests and toy systems; evaluation is a Python loop.
    """

    def __init__(
        self,
        supports: Sequence[Sequence[int]],
        row_fn: Callable[[int, np.ndarray], float],
        x0: Sequence[float] | None = None,
    ):
        self.dim = len(supports)
        self._supports = [np.unique(np.asarray(s, dtype=np.int64)) for s in supports]
        for m, s in enumerate(self._supports):
            if s.size == 0 or s.min() < 0 or s.max() >= self.dim:
                raise ValueError(f"row {m}: invalid support {s.tolist()}")
        self._row_fn = row_fn
        self._x0 = np.zeros(self.dim) if x0 is None else np.asarray(x0, dtype=float)

    def row_support(self, m: int) -> np.ndarray:
        return self._supports[self._check_row(m)].copy()

    def _eval_aligned(self, m: int, values: np.ndarray) -> float:
        return float(self._row_fn(m, values))

    def initial_guess(self) -> np.ndarray:
        return self._x0.copy()


class StencilProblem(NonlinearProblem):
    """Grid problem whose rows read a fixed set of stencil slots.

    Subclasses fill ``slot_index`` (variable index or ``-1``) and
    ``slot_const`` (value used where the index is ``-1``), both of shape
    ``(dim, n_slots)``, and implement :meth:`_stencil` on gathered slots.
    Several slots may alias one variable (reflected ghost points).
    """

    slot_index: np.ndarray
    slot_const: np.ndarray

    def __init__(self, n1: int, n2: int):
        self.n1 = int(n1)
        self.n2 = int(n2)
        self.dim = self.n1 * self.n2
        self.block_size = self.n1  # one time level
        jj, ii = np.divmod(np.arange(self.dim), self.n1)
        self.i_of = ii
        self.j_of = jj
        self.slot_index, self.slot_const = self._build_slots()
        self._finalize_slots()

    @abc.abstractmethod
    def _build_slots(self) -> tuple[np.ndarray, np.ndarray]:
        ...

    @abc.abstractmethod
    def _stencil(self, rows: np.ndarray, slots: np.ndarray) -> np.ndarray:
        """Residual of ``rows`` given fully substituted slot values."""

    def _finalize_slots(self) -> None:
        idx = self.slot_index
        big = np.iinfo(np.int64).max
        keyed = np.sort(np.where(idx >= 0, idx, big), axis=1)
        # drop repeated entries so each row lists each variable once
        dup = np.zeros_like(keyed, dtype=bool)
        dup[:, 1:] = keyed[:, 1:] == keyed[:, :-1]
        keyed = np.where(dup, big, keyed)
        keyed = np.sort(keyed, axis=1)
        width = int((keyed != big).sum(axis=1).max())
        table = np.where(keyed[:, :width] != big, keyed[:, :width], -1)
        self.support_table = table  # shadows the generic cached_property

        pos = np.full(idx.shape, -1, dtype=np.int64)
        for l in range(width):
            pos[(idx == table[:, [l]]) & (idx >= 0)] = l
        self.slot_pos = pos

    def row_support(self, m: int) -> np.ndarray:
        row = self.support_table[self._check_row(m)]
        return row[row >= 0].copy()

    def _slots_from_support(self, rows: np.ndarray, values: np.ndarray) -> np.ndarray:
        pos = self.slot_pos[rows]
        picked = np.take_along_axis(values, np.maximum(pos, 0), axis=1)
        return np.where(pos >= 0, picked, self.slot_const[rows])

    def _eval_aligned(self, m: int, values: np.ndarray) -> float:
        width = self.support_table.shape[1]
        padded = np.zeros((1, width))
        padded[0, : values.size] = values
        rows = np.array([m], dtype=np.int64)
        return float(self._stencil(rows, self._slots_from_support(rows, padded))[0])

    def eval_rows(self, rows: np.ndarray, values: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        return self._stencil(rows, self._slots_from_support(rows, np.asarray(values, dtype=float)))

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.n1, self.n2

    def grid_coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened ``(x_i, t_j)`` for every unknown, ``m = N1 * j + i``."""
        return self.x_nodes[self.i_of], self.t_nodes[self.j_of]

    def analytic_field(self) -> np.ndarray:
        """The manufactured exact solution sampled at the grid."""
        xs, ts = self.grid_coordinates()
        return self.exact(xs, ts)

    @staticmethod
    @abc.abstractmethod
    def exact(x, t):
        ...


class DiffusionProblem(StencilProblem):
    """First-order nonlinear diffusion problem on ``(-1, 1) x (0, 1]``.

    Unknown ``u_{i,j}`` sits at ``x_i = -1 + (i+1) h``, ``t_j = (j+1) s``
    with ``h = 2/N1``, ``s = 1/N2``.  Closures ``u_{-1,j} = 0`` and
    ``u_{i,-1} = x_i**2 - 1``.

    ``typo_fix=True`` uses ``sin(e^{2t}(x^2 - 1))`` in the source term, for
    which ``u = e^{2t}(x^2 - 1)`` is an exact solution; ``False`` keeps the
    literal ``sin(e^{2t}(e^2 - 1))``.
    """

    name = "diffusion"

    def __init__(self, n1: int, n2: int, typo_fix: bool = True):
        if n1 < 2 or n2 < 2:
            raise ValueError("diffusion grid needs n1, n2 >= 2")
        self.h = 2.0 / n1
        self.s = 1.0 / n2
        self.typo_fix = bool(typo_fix)
        self.x_nodes = -1.0 + (np.arange(n1) + 1) * self.h
        self.t_nodes = (np.arange(n2) + 1) * self.s
        super().__init__(n1, n2)
        xs, ts = self.grid_coordinates()
        self._x = xs
        self._f = self.source(xs, ts)

    def _build_slots(self):
        m = np.arange(self.dim)
        i, j = self.i_of, self.j_of
        idx = np.stack([m, np.where(i > 0, m - 1, -1), np.where(j > 0, m - self.n1, -1)], axis=1)
        const = np.zeros((self.dim, 3))
        const[:, 2] = self.x_nodes[i] ** 2 - 1.0
        return idx, const

    def source(self, x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        e2t = np.exp(2.0 * t)
        inner = e2t * (x**2 - 1.0) if self.typo_fix else e2t * (np.e**2 - 1.0)
        return 2.0 * e2t * (x**2 - 1.0 + x - x**2 * np.sin(inner))

    @staticmethod
    def exact(x, t):
        return np.exp(2.0 * np.asarray(t)) * (np.asarray(x) ** 2 - 1.0)

    def _stencil(self, rows, slots):
        u, u_w, u_s = slots[:, 0], slots[:, 1], slots[:, 2]
        x = self._x[rows]
        u_t = (u - u_s) / self.s
        u_x = (u - u_w) / self.h
        return u_t + (1.0 - x * np.sin(u)) * u_x - self._f[rows]

    INITIAL_GUESSES = ("explicit", "initial-condition")

    def initial_guess(self, kind: str = "explicit") -> np.ndarray:
        """Starting iterate.

        ``"initial-condition"`` copies ``x_i**2 - 1`` to every time level.
        ``"explicit"`` (default) marches one explicit upwind step per level
        from the initial condition, which puts every time level near the
        solution; plain Newton from the flat start diverges from N1 = 16 up.
        """
        u0 = self.x_nodes**2 - 1.0
        if kind == "initial-condition":
            return u0[self.i_of]
        if kind != "explicit":
            raise ValueError(f"unknown initial guess {kind!r}")
        out = np.empty((self.n2, self.n1))
        prev = u0
        for j in range(self.n2):
            west = np.concatenate([[0.0], prev[:-1]])
            g = -1.0 + self.x_nodes * np.sin(prev)
            prev = prev + self.s * (g * (prev - west) / self.h + self.source(self.x_nodes, self.t_nodes[j] - self.s))
            out[j] = prev
        return out.ravel()


def _beam_coefficients(x):
    e2 = np.exp(-2.0 * x**2)
    return {
        "g": 2.0 * e2 + 1.0,
        "g_x": -8.0 * x * e2,
        "g_xx": (32.0 * x**2 - 8.0) * e2,
        "mu": e2 + 1.0,
        "lin": 1.0 + 2.0 * e2,
        "cub": 5.0 + np.exp(-3.0 * x**2),
    }


class BeamProblem(StencilProblem):
    """Lateral vibration of a variable-stiffness beam on ``[-4, 4] x [0, 2]``.

    Manufactured solution ``w = exp(-x^2 - t^2)`` fixes the source term.
    Ghost closures: ``w_{-1,j} = w_{N1,j} = 0``, ``w_{-2,j} = w_{0,j}``,
    ``w_{N1+1,j} = w_{N1-1,j}``, ``w_{i,-1} = exp(-x_i^2)``,
    ``w_{i,-2} = w_{i,0}``.
    """

    name = "beam"

    def __init__(self, n1: int, n2: int):
        if n1 < 3 or n2 < 2:
            raise ValueError("beam grid needs n1 >= 3, n2 >= 2")
        self.h = 8.0 / n1
        self.s = 2.0 / n2
        self.x_nodes = -4.0 + (np.arange(n1) + 1) * self.h
        self.t_nodes = (np.arange(n2) + 1) * self.s
        super().__init__(n1, n2)
        xs, ts = self.grid_coordinates()
        self._coef = _beam_coefficients(xs)
        self._f = self.source(xs, ts)

    def _build_slots(self):
        n1 = self.n1
        i, j = self.i_of, self.j_of
        m = np.arange(self.dim)
        base = m - i  # index of (0, j)
        cols = []
        consts = []

        def spatial(ii):
            idx = np.where((ii >= 0) & (ii < n1), base + ii, -1)
            idx = np.where(ii == -2, base, idx)
            idx = np.where(ii == n1 + 1, base + n1 - 1, idx)
            return idx, np.zeros(self.dim)

        def temporal(jj):
            idx = np.where(jj >= 0, jj * n1 + i, -1)
            idx = np.where(jj == -2, i, idx)
            return idx, np.exp(-self.x_nodes[i] ** 2)

        for idx, const in (
            (m, np.zeros(self.dim)),
            spatial(i + 1),
            spatial(i + 2),
            spatial(i - 1),
            spatial(i - 2),
            temporal(j - 1),
            temporal(j - 2),
        ):
            cols.append(idx)
            consts.append(const)
        return np.stack(cols, axis=1), np.stack(consts, axis=1)

    def source(self, x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        c = _beam_coefficients(x)
        w = self.exact(x, t)
        w_xx = (4 * x**2 - 2) * w
        w_xxx = (12 * x - 8 * x**3) * w
        w_xxxx = (16 * x**4 - 48 * x**2 + 12) * w
        w_tt = (4 * t**2 - 2) * w
        return (
            c["g"] * w_xxxx
            + 2 * c["g_x"] * w_xxx
            + c["g_xx"] * w_xx
            + c["mu"] * w_tt
            + c["lin"] * w
            + c["cub"] * w**3
        )

    @staticmethod
    def exact(x, t):
        return np.exp(-np.asarray(x) ** 2 - np.asarray(t) ** 2)

    def _stencil(self, rows, slots):
        w, e1, e2, w1, w2, s1, s2 = slots.T
        h, s = self.h, self.s
        w_xx = (e1 - 2 * w + w1) / h**2
        w_xxx = (e2 - 2 * e1 + 2 * w1 - w2) / (2 * h**3)
        w_xxxx = (e2 - 4 * e1 + 6 * w - 4 * w1 + w2) / h**4
        w_tt = (w - 2 * s1 + s2) / s**2
        c = {k: v[rows] for k, v in self._coef.items()}
        return (
            c["g"] * w_xxxx
            + 2 * c["g_x"] * w_xxx
            + c["g_xx"] * w_xx
            + c["mu"] * w_tt
            + c["lin"] * w
            + c["cub"] * w**3
            - self._f[rows]
        )

    INITIAL_GUESSES = ("initial-condition",)

    def initial_guess(self, kind: str = "initial-condition") -> np.ndarray:
        if kind != "initial-condition":
            raise ValueError(f"unknown initial guess {kind!r}")
        return np.exp(-self.x_nodes[self.i_of] ** 2)


def make_problem(name: str, n1: int, n2: int, typo_fix: bool = True) -> StencilProblem:
    if name == "diffusion":
        return DiffusionProblem(n1, n2, typo_fix=typo_fix)
    if name == "beam":
        return BeamProblem(n1, n2)
    raise ValueError(f"unknown problem {name!r}; expected 'diffusion' or 'beam'")
