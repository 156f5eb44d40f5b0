"""Binary norm tree over an iterate ``x`` and its residual ``F(x)``.

Leaves hold the signed entries ``x_i`` and ``f_i(x)``.  Every internal node
holds the sum of squares of the leaves below it, so the partial Euclidean
norm of any dyadic block is one square root away.  Storage is a flat heap:
node ``(level, j)`` lives at slot ``2**level + j`` and the leaves occupy
``[P, 2P)`` with ``P = 2**n_levels``.
"""

from __future__ import annotations

import math
from typing import Iterable, Tuple

import numpy as np

__all__ = ["NormTree", "tree_norm"]

_KINDS = ("x", "f")


def _fill_levels(sq: np.ndarray, leaves: np.ndarray, n_levels: int) -> None:
    cap = 1 << n_levels
    sq[cap:] = leaves**2
    for level in range(n_levels - 1, -1, -1):
        lo, hi = 1 << level, 2 << level
        sq[lo:hi] = sq[2 * lo : 2 * hi : 2] + sq[2 * lo + 1 : 2 * hi : 2]


def tree_norm(v) -> float:
    """Euclidean norm summed in the tree's pairwise order.

    Bit-identical to ``NormTree(v, ...).partial_norm_x(0, 0)``, so plain
    vector code can reproduce the tree's root exactly.
    """
    v = np.asarray(v, dtype=float).ravel()
    n_levels = max(0, math.ceil(math.log2(max(v.size, 1))))
    leaves = np.zeros(1 << n_levels)
    leaves[: v.size] = v
    sq = np.zeros(2 << n_levels)
    _fill_levels(sq, leaves, n_levels)
    return math.sqrt(sq[1])


class NormTree:
    """The M_F structure: leaf values plus partial sums of squares.

    Indices ``>= dim`` are zero padding and can never be written.
    """

    def __init__(self, x, f):
        x = np.asarray(x, dtype=float).ravel()
        f = np.asarray(f, dtype=float).ravel()
        if x.shape != f.shape:
            raise ValueError(f"x and f length mismatch: {x.size} != {f.size}")
        if x.size < 1:
            raise ValueError("NormTree needs at least one entry")
        self.dim = int(x.size)
        self.n_levels = max(0, math.ceil(math.log2(self.dim)))
        self._cap = 1 << self.n_levels
        self._leaf = {k: np.zeros(self._cap) for k in _KINDS}
        self._sq = {k: np.zeros(2 * self._cap) for k in _KINDS}
        for kind, vals in (("x", x), ("f", f)):
            self._leaf[kind][: self.dim] = vals
            sq = self._sq[kind]
            _fill_levels(sq, self._leaf[kind], self.n_levels)

    @classmethod
    def build(cls, x, f) -> "NormTree":
        return cls(x, f)

    # -- reads -------------------------------------------------------------

    def _check_index(self, i: int) -> int:
        i = int(i)
        if not 0 <= i < self.dim:
            raise IndexError(f"leaf index {i} out of range [0, {self.dim})")
        return i

    def get_x(self, i: int) -> float:
        return float(self._leaf["x"][self._check_index(i)])

    def get_f(self, i: int) -> float:
        return float(self._leaf["f"][self._check_index(i)])

    @property
    def x(self) -> np.ndarray:
        """Read-only view of the logical (unpadded) iterate."""
        v = self._leaf["x"][: self.dim]
        v = v.view()
        v.flags.writeable = False
        return v

    @property
    def f(self) -> np.ndarray:
        v = self._leaf["f"][: self.dim].view()
        v.flags.writeable = False
        return v

    def _node(self, level: int, node: int) -> int:
        level, node = int(level), int(node)
        if not 0 <= level <= self.n_levels:
            raise IndexError(f"level {level} out of range [0, {self.n_levels}]")
        if not 0 <= node < (1 << level):
            raise IndexError(f"node {node} out of range at level {level}")
        return (1 << level) + node

    def partial_norm_x(self, level: int, node: int) -> float:
        """Euclidean norm of ``x`` over the span of ``(level, node)``.

        Level 0 is the root; level ``n_levels`` addresses single leaves.
        """
        return math.sqrt(self._sq["x"][self._node(level, node)])

    def partial_norm_f(self, level: int, node: int) -> float:
        return math.sqrt(self._sq["f"][self._node(level, node)])

    def node_sq(self, kind: str, level: int, node: int) -> float:
        """Raw stored sum of squares, exposed for invariant checks."""
        return float(self._sq[kind][self._node(level, node)])

    # -- writes ------------------------------------------------------------

    def _validate(self, idx: np.ndarray, vals: np.ndarray) -> None:
        if idx.shape != vals.shape:
            raise ValueError("indices and values must have the same shape")
        if idx.size and (idx.min() < 0 or idx.max() >= self.dim):
            raise IndexError(f"update index out of range [0, {self.dim})")
        if not np.all(np.isfinite(vals)):
            raise ValueError("update values must be finite")

    def _apply(self, kind: str, idx: np.ndarray, vals: np.ndarray) -> int:
        if idx.size == 0:
            return 0
        # last write wins for duplicate indices
        rev_idx = idx[::-1]
        uniq, first = np.unique(rev_idx, return_index=True)
        leaf_vals = vals[::-1][first]

        leaf = self._leaf[kind]
        sq = self._sq[kind]
        leaf[uniq] = leaf_vals
        nodes = uniq + self._cap
        sq[nodes] = leaf_vals**2
        touched = nodes.size
        while nodes[0] > 1:
            nodes = np.unique(nodes >> 1)
            sq[nodes] = sq[2 * nodes] + sq[2 * nodes + 1]
            touched += nodes.size
        return int(touched)

    def set_x(self, indices, values) -> int:
        """Vectorized write of ``x`` leaves; returns the touched-node count."""
        idx = np.asarray(indices, dtype=np.int64).ravel()
        vals = np.asarray(values, dtype=float).ravel()
        self._validate(idx, vals)
        return self._apply("x", idx, vals)

    def set_f(self, indices, values) -> int:
        idx = np.asarray(indices, dtype=np.int64).ravel()
        vals = np.asarray(values, dtype=float).ravel()
        self._validate(idx, vals)
        return self._apply("f", idx, vals)

    def update_entries(self, updates: Iterable[Tuple[str, int, float]]) -> int:
        """Apply ``(kind, index, value)`` writes and rebuild their ancestors.

        All updates are validated before anything is written, so a bad
        entry leaves the tree untouched.
        """
        buckets = {k: ([], []) for k in _KINDS}
        for kind, index, value in updates:
            if kind not in buckets:
                raise ValueError(f"unknown entry kind {kind!r}; expected 'x' or 'f'")
            buckets[kind][0].append(index)
            buckets[kind][1].append(value)
        staged = {}
        for kind, (idx, vals) in buckets.items():
            idx_arr = np.asarray(idx, dtype=np.int64)
            val_arr = np.asarray(vals, dtype=float)
            self._validate(idx_arr, val_arr)
            staged[kind] = (idx_arr, val_arr)
        return sum(self._apply(kind, *staged[kind]) for kind in _KINDS)

    def __repr__(self) -> str:
        return (
            f"NormTree(dim={self.dim}, n_levels={self.n_levels}, "
            f"|x|={self.partial_norm_x(0, 0):.6g}, |F|={self.partial_norm_f(0, 0):.6g})"
        )
