"""Newton's method and its sampled-step (QNM) emulation.

``newton_solve`` is plain Newton on dense vectors and serves as the exact
baseline.  ``qnm_solve`` keeps ``x`` and ``F(x)`` in a :class:`NormTree`,
replaces the Newton direction by its tomographic estimate, and only
rewrites the entries the sampled step touches.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .jacobian import ScaledSystem, SingularSystemError, assemble
from .linsolve import LinearSolveReport, estimate_kappa, factorize, lu_solve
from .norm_tree import NormTree, tree_norm
from .problem import NonlinearProblem
from .tomography import TomographyConfig, sample_linf

__all__ = [
    "DivergenceError",
    "IterationRecord",
    "RunTrace",
    "newton_step",
    "newton_solve",
    "qnm_solve",
]

DEFAULT_MAX_ITER = 200
DIVERGENCE_FACTOR = 1e6

Callback = Callable[[int, ScaledSystem, LinearSolveReport], None]


class DivergenceError(FloatingPointError):
    """An iterate or residual became non-finite.

    ``trace`` holds the records completed before the failure.
    """

    def __init__(self, message: str, iteration: int, trace: "RunTrace | None" = None):
        super().__init__(message)
        self.iteration = iteration
        self.trace = trace


@dataclass
class IterationRecord:
    iter: int
    residual_norm: float
    c_delta_x: float
    n_x: int
    n_f: int
    kappa: float | None = None
    wall_time: float = 0.0


@dataclass
class RunTrace:
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    final_residual: float = float("nan")
    solution: np.ndarray | None = None
    diverged: bool = False
    stalled: bool = False
    residual: np.ndarray | None = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def residual_history(self) -> np.ndarray:
        """Pre-update residuals of every iteration followed by the final one."""
        return np.array([r.residual_norm for r in self.records] + [self.final_residual])


class _Assembler:
    """Minimal tree-like view so ``assemble`` can run on plain arrays."""

    def __init__(self, x, f):
        self.x = x
        self.f = f

    def partial_norm_f(self, level, node):
        return tree_norm(self.f)


def newton_step(system: ScaledSystem, report: LinearSolveReport) -> tuple[float, np.ndarray]:
    """Split the unscaled Newton step into ``(||dx||_2, dx / ||dx||_2)``.

    The scaled solve gives ``y`` with ``A y = -b/C_b``; the true step is
    ``dx = (C_b / f_max) y``.
    """
    y = report.delta_x
    ny = float(np.linalg.norm(y))
    if ny == 0.0:
        return 0.0, np.zeros_like(y)
    return system.C_b * ny / system.f_max, y / ny


class _StallMonitor:
    """Flags a run whose best residual has not halved within ``window`` steps."""

    def __init__(self, window: int | None, res0: float):
        if window is not None and window < 1:
            raise ValueError("stall_window must be a positive integer or None")
        self.window = window
        self.best = res0
        self.since = 0

    def __call__(self, res: float) -> bool:
        if self.window is None:
            return False
        if res <= 0.5 * self.best:
            self.best = res
            self.since = 0
            return False
        self.since += 1
        return self.since >= self.window


def _attach(exc: Exception, k: int, trace: RunTrace) -> None:
    if getattr(exc, "trace", None) is None:
        exc.trace = trace
    if getattr(exc, "iteration", None) is None:
        exc.iteration = k


def _solve(system: ScaledSystem, with_kappa: bool, block_size: int | None = None):
    lu = factorize(system.A, block_size=block_size)
    report = lu_solve(system.A, system.rhs, lu=lu)
    kappa = estimate_kappa(system.A, lu=lu).kappa if with_kappa else None
    report.kappa_estimate = kappa
    return report, kappa


def newton_solve(
    problem: NonlinearProblem,
    x0=None,
    eps: float = 1e-8,
    max_iter: int = DEFAULT_MAX_ITER,
    with_kappa: bool = False,
    callback: Callback | None = None,
    stall_window: int | None = None,
) -> RunTrace:
    """Pure Newton iteration ``x <- x + dx`` with ``F'(x) dx = -F(x)``.

    With ``stall_window`` set, the run also stops (``stalled=True``) once the
    best residual has failed to halve for that many iterations, which is how
    a round-off floor above ``eps`` shows up.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = np.array(problem.initial_guess() if x0 is None else x0, dtype=float)
    F = problem.residuals(x)
    # same summation order as the tree root, so the two solvers agree bitwise
    res = tree_norm(F)
    trace = RunTrace()
    stall = _StallMonitor(stall_window, res)
    for k in range(max_iter):
        if res <= eps:
            break
        t0 = time.perf_counter()
        try:
            system = assemble(problem, _Assembler(x, F))
            report, kappa = _solve(system, with_kappa, problem.block_size)
        except SingularSystemError as exc:
            _attach(exc, k, trace)
            raise
        if callback is not None:
            callback(k, system, report)
        c_dx, direction = newton_step(system, report)
        x = x + c_dx * direction
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite iterate at iteration {k}", k, trace)
        F = problem.residuals(x)
        trace.records.append(
            IterationRecord(k, res, c_dx, x.size, x.size, kappa, time.perf_counter() - t0)
        )
        res = tree_norm(F)
        if not np.isfinite(res):
            raise DivergenceError(f"non-finite residual at iteration {k}", k, trace)
        if res > eps and stall(res):
            trace.stalled = True
            break
    trace.final_residual = res
    trace.converged = res <= eps
    trace.solution = x
    trace.residual = F
    return trace


def qnm_solve(
    problem: NonlinearProblem,
    x0=None,
    eps: float = 1e-8,
    tomo_cfg: TomographyConfig | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
    rng: np.random.Generator | None = None,
    with_kappa: bool = False,
    callback: Callback | None = None,
    divergence_factor: float = DIVERGENCE_FACTOR,
    stall_window: int | None = None,
) -> RunTrace:
    """Newton iteration driven by tomographically sampled step directions.

    Per iteration: assemble the scaled system from the tree, solve it,
    sample the normalized direction, step by ``||dx||_2`` along the sample,
    then recompute exactly the residual rows that read a changed variable.
    A run whose residual exceeds ``divergence_factor`` times its initial
    value stops with ``diverged=True``; ``stall_window`` works as in
    :func:`newton_solve` and marks a noise plateau with ``stalled=True``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if tomo_cfg is None:
        raise ValueError("qnm_solve needs a TomographyConfig")
    if rng is None:
        rng = np.random.default_rng(tomo_cfg.rng_seed)
    x_init = np.array(problem.initial_guess() if x0 is None else x0, dtype=float)
    tree = NormTree(x_init, problem.residuals(x_init))
    res0 = res = tree.partial_norm_f(0, 0)
    trace = RunTrace()
    stall = _StallMonitor(stall_window, res0)

    for k in range(max_iter):
        if res <= eps:
            break
        t0 = time.perf_counter()
        try:
            system = assemble(problem, tree)
            report, kappa = _solve(system, with_kappa, problem.block_size)
        except SingularSystemError as exc:
            _attach(exc, k, trace)
            raise
        if callback is not None:
            callback(k, system, report)
        c_dx, direction = newton_step(system, report)
        if c_dx == 0.0:
            break
        sampled = sample_linf(direction, tomo_cfg, rng)

        changed = sampled.support
        x_new = tree.x[changed] + c_dx * sampled.values[changed]
        if not np.all(np.isfinite(x_new)):
            raise DivergenceError(f"non-finite iterate at iteration {k}", k, trace)
        tree.set_x(changed, x_new)
        rows = problem.rows_touching(changed)
        f_new = problem.residuals(tree.x, rows)
        if not np.all(np.isfinite(f_new)):
            raise DivergenceError(f"non-finite residual at iteration {k}", k, trace)
        tree.set_f(rows, f_new)

        trace.records.append(
            IterationRecord(k, res, c_dx, int(changed.size), int(rows.size), kappa, time.perf_counter() - t0)
        )
        res = tree.partial_norm_f(0, 0)
        if res > divergence_factor * res0:
            trace.diverged = True
            break
        if res > eps and stall(res):
            trace.stalled = True
            break

    trace.final_residual = res
    trace.converged = res <= eps
    trace.solution = np.array(tree.x)
    trace.residual = np.array(tree.f)
    return trace
