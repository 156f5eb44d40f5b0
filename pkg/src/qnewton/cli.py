"""Command-line harness: ``run``, ``sweep`` and ``estimate``.

Exit codes: 0 converged, 2 not converged (max-iter, divergence, stall),
1 numerical error, 64 usage error, 74 I/O error.

CSV output is UTF-8 with LF line endings and shortest round-trip floats.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .jacobian import SingularSystemError
from .problem import make_problem
from .qnm import DivergenceError, RunTrace, newton_solve, qnm_solve
from .resource import CostInputs, estimate
from .tomography import CHANNELS, SIGN_MODES, TomographyConfig

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2
EXIT_USAGE = 64
EXIT_IO = 74

RUN_HEADER = ("iter", "residual_norm", "c_delta_x", "n_x", "n_f", "wall_ms")
SWEEP_HEADER = ("problem", "eps_s", "rep", "seed", "converged", "iters", "final_residual")

_MASK64 = (1 << 64) - 1


class UsageError(Exception):
    pass


def splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def cell_seed(base_seed: int, eps_index: int, rep: int) -> int:
    """``base_seed XOR splitmix64((eps_index << 32) | rep)``."""
    return (base_seed ^ splitmix64(((eps_index & 0xFFFFFFFF) << 32) | (rep & 0xFFFFFFFF))) & _MASK64


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@dataclass(frozen=True)
class RunConfig:
    problem: str = "diffusion"
    n1: int = 200
    n2: int = 200
    eps: float = 1e-8
    eps_s: float | None = None
    mode: str = "qnm"
    seed: int = 0
    max_iter: int = 200
    typo_fix: bool = True
    initial_guess: str | None = None
    stall_window: int | None = None
    shot_constant: float = 36.0
    sign_mode: str = "exact-sign"
    channel: str = "multinomial"

    def validate(self) -> None:
        if self.n1 < 4 or self.n2 < 4:
            raise UsageError("--n1 and --n2 must be at least 4")
        if not self.eps > 0:
            raise UsageError("--eps must be positive")
        if self.max_iter < 1:
            raise UsageError("--max-iter must be at least 1")
        if self.mode == "qnm" and (self.eps_s is None or not self.eps_s > 0):
            raise UsageError("qnm mode needs a positive --eps-s")
        if not 0 <= self.seed <= _MASK64:
            raise UsageError("--seed must fit in 64 bits")


def solve(cfg: RunConfig) -> RunTrace:
    problem = make_problem(cfg.problem, cfg.n1, cfg.n2, typo_fix=cfg.typo_fix)
    x0 = problem.initial_guess() if cfg.initial_guess is None else problem.initial_guess(cfg.initial_guess)
    if cfg.mode == "newton":
        return newton_solve(problem, x0, eps=cfg.eps, max_iter=cfg.max_iter, stall_window=cfg.stall_window)
    tomo = TomographyConfig(
        cfg.eps_s,
        shot_constant=cfg.shot_constant,
        sign_mode=cfg.sign_mode,
        rng_seed=cfg.seed,
        channel=cfg.channel,
    )
    return qnm_solve(
        problem,
        x0,
        eps=cfg.eps,
        tomo_cfg=tomo,
        max_iter=cfg.max_iter,
        rng=np.random.default_rng(cfg.seed),
        stall_window=cfg.stall_window,
    )


def run_csv(trace: RunTrace, timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUN_HEADER)
    for r in trace.records:
        ms = r.wall_time * 1e3 if timing else 0.0
        w.writerow([fmt(v) for v in (r.iter, r.residual_norm, r.c_delta_x, r.n_x, r.n_f, ms)])
    return buf.getvalue()


@dataclass(frozen=True)
class SweepRow:
    problem: str
    eps_s: float
    rep: int
    seed: int
    converged: bool
    iters: int
    final_residual: float

    def cells(self) -> list[str]:
        return [fmt(getattr(self, k)) for k in SWEEP_HEADER]


def plateau_converged(trace: RunTrace, eps_s: float, factor: float) -> bool:
    """Converged to ``eps`` or settled below ``factor * eps_s`` without diverging."""
    if trace.diverged or not math.isfinite(trace.final_residual):
        return False
    return trace.converged or trace.final_residual < factor * eps_s


def sweep_cell(args: tuple[RunConfig, int, float]) -> SweepRow:
    cfg, rep, factor = args
    try:
        trace = solve(cfg)
        ok, iters, final = plateau_converged(trace, cfg.eps_s, factor), trace.iterations, trace.final_residual
    except (SingularSystemError, DivergenceError, FloatingPointError) as exc:
        partial = getattr(exc, "trace", None)
        iters = partial.iterations if partial is not None else 0
        ok, final = False, math.nan
    return SweepRow(cfg.problem, cfg.eps_s, rep, cfg.seed, ok, iters, final)


def sweep_cells(base: RunConfig, eps_s_list, repeats: int, factor: float = 0.1) -> list[tuple[RunConfig, int, float]]:
    cells = []
    for i, es in enumerate(eps_s_list):
        for rep in range(repeats):
            cfg = RunConfig(**{**base.__dict__, "eps_s": es, "mode": "qnm", "seed": cell_seed(base.seed, i, rep)})
            cells.append((cfg, rep, factor))
    return cells


def run_sweep(base: RunConfig, eps_s_list, repeats: int, jobs: int = 1, factor: float = 0.1) -> list[SweepRow]:
    """Rows in ``(eps_s index, rep)`` order whatever the completion order."""
    cells = sweep_cells(base, eps_s_list, repeats, factor)
    if jobs <= 1:
        return [sweep_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(sweep_cell, cells))


def estimate_table(inputs: CostInputs) -> str:
    rep = estimate(inputs)
    rows = [
        ("alpha", rep.alpha),
        ("queries_MF", rep.queries_MF),
        ("queries_Of1", rep.queries_Of1),
        ("queries_Of2", rep.queries_Of2),
        ("t_q", rep.t_q),
        ("t_c", rep.t_c),
        ("t_q/t_c", rep.crossover_ratio),
    ]
    width = max(len(k) for k, _ in rows) + 2
    lines = [f"{'quantity':<{width}}value"] + [f"{k:<{width}}{fmt(v)}" for k, v in rows]
    return "\n".join(lines) + "\n"


# -- argument parsing -------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals or any(not v > 0 for v in vals):
        raise argparse.ArgumentTypeError("--eps-s-list needs positive values")
    return vals


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", choices=("diffusion", "beam"), default="diffusion")
    p.add_argument("--n1", type=int, default=200)
    p.add_argument("--n2", type=int, default=200)
    p.add_argument("--eps", type=float, default=1e-8, help="residual cutoff")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--typo-fix", action=argparse.BooleanOptionalAction, default=True,
                   help="diffusion source uses sin(e^{2t}(x^2-1)) (default) instead of sin(e^{2t}(e^2-1))")
    p.add_argument("--initial-guess", default=None, help="starting iterate kind (problem default if omitted)")
    p.add_argument("--stall-window", type=int, default=None)
    p.add_argument("--shot-constant", type=float, default=36.0)
    p.add_argument("--sign-mode", choices=SIGN_MODES, default="exact-sign")
    p.add_argument("--channel", choices=CHANNELS, default="multinomial")
    p.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qnewton", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="one solve, per-iteration CSV")
    _solver_flags(run)
    run.add_argument("--mode", choices=("qnm", "newton"), default="qnm")
    run.add_argument("--eps-s", type=float, default=None)
    run.add_argument("--no-timing", action="store_true", help="write wall_ms as 0 for byte-reproducible output")

    sw = sub.add_parser("sweep", help="repeated QNM runs over an eps_s grid")
    _solver_flags(sw)
    sw.add_argument("--eps-s-list", type=_float_list, required=True)
    sw.add_argument("--repeats", type=int, default=20)
    sw.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    sw.add_argument("--plateau-factor", type=float, default=0.1,
                    help="a run counts as converged when its final residual is below this times eps_s")

    est = sub.add_parser("estimate", help="cost-model table")
    est.add_argument("--n", type=int, required=True)
    est.add_argument("--d", type=int, required=True)
    est.add_argument("--kappa", type=float, required=True)
    est.add_argument("--eps", type=float, required=True)
    est.add_argument("--eps-s", type=float, required=True)
    return parser


def _config(ns, **extra) -> RunConfig:
    cfg = RunConfig(
        problem=ns.problem,
        n1=ns.n1,
        n2=ns.n2,
        eps=ns.eps,
        seed=ns.seed,
        max_iter=ns.max_iter,
        typo_fix=ns.typo_fix,
        initial_guess=ns.initial_guess,
        stall_window=ns.stall_window,
        shot_constant=ns.shot_constant,
        sign_mode=ns.sign_mode,
        channel=ns.channel,
        **extra,
    )
    cfg.validate()
    if cfg.stall_window is not None and cfg.stall_window < 1:
        raise UsageError("--stall-window must be positive")
    if cfg.initial_guess is not None:
        kinds = type(make_problem(cfg.problem, 4, 4)).INITIAL_GUESSES
        if cfg.initial_guess not in kinds:
            raise UsageError(f"--initial-guess must be one of {kinds} for {cfg.problem}")
    return cfg


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _cmd_run(ns) -> int:
    cfg = _config(ns, mode=ns.mode, eps_s=ns.eps_s)
    try:
        trace = solve(cfg)
    except (SingularSystemError, DivergenceError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _write(ns.out, run_csv(trace, timing=not ns.no_timing))
    status = "converged" if trace.converged else ("diverged" if trace.diverged else "not-converged")
    print(f"# {status} final_residual={fmt(trace.final_residual)} iterations={trace.iterations}")
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


def _cmd_sweep(ns) -> int:
    if ns.repeats < 1:
        raise UsageError("--repeats must be at least 1")
    if ns.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    base = _config(ns, mode="qnm", eps_s=ns.eps_s_list[0])
    t0 = time.perf_counter()
    rows = run_sweep(base, ns.eps_s_list, ns.repeats, jobs=ns.jobs, factor=ns.plateau_factor)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for row in rows:
        w.writerow(row.cells())
    _write(ns.out, buf.getvalue())
    n_ok = sum(r.converged for r in rows)
    print(f"# {n_ok}/{len(rows)} converged in {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return EXIT_OK if n_ok == len(rows) else EXIT_NOT_CONVERGED


def _cmd_estimate(ns) -> int:
    try:
        inputs = CostInputs(N=ns.n, d=ns.d, kappa=ns.kappa, eps=ns.eps, eps_s=ns.eps_s)
        table = estimate_table(inputs)
    except ValueError as exc:
        raise UsageError(str(exc))
    sys.stdout.write(table)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    handler = {"run": _cmd_run, "sweep": _cmd_sweep, "estimate": _cmd_estimate}[ns.command]
    try:
        return handler(ns)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"qnewton {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"qnewton: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
