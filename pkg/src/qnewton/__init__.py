"""Classical emulation of a sampled-step Newton solver for sparse nonlinear systems."""

from .jacobian import ScaledSystem, SingularSystemError, assemble
from .linsolve import cg_solve, estimate_kappa, lu_solve
from .norm_tree import NormTree
from .problem import BeamProblem, DiffusionProblem, FunctionProblem, NonlinearProblem, make_problem
from .qnm import DivergenceError, IterationRecord, RunTrace, newton_solve, qnm_solve
from .tomography import SampledVector, TomographyConfig, sample_linf, shots_for

__all__ = [
    "BeamProblem",
    "DiffusionProblem",
    "DivergenceError",
    "FunctionProblem",
    "IterationRecord",
    "NonlinearProblem",
    "NormTree",
    "RunTrace",
    "SampledVector",
    "ScaledSystem",
    "SingularSystemError",
    "TomographyConfig",
    "assemble",
    "cg_solve",
    "estimate_kappa",
    "lu_solve",
    "make_problem",
    "newton_solve",
    "qnm_solve",
    "sample_linf",
    "shots_for",
]

__version__ = "0.1.0"
