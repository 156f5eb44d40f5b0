"""Cost model for one QNM iteration.

Covers the QLSS normalization ``alpha``, the solver success probability
``p = ||A^-1 |b>||^2 / alpha^2``, reconstruction of the step norm from
``(alpha, C_b, p, ||F'||_max)``, and unit-constant surrogates of the
asymptotic query and time counts.

Conventions: ``log N`` is ``log2 N`` (register width); every other logarithm
is natural.  ``poly(log(d kappa / eps))`` is taken to the first power.  The
counts are order-of-magnitude surrogates, not runtime predictions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, log_ndtr

from .jacobian import ScaledSystem

__all__ = [
    "GAUSSIAN_SWITCHOVER",
    "CostInputs",
    "CostReport",
    "alpha_parameters",
    "binomial_tails",
    "alpha_from_c",
    "alpha",
    "success_prob",
    "c_delta_x",
    "query_counts",
    "time_estimates",
    "estimate",
]

# above this c the binomial tail is replaced by a continuity-corrected normal tail
GAUSSIAN_SWITCHOVER = 100_000


@dataclass(frozen=True)
class CostInputs:
    N: int
    d: int
    kappa: float
    eps: float
    eps_s: float

    def __post_init__(self):
        if self.N < 2 or self.d < 1:
            raise ValueError("need N >= 2 and d >= 1")
        if not self.kappa >= 1:
            raise ValueError(f"kappa must be >= 1, got {self.kappa}")
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not self.eps_s > 0:
            raise ValueError(f"eps_s must be positive, got {self.eps_s}")


@dataclass(frozen=True)
class CostReport:
    alpha: float
    queries_MF: float
    queries_Of1: float
    queries_Of2: float
    t_q: float
    t_c: float

    @property
    def crossover_ratio(self) -> float:
        """``t_q / t_c``; below 1 the sampled method is cheaper."""
        return self.t_q / self.t_c


def alpha_parameters(kappa: float, eps: float) -> tuple[int, int]:
    """Integer ``c = ceil(kappa^2 ln(kappa/eps))`` and ``j0 = floor(sqrt(c ln(4c/eps)))``."""
    if not kappa >= 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    c_real = kappa**2 * math.log(kappa / eps)
    if c_real < 1:
        raise ValueError(f"kappa^2 ln(kappa/eps) = {c_real:.3g} < 1")
    c = math.ceil(c_real)
    j0 = math.floor(math.sqrt(c * math.log(4 * c / eps)))
    return c, j0


def binomial_tails(c: int, j_max: int | None = None) -> np.ndarray:
    """``T[j] = sum_{i=j+1}^{c} C(2c, c+i) / 4^c`` for ``j = 0..j_max``.

    Exact summation in log space for ``c <= GAUSSIAN_SWITCHOVER``; a
    continuity-corrected normal tail above it.  ``T[j] = 0`` for ``j >= c``.
    """
    c = int(c)
    if c < 1:
        raise ValueError("c must be >= 1")
    if j_max is None:
        j_max = c - 1
    js = np.arange(j_max + 1)
    out = np.zeros(js.size)
    live = js < c
    if c <= GAUSSIAN_SWITCHOVER:
        i = np.arange(c + 1)
        log_pmf = gammaln(2 * c + 1) - gammaln(c + i + 1) - gammaln(c - i + 1) - 2 * c * math.log(2)
        # log_tail[k] = log sum_{i >= k} pmf_i
        log_tail = np.logaddexp.accumulate(log_pmf[::-1])[::-1]
        out[live] = np.exp(log_tail[js[live] + 1])
    else:
        z = (js[live] + 0.5) / math.sqrt(c / 2.0)
        out[live] = np.exp(log_ndtr(-z))
    return out


def alpha_from_c(c: int, j0: int, d: float = 1.0) -> float:
    """``(4/d) sum_{j=0}^{j0} T[j]`` with ``T`` from :func:`binomial_tails`."""
    if j0 < 0:
        raise ValueError("j0 must be >= 0")
    return 4.0 / d * float(binomial_tails(c, j0).sum())


def alpha(kappa: float, eps: float, d: float = 1.0) -> float:
    c, j0 = alpha_parameters(kappa, eps)
    return alpha_from_c(c, j0, d)


def success_prob(system: ScaledSystem, delta_x, alpha: float) -> float:
    """``||A^-1 |b>||^2 / alpha^2``.

    ``delta_x`` solves ``A y = -b / C_b``, so its norm is ``||A^-1 |b>||``.
    ``system`` is accepted for interface symmetry and sanity checking.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    y = np.asarray(delta_x, dtype=float)
    if y.shape != (system.A.shape[0],):
        raise ValueError("delta_x does not match the system dimension")
    p = float(y @ y) / alpha**2
    if not math.isfinite(p):
        raise FloatingPointError("non-finite success probability")
    return p


def c_delta_x(alpha: float, C_b: float, p: float, f_max: float) -> float:
    """Unscaled step norm ``alpha C_b sqrt(p) / ||F'||_max``."""
    return alpha * C_b * math.sqrt(p) / f_max


def _lg(N):
    return math.log2(N)


def query_counts(inputs: CostInputs) -> dict[str, float]:
    N, d, k, e, es = inputs.N, inputs.d, inputs.kappa, inputs.eps, inputs.eps_s
    core = d * k * _lg(N) / es**2 * math.log(d * k / e)
    return {
        "queries_MF": (d + _lg(N)) * core,
        "queries_Of1": d * core,
        "queries_Of2": core,
    }


def time_estimates(inputs: CostInputs) -> tuple[float, float, float]:
    """``(t_q, t_c, t_q / t_c)`` for one iteration."""
    N, d, k, e, es = inputs.N, inputs.d, inputs.kappa, inputs.eps, inputs.eps_s
    t_q = _lg(N) ** 3 / es**2 * d * k * math.log(d * k / e) * (_lg(N) + d)
    t_c = N * d * k * math.log(1.0 / e)
    return t_q, t_c, t_q / t_c


def estimate(inputs: CostInputs) -> CostReport:
    q = query_counts(inputs)
    t_q, t_c, _ = time_estimates(inputs)
    return CostReport(alpha=alpha(inputs.kappa, inputs.eps, inputs.d), t_q=t_q, t_c=t_c, **q)
