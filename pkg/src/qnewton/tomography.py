"""Classical simulation of l-infinity vector-state tomography.

Measuring ``M`` copies of ``|v>`` in the computational basis gives counts
``n_i ~ Multinomial(M, v_i^2)``; the estimate is
``sign(v_i) * sqrt(n_i / M)`` renormalized to unit length.  With
``M = ceil(C ln N / eps_s^2)`` the max-norm error is at most ``eps_s``
with high probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SIGN_MODES",
    "CHANNELS",
    "TomographyConfig",
    "SampledVector",
    "shots_for",
    "sample_linf",
]

SIGN_MODES = ("exact-sign", "two-pass")
# "identity" passes v through untouched; "clip" zeroes |v_i| < eps_s (no sampling)
CHANNELS = ("multinomial", "identity", "clip")

_UNIT_RTOL = 1e-10


@dataclass(frozen=True)
class TomographyConfig:
    eps_s: float
    shot_constant: float = 36.0
    sign_mode: str = "exact-sign"
    rng_seed: int = 0
    channel: str = "multinomial"

    def __post_init__(self):
        if not self.eps_s > 0:
            raise ValueError(f"eps_s must be positive, got {self.eps_s}")
        if not self.shot_constant > 0:
            raise ValueError("shot_constant must be positive")
        if self.sign_mode not in SIGN_MODES:
            raise ValueError(f"sign_mode must be one of {SIGN_MODES}")
        if self.channel not in CHANNELS:
            raise ValueError(f"channel must be one of {CHANNELS}")


@dataclass
class SampledVector:
    values: np.ndarray
    support_size: int
    shots: int

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.values)


def shots_for(N: int, cfg: TomographyConfig) -> int:
    """``ceil(C ln N / eps_s^2)``."""
    if N < 2:
        raise ValueError(f"shots_for needs N >= 2, got {N}")
    return max(1, math.ceil(cfg.shot_constant * math.log(N) / cfg.eps_s**2))


def _check_unit(v: np.ndarray) -> float:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("cannot sample the zero vector")
    if abs(norm - 1.0) > _UNIT_RTOL:
        raise ValueError(f"input must be a unit vector, got norm {norm!r}")
    return norm


def sample_linf(v, cfg: TomographyConfig, rng: np.random.Generator | None = None) -> SampledVector:
    """Draw the sampled unit vector for state ``v``.

    ``rng`` defaults to a generator seeded from ``cfg.rng_seed``.
    """
    v = np.asarray(v, dtype=float).ravel()
    _check_unit(v)
    N = v.size
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)

    if cfg.channel == "identity":
        return SampledVector(values=v.copy(), support_size=int(np.count_nonzero(v)), shots=0)
    if cfg.channel == "clip":
        out = np.where(np.abs(v) >= cfg.eps_s, v, 0.0)
        if not out.any():
            out[np.argmax(np.abs(v))] = np.sign(v[np.argmax(np.abs(v))])
        out /= np.linalg.norm(out)
        return SampledVector(values=out, support_size=int(np.count_nonzero(out)), shots=0)

    M = shots_for(max(N, 2), cfg)
    p = v * v
    p /= p.sum()
    counts = rng.multinomial(M, p)
    mags = np.sqrt(counts / M)
    signs = np.sign(v)
    if cfg.sign_mode == "two-pass":
        # weak components get their sign wrong with probability decaying in counts
        weak = (np.abs(v) < cfg.eps_s) & (counts > 0)
        flip = weak & (rng.random(N) < 0.5 * np.exp(-counts / 2.0))
        signs = np.where(flip, -signs, signs)
    out = signs * mags
    out /= np.linalg.norm(out)
    return SampledVector(values=out, support_size=int(np.count_nonzero(counts)), shots=M)
