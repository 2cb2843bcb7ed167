"""Local means, tuning parameters and the noise-variance estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientBlocks, TuningOutOfRange
from .model import SamplingScheme
from .simulate import ObservationSeries


def derive_tuning(n: int, h_n: float, tau: float) -> SamplingScheme:
    """Block length ``p_n = floor(h_n^(-1/tau))`` and the derived quantities.

    >>> s = derive_tuning(10**6, 6.31e-5, 1.9)
    >>> (s.p_n, s.k_n)
    (162, 6172)
    """
    if not 1.0 < tau < 2.0:
        raise TuningOutOfRange(f"tau must lie in the open interval (1, 2), got {tau}")
    if h_n <= 0:
        raise TuningOutOfRange(f"h_n must be positive, got {h_n}")
    p_n = max(1, int(math.floor(h_n ** (-1.0 / tau))))
    if n // p_n < 3:
        raise InsufficientBlocks(f"n = {n} gives only {n // p_n} blocks of length {p_n}")
    return SamplingScheme(n=int(n), h_n=float(h_n), tau=float(tau), p_n=p_n)


@dataclass(eq=False)
class LocalMeanSeries:
    """Block means ``Ybar_j``, ``j = 0..k_n-1``, one row per block."""

    means: np.ndarray
    scheme: SamplingScheme

    @property
    def k_n(self) -> int:
        return self.means.shape[0]


@dataclass(eq=False)
class NoiseVarianceEstimate:
    lambda_hat: np.ndarray


def local_means(obs: ObservationSeries) -> LocalMeanSeries:
    """Arithmetic means over disjoint consecutive blocks of ``p_n`` observations.

    The trailing ``n + 1 - k_n p_n`` observations are dropped.
    """
    s = obs.scheme
    p, k = s.p_n, s.k_n
    if k < 3 or obs.values.shape[0] < 3 * p:
        raise InsufficientBlocks(f"need at least 3 blocks of length {p}")
    y = obs.values[: k * p]
    return LocalMeanSeries(y.reshape(k, p, -1).mean(axis=1), s)


def estimate_noise_variance(obs: ObservationSeries) -> NoiseVarianceEstimate:
    """``(1 / 2n) sum_i (Y_{i+1} - Y_i)(Y_{i+1} - Y_i)^T`` over all raw increments."""
    y = obs.values
    n = y.shape[0] - 1
    if n < 1:
        raise InsufficientBlocks("need at least two observations")
    inc = np.diff(y, axis=0)
    lam = np.einsum("ni,nj->ij", inc, inc) / (2.0 * n)
    return NoiseVarianceEstimate(0.5 * (lam + lam.T))
