"""Euler-Maruyama path generation and additive observation noise.

Random streams come from Philox generators keyed by a
:class:`numpy.random.SeedSequence`, so a Monte Carlo replicate can be
reproduced from ``(master_seed, replicate_index)`` alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DimensionMismatch, NonFiniteModelOutput, ValidationError
from .model import ModelSpec, SamplingScheme

SeedLike = Union[int, np.random.SeedSequence]

# stream ids inside one replicate
WIENER_STREAM = 0
NOISE_STREAM = 1

# time steps drawn and integrated per chunk; bounds the normal-draw buffer
_CHUNK = 8192


def seed_sequence(seed: SeedLike, *key: int) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        if not key:
            return seed
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + key)
    if seed is None:
        raise ValidationError("an explicit seed is required")
    return np.random.SeedSequence(int(seed), spawn_key=key)


def make_rng(seed: SeedLike, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *key)))


def replicate_seed(master_seed: int, index: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(index), int(stream)))


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Observation noise ``Lambda^{1/2} eps`` with i.i.d. standard ``eps``."""

    lam: np.ndarray
    distribution: str = "gaussian-standard"

    def __post_init__(self):
        lam = np.atleast_2d(np.asarray(self.lam, dtype=float))
        if lam.shape[0] != lam.shape[1]:
            raise ValidationError(f"Lambda must be square, got shape {lam.shape}")
        if np.max(np.abs(lam - lam.T), initial=0.0) > 1e-12:
            raise ValidationError("Lambda must be symmetric")
        if np.min(np.linalg.eigvalsh(lam)) < -1e-12:
            raise ValidationError("Lambda must be positive semi-definite")
        if self.distribution != "gaussian-standard":
            raise ValidationError(f"unsupported noise distribution {self.distribution!r}")
        lam = 0.5 * (lam + lam.T)
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    @classmethod
    def isotropic(cls, value: float, dim: int) -> "NoiseSpec":
        return cls(value * np.eye(dim))

    @property
    def sqrt(self) -> np.ndarray:
        w, v = np.linalg.eigh(self.lam)
        w = np.clip(w, 0.0, None)
        return (v * np.sqrt(w)) @ v.T


@dataclass(eq=False)
class ObservationSeries:
    """Noisy record ``Y_{i h_n}``, ``i = 0..n``, one row per observation."""

    values: np.ndarray
    scheme: SamplingScheme
    latent: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != self.scheme.n + 1:
            raise DimensionMismatch(
                f"{values.shape[0]} rows but scheme expects n + 1 = {self.scheme.n + 1}"
            )
        if not np.all(np.isfinite(values)):
            raise DimensionMismatch("observation values must be finite")
        self.values = values
        if self.latent is not None:
            latent = np.asarray(self.latent, dtype=float)
            if latent.ndim == 1:
                latent = latent[:, None]
            if latent.shape != values.shape:
                raise DimensionMismatch("latent path shape differs from observations")
            self.latent = latent

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def _check_step(x, b, a, d, r):
    if b.shape != x.shape:
        raise ValidationError(f"drift returned shape {b.shape}, expected {x.shape}")
    if a.shape != (x.shape[0], d, r):
        raise ValidationError(f"diffusion returned shape {a.shape}, expected {(x.shape[0], d, r)}")


def euler_maruyama_batch(
    spec: ModelSpec,
    alpha,
    beta,
    x0,
    scheme: SamplingScheme,
    seeds: Sequence[SeedLike],
    substeps: int = 1,
) -> np.ndarray:
    """Simulate one path per seed, all advanced together.

    Returns an array of shape ``(n + 1, B, d)``.  Each path only depends on
    its own seed: replicate ``b`` is bitwise identical whatever else shares
    the batch, as long as the model is built from elementwise arithmetic.
    """
    if substeps < 1:
        raise ValidationError("substeps must be >= 1")
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    d, r = spec.state_dim, spec.noise_dim
    rngs = [make_rng(s) for s in seeds]
    B = len(rngs)
    n = scheme.n
    dt = scheme.h_n / substeps
    sqdt = np.sqrt(dt)

    x = np.broadcast_to(np.asarray(x0, dtype=float).reshape(-1), (B, d)).copy()
    if x.shape != (B, d):
        raise DimensionMismatch(f"x0 must have {d} components")
    _check_step(x, spec.drift(x, beta), spec.diffusion(x, alpha), d, r)

    path = np.empty((n + 1, B, d))
    path[0] = x
    drift, diffusion = spec.drift, spec.diffusion
    done = 0
    while done < n:
        m = min(_CHUNK, n - done)
        dw = np.stack([g.standard_normal((m * substeps, r)) for g in rngs], axis=1)
        dw *= sqdt
        for t in range(m):
            for s in range(substeps):
                w = dw[t * substeps + s]
                a = diffusion(x, alpha)
                x = x + drift(x, beta) * dt
                for k in range(r):
                    x = x + a[:, :, k] * w[:, k, None]
            path[done + t + 1] = x
        chunk = path[done + 1 : done + m + 1]
        if not np.all(np.isfinite(chunk)):
            bad_t, bad_b = np.argwhere(~np.all(np.isfinite(chunk), axis=2))[0]
            index = done + 1 + int(bad_t)
            raise NonFiniteModelOutput(
                f"path diverged at index {index} (replicate {int(bad_b)})",
                index=index,
                replicate=int(bad_b),
            )
        done += m
    return path


def euler_maruyama(
    spec: ModelSpec,
    alpha,
    beta,
    x0,
    scheme: SamplingScheme,
    seed: SeedLike,
    substeps: int = 1,
) -> np.ndarray:
    """Latent path ``X_{i h_n}``, ``i = 0..n``, as an ``(n + 1, d)`` array."""
    return euler_maruyama_batch(spec, alpha, beta, x0, scheme, [seed], substeps)[:, 0, :].copy()


def contaminate(
    latent, noise: NoiseSpec, scheme: SamplingScheme, seed: SeedLike, keep_latent: bool = True
) -> ObservationSeries:
    """``Y_i = X_i + Lambda^{1/2} eps_i`` with standard normal ``eps_i``."""
    latent = np.asarray(latent, dtype=float)
    if latent.ndim == 1:
        latent = latent[:, None]
    if not np.all(np.isfinite(latent)):
        raise NonFiniteModelOutput("latent path contains non-finite values")
    d = latent.shape[1]
    if noise.lam.shape != (d, d):
        raise DimensionMismatch(f"Lambda is {noise.lam.shape}, state dimension is {d}")
    eps = make_rng(seed).standard_normal(latent.shape)
    values = latent + eps @ noise.sqrt
    return ObservationSeries(values, scheme, latent.copy() if keep_latent else None)


def simulate_observations(
    spec: ModelSpec,
    alpha,
    beta,
    x0,
    noise: NoiseSpec,
    scheme: SamplingScheme,
    seed: SeedLike,
    substeps: int = 1,
) -> ObservationSeries:
    """Simulate and contaminate using the two streams derived from ``seed``."""
    latent = euler_maruyama(
        spec, alpha, beta, x0, scheme, seed_sequence(seed, WIENER_STREAM), substeps
    )
    return contaminate(latent, noise, scheme, seed_sequence(seed, NOISE_STREAM))
