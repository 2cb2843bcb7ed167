"""Quasi-likelihoods of the local-mean increments and their derivatives.

With ``D_j = Ybar_{j+1} - Ybar_j``, ``x_j = Ybar_{j-1}`` and the regularized
diffusion matrix ``C_j(alpha) = c(x_j, alpha) + 3 Delta^((2-tau)/(tau-1)) Lambda``
the two contrasts are, for ``j = 1..k_n-2``,

    l1(alpha)        = -1/2 sum_j [ 3/(2 Delta) D_j' C_j^-1 D_j + log det C_j ]
    l2(beta | alpha) = -1/2 sum_j (D_j - Delta b(x_j, beta))' (Delta C_j)^-1 (D_j - Delta b(x_j, beta))

Gradients are analytic given the model's parameter derivatives; Hessians
are central differences of the gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SingularDiffusionMatrix
from .model import ModelSpec
from .preprocess import (
    LocalMeanSeries,
    NoiseVarianceEstimate,
    estimate_noise_variance,
    local_means,
)
from .simulate import ObservationSeries

# Hessian = central differences of the gradient, step HESS_STEP * (1 + |theta_i|)
HESS_STEP = 1e-4

_CACHE_SIZE = 4


def inv_logdet(C: np.ndarray, offset: int = 1):
    """Inverses and log-determinants of a stack of SPD matrices ``(N, d, d)``.

    Raises :class:`SingularDiffusionMatrix` naming the first failing block;
    ``offset`` converts array positions to the block index reported.
    """
    d = C.shape[-1]
    if d == 1:
        c = C[:, 0, 0]
        ok = c > 0
        if not np.all(ok):
            _singular(ok, offset)
        return (1.0 / c)[:, None, None], np.log(c)
    if d == 2:
        a, b, e = C[:, 0, 0], C[:, 0, 1], C[:, 1, 1]
        det = a * e - b * b
        ok = (a > 0) & (det > 0)
        if not np.all(ok):
            _singular(ok, offset)
        inv = np.empty_like(C)
        inv[:, 0, 0] = e / det
        inv[:, 1, 1] = a / det
        inv[:, 0, 1] = -b / det
        inv[:, 1, 0] = -b / det
        return inv, np.log(det)
    try:
        L = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        ok = np.array([_is_spd(m) for m in C])
        _singular(ok, offset)
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1)
    return np.linalg.inv(C), logdet


def _is_spd(m):
    try:
        np.linalg.cholesky(m)
        return True
    except np.linalg.LinAlgError:
        return False


def _singular(ok, offset):
    j = int(np.flatnonzero(~ok)[0]) + offset
    raise SingularDiffusionMatrix(
        f"regularized diffusion matrix is not positive definite at block j={j}", block=j
    )


@dataclass(eq=False)
class QuasiLikContext:
    """Everything the contrasts need: local means, noise estimate, model."""

    means: LocalMeanSeries
    lambda_hat: NoiseVarianceEstimate
    model: ModelSpec
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        ybar = np.asarray(self.means.means, dtype=float)
        if ybar.shape[1] != self.model.state_dim:
            raise ValueError(
                f"means have dimension {ybar.shape[1]}, model expects {self.model.state_dim}"
            )
        if ybar.shape[0] < 3:
            raise ValueError("need k_n >= 3 local means")
        self.states = ybar[:-2]
        self.increments = ybar[2:] - ybar[1:-1]
        lam = np.asarray(self.lambda_hat.lambda_hat, dtype=float)
        self.reg_matrix = self.reg_coeff * lam

    @classmethod
    def from_observations(cls, obs: ObservationSeries, model: ModelSpec) -> "QuasiLikContext":
        return cls(local_means(obs), estimate_noise_variance(obs), model)

    @property
    def scheme(self):
        return self.means.scheme

    @property
    def delta(self) -> float:
        return self.scheme.delta_n

    @property
    def k_n(self) -> int:
        return self.means.k_n

    @property
    def T_n(self) -> float:
        return self.scheme.T_n

    @property
    def reg_coeff(self) -> float:
        return self.scheme.reg_coeff

    def c_n_tau(self, x, alpha) -> np.ndarray:
        """``c(x, alpha) + reg_coeff * Lambda_hat`` for states ``x`` (N, d)."""
        return self.model.c(x, alpha) + self.reg_matrix

    def weights(self, alpha):
        """``(C_j^-1, log det C_j)`` over all summands, cached per alpha."""
        alpha = np.asarray(alpha, dtype=float)
        key = alpha.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        out = inv_logdet(self.c_n_tau(self.states, alpha))
        if len(self._cache) >= _CACHE_SIZE:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = out
        return out

    # -- L1 ---------------------------------------------------------------

    def l1(self, alpha) -> float:
        inv, logdet = self.weights(alpha)
        quad = _quad(inv, self.increments)
        return float(-0.5 * np.sum(1.5 / self.delta * quad + logdet))

    def grad_l1(self, alpha) -> np.ndarray:
        # d/dalpha_m of each summand is <dc_m, C^-1 - 3/(2 Delta) u u'> with
        # u = C^-1 D; for symmetric W, <dc_m, W> = 2 <da_m, W a>.
        alpha = np.asarray(alpha, dtype=float)
        inv, _ = self.weights(alpha)
        u = np.sum(inv * self.increments[:, None, :], axis=-1)
        W = inv - 1.5 / self.delta * (u[:, :, None] * u[:, None, :])
        a = self.model.diffusion_at(self.states, alpha)
        Wa = np.sum(W[:, :, :, None] * a[:, None, :, :], axis=2)
        da = self.model.diffusion_derivs(self.states, alpha)
        return -np.tensordot(da, Wa, axes=([0, 2, 3], [0, 1, 2]))

    def hess_l1(self, alpha) -> np.ndarray:
        return _fd_hessian(self.grad_l1, alpha)

    # -- L2 ---------------------------------------------------------------

    def _residuals(self, beta):
        return self.increments - self.delta * self.model.drift_at(self.states, beta)

    def l2(self, beta, alpha_plugin) -> float:
        inv, _ = self.weights(alpha_plugin)
        quad = _quad(inv, self._residuals(beta))
        return float(-0.5 * np.sum(quad) / self.delta)

    def grad_l2(self, beta, alpha_plugin) -> np.ndarray:
        inv, _ = self.weights(alpha_plugin)
        v = np.sum(inv * self._residuals(beta)[:, None, :], axis=-1)
        J = self.model.drift_jacobian(self.states, beta)
        return np.tensordot(J, v, axes=([0, 1], [0, 1]))

    def hess_l2(self, beta, alpha_plugin) -> np.ndarray:
        return _fd_hessian(lambda b: self.grad_l2(b, alpha_plugin), beta)


def _quad(inv, D):
    """``D_n' inv_n D_n`` for every row."""
    return np.sum(inv * (D[:, :, None] * D[:, None, :]), axis=(1, 2))


def _fd_hessian(grad, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    m = theta.size
    H = np.empty((m, m))
    for i in range(m):
        step = HESS_STEP * (1.0 + abs(theta[i]))
        up, dn = theta.copy(), theta.copy()
        up[i] += step
        dn[i] -= step
        H[:, i] = (grad(up) - grad(dn)) / (2.0 * step)
    return 0.5 * (H + H.T)


# functional aliases mirroring the method names


def c_n_tau(ctx: QuasiLikContext, x, alpha) -> np.ndarray:
    return ctx.c_n_tau(np.atleast_2d(x), alpha)


def l1(ctx: QuasiLikContext, alpha) -> float:
    return ctx.l1(alpha)


def l2(ctx: QuasiLikContext, beta, alpha_plugin) -> float:
    return ctx.l2(beta, alpha_plugin)


def grad_l1(ctx: QuasiLikContext, alpha) -> np.ndarray:
    return ctx.grad_l1(alpha)


def hess_l1(ctx: QuasiLikContext, alpha) -> np.ndarray:
    return ctx.hess_l1(alpha)


def grad_l2(ctx: QuasiLikContext, beta, alpha_plugin) -> np.ndarray:
    return ctx.grad_l2(beta, alpha_plugin)


def hess_l2(ctx: QuasiLikContext, beta, alpha_plugin) -> np.ndarray:
    return ctx.hess_l2(beta, alpha_plugin)
