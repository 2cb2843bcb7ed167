"""Built-in models and a small name registry.

``paper-1d``::

    dX = (beta1 X + beta2) dt + (alpha1 + alpha2 X^2 / (1 + X^2)) dW

``paper-2d``: linear drift ``B x + (beta3, beta6)`` with
``B = [[beta1, beta2], [beta4, beta5]]`` and symmetric diffusion
coefficient::

    a11 = alpha1 + alpha2 s1 + alpha3 s2
    a22 = alpha4 + alpha5 s1 + alpha6 s2
    a12 = a21 = sqrt(alpha1 alpha4) alpha7

where ``s_i = x_i^2 / (1 + x_i^2)``.

The parameter boxes are our choice; they keep the null value 0 of every
restrictable component in the interior and keep ``alpha1``/``alpha4`` away
from zero so the square root stays smooth.
"""

from __future__ import annotations

from typing import Callable, Dict

import numpy as np

from .errors import InvalidModel
from .model import ModelSpec

PAPER_1D_ALPHA_BOX = [(0.1, 10.0), (-2.0, 10.0)]
PAPER_1D_BETA_BOX = [(-10.0, 10.0), (-10.0, 10.0)]

PAPER_2D_ALPHA_BOX = [
    (0.1, 20.0),
    (-2.0, 20.0),
    (-2.0, 20.0),
    (0.1, 20.0),
    (-2.0, 20.0),
    (-2.0, 20.0),
    (-0.95, 0.95),
]
PAPER_2D_BETA_BOX = [(-10.0, 10.0)] * 6


def _sat(x):
    x2 = x * x
    return x2 / (1.0 + x2)


def _drift_1d(x, beta):
    return beta[0] * x + beta[1]


def _drift_jac_1d(x, beta):
    out = np.empty((x.shape[0], 1, 2))
    out[:, 0, 0] = x[:, 0]
    out[:, 0, 1] = 1.0
    return out


def _diffusion_1d(x, alpha):
    return (alpha[0] + alpha[1] * _sat(x))[:, :, None]


def _diffusion_derivs_1d(x, alpha):
    out = np.empty((x.shape[0], 2, 1, 1))
    out[:, 0, 0, 0] = 1.0
    out[:, 1, 0, 0] = _sat(x[:, 0])
    return out


def paper_1d() -> ModelSpec:
    return ModelSpec(
        state_dim=1,
        noise_dim=1,
        drift=_drift_1d,
        diffusion=_diffusion_1d,
        alpha_box=PAPER_1D_ALPHA_BOX,
        beta_box=PAPER_1D_BETA_BOX,
        drift_jacobian_beta=_drift_jac_1d,
        diffusion_derivs_alpha=_diffusion_derivs_1d,
        name="paper-1d",
    )


def _drift_2d(x, beta):
    x1, x2 = x[:, 0], x[:, 1]
    out = np.empty_like(x)
    out[:, 0] = beta[0] * x1 + beta[1] * x2 + beta[2]
    out[:, 1] = beta[3] * x1 + beta[4] * x2 + beta[5]
    return out


def _drift_jac_2d(x, beta):
    out = np.zeros((x.shape[0], 2, 6))
    out[:, 0, 0] = x[:, 0]
    out[:, 0, 1] = x[:, 1]
    out[:, 0, 2] = 1.0
    out[:, 1, 3] = x[:, 0]
    out[:, 1, 4] = x[:, 1]
    out[:, 1, 5] = 1.0
    return out


def _diffusion_2d(x, alpha):
    s1, s2 = _sat(x[:, 0]), _sat(x[:, 1])
    out = np.empty((x.shape[0], 2, 2))
    out[:, 0, 0] = alpha[0] + alpha[1] * s1 + alpha[2] * s2
    out[:, 1, 1] = alpha[3] + alpha[4] * s1 + alpha[5] * s2
    off = np.sqrt(alpha[0] * alpha[3]) * alpha[6]
    out[:, 0, 1] = off
    out[:, 1, 0] = off
    return out


def _diffusion_derivs_2d(x, alpha):
    s1, s2 = _sat(x[:, 0]), _sat(x[:, 1])
    out = np.zeros((x.shape[0], 7, 2, 2))
    root = np.sqrt(alpha[0] * alpha[3])
    out[:, 0, 0, 0] = 1.0
    out[:, 1, 0, 0] = s1
    out[:, 2, 0, 0] = s2
    out[:, 3, 1, 1] = 1.0
    out[:, 4, 1, 1] = s1
    out[:, 5, 1, 1] = s2
    d_off = np.array([0.5 * alpha[3] * alpha[6] / root, 0.5 * alpha[0] * alpha[6] / root, root])
    for i, v in zip((0, 3, 6), d_off):
        out[:, i, 0, 1] = v
        out[:, i, 1, 0] = v
    return out


def paper_2d() -> ModelSpec:
    return ModelSpec(
        state_dim=2,
        noise_dim=2,
        drift=_drift_2d,
        diffusion=_diffusion_2d,
        alpha_box=PAPER_2D_ALPHA_BOX,
        beta_box=PAPER_2D_BETA_BOX,
        drift_jacobian_beta=_drift_jac_2d,
        diffusion_derivs_alpha=_diffusion_derivs_2d,
        name="paper-2d",
    )


_REGISTRY: Dict[str, Callable[[], ModelSpec]] = {
    "paper-1d": paper_1d,
    "paper-2d": paper_2d,
}


def register_model(name: str, factory: Callable[[], ModelSpec]) -> None:
    """Make a custom model addressable by name (CLI configs, studies).

    Registration is per-process; with multiprocess studies register at
    import time of a module the workers also import.
    """
    _REGISTRY[name] = factory


def get_model(name: str) -> ModelSpec:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise InvalidModel(f"unknown model {name!r}; known: {sorted(_REGISTRY)}") from None


def model_names():
    return sorted(_REGISTRY)
