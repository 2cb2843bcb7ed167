"""SDE model declarations, sampling schemes and zero-restriction hypotheses.

A model is ``dX = b(X, beta) dt + a(X, alpha) dW`` with ``X`` in R^d and
``W`` an r-dimensional Wiener process.  All model callables are *batched*:
they receive a state array of shape ``(N, d)`` and return ``(N, d)`` for the
drift and ``(N, d, r)`` for the diffusion coefficient.  Use
:func:`pointwise_model` to lift functions written for a single state vector.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    InsufficientBlocks,
    InvalidHypothesis,
    InvalidModel,
    NonFiniteModelOutput,
    TuningOutOfRange,
)

# central-difference step for model parameter derivatives when no analytic
# derivative is supplied: FD_STEP * (1 + |theta_i|)
FD_STEP = 1e-6

DriftFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
DiffusionFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _as_box(box, name):
    arr = np.asarray(box, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidModel(f"{name} must be a sequence of (lower, upper) pairs")
    if not np.all(np.isfinite(arr)):
        raise InvalidModel(f"{name} has non-finite bounds")
    if np.any(arr[:, 0] >= arr[:, 1]):
        raise InvalidModel(f"{name} has degenerate intervals (lower >= upper)")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """User-supplied diffusion model with compact parameter boxes.

    ``drift_jacobian_beta(x, beta)`` must return ``(N, d, m2)`` and
    ``diffusion_derivs_alpha(x, alpha)`` must return ``(N, m1, d, r)``.
    Either may be omitted, in which case central finite differences are used.
    """

    state_dim: int
    noise_dim: int
    drift: DriftFn
    diffusion: DiffusionFn
    alpha_box: np.ndarray
    beta_box: np.ndarray
    drift_jacobian_beta: Optional[Callable] = None
    diffusion_derivs_alpha: Optional[Callable] = None
    name: str = "custom"
    alpha_names: tuple = ()
    beta_names: tuple = ()

    def __post_init__(self):
        if self.state_dim < 1 or self.noise_dim < 1:
            raise InvalidModel("state_dim and noise_dim must be positive")
        object.__setattr__(self, "alpha_box", _as_box(self.alpha_box, "alpha_box"))
        object.__setattr__(self, "beta_box", _as_box(self.beta_box, "beta_box"))
        if not self.alpha_names:
            object.__setattr__(
                self, "alpha_names", tuple(f"alpha{i + 1}" for i in range(self.m1))
            )
        if not self.beta_names:
            object.__setattr__(
                self, "beta_names", tuple(f"beta{i + 1}" for i in range(self.m2))
            )

    @property
    def m1(self) -> int:
        return len(self.alpha_box)

    @property
    def m2(self) -> int:
        return len(self.beta_box)

    def _states(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.shape[-1] != self.state_dim:
            raise InvalidModel(
                f"state has dimension {x.shape[-1]}, model expects {self.state_dim}"
            )
        return x

    def drift_at(self, x, beta) -> np.ndarray:
        x = self._states(x)
        out = np.asarray(self.drift(x, np.asarray(beta, dtype=float)), dtype=float)
        if out.shape != x.shape:
            raise InvalidModel(f"drift returned shape {out.shape}, expected {x.shape}")
        return out

    def diffusion_at(self, x, alpha) -> np.ndarray:
        x = self._states(x)
        out = np.asarray(self.diffusion(x, np.asarray(alpha, dtype=float)), dtype=float)
        expected = (x.shape[0], self.state_dim, self.noise_dim)
        if out.shape != expected:
            raise InvalidModel(f"diffusion returned shape {out.shape}, expected {expected}")
        return out

    def c(self, x, alpha) -> np.ndarray:
        """``c(x, alpha) = a a^T`` with shape ``(N, d, d)``."""
        a = self.diffusion_at(x, alpha)
        return np.sum(a[:, :, None, :] * a[:, None, :, :], axis=-1)

    def diffusion_derivs(self, x, alpha) -> np.ndarray:
        """``d a / d alpha_i`` stacked as ``(N, m1, d, r)``."""
        x = self._states(x)
        alpha = np.asarray(alpha, dtype=float)
        if self.diffusion_derivs_alpha is not None:
            return np.asarray(self.diffusion_derivs_alpha(x, alpha), dtype=float)
        out = np.empty((x.shape[0], self.m1, self.state_dim, self.noise_dim))
        for i in range(self.m1):
            step = FD_STEP * (1.0 + abs(alpha[i]))
            up, dn = alpha.copy(), alpha.copy()
            up[i] += step
            dn[i] -= step
            out[:, i] = (self.diffusion_at(x, up) - self.diffusion_at(x, dn)) / (2 * step)
        return out

    def dc_dalpha(self, x, alpha) -> np.ndarray:
        """``d c / d alpha_i`` stacked as ``(N, m1, d, d)``."""
        a = self.diffusion_at(x, alpha)
        da = self.diffusion_derivs(x, alpha)
        half = np.sum(da[:, :, :, None, :] * a[:, None, None, :, :], axis=-1)
        return half + np.swapaxes(half, -1, -2)

    def drift_jacobian(self, x, beta) -> np.ndarray:
        """``d b / d beta`` with shape ``(N, d, m2)``."""
        x = self._states(x)
        beta = np.asarray(beta, dtype=float)
        if self.drift_jacobian_beta is not None:
            return np.asarray(self.drift_jacobian_beta(x, beta), dtype=float)
        out = np.empty((x.shape[0], self.state_dim, self.m2))
        for i in range(self.m2):
            step = FD_STEP * (1.0 + abs(beta[i]))
            up, dn = beta.copy(), beta.copy()
            up[i] += step
            dn[i] -= step
            out[:, :, i] = (self.drift_at(x, up) - self.drift_at(x, dn)) / (2 * step)
        return out

    def alpha_in_box(self, alpha, tol=0.0) -> bool:
        alpha = np.asarray(alpha, dtype=float)
        return bool(
            np.all(alpha >= self.alpha_box[:, 0] - tol)
            and np.all(alpha <= self.alpha_box[:, 1] + tol)
        )

    def beta_in_box(self, beta, tol=0.0) -> bool:
        beta = np.asarray(beta, dtype=float)
        return bool(
            np.all(beta >= self.beta_box[:, 0] - tol)
            and np.all(beta <= self.beta_box[:, 1] + tol)
        )


def pointwise_model(
    state_dim: int,
    noise_dim: int,
    drift: Callable,
    diffusion: Callable,
    alpha_box,
    beta_box,
    name: str = "custom",
) -> ModelSpec:
    """Build a :class:`ModelSpec` from functions of a single state vector.

    Convenient for quick experiments; slow for long series because every
    block is evaluated in a Python loop.
    """

    def batched_drift(x, beta):
        return np.stack([np.asarray(drift(row, beta), dtype=float).reshape(state_dim) for row in x])

    def batched_diffusion(x, alpha):
        return np.stack(
            [
                np.asarray(diffusion(row, alpha), dtype=float).reshape(state_dim, noise_dim)
                for row in x
            ]
        )

    return ModelSpec(
        state_dim=state_dim,
        noise_dim=noise_dim,
        drift=batched_drift,
        diffusion=batched_diffusion,
        alpha_box=alpha_box,
        beta_box=beta_box,
        name=name,
    )


@dataclass(frozen=True)
class SamplingScheme:
    """Observation grid and local-mean tuning.

    Only ``n``, ``h_n``, ``tau`` and ``p_n`` are stored; ``k_n``, ``delta_n``
    and ``T_n`` are always recomputed from them.
    """

    n: int
    h_n: float
    tau: float
    p_n: int

    def __post_init__(self):
        if not 1.0 < self.tau < 2.0:
            raise TuningOutOfRange(f"tau must lie in the open interval (1, 2), got {self.tau}")
        if self.h_n <= 0 or not np.isfinite(self.h_n):
            raise TuningOutOfRange(f"h_n must be positive, got {self.h_n}")
        if self.p_n < 1:
            raise TuningOutOfRange(f"p_n must be >= 1, got {self.p_n}")
        if self.k_n < 3:
            raise InsufficientBlocks(
                f"k_n = floor({self.n}/{self.p_n}) = {self.k_n} < 3 blocks"
            )

    @property
    def k_n(self) -> int:
        return self.n // self.p_n

    @property
    def delta_n(self) -> float:
        return self.p_n * self.h_n

    @property
    def T_n(self) -> float:
        return self.n * self.h_n

    @property
    def reg_coeff(self) -> float:
        """Noise weight ``3 * delta_n ** ((2 - tau) / (tau - 1))``."""
        return 3.0 * self.delta_n ** ((2.0 - self.tau) / (self.tau - 1.0))

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "h_n": self.h_n,
            "tau": self.tau,
            "p_n": self.p_n,
            "k_n": self.k_n,
            "delta_n": self.delta_n,
            "T_n": self.T_n,
        }


@dataclass(frozen=True, eq=False)
class Hypothesis:
    """Null hypothesis pinning the masked components of alpha and beta to 0."""

    alpha_zero_mask: np.ndarray
    beta_zero_mask: np.ndarray
    label: str = ""

    def __post_init__(self):
        am = np.asarray(self.alpha_zero_mask, dtype=bool).copy()
        bm = np.asarray(self.beta_zero_mask, dtype=bool).copy()
        am.setflags(write=False)
        bm.setflags(write=False)
        object.__setattr__(self, "alpha_zero_mask", am)
        object.__setattr__(self, "beta_zero_mask", bm)

    @property
    def r1(self) -> int:
        return int(self.alpha_zero_mask.sum())

    @property
    def r2(self) -> int:
        return int(self.beta_zero_mask.sum())

    @property
    def r(self) -> int:
        return self.r1 + self.r2

    def check_against(self, model: ModelSpec) -> None:
        if self.alpha_zero_mask.shape != (model.m1,) or self.beta_zero_mask.shape != (model.m2,):
            raise InvalidHypothesis(
                f"mask lengths ({len(self.alpha_zero_mask)}, {len(self.beta_zero_mask)}) "
                f"do not match model dimensions ({model.m1}, {model.m2})"
            )
        for box, mask, sym in (
            (model.alpha_box, self.alpha_zero_mask, "alpha"),
            (model.beta_box, self.beta_zero_mask, "beta"),
        ):
            for i in np.flatnonzero(mask):
                lo, hi = box[i]
                if not lo <= 0.0 <= hi:
                    raise InvalidHypothesis(
                        f"{sym}{i + 1} restricted to 0 but its box is [{lo}, {hi}]"
                    )

    def require_nontrivial(self) -> None:
        if self.r < 1:
            raise InvalidHypothesis("hypothesis restricts no component (r = 0)")

    def to_string(self) -> str:
        a = ",".join(str(i + 1) for i in np.flatnonzero(self.alpha_zero_mask))
        b = ",".join(str(i + 1) for i in np.flatnonzero(self.beta_zero_mask))
        return f"alpha:{a};beta:{b}"

    def __repr__(self):
        return f"Hypothesis({self.to_string()!r})"


_MASK_PART = re.compile(r"^\s*(alpha|beta)\s*:\s*([0-9,\s]*)$")


def parse_hypothesis(text: str, m1: int, m2: int, label: str = "") -> Hypothesis:
    """Parse mask syntax such as ``"alpha:2;beta:"`` (1-based indices).

    A missing part means no restriction on that parameter.
    """
    masks = {"alpha": np.zeros(m1, dtype=bool), "beta": np.zeros(m2, dtype=bool)}
    seen = set()
    for part in filter(None, (p.strip() for p in text.split(";"))):
        m = _MASK_PART.match(part)
        if not m:
            raise InvalidHypothesis(f"cannot parse hypothesis part {part!r}")
        sym, idx = m.groups()
        if sym in seen:
            raise InvalidHypothesis(f"{sym} given twice in {text!r}")
        seen.add(sym)
        for tok in filter(None, (t.strip() for t in idx.split(","))):
            i = int(tok)
            if not 1 <= i <= len(masks[sym]):
                raise InvalidHypothesis(f"{sym} index {i} out of range 1..{len(masks[sym])}")
            masks[sym][i - 1] = True
    return Hypothesis(masks["alpha"], masks["beta"], label=label or text)


def restrict(theta, mask) -> np.ndarray:
    """Copy of ``theta`` with masked components set to exactly 0."""
    theta = np.array(theta, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if theta.shape != mask.shape:
        raise ValueError(f"length mismatch: theta {theta.shape} vs mask {mask.shape}")
    theta[mask] = 0.0
    return theta


@dataclass
class ValidationReport:
    min_det_c: float
    argmin_state: np.ndarray
    argmin_alpha: np.ndarray
    degenerate: bool
    n_evaluations: int
    max_asymmetry: float
    min_eigenvalue: float
    notes: list = field(default_factory=list)


def _box_grid(box: np.ndarray) -> np.ndarray:
    corners = np.array(list(itertools.product(*box)), dtype=float)
    center = box.mean(axis=1)[None, :]
    return np.vstack([center, corners])


def validate_model(
    spec: ModelSpec,
    probe_points: Sequence,
    alphas: Optional[Sequence] = None,
    degenerate_tol: float = 1e-12,
) -> ValidationReport:
    """Spot-check non-degeneracy of ``c(x, alpha)`` at probe states.

    By default alpha ranges over the box center and all box corners; pass
    ``alphas`` to check specific parameter values instead.
    """
    probes = np.atleast_2d(np.asarray(probe_points, dtype=float))
    if probes.size == 0:
        raise ValueError("probe_points must be nonempty")
    alpha_set = _box_grid(spec.alpha_box) if alphas is None else np.atleast_2d(alphas)
    beta_set = _box_grid(spec.beta_box)

    for beta in beta_set:
        b = spec.drift_at(probes, beta)
        if not np.all(np.isfinite(b)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(b), axis=1))[0])
            raise NonFiniteModelOutput(
                f"drift non-finite at probe {probes[bad]} with beta={beta}", index=bad
            )

    best = (np.inf, None, None)
    max_asym = 0.0
    min_eig = np.inf
    for alpha in alpha_set:
        c = spec.c(probes, alpha)
        if not np.all(np.isfinite(c)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(c), axis=(1, 2)))[0])
            raise NonFiniteModelOutput(
                f"diffusion non-finite at probe {probes[bad]} with alpha={alpha}", index=bad
            )
        det = np.linalg.det(c)
        i = int(np.argmin(det))
        if det[i] < best[0]:
            best = (float(det[i]), probes[i].copy(), np.asarray(alpha, dtype=float).copy())
        max_asym = max(max_asym, float(np.max(np.abs(c - np.swapaxes(c, 1, 2)))))
        min_eig = min(min_eig, float(np.min(np.linalg.eigvalsh(c))))

    report = ValidationReport(
        min_det_c=best[0],
        argmin_state=best[1],
        argmin_alpha=best[2],
        degenerate=bool(best[0] <= degenerate_tol),
        n_evaluations=len(alpha_set) * len(probes),
        max_asymmetry=max_asym,
        min_eigenvalue=min_eig,
    )
    if report.degenerate:
        report.notes.append(
            f"det c = {best[0]:.3g} at x={best[1]}, alpha={best[2]}: diffusion is degenerate"
        )
    return report
