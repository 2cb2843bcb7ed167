"""Adaptive quasi-maximum-likelihood fits over full and restricted boxes.

Order of the stages: noise variance, then alpha on the full box and on the
null slice, then beta on both, with beta always conditioned on the
unrestricted alpha estimate.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .errors import NumericalError, OptimizerDidNotConverge
from .likelihood import QuasiLikContext
from .model import Hypothesis, ModelSpec
from .simulate import ObservationSeries

logger = logging.getLogger(__name__)

TIE_TOL = 1e-10


@dataclass(frozen=True)
class OptimizerConfig:
    n_starts: int = 8
    grad_tol: float = 1e-6  # relative: |proj. grad| <= grad_tol * (1 + |value|)
    max_iter: int = 500
    ftol: float = 1e-13
    seed: int = 0

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "OptimizerConfig":
        return cls(**(d or {}))


def _projected_grad_norm(x, g, lo, hi):
    g = np.array(g, dtype=float)
    # ascent direction blocked by an active bound does not count
    g[(x <= lo) & (g < 0)] = 0.0
    g[(x >= hi) & (g > 0)] = 0.0
    return float(np.linalg.norm(g))


def start_points(box: np.ndarray, n_starts: int, seed: int) -> np.ndarray:
    """Box center followed by scrambled Halton points mapped into the box."""
    box = np.asarray(box, dtype=float)
    lo, hi = box[:, 0], box[:, 1]
    pts = [0.5 * (lo + hi)]
    if n_starts > 1:
        u = qmc.Halton(d=len(box), scramble=True, seed=seed).random(n_starts - 1)
        pts.extend(lo + u * (hi - lo))
    return np.array(pts)


def maximize(
    objective: Callable[[np.ndarray], float],
    box,
    opt_cfg: Optional[OptimizerConfig] = None,
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    extra_starts=(),
):
    """Multi-start L-BFGS-B ascent on a box.

    Returns ``(argmax, value, diagnostics)``.  Without ``grad`` the gradient
    is approximated by scipy's finite differences.  ``extra_starts`` are tried
    after the configured ones.
    """
    cfg = opt_cfg or OptimizerConfig()
    box = np.atleast_2d(np.asarray(box, dtype=float))
    if box.size == 0:
        return np.empty(0), float(objective(np.empty(0))), {"n_starts": 0, "converged": True}
    lo, hi = box[:, 0], box[:, 1]
    if np.any(lo > hi):
        raise ValueError("empty box")

    def neg(z):
        return -objective(z)

    neg_grad = None if grad is None else (lambda z: -np.asarray(grad(z), dtype=float))
    starts = list(start_points(box, cfg.n_starts, cfg.seed))
    starts += [np.clip(np.asarray(s, dtype=float), lo, hi) for s in extra_starts]

    best = None
    records = []
    for i, x0 in enumerate(starts):
        try:
            scale = 1.0 + abs(objective(x0))
            res = optimize.minimize(
                neg,
                x0,
                jac=neg_grad,
                method="L-BFGS-B",
                bounds=list(zip(lo, hi)),
                options={
                    "maxiter": cfg.max_iter,
                    "ftol": cfg.ftol,
                    "gtol": cfg.grad_tol * scale,
                },
            )
        except (NumericalError, FloatingPointError) as exc:
            records.append({"start": i, "failed": str(exc)})
            continue
        x = np.clip(res.x, lo, hi)
        value = -float(res.fun)
        if not np.isfinite(value):
            records.append({"start": i, "failed": "non-finite objective"})
            continue
        g = grad(x) if grad is not None else -res.jac
        gnorm = _projected_grad_norm(x, g, lo, hi)
        converged = gnorm <= cfg.grad_tol * (1.0 + abs(value)) or bool(res.success)
        records.append(
            {
                "start": i,
                "value": value,
                "iterations": int(res.nit),
                "grad_norm": gnorm,
                "converged": converged,
            }
        )
        if not converged:
            continue
        if best is None or value > best[1] + TIE_TOL * max(1.0, abs(best[1])):
            best = (x, value, i, gnorm)

    if best is None:
        raise OptimizerDidNotConverge(
            f"all {len(starts)} starts failed to converge", records=records
        )
    x, value, i, gnorm = best
    diag = {
        "n_starts": len(starts),
        "best_start": i,
        "iterations": sum(r.get("iterations", 0) for r in records),
        "restarts": len(starts) - 1,
        "n_failed": sum(1 for r in records if not r.get("converged", False)),
        "converged": True,
        "grad_norm": gnorm,
    }
    return x, value, diag


def _embed(z, free, m):
    theta = np.zeros(m)
    theta[free] = z
    return theta


def _maximize_masked(objective, grad, box, mask, cfg, extra_starts=()):
    """Maximize over the coordinates not pinned to zero by ``mask``."""
    m = len(box)
    free = np.flatnonzero(~np.asarray(mask, dtype=bool))
    f = lambda z: objective(_embed(z, free, m))
    g = lambda z: np.asarray(grad(_embed(z, free, m)))[free]
    extra = [np.asarray(s)[free] for s in extra_starts]
    z, value, diag = maximize(f, box[free], cfg, g, extra)
    return _embed(z, free, m), value, diag


@dataclass(eq=False)
class FitResult:
    alpha_hat: np.ndarray
    alpha_tilde: np.ndarray
    beta_hat: np.ndarray
    beta_tilde: np.ndarray
    lambda_hat: np.ndarray
    l1_at_hat: float
    l1_at_tilde: float
    l2_at_hat: float
    l2_at_tilde: float
    hypothesis: Hypothesis
    optimizer_diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "alpha_hat": self.alpha_hat.tolist(),
            "alpha_tilde": self.alpha_tilde.tolist(),
            "beta_hat": self.beta_hat.tolist(),
            "beta_tilde": self.beta_tilde.tolist(),
            "lambda_hat": np.asarray(self.lambda_hat).tolist(),
            "l1_at_hat": self.l1_at_hat,
            "l1_at_tilde": self.l1_at_tilde,
            "l2_at_hat": self.l2_at_hat,
            "l2_at_tilde": self.l2_at_tilde,
            "hypothesis": self.hypothesis.to_string(),
            "optimizer_diagnostics": self.optimizer_diagnostics,
        }


def _full_and_restricted(objective, grad, box, mask, cfg, tag, diags, full=None):
    m = len(box)
    if full is None:
        full, v_full, d_full = _maximize_masked(objective, grad, box, np.zeros(m, bool), cfg)
    else:
        full, v_full, d_full = full
    if not np.any(mask):
        # restricted space is the full space
        diags[f"{tag}_full"] = d_full
        diags[f"{tag}_restricted"] = dict(d_full, shared_with_full=True)
        return full, v_full, full.copy(), v_full
    restricted, v_res, d_res = _maximize_masked(
        objective, grad, box, mask, cfg, extra_starts=[np.where(mask, 0.0, full)]
    )
    if v_res > v_full:
        # full-space search missed the basin the restricted one found
        full2, v2, d2 = _maximize_masked(
            objective, grad, box, np.zeros(m, bool), cfg, extra_starts=[restricted]
        )
        if v2 > v_full:
            full, v_full = full2, v2
            d_full = dict(d2, polished_from_restricted=True)
    diags[f"{tag}_full"] = d_full
    diags[f"{tag}_restricted"] = d_res
    return full, v_full, restricted, v_res


def _reuse(full: Optional[FitResult], part: str):
    if full is None:
        return None
    d = full.optimizer_diagnostics.get(f"{part}_full", {})
    if part == "alpha":
        return full.alpha_hat, full.l1_at_hat, dict(d, reused=True)
    return full.beta_hat, full.l2_at_hat, dict(d, reused=True)


def fit_context(
    ctx: QuasiLikContext,
    hyp: Hypothesis,
    opt_cfg: Optional[OptimizerConfig] = None,
    full: Optional[FitResult] = None,
) -> FitResult:
    """Run the alpha and beta stages on a prepared context.

    ``full`` is an earlier fit on the same context whose unrestricted
    estimates are reused; only the restricted problems are solved again
    (and the full one polished if a restricted optimum beats it).
    """
    cfg = opt_cfg or OptimizerConfig()
    model = ctx.model
    hyp.check_against(model)
    diags: dict = {}

    alpha_hat, l1_hat, alpha_tilde, l1_tilde = _full_and_restricted(
        ctx.l1, ctx.grad_l1, model.alpha_box, hyp.alpha_zero_mask, cfg, "alpha", diags,
        _reuse(full, "alpha"),
    )
    beta_full = _reuse(full, "beta") if full is not None and np.array_equal(
        alpha_hat, full.alpha_hat
    ) else None
    beta_hat, l2_hat, beta_tilde, l2_tilde = _full_and_restricted(
        lambda b: ctx.l2(b, alpha_hat),
        lambda b: ctx.grad_l2(b, alpha_hat),
        model.beta_box,
        hyp.beta_zero_mask,
        cfg,
        "beta",
        diags,
        beta_full,
    )
    return FitResult(
        alpha_hat=alpha_hat,
        alpha_tilde=alpha_tilde,
        beta_hat=beta_hat,
        beta_tilde=beta_tilde,
        lambda_hat=np.asarray(ctx.lambda_hat.lambda_hat),
        l1_at_hat=l1_hat,
        l1_at_tilde=l1_tilde,
        l2_at_hat=l2_hat,
        l2_at_tilde=l2_tilde,
        hypothesis=hyp,
        optimizer_diagnostics=diags,
    )


def fit_full(ctx: QuasiLikContext, opt_cfg: Optional[OptimizerConfig] = None) -> FitResult:
    """Unrestricted fit only; the tilde fields repeat the full estimates."""
    m = ctx.model
    return fit_context(ctx, Hypothesis(np.zeros(m.m1, bool), np.zeros(m.m2, bool)), opt_cfg)


def fit_adaptive(
    obs: ObservationSeries,
    model: ModelSpec,
    hyp: Hypothesis,
    opt_cfg: Optional[OptimizerConfig] = None,
) -> FitResult:
    """Noise variance, then alpha (full and null), then beta given alpha-hat."""
    ctx = QuasiLikContext.from_observations(obs, model)
    return fit_context(ctx, hyp, opt_cfg)
