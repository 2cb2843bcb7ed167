"""Likelihood-ratio, Rao and Wald statistics and chi-square p-values."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, special

from .errors import NoisyDiffError, SingularNormalizer
from .estimate import FitResult, OptimizerConfig, fit_context
from .likelihood import QuasiLikContext
from .model import Hypothesis, ModelSpec
from .simulate import ObservationSeries

KINDS = ("lrt", "rao", "wald")

# statistics below -CLAMP_TOL * (1 + |stat|) are numerical trouble, not noise
CLAMP_TOL = 1e-8
P_FLOOR = 1e-16

# Wald normalizer for alpha: k (a_hat - a_tilde)' (-scale/k d2 l1) (a_hat - a_tilde).
# With the score variance equal to 9/8 of the Hessian limit, only 8/9 gives a
# chi-square limit; 9/8 inflates the statistic by 81/64.
WALD_ALPHA_SCALE = 8.0 / 9.0


def chi2_cdf(x: float, dof: int) -> float:
    """``P(dof/2, x/2)``, the regularized lower incomplete gamma function."""
    if dof < 1 or int(dof) != dof:
        raise ValueError(f"dof must be a positive integer, got {dof}")
    if np.isnan(x):
        raise ValueError("x is NaN")
    if x <= 0:
        return 0.0
    return float(special.gammainc(0.5 * dof, 0.5 * x))


def chi2_sf(x: float, dof: int) -> float:
    """Upper tail, computed directly so small p-values keep their precision."""
    if dof < 1 or int(dof) != dof:
        raise ValueError(f"dof must be a positive integer, got {dof}")
    if x <= 0:
        return 1.0
    return float(special.gammaincc(0.5 * dof, 0.5 * x))


def chi2_quantile(p: float, dof: int) -> float:
    """Inverse of :func:`chi2_cdf` by bracketed root finding."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if dof < 1 or int(dof) != dof:
        raise ValueError(f"dof must be a positive integer, got {dof}")
    hi = max(1.0, 2.0 * dof)
    while chi2_cdf(hi, dof) < p:
        hi *= 2.0
    return float(
        optimize.brentq(lambda x: chi2_cdf(x, dof) - p, 0.0, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
    )


def critical_value(level: float, dof: int) -> float:
    """Upper ``level`` point of chi-square(dof)."""
    return chi2_quantile(1.0 - level, dof)


def _clamp(value, flags, name):
    if value < 0:
        flags.append({"statistic": name, "raw": float(value)})
        return 0.0
    return float(value)


def lrt_statistics(fit: FitResult):
    """``T1 = 16/9 (l1(alpha_hat) - l1(alpha_tilde))``, ``T2 = 2 (l2(beta_hat) - l2(beta_tilde))``."""
    hyp = fit.hypothesis
    t1 = 16.0 / 9.0 * (fit.l1_at_hat - fit.l1_at_tilde) if hyp.r1 else 0.0
    t2 = 2.0 * (fit.l2_at_hat - fit.l2_at_tilde) if hyp.r2 else 0.0
    return t1, t2


def _quad_inv(g, M, which):
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise SingularNormalizer(
            f"{which} Hessian normalizer is not positive definite; quasi-likelihood is flat"
        ) from None
    z = np.linalg.solve(L, g)
    return float(z @ z)


def rao_statistics(ctx: QuasiLikContext, fit: FitResult):
    """Score at the restricted estimate, normalized by the Hessian at the full one."""
    hyp = fit.hypothesis
    k, T = ctx.k_n, ctx.T_n
    r1 = r2 = 0.0
    if hyp.r1:
        g = ctx.grad_l1(fit.alpha_tilde) / np.sqrt(k)
        M = -9.0 / (8.0 * k) * ctx.hess_l1(fit.alpha_hat)
        r1 = _quad_inv(g, M, "alpha")
    if hyp.r2:
        g = ctx.grad_l2(fit.beta_tilde, fit.alpha_hat) / np.sqrt(T)
        M = -ctx.hess_l2(fit.beta_hat, fit.alpha_hat) / T
        r2 = _quad_inv(g, M, "beta")
    return r1, r2


def wald_statistics(ctx: QuasiLikContext, fit: FitResult, alpha_scale: float = WALD_ALPHA_SCALE):
    """Quadratic form in ``theta_hat - theta_tilde`` with the full-fit Hessian.

    ``alpha_scale=9/8`` reproduces the Rao normalizer in the alpha part; the
    resulting statistic is asymptotically ``81/64`` times chi-square.
    """
    hyp = fit.hypothesis
    k, T = ctx.k_n, ctx.T_n
    w1 = w2 = 0.0
    if hyp.r1:
        da = fit.alpha_hat - fit.alpha_tilde
        M = -alpha_scale / k * ctx.hess_l1(fit.alpha_hat)
        w1 = float(k * da @ M @ da)
    if hyp.r2:
        db = fit.beta_hat - fit.beta_tilde
        M = -ctx.hess_l2(fit.beta_hat, fit.alpha_hat) / T
        w2 = float(T * db @ M @ db)
    return w1, w2


_STATISTICS = {
    "lrt": lambda ctx, fit: lrt_statistics(fit),
    "rao": rao_statistics,
    "wald": wald_statistics,
}


@dataclass(eq=False)
class TestReport:
    kind: str
    stat_alpha: float
    stat_beta: float
    dof: int
    fit: FitResult
    clamped: list = field(default_factory=list)

    __test__ = False  # not a pytest class

    @property
    def stat_total(self) -> float:
        return self.stat_alpha + self.stat_beta

    @property
    def p_value(self) -> float:
        return chi2_sf(self.stat_total, self.dof)

    @property
    def p_value_display(self) -> str:
        p = self.p_value
        return "< 1e-16" if p < P_FLOOR else f"{p:.4g}"

    def to_dict(self, include_fit: bool = True) -> dict:
        out = {
            "kind": self.kind,
            "hypothesis": self.fit.hypothesis.to_string(),
            "stat_alpha": self.stat_alpha,
            "stat_beta": self.stat_beta,
            "stat_total": self.stat_total,
            "dof": self.dof,
            "p_value": self.p_value,
            "p_value_display": self.p_value_display,
            "clamped": self.clamped,
        }
        if include_fit:
            out["fit"] = self.fit.to_dict()
        return out


def report_from_fit(ctx: QuasiLikContext, fit: FitResult, kind: str) -> TestReport:
    if kind not in _STATISTICS:
        raise ValueError(f"unknown statistic kind {kind!r}; expected one of {KINDS}")
    s1, s2 = _STATISTICS[kind](ctx, fit)
    flags: list = []
    for name, v in (("alpha", s1), ("beta", s2)):
        if v < -CLAMP_TOL * (1.0 + abs(v)):
            flags.append({"statistic": name, "raw": float(v), "beyond_tolerance": True})
    s1 = _clamp(s1, flags, "alpha")
    s2 = _clamp(s2, flags, "beta")
    return TestReport(kind, s1, s2, fit.hypothesis.r, fit, flags)


def run_tests(
    obs: ObservationSeries,
    model: ModelSpec,
    hyp: Hypothesis,
    kinds=KINDS,
    opt_cfg: Optional[OptimizerConfig] = None,
):
    """One fit, several statistic families.  Returns ``{kind: TestReport}``."""
    hyp.require_nontrivial()
    stage = "preprocess"
    try:
        ctx = QuasiLikContext.from_observations(obs, model)
        stage = "fit"
        fit = fit_context(ctx, hyp, opt_cfg)
        stage = "statistic"
        return {kind: report_from_fit(ctx, fit, kind) for kind in kinds}
    except NoisyDiffError as exc:
        if exc.stage is None:
            exc.stage = stage
        raise


def run_test(
    obs: ObservationSeries,
    model: ModelSpec,
    hyp: Hypothesis,
    kind: str = "lrt",
    opt_cfg: Optional[OptimizerConfig] = None,
) -> TestReport:
    return run_tests(obs, model, hyp, (kind,), opt_cfg)[kind]
