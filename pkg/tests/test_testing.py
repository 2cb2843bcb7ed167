import types

import numpy as np
import pytest

from noisydiff.errors import InvalidHypothesis, SingularNormalizer
from noisydiff.estimate import FitResult, OptimizerConfig
from noisydiff.model import Hypothesis, parse_hypothesis
from noisydiff.preprocess import derive_tuning
from noisydiff.simulate import NoiseSpec, simulate_observations
from noisydiff.testing import (
    chi2_cdf,
    chi2_quantile,
    chi2_sf,
    critical_value,
    lrt_statistics,
    rao_statistics,
    report_from_fit,
    run_test,
    run_tests,
    wald_statistics,
)

import oracles


def toy_fit(alpha_hat, alpha_tilde, r1=1, l1=(0.0, 0.0)):
    hyp = Hypothesis(np.array([True] * r1 + [False] * (len(alpha_hat) - r1)), np.zeros(1, bool))
    return FitResult(
        alpha_hat=np.asarray(alpha_hat, float),
        alpha_tilde=np.asarray(alpha_tilde, float),
        beta_hat=np.zeros(1),
        beta_tilde=np.zeros(1),
        lambda_hat=np.zeros((1, 1)),
        l1_at_hat=l1[0],
        l1_at_tilde=l1[1],
        l2_at_hat=0.0,
        l2_at_tilde=0.0,
        hypothesis=hyp,
    )


def quadratic_ctx(k, t, curvature=1.0):
    # l1(alpha) = -k c (alpha - t)^2 / 2
    return types.SimpleNamespace(
        k_n=k,
        T_n=1.0,
        grad_l1=lambda a: -k * curvature * (np.asarray(a) - t),
        hess_l1=lambda a: np.array([[-k * curvature]]),
    )


@pytest.mark.parametrize("dof", range(1, 11))
@pytest.mark.parametrize("p", [0.9, 0.95, 0.99, 0.999])
def test_quantiles_match_oracle(dof, p):
    assert chi2_quantile(p, dof) == pytest.approx(oracles.chi2_quantile(p, dof), abs=1e-4)


def test_known_critical_values():
    assert critical_value(0.05, 1) == pytest.approx(3.84146, abs=1e-4)
    assert critical_value(0.05, 5) == pytest.approx(11.0705, abs=1e-3)


@pytest.mark.parametrize("dof", [1, 2, 5, 10, 40])
def test_cdf_inverts_quantile(dof):
    for p in (1e-6, 0.01, 0.5, 0.9, 0.999999):
        assert abs(chi2_cdf(chi2_quantile(p, dof), dof) - p) <= 1e-10


@pytest.mark.parametrize("dof", [1, 3, 7])
def test_cdf_against_oracle_and_monotone(dof):
    xs = np.linspace(0.0, 40.0, 81)
    vals = [chi2_cdf(x, dof) for x in xs]
    assert vals[0] == 0.0
    assert np.all(np.diff(vals) >= 0)
    for x, v in zip(xs[1:], vals[1:]):
        assert v == pytest.approx(oracles.chi2_cdf(x, dof), abs=1e-12)
        assert v + chi2_sf(x, dof) == pytest.approx(1.0, abs=1e-14)


def test_chi2_domain_errors():
    with pytest.raises(ValueError):
        chi2_quantile(1.0, 1)
    with pytest.raises(ValueError):
        chi2_cdf(1.0, 0)
    with pytest.raises(ValueError):
        chi2_cdf(float("nan"), 1)


def test_lrt_scalings_and_convention():
    fit = toy_fit([1.0], [0.0], l1=(-10.0, -12.25))
    t1, t2 = lrt_statistics(fit)
    assert t1 == pytest.approx(16.0 / 9.0 * 2.25)
    assert t2 == 0.0  # no beta restriction
    assert lrt_statistics(toy_fit([1.0], [1.0], l1=(-3.0, -3.0)))[0] == 0.0


def test_rao_quadratic_toy():
    k, t = 400, 0.07
    r1, r2 = rao_statistics(quadratic_ctx(k, t), toy_fit([t], [0.0]))
    assert r1 == pytest.approx(8.0 / 9.0 * k * t * t, rel=1e-12)
    assert r2 == 0.0


def test_rao_flat_likelihood_raises():
    ctx = quadratic_ctx(100, 0.1, curvature=0.0)
    with pytest.raises(SingularNormalizer):
        rao_statistics(ctx, toy_fit([0.1], [0.0]))


def test_wald_scalar_toy():
    k, c, d = 250, 1.7, 0.05
    ctx = quadratic_ctx(k, d, curvature=c)
    fit = toy_fit([d], [0.0])
    assert wald_statistics(ctx, fit, alpha_scale=9 / 8)[0] == pytest.approx(9 / 8 * c * k * d * d)
    assert wald_statistics(ctx, fit)[0] == pytest.approx(8 / 9 * c * k * d * d)
    assert wald_statistics(ctx, toy_fit([d], [d]))[0] == 0.0


def test_negative_statistic_is_clamped_and_flagged():
    fit = toy_fit([1.0], [0.0], l1=(-5.0, -5.0 + 1e-6))
    rep = report_from_fit(None, fit, "lrt")
    assert rep.stat_alpha == 0.0
    assert rep.clamped and rep.clamped[0]["beyond_tolerance"]
    assert rep.p_value == 1.0


def test_tiny_p_value_display():
    fit = toy_fit([1.0], [0.0], l1=(0.0, -200.0))
    rep = report_from_fit(None, fit, "lrt")
    assert rep.p_value < 1e-16
    assert rep.p_value_display == "< 1e-16"
    assert rep.to_dict(include_fit=False)["dof"] == 1


def test_report_invariants(obs_1d, model_1d):
    reps = run_tests(obs_1d, model_1d, parse_hypothesis("alpha:2;beta:2", 2, 2))
    for kind, rep in reps.items():
        assert rep.kind == kind
        assert rep.dof == 2
        assert rep.stat_total == rep.stat_alpha + rep.stat_beta
        assert rep.stat_alpha >= 0 and rep.stat_beta >= 0
        assert rep.p_value == pytest.approx(1 - chi2_cdf(rep.stat_total, 2), abs=1e-15)
    # all three share one fit
    assert reps["lrt"].fit is reps["wald"].fit


def test_trivial_hypothesis_rejected(obs_1d, model_1d):
    with pytest.raises(InvalidHypothesis):
        run_test(obs_1d, model_1d, parse_hypothesis("alpha:;beta:", 2, 2))


def test_errors_tagged_with_stage(obs_1d, model_1d):
    bad = OptimizerConfig(n_starts=1, max_iter=1, grad_tol=1e-300)
    with pytest.raises(Exception) as info:
        run_test(obs_1d, model_1d, parse_hypothesis("alpha:2", 2, 2), opt_cfg=bad)
    assert getattr(info.value, "stage", None) == "fit"


def test_unknown_kind(obs_1d, model_1d):
    with pytest.raises(ValueError):
        run_test(obs_1d, model_1d, parse_hypothesis("alpha:2", 2, 2), kind="score")


def test_ou_hypothesis_rejected_under_alternative(model_2d):
    obs = simulate_observations(
        model_2d,
        [4, 1, 1, 4, 1, 1, -0.2],
        [-1, -0.1, 1, -0.1, -1, 1],
        [0.0, 0.0],
        NoiseSpec.isotropic(1e-3, 2),
        derive_tuning(100_000, 1e-3, 1.9),
        seed=104,
    )
    rep = run_test(obs, model_2d, parse_hypothesis("alpha:2,3,5,6", 7, 6),
                   opt_cfg=OptimizerConfig(n_starts=4))
    assert rep.p_value < 1e-3
