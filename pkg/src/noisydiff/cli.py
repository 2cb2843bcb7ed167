"""Command line interface: ``noisydiff <subcommand>``.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 data error.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .analysis import BATTERIES, analyze
from .dataio import IngestSpec, ingest_csv, read_sidecar, write_series_csv
from .errors import DataError, NoisyDiffError, ParseError, ValidationError
from .estimate import OptimizerConfig, fit_context, fit_full
from .experiment import StudyConfig, run_study, write_study
from .likelihood import QuasiLikContext
from .model import parse_hypothesis
from .preprocess import derive_tuning, estimate_noise_variance, local_means
from .presets import get_model, model_names
from .simulate import NoiseSpec, simulate_observations
from .testing import KINDS, chi2_cdf, report_from_fit

SCHEMA_VERSION = 1


def _floats(text: str):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}") from None


def _emit(payload: dict, output):
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    text = json.dumps(payload, indent=2)
    if output:
        Path(output).write_text(text + "\n")
    else:
        click.echo(text)


def _columns(text):
    if text is None:
        return None
    return [int(t) if t.strip().isdigit() else t.strip() for t in text.split(",")]


def _ingest_spec(path, h, time_unit, tau, columns, missing, state_dim=None) -> IngestSpec:
    if not Path(path).is_file():
        raise ParseError(f"file not found: {path}")
    meta = read_sidecar(path) or {}
    scheme = meta.get("scheme", {})
    if h is None:
        if "h_n" not in scheme:
            raise ValidationError(f"{path}: pass --h (no sidecar metadata with h_n found)")
        h, time_unit = scheme["h_n"], 1.0
    if tau is None:
        tau = scheme.get("tau", 1.9)
    cols = _columns(columns) if columns is not None else meta.get("value_columns")
    return IngestSpec(
        path=path,
        h_n=h,
        time_unit=time_unit,
        tau=tau,
        columns=cols,
        missing=missing,
        state_dim=state_dim,
    )


def data_options(f):
    f = click.option("--missing", type=click.Choice(["reject", "ffill"]), default="reject",
                     show_default=True, help="Policy for missing values.")(f)
    f = click.option("--columns", default=None,
                     help="Comma-separated value columns (header names or 0-based positions).")(f)
    f = click.option("--tau", type=float, default=None, help="Tuning exponent in (1, 2).")(f)
    f = click.option("--time-unit", type=float, default=1.0, show_default=True,
                     help="Length of one model time unit in the units of --h.")(f)
    f = click.option("--h", "h", type=float, default=None,
                     help="Spacing between rows (default: from the sidecar).")(f)
    f = click.argument("input", type=click.Path(dir_okay=False))(f)
    return f


def optimizer_options(f):
    f = click.option("--n-starts", type=int, default=8, show_default=True)(f)
    f = click.option("--seed", type=int, default=0, show_default=True,
                     help="Seed of the optimizer start points.")(f)
    f = click.option("--output", "-o", type=click.Path(dir_okay=False), default=None,
                     help="Write JSON here instead of stdout.")(f)
    return f


@click.group()
@click.version_option(__version__)
def cli():
    """Inference for diffusions observed with additive noise."""


@cli.command()
@click.option("--model", type=click.Choice(model_names()), required=True)
@click.option("--alpha", required=True, help="Comma-separated diffusion parameter.")
@click.option("--beta", required=True, help="Comma-separated drift parameter.")
@click.option("--lambda", "lam", type=float, required=True, help="Isotropic noise variance.")
@click.option("--x0", default=None, help="Initial state (default: zeros).")
@click.option("--n", type=int, required=True)
@click.option("--h", "h", type=float, required=True)
@click.option("--tau", type=float, default=1.9, show_default=True)
@click.option("--substeps", type=int, default=1, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="CSV to write.")
@click.option("--latent/--no-latent", default=False,
              help="Also write the latent path as x1..xd columns.")
def simulate(model, alpha, beta, lam, x0, n, h, tau, substeps, seed, out, latent):
    """Simulate a noisy series and write it as CSV plus a JSON sidecar."""
    spec = get_model(model)
    x0 = _floats(x0) if x0 else [0.0] * spec.state_dim
    scheme = derive_tuning(n, h, tau)
    obs = simulate_observations(
        spec, _floats(alpha), _floats(beta), x0, NoiseSpec.isotropic(lam, spec.state_dim),
        scheme, seed, substeps,
    )
    meta = {
        "model": model,
        "seed": seed,
        "alpha_star": _floats(alpha),
        "beta_star": _floats(beta),
        "lambda_star": lam,
        "x0": list(x0),
        "substeps": substeps,
        "seeding": {"wiener": f"SeedSequence({seed}, spawn_key=(0,))",
                    "noise": f"SeedSequence({seed}, spawn_key=(1,))"},
    }
    write_series_csv(obs, out, latent=latent, metadata=meta)
    _emit({"command": "simulate", "model": model, "seed": seed, "out": out,
           "scheme": scheme.as_dict()}, None)


@cli.command()
@data_options
@click.option("--dump-means", type=click.Path(dir_okay=False), default=None,
              help="Write the local means as CSV.")
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None)
def preprocess(input, h, time_unit, tau, columns, missing, dump_means, output):
    """Tuning, noise variance estimate and (optionally) local means."""
    obs, rep = ingest_csv(_ingest_spec(input, h, time_unit, tau, columns, missing), True)
    means = local_means(obs)
    if dump_means:
        with open(dump_means, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["j"] + [f"ybar{i + 1}" for i in range(obs.dim)])
            for j, row in enumerate(means.means):
                w.writerow([j] + ["%.17g" % v for v in row])
    _emit({
        "command": "preprocess",
        "scheme": obs.scheme.as_dict(),
        "lambda_hat": estimate_noise_variance(obs).lambda_hat.tolist(),
        "rows": rep.n_rows,
        "forward_filled": rep.n_filled,
    }, output)


def _context(input, h, time_unit, tau, columns, missing, model):
    spec = get_model(model)
    obs = ingest_csv(_ingest_spec(input, h, time_unit, tau, columns, missing, spec.state_dim))
    return spec, QuasiLikContext.from_observations(obs, spec)


@cli.command()
@data_options
@click.option("--model", type=click.Choice(model_names()), required=True)
@optimizer_options
def estimate(input, h, time_unit, tau, columns, missing, model, n_starts, seed, output):
    """Adaptive quasi-maximum-likelihood fit of the full model."""
    spec, ctx = _context(input, h, time_unit, tau, columns, missing, model)
    fit = fit_full(ctx, OptimizerConfig(n_starts=n_starts, seed=seed))
    _emit({
        "command": "estimate",
        "model": model,
        "scheme": ctx.scheme.as_dict(),
        "alpha_hat": dict(zip(spec.alpha_names, fit.alpha_hat.tolist())),
        "beta_hat": dict(zip(spec.beta_names, fit.beta_hat.tolist())),
        "lambda_hat": np.asarray(fit.lambda_hat).tolist(),
        "l1_at_hat": fit.l1_at_hat,
        "l2_at_hat": fit.l2_at_hat,
        "optimizer_diagnostics": fit.optimizer_diagnostics,
    }, output)


@cli.command()
@data_options
@click.option("--model", type=click.Choice(model_names()), required=True)
@click.option("--hypothesis", required=True, help="Mask such as 'alpha:2;beta:'.")
@click.option("--kind", type=click.Choice(list(KINDS) + ["all"]), default="lrt", show_default=True)
@optimizer_options
def test(input, h, time_unit, tau, columns, missing, model, hypothesis, kind, n_starts, seed,
         output):
    """Test a zero restriction; prints one report per statistic kind."""
    spec = get_model(model)
    hyp = parse_hypothesis(BATTERIES.get(model, {}).get(hypothesis, hypothesis), spec.m1, spec.m2)
    hyp.require_nontrivial()
    _, ctx = _context(input, h, time_unit, tau, columns, missing, model)
    fit = fit_context(ctx, hyp, OptimizerConfig(n_starts=n_starts, seed=seed))
    kinds = KINDS if kind == "all" else (kind,)
    reports = [report_from_fit(ctx, fit, k).to_dict() for k in kinds]
    _emit({"command": "test", "model": model, "scheme": ctx.scheme.as_dict(),
           "reports": reports}, output)


test.__test__ = False  # a click command, not a pytest test


@cli.command("mc-study")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="YAML study config.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--workers", type=int, default=1, show_default=True)
def mc_study(config_path, out, workers):
    """Run a Monte Carlo study; writes rates.csv, edf.csv, statistics.csv and study.json."""
    cfg = StudyConfig.from_file(config_path)
    result = run_study(cfg, workers=workers)
    paths = write_study(result, out, workers)
    _emit({"command": "mc-study", "config_hash": cfg.config_hash(),
           "files": {k: str(v) for k, v in paths.items()}, **result.summary()}, None)


@cli.command()
@click.argument("study_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--kind", type=click.Choice(KINDS), default="lrt", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="CSV to write (default: stdout).")
def edf(study_dir, kind, out):
    """EDF of a study's statistics with the chi-square reference curve."""
    d = Path(study_dir)
    try:
        meta = json.loads((d / "study.json").read_text())
        with open(d / "statistics.csv", newline="") as fh:
            stats = [float(r["stat_total"]) for r in csv.DictReader(fh) if r["kind"] == kind]
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"{study_dir}: not a readable study directory ({exc})") from None
    if not stats:
        raise DataError(f"no {kind!r} statistics in {study_dir}")
    dof = meta["summary"]["dof"]
    x = np.sort(stats)
    F = np.searchsorted(x, x, side="right") / x.size
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "edf", "chi2_cdf"])
        for v, f in zip(x, F):
            w.writerow(["%.17g" % v, "%.17g" % f, "%.17g" % chi2_cdf(v, dof)])
    finally:
        if out:
            fh.close()


@cli.command("analyze")
@data_options
@click.option("--model", type=click.Choice(model_names()), required=True)
@click.option("--hypothesis", "hypotheses", multiple=True,
              help="Mask or battery name (ou, centricity, independence); repeatable. "
                   "Default: the model's whole battery.")
@click.option("--kind", type=click.Choice(list(KINDS) + ["all"]), default="lrt", show_default=True)
@optimizer_options
def analyze_cmd(input, h, time_unit, tau, columns, missing, model, hypotheses, kind, n_starts,
                seed, output):
    """Fit once and run a battery of hypothesis tests on a CSV series."""
    spec = get_model(model)
    if not hypotheses:
        hypotheses = list(BATTERIES.get(model, {}))
        if not hypotheses:
            raise ValidationError(f"model {model!r} has no default battery; pass --hypothesis")
    ingest = _ingest_spec(input, h, time_unit, tau, columns, missing, spec.state_dim)
    kinds = KINDS if kind == "all" else (kind,)
    report = analyze(ingest, spec, list(hypotheses), kinds,
                     OptimizerConfig(n_starts=n_starts, seed=seed))
    _emit({"command": "analyze", **{k: v for k, v in report.to_dict().items()
                                      if k != "schema_version"}}, output)


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 2
    except NoisyDiffError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return exc.exit_code
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return DataError.exit_code
    return 0


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
