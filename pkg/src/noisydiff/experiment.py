"""Monte Carlo studies: rejection rates, EDFs and calibration diagnostics.

Replicate ``i`` of a study with master seed ``s`` uses the Wiener stream
``SeedSequence(s, spawn_key=(i, 0))`` and the noise stream
``SeedSequence(s, spawn_key=(i, 1))``, so it is the same series as
``simulate_observations(..., seed=SeedSequence(s, spawn_key=(i,)))`` and does
not depend on batching or on the number of worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import scipy
import yaml

from . import __version__
from .errors import NoisyDiffError, StudyAborted, ValidationError
from .estimate import OptimizerConfig, fit_context
from .likelihood import QuasiLikContext
from .model import Hypothesis, parse_hypothesis
from .preprocess import derive_tuning, estimate_noise_variance
from .presets import get_model
from .simulate import (
    NOISE_STREAM,
    WIENER_STREAM,
    NoiseSpec,
    ObservationSeries,
    contaminate,
    euler_maruyama_batch,
    replicate_seed,
)
from .testing import KINDS, chi2_cdf, critical_value, report_from_fit

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_LEVELS = (0.10, 0.05, 0.01, 0.001)
MAX_ERROR_FRACTION = 0.01
FLOAT_FMT = "%.17g"


def _tuple(v):
    return tuple(float(x) for x in np.atleast_1d(np.asarray(v, dtype=float)))


@dataclass(frozen=True)
class StudyConfig:
    """Everything that determines a study's numbers.

    ``lambda_star`` is either a scalar (isotropic noise) or a full matrix
    given as nested lists.  The worker count is deliberately not part of the
    config: it cannot change results.
    """

    model: str
    alpha_star: tuple
    beta_star: tuple
    lambda_star: object
    x0: tuple
    n: int
    h_n: float
    tau: float
    hypothesis: str
    replicates: int
    seed: int
    kinds: tuple = ("lrt",)
    levels: tuple = DEFAULT_LEVELS
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    batch_size: int = 20
    substeps: int = 1
    name: str = ""

    def __post_init__(self):
        if self.seed is None or isinstance(self.seed, bool) or int(self.seed) != self.seed:
            raise ValidationError("study config needs an integer seed")
        if self.replicates < 1:
            raise ValidationError("replicates must be >= 1")
        if self.batch_size < 1 or self.substeps < 1:
            raise ValidationError("batch_size and substeps must be >= 1")
        levels = tuple(float(a) for a in self.levels)
        if not levels or any(not 0.0 < a < 1.0 for a in levels):
            raise ValidationError(f"levels must lie in (0, 1), got {levels}")
        kinds = tuple(self.kinds)
        bad = [k for k in kinds if k not in KINDS]
        if bad or not kinds:
            raise ValidationError(f"unknown statistic kinds {bad}; expected a subset of {KINDS}")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "alpha_star", _tuple(self.alpha_star))
        object.__setattr__(self, "beta_star", _tuple(self.beta_star))
        object.__setattr__(self, "x0", _tuple(self.x0))
        lam = np.asarray(self.lambda_star, dtype=float)
        object.__setattr__(
            self, "lambda_star", float(lam) if lam.ndim == 0 else tuple(map(tuple, lam.tolist()))
        )
        if isinstance(self.optimizer, dict):
            object.__setattr__(self, "optimizer", OptimizerConfig.from_dict(self.optimizer))
        # fail early on inconsistent inputs
        spec = self.model_spec()
        if len(self.alpha_star) != spec.m1 or len(self.beta_star) != spec.m2:
            raise ValidationError(
                f"{self.model} expects {spec.m1} alpha and {spec.m2} beta components"
            )
        if len(self.x0) != spec.state_dim:
            raise ValidationError(f"x0 must have {spec.state_dim} components")
        self.parsed_hypothesis().check_against(spec)
        self.scheme()
        self.noise()

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown study config keys: {sorted(unknown)}")
        if "seed" not in d:
            raise ValidationError("study config needs an integer seed")
        for key in ("kinds", "levels"):
            if key in d and isinstance(d[key], str):
                d[key] = [s.strip() for s in d[key].split(",")]
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "StudyConfig":
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ValidationError(f"{path}: not valid YAML ({exc})") from None
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: expected a key-value mapping")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha_star"] = list(self.alpha_star)
        d["beta_star"] = list(self.beta_star)
        d["x0"] = list(self.x0)
        d["kinds"] = list(self.kinds)
        d["levels"] = list(self.levels)
        if isinstance(self.lambda_star, tuple):
            d["lambda_star"] = [list(r) for r in self.lambda_star]
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def model_spec(self):
        return get_model(self.model)

    def scheme(self):
        return derive_tuning(self.n, self.h_n, self.tau)

    def noise(self) -> NoiseSpec:
        d = len(self.x0)
        if isinstance(self.lambda_star, float):
            return NoiseSpec.isotropic(self.lambda_star, d)
        return NoiseSpec(np.array(self.lambda_star))

    def parsed_hypothesis(self) -> Hypothesis:
        spec = self.model_spec()
        return parse_hypothesis(self.hypothesis, spec.m1, spec.m2)

    def with_(self, **changes) -> "StudyConfig":
        d = self.to_dict()
        d.update(changes)
        return StudyConfig.from_dict(d)


# -- replicate machinery ---------------------------------------------------


def simulate_replicates(cfg: StudyConfig, indices: Sequence[int]):
    """Yield ``(index, ObservationSeries | exception)`` for the given replicates."""
    spec, scheme, noise = cfg.model_spec(), cfg.scheme(), cfg.noise()
    args = (spec, cfg.alpha_star, cfg.beta_star, cfg.x0, scheme)

    def one(i):
        latent = euler_maruyama_batch(
            *args, [replicate_seed(cfg.seed, i, WIENER_STREAM)], cfg.substeps
        )[:, 0, :]
        return latent

    try:
        paths = euler_maruyama_batch(
            *args, [replicate_seed(cfg.seed, i, WIENER_STREAM) for i in indices], cfg.substeps
        )
        latents = [paths[:, b, :] for b in range(len(indices))]
    except NoisyDiffError:
        # isolate the bad replicate(s); the others are unaffected by batching
        latents = []
        for i in indices:
            try:
                latents.append(one(i))
            except NoisyDiffError as exc:
                latents.append(exc)
    for i, latent in zip(indices, latents):
        if isinstance(latent, Exception):
            yield i, latent
            continue
        yield i, contaminate(
            latent, noise, scheme, replicate_seed(cfg.seed, i, NOISE_STREAM), keep_latent=False
        )


def _error_record(i, exc):
    return {
        "index": int(i),
        "error": type(exc).__name__,
        "stage": getattr(exc, "stage", None),
        "message": str(exc),
    }


def _run_batch(job):
    cfg, indices, replicate_fn = job
    out = []
    for i, obs in simulate_replicates(cfg, indices):
        if isinstance(obs, Exception):
            if obs.stage is None:
                obs.stage = "simulate"
            out.append((i, None, _error_record(i, obs)))
            continue
        try:
            out.append((i, replicate_fn(cfg, obs), None))
        except NoisyDiffError as exc:
            out.append((i, None, _error_record(i, exc)))
    return out


def map_replicates(
    cfg: StudyConfig,
    replicate_fn: Callable[[StudyConfig, ObservationSeries], object],
    workers: int = 1,
    max_error_fraction: float = MAX_ERROR_FRACTION,
):
    """Apply ``replicate_fn`` to every simulated replicate.

    Returns ``(indices, values, errors)`` ordered by replicate index.
    ``replicate_fn`` must be a module-level function when ``workers > 1``.
    Raises :class:`StudyAborted` if more than ``max_error_fraction`` of the
    replicates fail.
    """
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    idx = np.arange(cfg.replicates)
    jobs = [
        (cfg, [int(i) for i in idx[s : s + cfg.batch_size]], replicate_fn)
        for s in range(0, cfg.replicates, cfg.batch_size)
    ]
    if workers == 1:
        batches = map(_run_batch, jobs)
        results = [r for b in batches for r in b]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = [r for b in pool.map(_run_batch, jobs) for r in b]
    results.sort(key=lambda r: r[0])
    errors = [e for _, _, e in results if e is not None]
    if len(errors) > max_error_fraction * cfg.replicates:
        raise StudyAborted(
            f"{len(errors)} of {cfg.replicates} replicates failed "
            f"(limit {max_error_fraction:.0%}); first: {errors[0]['error']}: {errors[0]['message']}",
            errors=errors,
        )
    for e in errors:
        logger.warning("replicate %d excluded: %s", e["index"], e["message"])
    ok = [(i, v) for i, v, e in results if e is None]
    return [i for i, _ in ok], [v for _, v in ok], errors


# -- test studies ----------------------------------------------------------


def test_replicate(cfg: StudyConfig, obs: ObservationSeries) -> dict:
    """Statistics ``(alpha part, beta part)`` for every configured kind."""
    spec = cfg.model_spec()
    hyp = cfg.parsed_hypothesis()
    stage = "preprocess"
    try:
        ctx = QuasiLikContext.from_observations(obs, spec)
        stage = "fit"
        fit = fit_context(ctx, hyp, cfg.optimizer)
        stage = "statistic"
        reports = {k: report_from_fit(ctx, fit, k) for k in cfg.kinds}
    except NoisyDiffError as exc:
        if exc.stage is None:
            exc.stage = stage
        raise
    return {k: (r.stat_alpha, r.stat_beta) for k, r in reports.items()}


test_replicate.__test__ = False  # not a pytest test


@dataclass(eq=False)
class StudyResult:
    config: StudyConfig
    dof: int
    indices: np.ndarray
    stat_alpha: Dict[str, np.ndarray]
    stat_beta: Dict[str, np.ndarray]
    errors: List[dict] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def n_ok(self) -> int:
        return len(self.indices)

    def statistics(self, kind: str = "lrt") -> np.ndarray:
        return self.stat_alpha[kind] + self.stat_beta[kind]

    def critical_values(self) -> Dict[float, float]:
        return {a: critical_value(a, self.dof) for a in self.config.levels}

    def rejections(self, kind: str = "lrt") -> Dict[float, int]:
        s = self.statistics(kind)
        return {a: int(np.sum(s > c)) for a, c in self.critical_values().items()}

    def rates(self, kind: str = "lrt") -> Dict[float, float]:
        return {a: cnt / self.n_ok for a, cnt in self.rejections(kind).items()}

    def standard_errors(self, kind: str = "lrt") -> Dict[float, float]:
        return {a: float(np.sqrt(p * (1.0 - p) / self.n_ok)) for a, p in self.rates(kind).items()}

    def edf(self, kind: str = "lrt"):
        """Sorted statistics and the right-continuous EDF evaluated at them."""
        x = np.sort(self.statistics(kind))
        return x, np.searchsorted(x, x, side="right") / x.size

    def ks_distance(self, kind: str = "lrt") -> float:
        """``sup |F_N - F_chi2|`` including the left limits at the jumps."""
        x = np.sort(self.statistics(kind))
        ref = np.array([chi2_cdf(v, self.dof) for v in x])
        n = x.size
        upper = np.arange(1, n + 1) / n - ref
        lower = ref - np.arange(0, n) / n
        return float(max(upper.max(), lower.max()))

    def summary(self) -> dict:
        return {
            "n_ok": self.n_ok,
            "n_failed": len(self.errors),
            "dof": self.dof,
            "rates": {
                k: {f"{a:g}": r for a, r in self.rates(k).items()} for k in self.config.kinds
            },
            "ks_distance": {k: self.ks_distance(k) for k in self.config.kinds},
        }


def run_study(cfg: StudyConfig, workers: int = 1) -> StudyResult:
    """Simulate, fit and test every replicate; aggregate per statistic kind."""
    hyp = cfg.parsed_hypothesis()
    hyp.require_nontrivial()
    t0 = time.perf_counter()
    indices, values, errors = map_replicates(cfg, test_replicate, workers)
    if not indices:
        raise StudyAborted("no replicate succeeded")
    s1 = {k: np.array([v[k][0] for v in values]) for k in cfg.kinds}
    s2 = {k: np.array([v[k][1] for v in values]) for k in cfg.kinds}
    return StudyResult(
        cfg, hyp.r, np.array(indices), s1, s2, errors, time.perf_counter() - t0
    )


def edf_export(result: StudyResult, kind: str = "lrt"):
    """Rows ``(x, F_N(x), chi2_cdf(x, r))`` at the sorted statistics."""
    x, F = result.edf(kind)
    return [(float(v), float(f), chi2_cdf(v, result.dof)) for v, f in zip(x, F)]


def split_half_diagnostic(
    result: StudyResult, kind: str = "lrt", level: float = 0.05, n_splits: int = 200, seed: int = 0
) -> float:
    """Fraction of random half splits whose rates differ by at most 4 binomial SE."""
    crit = critical_value(level, result.dof)
    rejected = result.statistics(kind) > crit
    n = rejected.size
    if n < 2:
        raise ValidationError("need at least two replicates")
    p = rejected.mean()
    rng = np.random.default_rng(seed)
    half = n // 2
    se = np.sqrt(max(p * (1 - p), 1.0 / n) * (1.0 / half + 1.0 / (n - half)))
    hits = 0
    for _ in range(n_splits):
        perm = rng.permutation(n)
        diff = rejected[perm[:half]].mean() - rejected[perm[half:]].mean()
        hits += abs(diff) <= 4 * se
    return hits / n_splits


# -- output ----------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def versions() -> dict:
    return {
        "noisydiff": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def write_study(result: StudyResult, out_dir, workers: Optional[int] = None) -> Dict[str, Path]:
    """Write ``rates.csv``, ``edf.csv``, ``statistics.csv`` and ``study.json``.

    The CSV files depend only on the config; ``study.json`` also records
    timing and the worker count.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    crit = result.critical_values()
    rate_rows = []
    for k in cfg.kinds:
        rej = result.rejections(k)
        se = result.standard_errors(k)
        for a in cfg.levels:
            rate_rows.append((k, a, crit[a], rej[a], result.n_ok, rej[a] / result.n_ok, se[a]))
    paths = {
        "rates": out / "rates.csv",
        "edf": out / "edf.csv",
        "statistics": out / "statistics.csv",
        "study": out / "study.json",
    }
    _write_rows(
        paths["rates"],
        ["kind", "level", "critical_value", "rejections", "n", "rate", "se"],
        rate_rows,
    )
    _write_rows(
        paths["edf"],
        ["kind", "x", "edf", "chi2_cdf"],
        [(k, *row) for k in cfg.kinds for row in edf_export(result, k)],
    )
    _write_rows(
        paths["statistics"],
        ["index", "kind", "stat_alpha", "stat_beta", "stat_total"],
        [
            (i, k, a, b, a + b)
            for k in cfg.kinds
            for i, a, b in zip(result.indices, result.stat_alpha[k], result.stat_beta[k])
        ],
    )
    meta = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "versions": versions(),
        "seeding": {
            "master_seed": cfg.seed,
            "wiener": f"SeedSequence({cfg.seed}, spawn_key=(index, {WIENER_STREAM}))",
            "noise": f"SeedSequence({cfg.seed}, spawn_key=(index, {NOISE_STREAM}))",
            "bit_generator": "Philox",
        },
        "scheme": cfg.scheme().as_dict(),
        "summary": result.summary(),
        "errors": result.errors,
        "workers": workers,
        "elapsed_seconds": result.elapsed,
    }
    paths["study"].write_text(json.dumps(meta, indent=2) + "\n")
    return paths


# -- calibration side studies ----------------------------------------------


def noise_replicate(cfg: StudyConfig, obs: ObservationSeries) -> np.ndarray:
    return estimate_noise_variance(obs).lambda_hat


def run_noise_study(cfg: StudyConfig, workers: int = 1) -> np.ndarray:
    """``Lambda_hat`` for every successful replicate, shape ``(N, d, d)``."""
    _, values, _ = map_replicates(cfg, noise_replicate, workers)
    return np.array(values)


def information_replicate(cfg: StudyConfig, obs: ObservationSeries) -> dict:
    """Normalized scores and Hessians at the true parameter."""
    ctx = QuasiLikContext.from_observations(obs, cfg.model_spec())
    a, b = np.array(cfg.alpha_star), np.array(cfg.beta_star)
    k, T = ctx.k_n, ctx.T_n
    return {
        "score_alpha": ctx.grad_l1(a) / np.sqrt(k),
        "hess_alpha": -ctx.hess_l1(a) / k,
        "score_beta": ctx.grad_l2(b, a) / np.sqrt(T),
        "hess_beta": -ctx.hess_l2(b, a) / T,
    }


@dataclass(eq=False)
class InformationResult:
    score_alpha: np.ndarray
    hess_alpha: np.ndarray
    score_beta: np.ndarray
    hess_beta: np.ndarray

    def score_covariance(self, part: str) -> np.ndarray:
        s = getattr(self, f"score_{part}")
        return np.atleast_2d(np.cov(s, rowvar=False))

    def mean_hessian(self, part: str) -> np.ndarray:
        return getattr(self, f"hess_{part}").mean(axis=0)

    def relative_error(self, part: str, factor: float) -> np.ndarray:
        """Entrywise ``|cov - factor * J| / |factor * J|``."""
        target = factor * self.mean_hessian(part)
        return np.abs(self.score_covariance(part) - target) / np.abs(target)


def run_information_study(cfg: StudyConfig, workers: int = 1) -> InformationResult:
    _, values, _ = map_replicates(cfg, information_replicate, workers)
    return InformationResult(
        *(np.array([v[key] for v in values]) for key in
          ("score_alpha", "hess_alpha", "score_beta", "hess_beta"))
    )
