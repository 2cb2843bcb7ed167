"""Inference for diffusions observed with additive noise at high frequency."""

__version__ = "0.1.0"

from .errors import NoisyDiffError  # noqa: E402
from .model import Hypothesis, ModelSpec, SamplingScheme, parse_hypothesis  # noqa: E402
from .preprocess import derive_tuning, estimate_noise_variance, local_means  # noqa: E402
from .simulate import NoiseSpec, ObservationSeries, simulate_observations  # noqa: E402
from .estimate import OptimizerConfig, fit_adaptive  # noqa: E402
from .testing import chi2_quantile, run_test, run_tests  # noqa: E402
from .presets import get_model  # noqa: E402

__all__ = [
    "NoisyDiffError",
    "Hypothesis",
    "ModelSpec",
    "SamplingScheme",
    "parse_hypothesis",
    "derive_tuning",
    "estimate_noise_variance",
    "local_means",
    "NoiseSpec",
    "ObservationSeries",
    "simulate_observations",
    "OptimizerConfig",
    "fit_adaptive",
    "chi2_quantile",
    "run_test",
    "run_tests",
    "get_model",
]
