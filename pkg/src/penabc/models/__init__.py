"""Benchmark models: priors, simulators, summaries and preprocessing."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .priors import (
    N_PARAMS,
    ModelId,
    PriorSpec,
    default_prior,
    in_ar2_triangle,
    in_ma2_triangle,
    in_support,
    log_prior,
    sample_prior,
)
from .simulators import (
    GANDK_C,
    MA2_SIGMA_EPS,
    alpha_stable_cf,
    ar2_stationary_cov,
    gandk_quantile,
    inverse_transform_alpha_params,
    ma2_autocov,
    simulate_alpha_stable,
    simulate_alpha_stable_raw,
    simulate_ar2,
    simulate_gandk,
    simulate_ma2_noisy,
    transform_alpha_params,
)
from .summaries import (
    autocov,
    clean_outliers,
    ecdf_features,
    ecdf_grid,
    handpicked_summaries,
    robust_scale,
    skewness,
)

GANDK_HANDPICKED_W = (0.22, 0.19, 0.53, 2.97, 1.90)


@dataclass(frozen=True)
class PreprocessSpec:
    clean_lo: Optional[float] = None
    clean_hi: Optional[float] = None
    ecdf_lo: Optional[float] = None
    ecdf_hi: Optional[float] = None
    ecdf_points: int = 100
    apply_robust_scale: bool = False

    def __post_init__(self):
        if self.clean_lo is not None and not self.clean_lo < self.clean_hi:
            raise ValueError("clean_lo must be < clean_hi")
        if self.ecdf_lo is not None and not self.ecdf_lo < self.ecdf_hi:
            raise ValueError("ecdf grid must be increasing")

    @property
    def cleans(self):
        return self.clean_lo is not None

    @property
    def grid(self):
        if self.ecdf_lo is None:
            return None
        return ecdf_grid(self.ecdf_lo, self.ecdf_hi, self.ecdf_points)


@dataclass(frozen=True)
class BenchmarkModel:
    """Everything the pipeline needs to know about one benchmark."""

    id: ModelId
    M: int
    truth: tuple
    simulator: Callable
    preprocess: PreprocessSpec = field(default_factory=PreprocessSpec)
    handpicked_weights: Optional[tuple] = None
    # preprocessing settings at full scale
    n_tilde: int = 100_000
    percentile_x: float = 0.1
    n_eval: int = 5_000

    @property
    def n_params(self):
        return N_PARAMS[self.id]

    @property
    def prior(self):
        return default_prior(self.id)

    def sample_prior(self, rng, size=None):
        return sample_prior(self.prior, rng, size)

    def log_prior(self, theta):
        return log_prior(self.prior, theta)

    def in_support(self, theta):
        return in_support(self.prior, theta)

    def simulate(self, theta, rng, M=None):
        """Simulate and, where the model calls for it, clean outliers."""
        y = self.simulator(theta, self.M if M is None else M, rng)
        if self.preprocess.cleans:
            y = clean_outliers(y, rng, self.preprocess.clean_lo, self.preprocess.clean_hi)
        return y

    def handpicked(self, y):
        return handpicked_summaries(self.id, y)


MODELS = {
    ModelId.GANDK: BenchmarkModel(
        id=ModelId.GANDK,
        M=1000,
        truth=(3.0, 1.0, 2.0, 0.5),
        simulator=simulate_gandk,
        preprocess=PreprocessSpec(clean_lo=-10.0, clean_hi=50.0, ecdf_lo=0.0, ecdf_hi=50.0),
        handpicked_weights=GANDK_HANDPICKED_W,
        n_tilde=100_000,
        percentile_x=0.1,
        n_eval=5_000,
    ),
    ModelId.ALPHA_STABLE: BenchmarkModel(
        id=ModelId.ALPHA_STABLE,
        M=1000,
        truth=tuple(float(v) for v in transform_alpha_params(np.array([1.5, 0.5, 1.0, 0.0]))),
        simulator=simulate_alpha_stable,
        preprocess=PreprocessSpec(
            clean_lo=-10.0,
            clean_hi=50.0,
            ecdf_lo=-10.0,
            ecdf_hi=100.0,
            apply_robust_scale=True,
        ),
        n_tilde=100_000,
        percentile_x=0.1,
        n_eval=5_000,
    ),
    ModelId.AR2: BenchmarkModel(
        id=ModelId.AR2,
        M=100,
        truth=(0.2, -0.13),
        simulator=simulate_ar2,
        n_tilde=500_000,
        percentile_x=0.02,
        n_eval=10_000,
    ),
    ModelId.MA2: BenchmarkModel(
        id=ModelId.MA2,
        M=100,
        truth=(0.6, 0.2),
        simulator=simulate_ma2_noisy,
        n_tilde=500_000,
        percentile_x=0.02,
        n_eval=500_000,
    ),
}


def get_model(model):
    return MODELS[ModelId.parse(model)]


__all__ = [
    "BenchmarkModel",
    "GANDK_C",
    "GANDK_HANDPICKED_W",
    "MA2_SIGMA_EPS",
    "MODELS",
    "ModelId",
    "PreprocessSpec",
    "PriorSpec",
    "alpha_stable_cf",
    "ar2_stationary_cov",
    "autocov",
    "clean_outliers",
    "default_prior",
    "ecdf_features",
    "ecdf_grid",
    "gandk_quantile",
    "get_model",
    "handpicked_summaries",
    "in_ar2_triangle",
    "in_ma2_triangle",
    "in_support",
    "inverse_transform_alpha_params",
    "log_prior",
    "ma2_autocov",
    "robust_scale",
    "sample_prior",
    "simulate_alpha_stable",
    "simulate_alpha_stable_raw",
    "simulate_ar2",
    "simulate_gandk",
    "simulate_ma2_noisy",
    "skewness",
    "transform_alpha_params",
]
