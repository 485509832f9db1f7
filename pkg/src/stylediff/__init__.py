"""Desk-scale guided diffusion sampling with supervised and self style guidance.

A numpy library implementing a denoising diffusion sampler with analytic
denoisers, a differentiable multi-scale style-feature extractor, three
inference-time style-guidance modes, post-hoc style-transfer baselines,
assessment metrics and a reproducible experiment harness.
"""

from .baselines import TransferConfig, iterative_transfer, moment_match_transfer
from .denoisers import (
    AffineDenoiser,
    AnalyticGaussianDenoiser,
    AnalyticGmmDenoiser,
    GaussianData,
    GmmData,
    TrainConfig,
    analytic_gaussian_eps,
    analytic_gmm_eps,
    default_style_population,
    optimal_affine_coeffs,
    train_affine,
)
from .diffusion import (
    NoiseSchedule,
    StepOutput,
    estimate_x0,
    forward_diffuse,
    make_schedule,
    posterior_mean,
    sample,
)
from .guidance import GuidanceConfig, GuidanceContext, effective_scale
from .metrics import (
    MetricReport,
    assessment_features,
    batch_diversity,
    content_score,
    pca_embed,
    sign_test_pvalue,
    style_loss,
)
from .numerics import (
    ConfigError,
    DimensionError,
    DivergedChainError,
    NumericGuardError,
    RngStream,
    avg_pool2,
    diff_channels,
    gaussian_noise,
)
from .style import (
    MAE,
    MSE,
    PyramidConfig,
    StyleFeatures,
    equal_weights,
    extract,
    feature_variance,
    feature_variance_grad,
    mixed_features,
    style_distance,
    style_distance_grad,
)

__version__ = "0.1.0"
