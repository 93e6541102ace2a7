"""Guided rectified-flow sampling over sparse structured voxel latents."""

from .flow import (
    Condition,
    GuidanceReport,
    SamplerConfig,
    cfm_loss,
    euler_step,
    forward_interpolate,
    sample,
    sample_guided,
)
from .guidance import (
    GuidanceSpec,
    OptimizerConfig,
    OptimizerState,
    adamw_step,
    appearance_loss,
    appearance_loss_grad,
    finite_difference_grad,
    global_pool_loss,
    global_pool_loss_grad,
    structure_loss,
    structure_loss_grad,
)
from .partition import (
    ClusterAssignment,
    CorrespondenceMap,
    FeatureField,
    build_correspondence,
    cosegment,
    cosine_similarity_matrix,
    kmeans,
    synthesize_part_features,
)
from .slat import (
    LatentState,
    StructuredLatent,
    init_latent_state,
    new_structured_latent,
    voxelize_point_cloud,
)
from .toyflows import (
    AnalyticGaussianField,
    GaussianFlowSpec,
    MixtureField,
    TrainableField,
    ZeroField,
    gaussian_analytic_velocity,
    mixture_conditional_velocity,
    train_cfm,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticGaussianField",
    "ClusterAssignment",
    "Condition",
    "CorrespondenceMap",
    "FeatureField",
    "GaussianFlowSpec",
    "GuidanceReport",
    "GuidanceSpec",
    "LatentState",
    "MixtureField",
    "OptimizerConfig",
    "OptimizerState",
    "SamplerConfig",
    "StructuredLatent",
    "TrainableField",
    "ZeroField",
    "adamw_step",
    "appearance_loss",
    "appearance_loss_grad",
    "build_correspondence",
    "cfm_loss",
    "cosegment",
    "cosine_similarity_matrix",
    "euler_step",
    "finite_difference_grad",
    "forward_interpolate",
    "gaussian_analytic_velocity",
    "global_pool_loss",
    "global_pool_loss_grad",
    "init_latent_state",
    "kmeans",
    "mixture_conditional_velocity",
    "new_structured_latent",
    "sample",
    "sample_guided",
    "structure_loss",
    "structure_loss_grad",
    "synthesize_part_features",
    "train_cfm",
    "voxelize_point_cloud",
]
