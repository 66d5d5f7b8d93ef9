"""Model-based 3D hand pose fitting with a differentiable silhouette renderer."""

__version__ = "0.1.0"

from .camera import FullParams, ViewParams, pack, project_points, unpack
from .errors import (
    DegenerateError,
    DimensionError,
    DivergenceError,
    HandfitError,
    InvariantError,
    SchemaError,
)
from .hand_model import SkeletonAdapter, adapt_skeleton, hand_backward, hand_forward, rest_keypoints
from .metrics import MetricsReport, auc, epe, pck_curve
from .objectives import LossWeights, total_loss
from .optim import (
    FitProblem,
    FitResult,
    OptimizerConfig,
    adam_step,
    finite_difference_grad,
    fit,
    fit_sample,
    fit_with_adapter,
    init_heuristic,
)
from .renderer import RasterConfig, SilhouetteImage, rasterize_forward, render_silhouette, vertex_gradients
from .scene import Observations, SceneObjective, predict
from .template import HandTemplate, load_template, make_toy_template, save_template

__all__ = [
    "__version__",
    "FullParams",
    "ViewParams",
    "pack",
    "project_points",
    "unpack",
    "DegenerateError",
    "DimensionError",
    "DivergenceError",
    "HandfitError",
    "InvariantError",
    "SchemaError",
    "SkeletonAdapter",
    "adapt_skeleton",
    "hand_backward",
    "hand_forward",
    "rest_keypoints",
    "MetricsReport",
    "auc",
    "epe",
    "pck_curve",
    "LossWeights",
    "total_loss",
    "FitProblem",
    "FitResult",
    "OptimizerConfig",
    "adam_step",
    "finite_difference_grad",
    "fit",
    "fit_sample",
    "fit_with_adapter",
    "init_heuristic",
    "RasterConfig",
    "SilhouetteImage",
    "rasterize_forward",
    "render_silhouette",
    "vertex_gradients",
    "Observations",
    "SceneObjective",
    "predict",
    "HandTemplate",
    "load_template",
    "make_toy_template",
    "save_template",
]
