"""dicect: limited-angle CT reconstruction toolkit.

Pipeline pieces: parallel-beam projector pair, filtered backprojection,
sinogram completion with consistency enforcement, a data-fidelity proximal
agent, pluggable image-prior agents, and a consensus-equilibrium solver
driven by Mann iterations. A CLI (``dicect``) and a framed stdio protocol
for external agent processes sit on top.
"""

__version__ = "0.1.0"

from .tomo import (
    Geometry,
    Image,
    Sinogram,
    AngularMask,
    forward_project,
    back_project,
    apply_mask,
)
from .fbp import FilterSpec, fbp
from .completion import (
    ZeroFill,
    AngularInterpolation,
    ExternalCompleter,
    complete,
    enforce_consistency,
    moment_residual,
)
from .data_agent import DataWeights, DataAgentConfig, build_weights, prox_data
from .image_agent import (
    IdentityAgent,
    TVDenoiser,
    GaussianSmoother,
    ExternalImageAgent,
    apply_image_agent,
)
from .ce import (
    CEConfig,
    AgentStack,
    CETrace,
    average_op,
    apply_F,
    mann_step,
    dice_reconstruct,
)
from .phantoms import EllipseScene, shepp_logan, random_ellipse_scene, rasterize_scene
from .metrics import rmse, psnr, ssim

__all__ = [
    "Geometry",
    "Image",
    "Sinogram",
    "AngularMask",
    "forward_project",
    "back_project",
    "apply_mask",
    "FilterSpec",
    "fbp",
    "ZeroFill",
    "AngularInterpolation",
    "ExternalCompleter",
    "complete",
    "enforce_consistency",
    "moment_residual",
    "DataWeights",
    "DataAgentConfig",
    "build_weights",
    "prox_data",
    "IdentityAgent",
    "TVDenoiser",
    "GaussianSmoother",
    "ExternalImageAgent",
    "apply_image_agent",
    "CEConfig",
    "AgentStack",
    "CETrace",
    "average_op",
    "apply_F",
    "mann_step",
    "dice_reconstruct",
    "EllipseScene",
    "shepp_logan",
    "random_ellipse_scene",
    "rasterize_scene",
    "rmse",
    "psnr",
    "ssim",
    "__version__",
]
