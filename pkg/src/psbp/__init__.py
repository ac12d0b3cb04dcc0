"""Photometric stereo with Blinn-Phong reflectance under a perspective camera.

Reconstructs depth from three images of a static scene lit by three known
distant lights, with a built-in forward renderer for closed-loop testing.
"""

from .core import (
    CameraIntrinsics,
    ConfigError,
    DepthMap,
    GradientField,
    Image,
    KIND_DEPTH,
    KIND_LOG_DEPTH,
    LightSource,
    Material,
    NormalField,
    NumericalError,
    input_mask,
    mse,
    normalize_unit_range,
)
from .geometry import (
    ImagePoint,
    centerize,
    halfway_vector,
    normals_to_perspective_gradient,
    perspective_normal,
    pixel_grid,
    surface_point,
    uncenterize,
)
from .integrate import IntegrationConfig, align_depth, exp_depth, poisson_integrate
from .optim import LMConfig, LMResult, levenberg_marquardt
from .render import (
    MODEL_BLINN_PHONG,
    MODEL_LAMBERTIAN,
    PROJECTION_ORTHOGRAPHIC,
    PROJECTION_PERSPECTIVE,
    SceneSpec,
    log_depth_gradients,
    make_sphere_depth,
    render_blinn_phong_orthographic,
    render_blinn_phong_perspective,
    render_lambertian_orthographic,
    render_lambertian_perspective,
    render_scene,
)
from .solve import (
    AlbedoMap,
    ConditioningReport,
    blinn_phong_ortho_solve,
    blinn_phong_pps_solve,
    blinn_phong_residuals,
    lambertian_pps_closed_form,
    sensitivity_indicator,
    woodham_normals,
)

__version__ = "0.1.0"

__all__ = [
    "AlbedoMap",
    "CameraIntrinsics",
    "ConditioningReport",
    "ConfigError",
    "DepthMap",
    "GradientField",
    "Image",
    "ImagePoint",
    "IntegrationConfig",
    "KIND_DEPTH",
    "KIND_LOG_DEPTH",
    "LMConfig",
    "LMResult",
    "LightSource",
    "Material",
    "MODEL_BLINN_PHONG",
    "MODEL_LAMBERTIAN",
    "NormalField",
    "NumericalError",
    "PROJECTION_ORTHOGRAPHIC",
    "PROJECTION_PERSPECTIVE",
    "SceneSpec",
    "align_depth",
    "blinn_phong_ortho_solve",
    "blinn_phong_pps_solve",
    "blinn_phong_residuals",
    "centerize",
    "exp_depth",
    "halfway_vector",
    "input_mask",
    "lambertian_pps_closed_form",
    "levenberg_marquardt",
    "log_depth_gradients",
    "make_sphere_depth",
    "mse",
    "normalize_unit_range",
    "normals_to_perspective_gradient",
    "perspective_normal",
    "pixel_grid",
    "poisson_integrate",
    "render_blinn_phong_orthographic",
    "render_blinn_phong_perspective",
    "render_lambertian_orthographic",
    "render_lambertian_perspective",
    "render_scene",
    "sensitivity_indicator",
    "surface_point",
    "uncenterize",
    "woodham_normals",
]
