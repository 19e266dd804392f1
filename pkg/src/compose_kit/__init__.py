"""Lighting decomposition and shadow editing for rendered portraits/scenes.

The pipeline: estimate the dominant light of an equirectangular environment
map as an angular Gaussian, synthesize edited single-light environments,
relight a one-light-at-a-time basis under them, and blend a diffuse and a
shadowed branch into the final image.  A synthetic raytraced light stage
provides the bases; CLI and HTTP front ends wrap the pipeline.
"""

from .envmap import (
    EnvironmentMap,
    diffuse_env,
    direction_to_uv,
    load_envmap,
    luminance,
    pixel_directions,
    rotate_env,
    sample_env,
    save_envmap,
    scale_env,
    solid_angle_map,
    uv_to_direction,
)
from .errors import ComposeKitError, FormatError, NoDominantLight
from .gausslight import (
    DOMINANCE_THRESHOLD,
    FEATURE_MAP_SIZE,
    GAMMA_MAX,
    SIGMA_MAX,
    GaussianLight,
    LightFeatureMap,
    LightFit,
    edit_light,
    fit_gaussian,
    from_feature_map,
    load_feature_map,
    save_feature_map,
    synth_gaussian_env,
    to_feature_map,
)
from .metrics import (
    ShadowStats,
    edge_band,
    mae,
    mse,
    shadow_stats,
    ssim,
    ssim_reference,
)
from .relight import (
    DEFAULT_BETA,
    DEFAULT_LIGHT_COUNT,
    EditRequest,
    EditResult,
    LinearImage,
    OlatBasis,
    composite,
    diffuse_image,
    edit,
    load_image,
    load_olat_basis,
    render_olat,
    save_image,
    save_olat_basis,
    tonemap,
)
from .synthstage import (
    BUILTIN_SCENES,
    Camera,
    GroundPlane,
    SceneSpec,
    Sphere,
    build_olat_basis,
    builtin_scene,
    fibonacci_directions,
    load_scene,
    raytrace_directional,
    raytrace_env,
    save_scene,
    umbra_centroid,
    umbra_mask,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "ComposeKitError", "FormatError", "NoDominantLight",
    # environment maps
    "EnvironmentMap", "load_envmap", "save_envmap", "sample_env",
    "rotate_env", "scale_env", "diffuse_env", "luminance",
    "uv_to_direction", "direction_to_uv", "pixel_directions",
    "solid_angle_map",
    # dominant light
    "GaussianLight", "LightFit", "LightFeatureMap", "fit_gaussian",
    "synth_gaussian_env", "edit_light", "to_feature_map", "from_feature_map",
    "save_feature_map", "load_feature_map", "SIGMA_MAX", "GAMMA_MAX",
    "DOMINANCE_THRESHOLD", "FEATURE_MAP_SIZE",
    # relighting
    "LinearImage", "OlatBasis", "render_olat", "diffuse_image", "composite",
    "EditRequest", "EditResult", "edit", "tonemap", "save_image",
    "load_image", "save_olat_basis", "load_olat_basis", "DEFAULT_BETA",
    "DEFAULT_LIGHT_COUNT",
    # synthetic stage
    "SceneSpec", "Camera", "Sphere", "GroundPlane", "BUILTIN_SCENES",
    "builtin_scene", "save_scene", "load_scene", "fibonacci_directions",
    "build_olat_basis", "raytrace_directional", "raytrace_env", "umbra_mask",
    "umbra_centroid",
    # metrics
    "mae", "mse", "ssim", "ssim_reference", "edge_band", "shadow_stats",
    "ShadowStats",
]
