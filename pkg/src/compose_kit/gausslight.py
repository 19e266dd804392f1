"""Dominant-light model: an isotropic Gaussian on the sphere.

A light is four scalars: normalized center (u, v), angular size sigma and
peak radiance gamma.  Synthesis evaluates

    E(p) = gamma * exp(-alpha(d_p, c)^2 / (2 sigma^2))

where alpha is the great-circle angle between the pixel direction and the
center direction c(u, v).  Using angular rather than pixel distance makes
the model rotation-equivariant: rotating the map rotates the fit.

Fitting minimizes the solid-angle-weighted squared residual against the
map with a per-channel ambient floor, by damped Gauss-Newton from a blurred
argmax initialization.  The routine is pure and deterministic: identical
inputs produce bitwise-identical fits.
"""

from __future__ import annotations

import functools
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .envmap import (
    EnvironmentMap,
    luminance,
    pixel_directions,
    solid_angle_map,
    uv_to_direction,
)
from .errors import NoDominantLight

__all__ = [
    "SIGMA_MAX",
    "GAMMA_MAX",
    "DOMINANCE_THRESHOLD",
    "FEATURE_MAP_SIZE",
    "GaussianLight",
    "LightFit",
    "LightFeatureMap",
    "synth_gaussian_env",
    "fit_gaussian",
    "edit_light",
    "to_feature_map",
    "from_feature_map",
    "save_feature_map",
    "load_feature_map",
]

SIGMA_MAX = math.pi / 4.0
GAMMA_MAX = 8.0
DOMINANCE_THRESHOLD = 1.5
FEATURE_MAP_SIZE = 32

_MAX_ITERATIONS = 200
_RELATIVE_TOL = 1e-8
_INIT_SIGMA = 0.15
_INIT_BLUR_PIXELS = 3.0


@dataclass(frozen=True)
class GaussianLight:
    """One spherical Gaussian light: position, angular size, peak radiance."""

    u: float
    v: float
    sigma: float
    gamma: float

    def __post_init__(self) -> None:
        for name in ("u", "v", "sigma", "gamma"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val)):
                raise ValueError(f"{name} must be a finite number, got {val!r}")
            object.__setattr__(self, name, float(val))
        if not (0.0 <= self.u < 1.0):
            raise ValueError(f"u must be in [0, 1), got {self.u}")
        if not (0.0 <= self.v <= 1.0):
            raise ValueError(f"v must be in [0, 1], got {self.v}")
        if not (0.0 < self.sigma <= SIGMA_MAX):
            raise ValueError(f"sigma must be in (0, {SIGMA_MAX:.6f}], got {self.sigma}")
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def direction(self) -> np.ndarray:
        """Unit center direction on the sphere."""
        return uv_to_direction(self.u, self.v)


@dataclass(frozen=True)
class LightFit:
    """Result of fitting one Gaussian light plus an ambient floor to a map."""

    light: GaussianLight
    ambient: np.ndarray  # (3,) per-channel floor, >= 0
    rms_residual: float
    peak_to_mean: float
    iterations: int

    def __post_init__(self) -> None:
        amb = np.asarray(self.ambient, dtype=np.float64).reshape(3).copy()
        if (amb < 0).any() or not np.isfinite(amb).all():
            raise ValueError("ambient must be finite and non-negative")
        amb.flags.writeable = False
        object.__setattr__(self, "ambient", amb)


@dataclass(frozen=True)
class LightFeatureMap:
    """Light parameters normalized to [0, 1] and tiled as constant planes.

    Plane order: u, v, sigma / sigma_max, min(gamma / gamma_max, 1).
    """

    planes: np.ndarray  # (4, 32, 32) float64
    sigma_max: float = SIGMA_MAX
    gamma_max: float = GAMMA_MAX

    def __post_init__(self) -> None:
        planes = np.asarray(self.planes, dtype=np.float64)
        size = FEATURE_MAP_SIZE
        if planes.shape != (4, size, size):
            raise ValueError(f"planes must be (4, {size}, {size}), got {planes.shape}")
        if not np.isfinite(planes).all():
            raise ValueError("feature planes must be finite")
        planes = np.ascontiguousarray(planes)
        planes.flags.writeable = False
        object.__setattr__(self, "planes", planes)


def synth_gaussian_env(light: GaussianLight, width: int = 64) -> EnvironmentMap:
    """Render a light into a grayscale equirectangular map (no ambient)."""
    height = width // 2
    dirs = pixel_directions(width, height)
    cos_a = np.clip(dirs @ light.direction(), -1.0, 1.0)
    alpha = np.arccos(cos_a)
    value = light.gamma * np.exp(-(alpha * alpha) / (2.0 * light.sigma * light.sigma))
    return EnvironmentMap(width=width, height=height,
                          data=np.repeat(value[:, :, None], 3, axis=2))


# ---------------------------------------------------------------------------
# Fitting

@functools.lru_cache(maxsize=4)
def _blur_operator(width: int, height: int):
    # Dense blur kernel for the argmax init, cached for the desk-scale maps
    # the fitter sees in a loop.  beta is measured in rows (3 pixels).
    beta = _INIT_BLUR_PIXELS * math.pi / height
    dirs = pixel_directions(width, height).reshape(-1, 3)
    w = solid_angle_map(width, height).reshape(-1)
    cos_a = np.clip(dirs @ dirs.T, -1.0, 1.0)
    kern = np.exp(-(np.arccos(cos_a) ** 2) / (2.0 * beta * beta)).astype(np.float32)
    kern *= w[None, :].astype(np.float32)
    return kern, kern.sum(axis=1)


def _blurred_argmax(lum: np.ndarray, width: int, height: int) -> tuple[int, int]:
    if width * height <= 4096:
        kern, denom = _blur_operator(width, height)
        blurred = (kern @ lum.reshape(-1).astype(np.float32)) / denom
    else:
        beta = _INIT_BLUR_PIXELS * math.pi / height
        dirs = pixel_directions(width, height).reshape(-1, 3)
        w = solid_angle_map(width, height).reshape(-1)
        wl = (w * lum.reshape(-1))
        blurred = np.empty(width * height)
        for start in range(0, dirs.shape[0], 4096):
            stop = min(start + 4096, dirs.shape[0])
            cos_a = np.clip(dirs[start:stop] @ dirs.T, -1.0, 1.0)
            kern = np.exp(-(np.arccos(cos_a) ** 2) / (2.0 * beta * beta))
            blurred[start:stop] = (kern @ wl) / (kern @ w)
    flat = int(np.argmax(blurred))
    return flat % width, flat // width


def _gaussian_and_derivs(dirs: np.ndarray, u: float, v: float, sigma: float):
    phi = 2.0 * math.pi * u - math.pi
    theta = math.pi * v
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    sin_p, cos_p = math.sin(phi), math.cos(phi)
    center = np.array([sin_t * cos_p, cos_t, sin_t * sin_p])
    dc_du = 2.0 * math.pi * np.array([-sin_t * sin_p, 0.0, sin_t * cos_p])
    dc_dv = math.pi * np.array([cos_t * cos_p, -sin_t, cos_t * sin_p])

    t = np.clip(dirs @ center, -1.0, 1.0)
    alpha = np.arccos(t)
    g = np.exp(-(alpha * alpha) / (2.0 * sigma * sigma))
    # dG/dt with t = cos(alpha); alpha/sin(alpha) is smooth through alpha=0.
    sin_a = np.sqrt(np.maximum(1.0 - t * t, 1e-24))
    dg_dt = g * alpha / (sigma * sigma * sin_a)
    dg_du = dg_dt * (dirs @ dc_du)
    dg_dv = dg_dt * (dirs @ dc_dv)
    dg_dsigma = g * alpha * alpha / (sigma ** 3)
    return g, dg_du, dg_dv, dg_dsigma


def _objective(data: np.ndarray, w: np.ndarray, g: np.ndarray,
               gamma: float, ambient: np.ndarray) -> float:
    resid = ambient[None, :] + gamma * g[:, None] - data
    return float((w[:, None] * resid * resid).sum())


def _clamp_params(p: np.ndarray) -> np.ndarray:
    p = p.copy()
    p[1] = min(max(p[1], 0.0), 1.0)
    p[2] = min(max(p[2], 1e-3), math.pi / 2.0)
    p[3] = max(p[3], 1e-9)
    p[4:7] = np.maximum(p[4:7], 0.0)
    return p


def fit_gaussian(env: EnvironmentMap) -> LightFit:
    """Fit one Gaussian light plus per-channel ambient floor to a map.

    Minimizes sum_p w(p) * ||env(p) - ambient - gamma * G(p)||^2 over the
    full RGB residual by damped Gauss-Newton (damping x10 on objective
    increase, /3 on decrease, stop below 1e-8 relative change or 200
    iterations).  Initialization: center at the argmax of a 3-pixel-wide
    pre-blurred luminance map, sigma 0.15 rad, gamma = peak minus median
    luminance, ambient = per-channel median.

    Raises:
        NoDominantLight: peak-to-mean luminance below the dominance
            threshold (near-uniform map) or an all-zero map.
    """
    width, height = env.width, env.height
    data = env.data.reshape(-1, 3)
    w = solid_angle_map(width, height).reshape(-1)
    lum = luminance(env.data)

    mean_lum = float((w * lum.reshape(-1)).sum() / w.sum())
    if mean_lum <= 0.0:
        raise NoDominantLight("environment map carries no energy")
    peak_to_mean = float(lum.max() / mean_lum)
    if peak_to_mean < DOMINANCE_THRESHOLD:
        raise NoDominantLight(
            f"peak-to-mean luminance {peak_to_mean:.3f} is below "
            f"{DOMINANCE_THRESHOLD} (no dominant light)")

    i0, j0 = _blurred_argmax(lum, width, height)
    median_lum = float(np.median(lum))
    params = np.array([
        (i0 + 0.5) / width,
        (j0 + 0.5) / height,
        _INIT_SIGMA,
        max(float(lum.max()) - median_lum, 1e-3),
        *np.median(env.data.reshape(-1, 3), axis=0),
    ])
    params = _clamp_params(params)

    dirs = pixel_directions(width, height).reshape(-1, 3)
    n_pix = dirs.shape[0]
    jac = np.empty((n_pix, 3, 7))
    jac[:] = 0.0
    sqrt_w = np.sqrt(w)

    g, *_ = _gaussian_and_derivs(dirs, params[0], params[1], params[2])
    best = _objective(data, w, g, params[3], params[4:7])
    damping = 1e-3
    iterations = 0
    for iterations in range(1, _MAX_ITERATIONS + 1):
        u, v, sigma, gamma = params[0], params[1], params[2], params[3]
        g, dg_du, dg_dv, dg_ds = _gaussian_and_derivs(dirs, u, v, sigma)
        resid = (params[4:7][None, :] + gamma * g[:, None] - data) * sqrt_w[:, None]
        for column, grad in ((0, dg_du), (1, dg_dv), (2, dg_ds)):
            jac[:, :, column] = (gamma * grad * sqrt_w)[:, None]
        jac[:, :, 3] = (g * sqrt_w)[:, None]
        for ch in range(3):
            jac[:, ch, 4 + ch] = sqrt_w
        jtj = np.einsum("pci,pcj->ij", jac, jac)
        jtr = np.einsum("pci,pc->i", jac, resid)

        accepted = False
        for _ in range(12):
            lhs = jtj + damping * np.diag(np.maximum(np.diag(jtj), 1e-12))
            try:
                step = np.linalg.solve(lhs, -jtr)
            except np.linalg.LinAlgError:
                damping *= 10.0
                continue
            cand = _clamp_params(params + step)
            g_c, *_ = _gaussian_and_derivs(dirs, cand[0], cand[1], cand[2])
            trial = _objective(data, w, g_c, cand[3], cand[4:7])
            if trial < best:
                damping = max(damping / 3.0, 1e-12)
                accepted = True
                break
            damping *= 10.0
        if not accepted:
            break
        change = (best - trial) / max(best, 1e-300)
        params, best = cand, trial
        if change < _RELATIVE_TOL:
            break

    u = params[0] % 1.0
    v = min(max(params[1], 0.0), 1.0)
    sigma = min(max(params[2], 1e-6), SIGMA_MAX)
    gamma = max(params[3], 1e-9)
    ambient = np.maximum(params[4:7], 0.0)
    g, *_ = _gaussian_and_derivs(dirs, u, v, sigma)
    final = _objective(data, w, g, gamma, ambient)
    rms = math.sqrt(final / (3.0 * w.sum()))
    return LightFit(
        light=GaussianLight(u=u, v=v, sigma=sigma, gamma=gamma),
        ambient=ambient,
        rms_residual=rms,
        peak_to_mean=peak_to_mean,
        iterations=iterations,
    )


def edit_light(light: GaussianLight, u: float | None = None, v: float | None = None,
               sigma_scale: float = 1.0, gamma_scale: float = 1.0) -> GaussianLight:
    """Return an edited copy: optional new position plus size/intensity scales.

    Position edits wrap in u and clamp v to [0, 1]; the scaled sigma is
    clamped into (0, sigma_max].
    """
    if sigma_scale <= 0.0 or gamma_scale <= 0.0:
        raise ValueError("sigma_scale and gamma_scale must be positive")
    new_u = light.u if u is None else float(u) % 1.0
    new_v = light.v if v is None else min(max(float(v), 0.0), 1.0)
    new_sigma = min(max(light.sigma * sigma_scale, 1e-9), SIGMA_MAX)
    return GaussianLight(u=new_u, v=new_v, sigma=new_sigma,
                         gamma=light.gamma * gamma_scale)


# ---------------------------------------------------------------------------
# Feature maps

def to_feature_map(light: GaussianLight) -> LightFeatureMap:
    """Normalize the four parameters to [0, 1] and tile 32x32 planes.

    gamma saturates at gamma_max; all other parameters are in range by
    construction.
    """
    size = FEATURE_MAP_SIZE
    planes = np.empty((4, size, size))
    planes[0] = light.u
    planes[1] = light.v
    planes[2] = light.sigma / SIGMA_MAX
    planes[3] = min(light.gamma / GAMMA_MAX, 1.0)
    return LightFeatureMap(planes=planes)


def from_feature_map(fmap: LightFeatureMap) -> GaussianLight:
    """Recover the light from constant planes (inverse of to_feature_map).

    Raises:
        ValueError: if any plane is non-constant beyond 1e-6 or out of range.
    """
    values = []
    for idx in range(4):
        plane = fmap.planes[idx]
        if float(plane.max() - plane.min()) > 1e-6:
            raise ValueError(f"feature plane {idx} is not constant")
        values.append(float(plane[0, 0]))
    u, v, sigma_n, gamma_n = values
    if not (0.0 <= u < 1.0 and 0.0 <= v <= 1.0):
        raise ValueError("u/v planes out of range")
    if not (0.0 < sigma_n <= 1.0 + 1e-12):
        raise ValueError("sigma plane out of range")
    if not (0.0 < gamma_n <= 1.0 + 1e-12):
        raise ValueError("gamma plane out of range")
    return GaussianLight(u=u, v=v,
                         sigma=min(sigma_n, 1.0) * fmap.sigma_max,
                         gamma=gamma_n * fmap.gamma_max)


def save_feature_map(fmap: LightFeatureMap, path) -> None:
    """Write raw little-endian float32 planes plus a JSON sidecar manifest.

    The sidecar (``<path>.json``) records shape, dtype, the normalization
    constants and the denormalized parameters.
    """
    light = from_feature_map(fmap)
    np.asarray(fmap.planes, dtype="<f4").tofile(path)
    sidecar = {
        "schema": "light-feature-map/1",
        "dtype": "<f4",
        "order": "C",
        "shape": [4, FEATURE_MAP_SIZE, FEATURE_MAP_SIZE],
        "sigma_max": fmap.sigma_max,
        "gamma_max": fmap.gamma_max,
        "light": {"u": light.u, "v": light.v,
                  "sigma": light.sigma, "gamma": light.gamma},
    }
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_feature_map(path) -> LightFeatureMap:
    """Read planes written by save_feature_map, validating the sidecar."""
    sidecar_path = str(path) + ".json"
    if not os.path.exists(sidecar_path):
        raise ValueError(f"missing feature-map sidecar {sidecar_path}")
    with open(sidecar_path, "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    if sidecar.get("schema") != "light-feature-map/1":
        raise ValueError(f"unknown feature-map schema {sidecar.get('schema')!r}")
    shape = tuple(sidecar["shape"])
    planes = np.fromfile(path, dtype=sidecar["dtype"]).reshape(shape)
    return LightFeatureMap(planes=planes.astype(np.float64),
                           sigma_max=float(sidecar["sigma_max"]),
                           gamma_max=float(sidecar["gamma_max"]))
