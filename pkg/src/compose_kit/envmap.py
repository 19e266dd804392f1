"""Equirectangular environment maps: geometry, sampling, I/O and diffusion.

An environment map stores linear radiance on a latitude-longitude grid with
a 2:1 aspect.  Pixel (i, j) is centered at longitude
``phi = 2*pi*(i + 0.5)/W - pi`` and colatitude ``theta = pi*(j + 0.5)/H``
and looks along the y-up direction

    d = (sin(theta)*cos(phi), cos(theta), sin(theta)*sin(phi)).

Longitude wraps around; colatitude is clamped at the poles.
"""

from __future__ import annotations

import functools
import math
import os
from dataclasses import dataclass

import numpy as np

from . import fileio
from .errors import FormatError

__all__ = [
    "EnvironmentMap",
    "pixel_directions",
    "solid_angle_weights",
    "solid_angle_map",
    "uv_to_direction",
    "direction_to_uv",
    "luminance",
    "load_envmap",
    "save_envmap",
    "sample_env",
    "rotate_env",
    "scale_env",
    "diffuse_env",
]

REC709_LUMA = np.array([0.2126, 0.7152, 0.0722])

# Beyond this pixel count diffuse_env falls back to streaming chunks instead
# of one dense kernel matrix.
_CHUNK_PIXELS = 4096


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class EnvironmentMap:
    """Immutable linear-radiance equirectangular map.

    Attributes:
        width: Number of longitude samples W (even, >= 4).
        height: Number of colatitude samples H == W // 2.
        data: (H, W, 3) float64 array, finite and non-negative, read-only.
    """

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.width < 4 or self.width % 2 != 0:
            raise ValueError(f"width must be even and >= 4, got {self.width}")
        if self.height != self.width // 2:
            raise ValueError(
                f"height must be width // 2, got {self.width}x{self.height}")
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != (self.height, self.width, 3):
            raise ValueError(
                f"data shape {data.shape} does not match "
                f"{self.height}x{self.width}x3")
        if not np.isfinite(data).all():
            raise ValueError("radiance must be finite")
        if (data < 0).any():
            raise ValueError("radiance must be non-negative")
        object.__setattr__(self, "data", _freeze(data))

    @classmethod
    def from_array(cls, data: np.ndarray) -> "EnvironmentMap":
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"expected (H, W, 3) array, got shape {data.shape}")
        return cls(width=data.shape[1], height=data.shape[0], data=data)

    @classmethod
    def uniform(cls, width: int, value) -> "EnvironmentMap":
        rgb = np.broadcast_to(np.asarray(value, dtype=np.float64), (3,))
        data = np.tile(rgb, (width // 2, width, 1))
        return cls(width=width, height=width // 2, data=data)


@functools.lru_cache(maxsize=16)
def _grid(width: int, height: int):
    phi = 2.0 * np.pi * (np.arange(width) + 0.5) / width - np.pi
    theta = np.pi * (np.arange(height) + 0.5) / height
    return _freeze(phi), _freeze(theta)


@functools.lru_cache(maxsize=16)
def pixel_directions(width: int, height: int) -> np.ndarray:
    """Unit view directions of every pixel center, shape (H, W, 3)."""
    phi, theta = _grid(width, height)
    sin_t = np.sin(theta)[:, None]
    dirs = np.empty((height, width, 3))
    dirs[:, :, 0] = sin_t * np.cos(phi)[None, :]
    dirs[:, :, 1] = np.cos(theta)[:, None]
    dirs[:, :, 2] = sin_t * np.sin(phi)[None, :]
    return _freeze(dirs)


@functools.lru_cache(maxsize=16)
def solid_angle_weights(width: int, height: int) -> np.ndarray:
    """Per-row pixel solid angles, shape (H,).

    Each row weight is the exact spherical-cap difference
    ``(2*pi/W) * (cos(pi*j/H) - cos(pi*(j+1)/H))``, which equals the
    sin(theta_j) midpoint rule up to a constant factor and makes the
    weights sum to exactly 4*pi at every supported resolution.
    """
    edges = np.cos(np.pi * np.arange(height + 1) / height)
    return _freeze((2.0 * np.pi / width) * (edges[:-1] - edges[1:]))


def solid_angle_map(width: int, height: int) -> np.ndarray:
    """Per-pixel solid angles, shape (H, W)."""
    rows = solid_angle_weights(width, height)
    return np.broadcast_to(rows[:, None], (height, width))


def uv_to_direction(u, v) -> np.ndarray:
    """Map normalized coordinates (u in [0, 1), v in [0, 1]) to directions."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    phi = 2.0 * np.pi * u - np.pi
    theta = np.pi * v
    sin_t = np.sin(theta)
    return np.stack(
        [sin_t * np.cos(phi), np.cos(theta), sin_t * np.sin(phi)], axis=-1)


def direction_to_uv(directions: np.ndarray):
    """Map unit directions to (u, v); the seam maps to u = 0."""
    d = np.asarray(directions, dtype=np.float64)
    phi = np.arctan2(d[..., 2], d[..., 0])
    theta = np.arccos(np.clip(d[..., 1], -1.0, 1.0))
    u = np.mod((phi + np.pi) / (2.0 * np.pi), 1.0)
    return u, theta / np.pi


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Rec. 709 luminance of an (..., 3) linear array."""
    return np.asarray(rgb, dtype=np.float64) @ REC709_LUMA


def load_envmap(path) -> EnvironmentMap:
    """Load a .hdr, .pfm or .png file as an environment map.

    PNG input is decoded through the sRGB curve back to linear radiance.
    Raises FormatError for unknown extensions or non-2:1 content.
    """
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".hdr":
        data = fileio.read_hdr(path)
    elif ext == ".pfm":
        data = fileio.read_pfm(path)
        if data.ndim == 2:
            data = np.repeat(data[:, :, None], 3, axis=2)
    elif ext == ".png":
        data = fileio.read_png_srgb(path)
    else:
        raise FormatError(f"unsupported environment map format {ext!r}")
    data = np.asarray(data, dtype=np.float64)
    height, width = data.shape[:2]
    if width != 2 * height or width < 4 or width % 2 != 0:
        raise FormatError(
            f"environment maps must be 2:1 equirectangular, got {width}x{height}")
    return EnvironmentMap(width=width, height=height, data=data)


def save_envmap(env: EnvironmentMap, path) -> None:
    """Save a map as .hdr (RGBE), .pfm (float32) or .png (clipped sRGB)."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".hdr":
        fileio.write_hdr(path, env.data)
    elif ext == ".pfm":
        fileio.write_pfm(path, env.data)
    elif ext == ".png":
        fileio.write_png_srgb(path, env.data)
    else:
        raise FormatError(f"unsupported environment map format {ext!r}")


def sample_env(env: EnvironmentMap, directions: np.ndarray) -> np.ndarray:
    """Bilinearly sample radiance along unit directions.

    Longitude wraps across the seam; colatitude is clamped at the poles.
    Directions that land exactly on a pixel center return that pixel's
    value.  Accepts any (..., 3) batch and returns (..., 3) float64.

    Raises:
        ValueError: if any direction's norm deviates from 1 by more than 1e-6.
    """
    d = np.asarray(directions, dtype=np.float64)
    if d.shape[-1] != 3:
        raise ValueError(f"directions must be (..., 3), got {d.shape}")
    norms = np.linalg.norm(d, axis=-1)
    if not np.all(np.abs(norms - 1.0) <= 1e-6):
        raise ValueError("directions must be unit length (tolerance 1e-6)")
    width, height = env.width, env.height

    phi = np.arctan2(d[..., 2], d[..., 0])
    theta = np.arccos(np.clip(d[..., 1], -1.0, 1.0))
    fi = (phi + np.pi) / (2.0 * np.pi) * width - 0.5
    fj = theta / np.pi * height - 0.5
    # Snap near-exact pixel centers so atan2/arccos round-off cannot bleed a
    # neighboring pixel into an exact-center lookup.
    fi = np.where(np.abs(fi - np.rint(fi)) < 1e-9, np.rint(fi), fi)
    fj = np.where(np.abs(fj - np.rint(fj)) < 1e-9, np.rint(fj), fj)

    i0 = np.floor(fi).astype(np.int64)
    j0 = np.floor(fj).astype(np.int64)
    ti = fi - i0
    tj = fj - j0
    i0w = np.mod(i0, width)
    i1w = np.mod(i0 + 1, width)
    j0c = np.clip(j0, 0, height - 1)
    j1c = np.clip(j0 + 1, 0, height - 1)

    data = env.data
    v00 = data[j0c, i0w]
    v01 = data[j0c, i1w]
    v10 = data[j1c, i0w]
    v11 = data[j1c, i1w]
    ti = ti[..., None]
    tj = tj[..., None]
    top = v00 * (1.0 - ti) + v01 * ti
    bot = v10 * (1.0 - ti) + v11 * ti
    return top * (1.0 - tj) + bot * tj


def rotate_env(env: EnvironmentMap, delta_u: float) -> EnvironmentMap:
    """Rotate the map about the vertical axis by delta_u of a full turn.

    The shift is rounded to whole pixels, so rotation is an exact pixel
    permutation and rotating by delta_u and delta_u + 1 are identical.
    """
    if not np.isfinite(delta_u):
        raise ValueError("delta_u must be finite")
    shift = int(np.rint(float(delta_u) * env.width))
    data = np.roll(env.data, shift, axis=1)
    return EnvironmentMap(width=env.width, height=env.height, data=data)


def scale_env(env: EnvironmentMap, k: float) -> EnvironmentMap:
    """Scale radiance by a non-negative factor."""
    k = float(k)
    if not np.isfinite(k) or k < 0:
        raise ValueError(f"scale factor must be finite and >= 0, got {k}")
    return EnvironmentMap(width=env.width, height=env.height, data=env.data * k)


def _kernel_row_chunk(dirs_out: np.ndarray, dirs_all: np.ndarray,
                      beta: float) -> np.ndarray:
    cos_a = np.clip(dirs_out @ dirs_all.T, -1.0, 1.0)
    alpha = np.arccos(cos_a)
    return np.exp(-(alpha * alpha) / (2.0 * beta * beta))


def diffuse_env(env: EnvironmentMap, beta: float) -> EnvironmentMap:
    """Blur a map with a normalized spherical Gaussian of angular width beta.

    output(p) = sum_q w(q) K(alpha(p, q)) env(q) / sum_q w(q) K(alpha(p, q))
    with K(alpha) = exp(-alpha^2 / (2 beta^2)) over great-circle angles.
    Brute force over all pixel pairs, evaluated in row chunks; a uniform map
    is a fixed point and solid-angle-weighted energy is preserved up to
    quadrature error.
    """
    beta = float(beta)
    if not (0.0 < beta <= np.pi):
        raise ValueError(f"beta must be in (0, pi], got {beta}")
    width, height = env.width, env.height
    dirs = pixel_directions(width, height).reshape(-1, 3)
    w = solid_angle_map(width, height).reshape(-1)
    src = env.data.reshape(-1, 3)
    w_src = src * w[:, None]
    out = np.empty_like(src)
    for start in range(0, dirs.shape[0], _CHUNK_PIXELS):
        stop = min(start + _CHUNK_PIXELS, dirs.shape[0])
        kern = _kernel_row_chunk(dirs[start:stop], dirs, beta)
        denom = kern @ w
        out[start:stop] = (kern @ w_src) / denom[:, None]
    data = out.reshape(height, width, 3)
    # quantize to single precision, the precision of every on-disk map
    # format, so writing the result to a file and reading it back can never
    # change a downstream render
    data = np.maximum(data, 0.0).astype(np.float32).astype(np.float64)
    return EnvironmentMap(width=width, height=height, data=data)
