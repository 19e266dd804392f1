"""Image-based relighting: OLAT bases, diffusion, compositing and edits.

An OLAT basis holds one image per light direction.  Relighting is a
weighted sum over the basis,

    I(p) = sum_i weights_i * sample_env(env, d_i) * images_i(p),

which is linear in the environment map.  The edit pipeline renders a
diffuse branch under the blurred source map, a shadowed branch under a
synthesized Gaussian light, and blends them:

    I_E = omega_d * I_D + (1 - omega_d) * I_S.

Higher omega_d softens shadows; omega_d = 1 ignores the requested light
entirely.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import fileio
from .envmap import EnvironmentMap, diffuse_env, sample_env
from .errors import FormatError
from .gausslight import GaussianLight, LightFit, fit_gaussian, synth_gaussian_env

__all__ = [
    "DEFAULT_BETA",
    "DEFAULT_LIGHT_COUNT",
    "LinearImage",
    "OlatBasis",
    "EditRequest",
    "EditResult",
    "render_olat",
    "diffuse_image",
    "composite",
    "edit",
    "tonemap",
    "save_image",
    "load_image",
    "save_olat_basis",
    "load_olat_basis",
]

# Blur width (radians) for the diffuse branch when a request does not say.
DEFAULT_BETA = 0.8
DEFAULT_LIGHT_COUNT = 160

_BASIS_SCHEMA = "olat-basis/1"


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class LinearImage:
    """Immutable linear-radiance image with an optional foreground mask."""

    width: int
    height: int
    data: np.ndarray                 # (H, W, 3) float, finite, >= 0
    mask: np.ndarray | None = None   # (H, W) bool

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float64)
        if data.shape != (self.height, self.width, 3):
            raise ValueError(
                f"data shape {data.shape} does not match "
                f"{self.height}x{self.width}x3")
        if not np.isfinite(data).all():
            raise ValueError("image values must be finite")
        if (data < 0).any():
            raise ValueError("image values must be non-negative")
        object.__setattr__(self, "data", _freeze(data))
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != (self.height, self.width):
                raise ValueError(f"mask shape {mask.shape} does not match image")
            object.__setattr__(self, "mask", _freeze(mask))


@dataclass(frozen=True)
class OlatBasis:
    """One-light-at-a-time basis: N directions, weights and images.

    Weights are positive and sum to 4*pi (uniform 4*pi/N by default).
    Images are packed as one (N, H, W, 3) float32 block.
    """

    directions: np.ndarray  # (N, 3) unit
    weights: np.ndarray     # (N,) > 0, sum 4*pi
    images: np.ndarray      # (N, H, W, 3) float32
    width: int
    height: int
    mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        dirs = np.asarray(self.directions, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        images = np.asarray(self.images, dtype=np.float32)
        n = dirs.shape[0]
        if dirs.shape != (n, 3) or n < 4:
            raise ValueError(f"directions must be (N >= 4, 3), got {dirs.shape}")
        if not np.allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-6):
            raise ValueError("light directions must be unit length")
        if weights.shape != (n,) or (weights <= 0).any():
            raise ValueError("weights must be positive, one per light")
        total = float(weights.sum())
        if abs(total - 4.0 * math.pi) > 1e-3 * 4.0 * math.pi:
            raise ValueError(
                f"weights must sum to 4*pi within 1e-3 relative, got {total:.6f}")
        if images.shape != (n, self.height, self.width, 3):
            raise ValueError(
                f"images shape {images.shape} does not match "
                f"(N={n}, {self.height}, {self.width}, 3)")
        if not np.isfinite(images).all() or (images < 0).any():
            raise ValueError("basis images must be finite and non-negative")
        object.__setattr__(self, "directions", _freeze(dirs))
        object.__setattr__(self, "weights", _freeze(weights))
        object.__setattr__(self, "images", _freeze(images))
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != (self.height, self.width):
                raise ValueError("mask shape does not match basis images")
            object.__setattr__(self, "mask", _freeze(mask))

    @property
    def n_lights(self) -> int:
        return int(self.directions.shape[0])

    def image(self, index: int) -> LinearImage:
        return LinearImage(width=self.width, height=self.height,
                           data=self.images[index],
                           mask=None if self.mask is None else self.mask)


def render_olat(basis: OlatBasis, env: EnvironmentMap) -> LinearImage:
    """Relight the basis under an environment map (linear in the map)."""
    radiance = sample_env(env, basis.directions)           # (N, 3)
    coeff = basis.weights[:, None] * radiance
    # Plain einsum keeps a fixed reduction order, so renders are bitwise
    # reproducible regardless of any thread settings.
    data = np.einsum("nc,nhwc->hwc", coeff, basis.images)
    return LinearImage(width=basis.width, height=basis.height, data=data,
                       mask=None if basis.mask is None else basis.mask)


def diffuse_image(basis: OlatBasis, env: EnvironmentMap, beta: float) -> LinearImage:
    """Render the diffuse branch: the basis relit under the blurred map."""
    return render_olat(basis, diffuse_env(env, beta))


def composite(diffuse: LinearImage, shadowed: LinearImage,
              omega_d: float) -> LinearImage:
    """Blend the two branches: omega_d * I_D + (1 - omega_d) * I_S.

    Endpoints are exact: omega_d = 0 returns the shadowed image bitwise and
    omega_d = 1 the diffuse image bitwise.
    """
    omega_d = float(omega_d)
    if not (0.0 <= omega_d <= 1.0):
        raise ValueError(f"omega_d must be in [0, 1], got {omega_d}")
    if (diffuse.width, diffuse.height) != (shadowed.width, shadowed.height):
        raise ValueError("branch image sizes differ")
    data = omega_d * diffuse.data + (1.0 - omega_d) * shadowed.data
    mask = diffuse.mask if diffuse.mask is not None else shadowed.mask
    return LinearImage(width=diffuse.width, height=diffuse.height,
                       data=data, mask=mask)


@dataclass(frozen=True)
class EditRequest:
    """One lighting edit: target light parameters plus blend controls.

    Any of u, v, sigma, gamma left as None is taken from the fitted source
    light; a request with all four set never needs a fit.
    """

    u: float | None = None
    v: float | None = None
    sigma: float | None = None
    gamma: float | None = None
    omega_d: float = 0.5
    beta: float = DEFAULT_BETA
    exposure: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.omega_d <= 1.0):
            raise ValueError(f"omega_d must be in [0, 1], got {self.omega_d}")
        if not (0.0 < self.beta <= math.pi):
            raise ValueError(f"beta must be in (0, pi], got {self.beta}")
        if not self.exposure > 0.0:
            raise ValueError(f"exposure must be positive, got {self.exposure}")

    @classmethod
    def absolute(cls, light: GaussianLight, omega_d: float = 0.5,
                 beta: float = DEFAULT_BETA, exposure: float = 1.0) -> "EditRequest":
        return cls(u=light.u, v=light.v, sigma=light.sigma, gamma=light.gamma,
                   omega_d=omega_d, beta=beta, exposure=exposure)

    @property
    def is_absolute(self) -> bool:
        return None not in (self.u, self.v, self.sigma, self.gamma)

    def resolve(self, fit: LightFit | None) -> GaussianLight:
        if self.is_absolute:
            return GaussianLight(u=self.u, v=self.v,
                                 sigma=self.sigma, gamma=self.gamma)
        if fit is None:
            raise ValueError("request leaves light fields unset but no fit given")
        base = fit.light
        return GaussianLight(
            u=base.u if self.u is None else float(self.u) % 1.0,
            v=base.v if self.v is None else self.v,
            sigma=base.sigma if self.sigma is None else self.sigma,
            gamma=base.gamma if self.gamma is None else self.gamma,
        )


@dataclass(frozen=True)
class EditResult:
    """Edited image plus the intermediates that produced it."""

    image: LinearImage
    diffuse: LinearImage
    shadowed: LinearImage
    light: GaussianLight
    fit: LightFit | None


def edit(basis: OlatBasis, source_env: EnvironmentMap,
         request: EditRequest) -> EditResult:
    """Run the full edit: diffuse branch, shadowed branch, blend.

    In-place requests (some light field unset) fit the source map first and
    propagate NoDominantLight; fully absolute requests never fit.
    """
    fit = None if request.is_absolute else fit_gaussian(source_env)
    light = request.resolve(fit)
    i_d = diffuse_image(basis, source_env, request.beta)
    i_s = render_olat(basis, synth_gaussian_env(light, source_env.width))
    blended = composite(i_d, i_s, request.omega_d)
    return EditResult(image=blended, diffuse=i_d, shadowed=i_s,
                      light=light, fit=fit)


def tonemap(image: LinearImage, exposure: float = 1.0) -> np.ndarray:
    """Clamp exposure-scaled radiance to [0, 1], sRGB-encode, quantize to 8 bit.

    A linear value of 1/exposure maps to code 255.
    """
    if not exposure > 0.0:
        raise ValueError(f"exposure must be positive, got {exposure}")
    clipped = np.clip(image.data * exposure, 0.0, 1.0)
    encoded = fileio.srgb_encode(clipped)
    return np.clip(np.rint(encoded * 255.0), 0, 255).astype(np.uint8)


def save_image(image: LinearImage, path, exposure: float = 1.0) -> None:
    """Write .pfm (linear float32) or .png (tonemapped 8-bit sRGB)."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".pfm":
        fileio.write_pfm(path, image.data)
    elif ext == ".png":
        from PIL import Image

        Image.fromarray(tonemap(image, exposure), mode="RGB").save(path, format="PNG")
    else:
        raise FormatError(f"unsupported image format {ext!r}")


def load_image(path) -> LinearImage:
    """Read .pfm as linear data or .png through the inverse sRGB curve."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".pfm":
        data = fileio.read_pfm(path)
        if data.ndim == 2:
            data = np.repeat(data[:, :, None], 3, axis=2)
    elif ext == ".png":
        data = fileio.read_png_srgb(path)
    else:
        raise FormatError(f"unsupported image format {ext!r}")
    return LinearImage(width=data.shape[1], height=data.shape[0], data=data)


def save_olat_basis(basis: OlatBasis, dirpath) -> None:
    """Write a basis directory: manifest.json plus one .pfm per light."""
    os.makedirs(dirpath, exist_ok=True)
    lights = []
    for i in range(basis.n_lights):
        name = f"olat_{i:04d}.pfm"
        fileio.write_pfm(os.path.join(dirpath, name), basis.images[i])
        lights.append({
            "direction": [float(x) for x in basis.directions[i]],
            "weight": float(basis.weights[i]),
            "image": name,
        })
    manifest = {
        "schema": _BASIS_SCHEMA,
        "count": basis.n_lights,
        "width": basis.width,
        "height": basis.height,
        "lights": lights,
    }
    if basis.mask is not None:
        mask_img = np.repeat(basis.mask[:, :, None], 3, axis=2).astype(np.float32)
        fileio.write_pfm(os.path.join(dirpath, "mask.pfm"), mask_img)
        manifest["mask"] = "mask.pfm"
    with open(os.path.join(dirpath, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_olat_basis(dirpath) -> OlatBasis:
    """Read a basis directory written by save_olat_basis."""
    manifest_path = os.path.join(dirpath, "manifest.json")
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError as exc:
        raise FormatError(f"no basis manifest at {manifest_path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid basis manifest: {exc}") from exc
    if manifest.get("schema") != _BASIS_SCHEMA:
        raise FormatError(f"unknown basis schema {manifest.get('schema')!r}")
    count = int(manifest["count"])
    width, height = int(manifest["width"]), int(manifest["height"])
    if len(manifest["lights"]) != count:
        raise FormatError("basis manifest light count mismatch")
    directions = np.empty((count, 3))
    weights = np.empty(count)
    images = np.empty((count, height, width, 3), dtype=np.float32)
    for i, entry in enumerate(manifest["lights"]):
        directions[i] = entry["direction"]
        weights[i] = entry["weight"]
        data = fileio.read_pfm(os.path.join(dirpath, entry["image"]))
        if data.shape != (height, width, 3):
            raise FormatError(f"basis image {entry['image']} has shape {data.shape}")
        images[i] = data
    mask = None
    if "mask" in manifest:
        mask = fileio.read_pfm(os.path.join(dirpath, manifest["mask"]))[:, :, 0] > 0.5
    return OlatBasis(directions=directions, weights=weights, images=images,
                     width=width, height=height, mask=mask)
