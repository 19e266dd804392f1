"""Image comparison metrics and shadow statistics.

MAE and MSE average over every channel value.  SSIM follows the classic
windowed form: an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
dynamic range 1, evaluated only where the window fits entirely inside the
image, averaged over windows and channels.  Inputs are clamped to [0, 1]
before comparison so HDR outliers cannot dominate.

Two SSIM implementations live here on purpose.  ``ssim`` is the production
path built on sliding windows; ``ssim_reference`` recomputes every window
with explicit loops and nothing shared.  Tests hold them within 1e-8 of each
other, which guards both against the same mistake appearing in each.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .envmap import REC709_LUMA

__all__ = [
    "SSIM_WINDOW",
    "SSIM_SIGMA",
    "ShadowStats",
    "mae",
    "mse",
    "ssim",
    "ssim_reference",
    "edge_band",
    "shadow_stats",
]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _as_array(image) -> np.ndarray:
    """Accept (H, W, 3) arrays or objects exposing one as ``.data``."""
    arr = np.asarray(getattr(image, "data", image), dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    return arr


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    return x, y


def _check_mask(mask, shape) -> np.ndarray | None:
    if mask is None:
        return None
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != shape:
        raise ValueError(f"mask shape {mask.shape} does not match image {shape}")
    if not mask.any():
        raise ValueError("mask selects no pixels")
    return mask


def mae(a, b, mask=None) -> float:
    """Mean absolute error over all channel values (optionally masked)."""
    x, y = _pair(a, b)
    mask = _check_mask(mask, x.shape[:2])
    diff = np.abs(x - y)
    return float(diff.mean() if mask is None else diff[mask].mean())


def mse(a, b, mask=None) -> float:
    """Mean squared error over all channel values (optionally masked)."""
    x, y = _pair(a, b)
    mask = _check_mask(mask, x.shape[:2])
    diff = np.square(x - y)
    return float(diff.mean() if mask is None else diff[mask].mean())


def _ssim_kernel() -> np.ndarray:
    half = SSIM_WINDOW // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * SSIM_SIGMA ** 2))
    return g / g.sum()


def ssim(a, b, mask=None) -> float:
    """Structural similarity between two images in [0, 1] radiance.

    With a mask, only windows whose center pixel is selected contribute.
    """
    x, y = _pair(a, b)
    if min(x.shape[0], x.shape[1]) < SSIM_WINDOW:
        raise ValueError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM")
    mask = _check_mask(mask, x.shape[:2])
    half = SSIM_WINDOW // 2
    centers = None
    if mask is not None:
        centers = mask[half:x.shape[0] - half, half:x.shape[1] - half]
        if not centers.any():
            raise ValueError("mask selects no full SSIM windows")
    x = np.clip(x, 0.0, 1.0)
    y = np.clip(y, 0.0, 1.0)
    kernel = _ssim_kernel()
    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2
    per_channel = []
    for ch in range(3):
        wx = sliding_window_view(x[:, :, ch], (SSIM_WINDOW, SSIM_WINDOW))
        wy = sliding_window_view(y[:, :, ch], (SSIM_WINDOW, SSIM_WINDOW))
        axes = ([2, 3], [0, 1])
        mu_x = np.tensordot(wx, kernel, axes=axes)
        mu_y = np.tensordot(wy, kernel, axes=axes)
        xx = np.tensordot(wx * wx, kernel, axes=axes)
        yy = np.tensordot(wy * wy, kernel, axes=axes)
        xy = np.tensordot(wx * wy, kernel, axes=axes)
        var_x = xx - mu_x * mu_x
        var_y = yy - mu_y * mu_y
        cov = xy - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
        field = num / den
        per_channel.append(field.mean() if centers is None
                           else field[centers].mean())
    return float(np.mean(per_channel))


def ssim_reference(a, b, mask=None) -> float:
    """Brute-force SSIM: every window recomputed with explicit loops.

    Kept independent of :func:`ssim` as a cross-check; do not refactor the
    two onto shared internals.
    """
    x, y = _pair(a, b)
    if min(x.shape[0], x.shape[1]) < SSIM_WINDOW:
        raise ValueError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape[:2]:
            raise ValueError("mask shape does not match image")
    x = np.minimum(np.maximum(x, 0.0), 1.0)
    y = np.minimum(np.maximum(y, 0.0), 1.0)
    half = SSIM_WINDOW // 2
    sigma2 = 2.0 * SSIM_SIGMA * SSIM_SIGMA
    weights = [[math.exp(-(r * r + c * c) / sigma2)
                for c in range(-half, half + 1)]
               for r in range(-half, half + 1)]
    wsum = sum(sum(row) for row in weights)
    weights = [[w / wsum for w in row] for row in weights]
    c1 = _SSIM_K1 * _SSIM_K1
    c2 = _SSIM_K2 * _SSIM_K2
    height, width = x.shape[0], x.shape[1]
    total = 0.0
    count = 0
    for ch in range(3):
        for top in range(height - SSIM_WINDOW + 1):
            for left in range(width - SSIM_WINDOW + 1):
                if mask is not None and not mask[top + half, left + half]:
                    continue
                mx = my = 0.0
                for r in range(SSIM_WINDOW):
                    for c in range(SSIM_WINDOW):
                        w = weights[r][c]
                        mx += w * x[top + r, left + c, ch]
                        my += w * y[top + r, left + c, ch]
                vx = vy = cov = 0.0
                for r in range(SSIM_WINDOW):
                    for c in range(SSIM_WINDOW):
                        w = weights[r][c]
                        dx = x[top + r, left + c, ch] - mx
                        dy = y[top + r, left + c, ch] - my
                        vx += w * dx * dx
                        vy += w * dy * dy
                        cov += w * dx * dy
                num = (2.0 * mx * my + c1) * (2.0 * cov + c2)
                den = (mx * mx + my * my + c1) * (vx + vy + c2)
                total += num / den
                count += 1
    if count == 0:
        raise ValueError("mask selects no full SSIM windows")
    return total / count


def edge_band(mask: np.ndarray, radius: int = 2) -> np.ndarray:
    """Pixels within ``radius`` steps of the mask boundary, on either side."""
    if radius < 1:
        raise ValueError(f"radius must be at least 1, got {radius}")
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError(f"expected a 2D mask, got shape {mask.shape}")
    grown = ndimage.binary_dilation(mask, iterations=radius)
    shrunk = ndimage.binary_erosion(mask, iterations=radius)
    return grown & ~shrunk


@dataclass(frozen=True)
class ShadowStats:
    """Summary of one shadow region in one image."""

    umbra_mean: float
    edge_max_gradient: float
    umbra_pixels: int


def shadow_stats(image, umbra: np.ndarray, band_radius: int = 2) -> ShadowStats:
    """Mean umbra luminance and the steepest luminance step near its edge.

    Luminance is the Rec. 709 weighting.  The gradient is evaluated with
    ``np.gradient`` and its magnitude maximized over the edge band, so a
    hard shadow scores high and a diffused one low.
    """
    arr = _as_array(image)
    umbra = np.asarray(umbra, dtype=bool)
    if umbra.shape != arr.shape[:2]:
        raise ValueError(
            f"umbra shape {umbra.shape} does not match image {arr.shape[:2]}")
    if not umbra.any():
        raise ValueError("umbra mask is empty")
    lum = arr @ REC709_LUMA
    gy, gx = np.gradient(lum)
    magnitude = np.hypot(gy, gx)
    band = edge_band(umbra, band_radius)
    return ShadowStats(
        umbra_mean=float(lum[umbra].mean()),
        edge_max_gradient=float(magnitude[band].max()) if band.any() else 0.0,
        umbra_pixels=int(umbra.sum()),
    )
