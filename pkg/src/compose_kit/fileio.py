"""Raw image file codecs: PFM, Radiance HDR (RGBE) and sRGB PNG.

These functions move bare numpy arrays in and out of files; the semantic
wrappers (environment maps, renders) live in :mod:`compose_kit.envmap` and
:mod:`compose_kit.relight`.

Conventions:
    * PFM files are written little-endian (scale line ``-1.0``) with the
      customary bottom-to-top scanline order.
    * HDR files use the shared-exponent RGBE encoding with a standard
      ``-Y H +X W`` resolution line.  Scanlines are written with new-style
      RLE packets (literal runs), and both RLE flavours plus flat scanlines
      are accepted on read.
    * PNG files are 8-bit sRGB; linear values are clipped to [0, 1] before
      the transfer curve is applied.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import FormatError

__all__ = [
    "read_pfm",
    "write_pfm",
    "read_hdr",
    "write_hdr",
    "read_png_srgb",
    "write_png_srgb",
    "srgb_encode",
    "srgb_decode",
    "float_to_rgbe",
    "rgbe_to_float",
]


# ---------------------------------------------------------------------------
# PFM

def write_pfm(path, data: np.ndarray) -> None:
    """Write a float32 image as a PFM file (little-endian, bottom-up rows).

    Args:
        path: Destination file path.
        data: Array of shape (H, W, 3) for color or (H, W) for grayscale.
    """
    arr = np.asarray(data, dtype="<f4")
    if arr.ndim == 3 and arr.shape[2] == 3:
        tag = b"PF"
    elif arr.ndim == 2:
        tag = b"Pf"
    else:
        raise ValueError(f"PFM data must be (H, W, 3) or (H, W), got {arr.shape}")
    height, width = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(tag + b"\n")
        fh.write(f"{width} {height}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(np.flipud(arr).tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a float32 array of shape (H, W, 3) or (H, W).

    The sign of the scale line selects endianness; its magnitude is ignored
    (files written by this package always carry -1.0).
    """
    with open(path, "rb") as fh:
        tag = fh.readline().strip()
        if tag == b"PF":
            channels = 3
        elif tag == b"Pf":
            channels = 1
        else:
            raise FormatError(f"not a PFM file: bad tag {tag!r}")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise FormatError("malformed PFM dimension line")
        width, height = int(dims[0]), int(dims[1])
        if width <= 0 or height <= 0:
            raise FormatError(f"bad PFM dimensions {width}x{height}")
        try:
            scale = float(fh.readline().strip())
        except ValueError as exc:
            raise FormatError("malformed PFM scale line") from exc
        dtype = "<f4" if scale < 0 else ">f4"
        count = width * height * channels
        buf = fh.read(count * 4)
        if len(buf) != count * 4:
            raise FormatError("truncated PFM payload")
    arr = np.frombuffer(buf, dtype=dtype).reshape(height, width, channels)
    arr = np.flipud(arr).astype(np.float32)
    return arr[:, :, 0] if channels == 1 else arr


# ---------------------------------------------------------------------------
# Radiance HDR (RGBE)

_RGBE_EXP_BIAS = 128


def float_to_rgbe(rgb: np.ndarray) -> np.ndarray:
    """Encode (..., 3) linear RGB into (..., 4) shared-exponent RGBE bytes."""
    rgb = np.asarray(rgb, dtype=np.float64)
    bright = rgb.max(axis=-1)
    mant, exp = np.frexp(bright)
    # Guard the all-dark case; those pixels are zeroed below anyway.
    safe = np.where(bright > 0.0, bright, 1.0)
    scale = mant * 255.9999 / safe
    out = np.empty(rgb.shape[:-1] + (4,), dtype=np.uint8)
    out[..., :3] = np.floor(rgb * scale[..., None]).astype(np.uint8)
    out[..., 3] = np.clip(exp + _RGBE_EXP_BIAS, 0, 255).astype(np.uint8)
    dark = bright < 1e-32
    out[dark] = 0
    return out


def rgbe_to_float(rgbe: np.ndarray) -> np.ndarray:
    """Decode (..., 4) RGBE bytes into (..., 3) linear RGB float64."""
    rgbe = np.asarray(rgbe, dtype=np.uint8)
    exp = rgbe[..., 3].astype(np.int32)
    scale = np.ldexp(1.0, exp - (_RGBE_EXP_BIAS + 8))
    rgb = (rgbe[..., :3].astype(np.float64) + 0.5) * scale[..., None]
    rgb[exp == 0] = 0.0
    return rgb


def write_hdr(path, data: np.ndarray) -> None:
    """Write a linear (H, W, 3) array as a Radiance .hdr file.

    Scanlines are emitted as new-style RLE streams built from literal
    packets when the width allows it (8 <= W < 32768), flat otherwise.
    """
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"HDR data must be (H, W, 3), got {arr.shape}")
    height, width = arr.shape[:2]
    rgbe = float_to_rgbe(arr)
    with open(path, "wb") as fh:
        fh.write(b"#?RADIANCE\n")
        fh.write(b"FORMAT=32-bit_rle_rgbe\n\n")
        fh.write(f"-Y {height} +X {width}\n".encode("ascii"))
        if 8 <= width < 32768:
            for row in rgbe:
                fh.write(bytes((2, 2, (width >> 8) & 0xFF, width & 0xFF)))
                for comp in range(4):
                    col = row[:, comp].tobytes()
                    for start in range(0, width, 128):
                        chunk = col[start:start + 128]
                        fh.write(bytes((len(chunk),)) + chunk)
        else:
            fh.write(rgbe.tobytes())


def _read_rle_scanline(fh, width: int) -> np.ndarray:
    row = np.empty((width, 4), dtype=np.uint8)
    for comp in range(4):
        filled = 0
        while filled < width:
            code = fh.read(1)
            if not code:
                raise FormatError("truncated HDR RLE scanline")
            n = code[0]
            if n > 128:
                run = n - 128
                val = fh.read(1)
                if not val:
                    raise FormatError("truncated HDR RLE run")
                row[filled:filled + run, comp] = val[0]
                filled += run
            else:
                lit = fh.read(n)
                if len(lit) != n:
                    raise FormatError("truncated HDR RLE literals")
                row[filled:filled + n, comp] = np.frombuffer(lit, dtype=np.uint8)
                filled += n
        if filled != width:
            raise FormatError("HDR RLE scanline overruns width")
    return row


def _read_flat_scanline(fh, width: int, first: bytes = b"") -> np.ndarray:
    need = width * 4 - len(first)
    buf = first + fh.read(need)
    if len(buf) != width * 4:
        raise FormatError("truncated HDR scanline")
    pixels = np.frombuffer(buf, dtype=np.uint8).reshape(width, 4).copy()
    # Legacy run markers: (1, 1, 1, n) repeats the previous pixel n times,
    # shifted by 8 bits per consecutive marker.
    if not (pixels[:, :3] == 1).all(axis=1).any():
        return pixels
    out = []
    shift = 0
    for px in pixels:
        if px[0] == 1 and px[1] == 1 and px[2] == 1:
            if not out:
                raise FormatError("HDR legacy run with no previous pixel")
            out.extend([out[-1]] * (int(px[3]) << shift))
            shift += 8
        else:
            out.append(px)
            shift = 0
    if len(out) < width:
        extra = fh.read((width - len(out)) * 4)
        more = np.frombuffer(extra, dtype=np.uint8).reshape(-1, 4)
        for px in more:
            out.append(px)
    return np.array(out[:width], dtype=np.uint8)


def read_hdr(path) -> np.ndarray:
    """Read a Radiance .hdr file into a linear (H, W, 3) float64 array."""
    with open(path, "rb") as fh:
        magic = fh.readline()
        if not magic.startswith(b"#?"):
            raise FormatError("not a Radiance HDR file: missing #? signature")
        fmt_ok = False
        while True:
            line = fh.readline()
            if not line:
                raise FormatError("truncated HDR header")
            line = line.strip()
            if not line:
                break
            if line.startswith(b"FORMAT="):
                fmt_ok = line == b"FORMAT=32-bit_rle_rgbe"
        if not fmt_ok:
            raise FormatError("unsupported HDR format (expected 32-bit_rle_rgbe)")
        res = fh.readline().split()
        if len(res) != 4 or res[0] != b"-Y" or res[2] != b"+X":
            raise FormatError(f"unsupported HDR resolution line {b' '.join(res)!r}")
        height, width = int(res[1]), int(res[3])
        rows = np.empty((height, width, 4), dtype=np.uint8)
        for j in range(height):
            if width < 8 or width >= 32768:
                rows[j] = _read_flat_scanline(fh, width)
                continue
            head = fh.read(4)
            if len(head) != 4:
                raise FormatError("truncated HDR scanline header")
            if head[0] == 2 and head[1] == 2 and ((head[2] << 8) | head[3]) == width:
                rows[j] = _read_rle_scanline(fh, width)
            else:
                rows[j] = _read_flat_scanline(fh, width, first=head)
    return rgbe_to_float(rows)


# ---------------------------------------------------------------------------
# sRGB PNG

def srgb_encode(linear: np.ndarray) -> np.ndarray:
    """Apply the piecewise sRGB transfer curve to linear values in [0, 1]."""
    linear = np.asarray(linear, dtype=np.float64)
    low = linear * 12.92
    high = 1.055 * np.power(np.maximum(linear, 1e-12), 1.0 / 2.4) - 0.055
    return np.where(linear <= 0.0031308, low, high)


def srgb_decode(encoded: np.ndarray) -> np.ndarray:
    """Invert the sRGB transfer curve back to linear values."""
    encoded = np.asarray(encoded, dtype=np.float64)
    low = encoded / 12.92
    high = np.power((encoded + 0.055) / 1.055, 2.4)
    return np.where(encoded <= 0.04045, low, high)


def write_png_srgb(path, linear: np.ndarray) -> None:
    """Write linear (H, W, 3) data as an 8-bit sRGB PNG, clipping to [0, 1]."""
    arr = np.asarray(linear, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"PNG data must be (H, W, 3), got {arr.shape}")
    encoded = srgb_encode(np.clip(arr, 0.0, 1.0))
    quantized = np.clip(np.rint(encoded * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(path, format="PNG")


def read_png_srgb(path) -> np.ndarray:
    """Read an 8-bit PNG and decode sRGB to linear (H, W, 3) float64."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return srgb_decode(arr)
