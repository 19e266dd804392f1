"""Environment map geometry, sampling, diffusion and file round trips."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compose_kit.envmap import (
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
    solid_angle_weights,
    uv_to_direction,
)
from compose_kit.errors import FormatError


def _random_env(width: int, seed: int, scale: float = 4.0) -> EnvironmentMap:
    rng = np.random.default_rng(seed)
    data = rng.random((width // 2, width, 3)) * scale
    return EnvironmentMap.from_array(data)


# ---------------------------------------------------------------------------
# Reference RGBE codec (independent scalar oracle for the .hdr round trip)

def _ref_rgbe_encode(r: float, g: float, b: float) -> tuple[int, int, int, int]:
    m = max(r, g, b)
    if m < 1e-32:
        return (0, 0, 0, 0)
    frac, exp = math.frexp(m)
    s = frac * 255.9999 / m
    return (int(r * s), int(g * s), int(b * s), exp + 128)


def _ref_rgbe_decode(q: tuple[int, int, int, int]) -> tuple[float, float, float]:
    if q[3] == 0:
        return (0.0, 0.0, 0.0)
    f = math.ldexp(1.0, q[3] - 136)
    return ((q[0] + 0.5) * f, (q[1] + 0.5) * f, (q[2] + 0.5) * f)


def _ref_quantize(data: np.ndarray) -> np.ndarray:
    out = np.empty_like(data)
    for j in range(data.shape[0]):
        for i in range(data.shape[1]):
            out[j, i] = _ref_rgbe_decode(_ref_rgbe_encode(*data[j, i]))
    return out


# ---------------------------------------------------------------------------
# Geometry

def test_pixel_directions_match_angle_formula() -> None:
    width, height = 16, 8
    dirs = pixel_directions(width, height)
    for i, j in [(0, 0), (5, 3), (15, 7), (8, 4)]:
        phi = 2.0 * math.pi * (i + 0.5) / width - math.pi
        theta = math.pi * (j + 0.5) / height
        want = np.array([
            math.sin(theta) * math.cos(phi),
            math.cos(theta),
            math.sin(theta) * math.sin(phi),
        ])
        np.testing.assert_allclose(dirs[j, i], want, atol=1e-15)
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=-1), 1.0, atol=1e-12)


@pytest.mark.parametrize("width", [4, 8, 16, 64, 128, 256])
def test_solid_angles_sum_to_sphere(width: int) -> None:
    total = solid_angle_weights(width, width // 2).sum() * width
    assert abs(total - 4.0 * math.pi) / (4.0 * math.pi) <= 1e-3
    per_pixel = solid_angle_map(width, width // 2).sum()
    np.testing.assert_allclose(per_pixel, 4.0 * math.pi, rtol=1e-12)


def test_uv_direction_round_trip() -> None:
    rng = np.random.default_rng(7)
    u = rng.random(64)
    v = rng.random(64) * 0.98 + 0.01
    ru, rv = direction_to_uv(uv_to_direction(u, v))
    np.testing.assert_allclose(ru, u, atol=1e-12)
    np.testing.assert_allclose(rv, v, atol=1e-12)


# ---------------------------------------------------------------------------
# Sampling

def test_sample_at_pixel_centers_is_exact_lookup() -> None:
    env = _random_env(32, seed=0)
    dirs = pixel_directions(env.width, env.height)
    got = sample_env(env, dirs.reshape(-1, 3)).reshape(env.data.shape)
    assert np.array_equal(got, env.data)


def test_sample_wraps_across_seam() -> None:
    env = _random_env(16, seed=1)
    j = 3
    v = (j + 0.5) / env.height
    # Quarter of a pixel past the last column center: blends columns W-1 and 0.
    u = (env.width - 1 + 0.5 + 0.25) / env.width
    got = sample_env(env, uv_to_direction(u, v))
    want = 0.75 * env.data[j, env.width - 1] + 0.25 * env.data[j, 0]
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_sample_clamps_at_poles() -> None:
    env = _random_env(16, seed=2)
    got = sample_env(env, np.array([0.0, 1.0, 0.0]))
    # Colatitude clamps into row 0; the result must blend row-0 values only.
    row = env.data[0]
    assert (got >= row.min(axis=0) - 1e-12).all()
    assert (got <= row.max(axis=0) + 1e-12).all()
    got_south = sample_env(env, np.array([0.0, -1.0, 0.0]))
    row = env.data[-1]
    assert (got_south >= row.min(axis=0) - 1e-12).all()
    assert (got_south <= row.max(axis=0) + 1e-12).all()


def test_sample_rejects_non_unit_directions() -> None:
    env = _random_env(8, seed=3)
    with pytest.raises(ValueError):
        sample_env(env, np.array([0.0, 2.0, 0.0]))


# ---------------------------------------------------------------------------
# Rotation and scaling

def test_rotate_is_exact_pixel_roll() -> None:
    env = _random_env(16, seed=4)
    rot = rotate_env(env, 0.25)
    assert np.array_equal(rot.data, np.roll(env.data, 4, axis=1))


def test_rotate_full_turn_alias() -> None:
    env = _random_env(16, seed=5)
    a = rotate_env(env, 0.3).data
    b = rotate_env(env, 1.3).data
    assert np.array_equal(a, b)


@settings(max_examples=20, deadline=None)
@given(delta=st.floats(min_value=-2.0, max_value=2.0, allow_nan=False))
def test_rotate_then_unrotate_is_identity(delta: float) -> None:
    env = _random_env(16, seed=6)
    back = rotate_env(rotate_env(env, delta), -delta)
    assert np.array_equal(back.data, env.data)


def test_scale_env_scales_peak_linearly() -> None:
    env = _random_env(16, seed=7)
    assert np.array_equal(scale_env(env, 2.5).data, env.data * 2.5)
    with pytest.raises(ValueError):
        scale_env(env, -1.0)


# ---------------------------------------------------------------------------
# Diffusion

def test_diffuse_uniform_map_is_fixed_point() -> None:
    env = EnvironmentMap.uniform(32, (0.3, 0.5, 0.7))
    out = diffuse_env(env, 0.8)
    # exact up to the single-precision quantization of the stored result
    np.testing.assert_allclose(out.data, env.data, rtol=1e-6)
    assert np.array_equal(out.data, out.data.astype(np.float32))


@pytest.mark.parametrize("beta", [0.3, 0.8, 2.0])
def test_diffuse_preserves_weighted_energy(beta: float) -> None:
    env = _random_env(64, seed=8)
    out = diffuse_env(env, beta)
    w = solid_angle_map(env.width, env.height)[:, :, None]
    before = (env.data * w).sum(axis=(0, 1))
    after = (out.data * w).sum(axis=(0, 1))
    np.testing.assert_allclose(after, before, rtol=1e-3)


def test_diffuse_never_negative_and_smooths_peak() -> None:
    data = np.zeros((16, 32, 3))
    data[4, 9] = 10.0
    env = EnvironmentMap.from_array(data)
    out = diffuse_env(env, 0.5)
    assert (out.data >= 0.0).all()
    assert out.data.max() < env.data.max()
    assert out.data.max() > 0.0


def test_diffuse_rejects_bad_beta() -> None:
    env = _random_env(8, seed=9)
    for beta in (0.0, -0.1, 4.0):
        with pytest.raises(ValueError):
            diffuse_env(env, beta)


# ---------------------------------------------------------------------------
# Validation

def test_constructor_rejects_bad_shapes_and_values() -> None:
    with pytest.raises(ValueError):
        EnvironmentMap.from_array(np.zeros((8, 8, 3)))
    with pytest.raises(ValueError):
        EnvironmentMap.from_array(np.zeros((2, 3, 3)))
    with pytest.raises(ValueError):
        EnvironmentMap.from_array(np.full((4, 8, 3), -1.0))
    bad = np.zeros((4, 8, 3))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        EnvironmentMap.from_array(bad)


def test_data_is_immutable() -> None:
    env = _random_env(8, seed=10)
    with pytest.raises(ValueError):
        env.data[0, 0, 0] = 1.0


def test_luminance_uses_rec709_weights() -> None:
    assert luminance(np.array([1.0, 0.0, 0.0])) == pytest.approx(0.2126)
    assert luminance(np.array([1.0, 1.0, 1.0])) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# File round trips

def test_pfm_round_trip_is_bit_identical(tmp_path) -> None:
    env = _random_env(32, seed=11)
    path = tmp_path / "env.pfm"
    save_envmap(env, path)
    loaded = load_envmap(path)
    assert np.array_equal(loaded.data, env.data.astype(np.float32).astype(np.float64))


def test_hdr_round_trip_of_representable_values(tmp_path) -> None:
    env = _random_env(32, seed=12)
    # Quantizing twice through the scalar reference codec reaches the RGBE
    # fixed point (a single pass can shift max-mantissa-127 corner pixels).
    q = _ref_quantize(_ref_quantize(np.asarray(env.data)))
    path = tmp_path / "env.hdr"
    save_envmap(EnvironmentMap.from_array(q), path)
    loaded = load_envmap(path)
    np.testing.assert_allclose(loaded.data, q, atol=1e-6)


def test_hdr_round_trip_of_generic_values_within_rgbe_precision(tmp_path) -> None:
    env = _random_env(32, seed=13)
    path = tmp_path / "env.hdr"
    save_envmap(env, path)
    loaded = load_envmap(path)
    # Error bound: half a mantissa step of the per-pixel max channel.
    bound = np.asarray(env.data).max(axis=2) / 255.0 + 1e-9
    assert (np.abs(loaded.data - env.data) <= bound[:, :, None]).all()


def test_hdr_save_load_save_is_stable(tmp_path) -> None:
    env = _random_env(16, seed=14)
    p1, p2 = tmp_path / "a.hdr", tmp_path / "b.hdr"
    save_envmap(env, p1)
    once = load_envmap(p1)
    save_envmap(once, p2)
    twice = load_envmap(p2)
    np.testing.assert_allclose(twice.data, once.data, atol=1e-9)


def test_png_clips_hdr_values_to_one(tmp_path) -> None:
    data = np.full((4, 8, 3), 5.0)
    env = EnvironmentMap.from_array(data)
    path = tmp_path / "env.png"
    save_envmap(env, path)
    loaded = load_envmap(path)
    np.testing.assert_allclose(loaded.data, 1.0, atol=1e-6)


def test_png_round_trip_within_quantization(tmp_path) -> None:
    env = _random_env(16, seed=15, scale=1.0)
    path = tmp_path / "env.png"
    save_envmap(env, path)
    loaded = load_envmap(path)
    # 8-bit sRGB quantization: worst case in linear space stays below the
    # derivative bound of the inverse curve at 1 (~1/103 per code step).
    assert np.abs(loaded.data - env.data).max() < 1.0 / 100.0


def test_load_rejects_unknown_extension_and_bad_content(tmp_path) -> None:
    with pytest.raises(FormatError):
        load_envmap(tmp_path / "env.tiff")
    bad = tmp_path / "trunc.pfm"
    bad.write_bytes(b"PF\n8 4\n-1.0\n\x00\x00")
    with pytest.raises(FormatError):
        load_envmap(bad)
    square = tmp_path / "square.pfm"
    from compose_kit.fileio import write_pfm

    write_pfm(square, np.zeros((8, 8, 3), dtype=np.float32))
    with pytest.raises(FormatError):
        load_envmap(square)
