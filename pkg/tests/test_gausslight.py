"""Gaussian light synthesis, fitting, edits and feature-map round trips."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compose_kit.envmap import (
    EnvironmentMap,
    pixel_directions,
    rotate_env,
    sample_env,
)
from compose_kit.errors import NoDominantLight
from compose_kit.gausslight import (
    GAMMA_MAX,
    SIGMA_MAX,
    GaussianLight,
    LightFeatureMap,
    edit_light,
    fit_gaussian,
    from_feature_map,
    load_feature_map,
    save_feature_map,
    synth_gaussian_env,
    to_feature_map,
)


def _u_distance(a: float, b: float) -> float:
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


def _env_with_ambient(light: GaussianLight, ambient, width: int = 64) -> EnvironmentMap:
    base = synth_gaussian_env(light, width)
    return EnvironmentMap.from_array(base.data + np.asarray(ambient, dtype=np.float64))


# ---------------------------------------------------------------------------
# Synthesis

def test_synth_scales_linearly_in_gamma() -> None:
    one = synth_gaussian_env(GaussianLight(u=0.3, v=0.4, sigma=0.2, gamma=1.0), 32)
    two = synth_gaussian_env(GaussianLight(u=0.3, v=0.4, sigma=0.2, gamma=2.0), 32)
    np.testing.assert_allclose(two.data, 2.0 * one.data, rtol=1e-15)


def test_synth_value_at_one_sigma() -> None:
    # Center the light exactly on a pixel and set sigma to the exact
    # great-circle distance to a probe pixel on the same row; the probe
    # pixel must then read gamma * e^{-1/2}.
    width, height = 64, 32
    i_c, j, i_p = 16, 15, 20
    dirs = pixel_directions(width, height)
    alpha = math.acos(float(np.clip(dirs[j, i_c] @ dirs[j, i_p], -1, 1)))
    light = GaussianLight(u=(i_c + 0.5) / width, v=(j + 0.5) / height,
                          sigma=alpha, gamma=3.0)
    env = synth_gaussian_env(light, width)
    want = 3.0 * math.exp(-0.5)
    np.testing.assert_allclose(env.data[j, i_p], want, rtol=1e-12)
    # And the bilinear sample at distance sigma agrees within 1%.
    probe = sample_env(env, dirs[j, i_p])
    np.testing.assert_allclose(probe, want, rtol=0.01)


def test_synth_argmax_is_pixel_containing_center() -> None:
    rng = np.random.default_rng(3)
    for _ in range(20):
        u, v = rng.random(), rng.uniform(0.05, 0.95)
        light = GaussianLight(u=u, v=v, sigma=rng.uniform(0.05, SIGMA_MAX), gamma=2.0)
        env = synth_gaussian_env(light, 64)
        lum = env.data[:, :, 0]
        j, i = np.unravel_index(np.argmax(lum), lum.shape)
        assert i == int(u * 64) % 64
        assert j == min(int(v * 32), 31)


def test_synth_has_no_ambient_floor() -> None:
    env = synth_gaussian_env(GaussianLight(u=0.5, v=0.5, sigma=0.05, gamma=4.0), 64)
    assert env.data.min() < 1e-12


# ---------------------------------------------------------------------------
# Fitting

@pytest.mark.parametrize("u,v,sigma,gamma,ambient", [
    (0.30, 0.40, 0.20, 3.0, (0.10, 0.15, 0.05)),
    (0.995, 0.45, 0.10, 5.0, (0.20, 0.20, 0.20)),   # straddles the seam
    (0.01, 0.52, 0.30, 1.5, (0.02, 0.01, 0.03)),    # straddles the seam
    (0.70, 0.10, 0.15, 4.0, (0.05, 0.05, 0.05)),    # near the north pole
    (0.25, 0.88, 0.60, 2.0, (0.12, 0.04, 0.08)),    # near the south pole
    (0.50, 0.50, 0.035, 6.0, (0.10, 0.10, 0.10)),   # near the sigma floor
])
def test_generate_then_fit_recovers_parameters(u, v, sigma, gamma, ambient) -> None:
    env = _env_with_ambient(GaussianLight(u=u, v=v, sigma=sigma, gamma=gamma), ambient)
    fit = fit_gaussian(env)
    assert _u_distance(fit.light.u, u) <= 1.0 / 64.0
    assert abs(fit.light.v - v) <= 1.0 / 64.0
    assert abs(fit.light.sigma - sigma) <= 0.05 * sigma
    assert abs(fit.light.gamma - gamma) <= 0.02 * gamma
    assert np.abs(fit.ambient - np.asarray(ambient)).max() <= 0.01
    assert fit.peak_to_mean >= 1.5
    assert fit.rms_residual < 1e-6


def test_fit_is_bitwise_deterministic() -> None:
    env = _env_with_ambient(
        GaussianLight(u=0.62, v=0.33, sigma=0.18, gamma=2.5), (0.07, 0.09, 0.11))
    a = fit_gaussian(env)
    b = fit_gaussian(env)
    assert (a.light.u, a.light.v, a.light.sigma, a.light.gamma) == \
        (b.light.u, b.light.v, b.light.sigma, b.light.gamma)
    assert np.array_equal(a.ambient, b.ambient)
    assert a.rms_residual == b.rms_residual
    assert a.peak_to_mean == b.peak_to_mean


def test_fit_rejects_uniform_and_empty_maps() -> None:
    with pytest.raises(NoDominantLight):
        fit_gaussian(EnvironmentMap.uniform(32, 0.3))
    with pytest.raises(NoDominantLight):
        fit_gaussian(EnvironmentMap.uniform(32, 0.0))


def test_fit_shifts_with_whole_pixel_rotation() -> None:
    env = _env_with_ambient(
        GaussianLight(u=0.30, v=0.40, sigma=0.20, gamma=3.0), (0.1, 0.1, 0.1))
    base = fit_gaussian(env)
    for delta in (0.25, 0.5, -0.125):
        shifted = fit_gaussian(rotate_env(env, delta))
        want = (base.light.u + delta) % 1.0
        assert _u_distance(shifted.light.u, want) < 1e-9
        assert abs(shifted.light.sigma - base.light.sigma) <= 0.01 * base.light.sigma
        assert abs(shifted.light.gamma - base.light.gamma) <= 0.01 * base.light.gamma


# ---------------------------------------------------------------------------
# Edits

def test_edit_wraps_u_composition() -> None:
    light = GaussianLight(u=0.9, v=0.5, sigma=0.2, gamma=2.0)
    out = light
    for _ in range(4):
        out = edit_light(out, u=out.u + 0.25)
    assert _u_distance(out.u, light.u) < 1e-12
    assert (out.v, out.sigma, out.gamma) == (light.v, light.sigma, light.gamma)


def test_edit_clamps_sigma_to_maximum() -> None:
    light = GaussianLight(u=0.1, v=0.5, sigma=0.5, gamma=2.0)
    grown = edit_light(light, sigma_scale=10.0)
    assert grown.sigma == SIGMA_MAX
    shrunk = edit_light(light, sigma_scale=0.5)
    assert shrunk.sigma == pytest.approx(0.25, rel=1e-15)


def test_edit_scales_gamma_and_rejects_bad_scales() -> None:
    light = GaussianLight(u=0.1, v=0.5, sigma=0.2, gamma=2.0)
    assert edit_light(light, gamma_scale=3.0).gamma == pytest.approx(6.0)
    with pytest.raises(ValueError):
        edit_light(light, sigma_scale=0.0)
    with pytest.raises(ValueError):
        edit_light(light, gamma_scale=-1.0)


def test_light_validation_rejects_out_of_range() -> None:
    with pytest.raises(ValueError):
        GaussianLight(u=1.0, v=0.5, sigma=0.2, gamma=1.0)
    with pytest.raises(ValueError):
        GaussianLight(u=0.5, v=1.5, sigma=0.2, gamma=1.0)
    with pytest.raises(ValueError):
        GaussianLight(u=0.5, v=0.5, sigma=0.0, gamma=1.0)
    with pytest.raises(ValueError):
        GaussianLight(u=0.5, v=0.5, sigma=SIGMA_MAX * 1.01, gamma=1.0)
    with pytest.raises(ValueError):
        GaussianLight(u=0.5, v=0.5, sigma=0.2, gamma=0.0)


# ---------------------------------------------------------------------------
# Feature maps

@settings(max_examples=50, deadline=None)
@given(
    u=st.floats(min_value=0.0, max_value=0.999999),
    v=st.floats(min_value=0.0, max_value=1.0),
    sigma=st.floats(min_value=1e-4, max_value=SIGMA_MAX),
    gamma=st.floats(min_value=1e-4, max_value=GAMMA_MAX),
)
def test_feature_map_round_trip(u, v, sigma, gamma) -> None:
    light = GaussianLight(u=u, v=v, sigma=sigma, gamma=gamma)
    fmap = to_feature_map(light)
    assert fmap.planes.shape == (4, 32, 32)
    assert float(fmap.planes.min()) >= 0.0
    assert float(fmap.planes.max()) <= 1.0
    for plane in fmap.planes:
        assert float(plane.max() - plane.min()) == 0.0
    back = from_feature_map(fmap)
    # u, v are stored raw and gamma_max is a power of two: bitwise.
    assert back.u == light.u
    assert back.v == light.v
    assert back.gamma == light.gamma
    # sigma passes through /sigma_max then *sigma_max: exact to rounding.
    assert abs(back.sigma - light.sigma) <= 1e-15 * light.sigma


def test_feature_map_saturates_gamma() -> None:
    light = GaussianLight(u=0.2, v=0.3, sigma=0.1, gamma=20.0)
    fmap = to_feature_map(light)
    assert float(fmap.planes[3, 0, 0]) == 1.0
    assert from_feature_map(fmap).gamma == GAMMA_MAX


def test_from_feature_map_rejects_non_constant_planes() -> None:
    planes = to_feature_map(GaussianLight(u=0.2, v=0.3, sigma=0.1, gamma=2.0)).planes
    broken = np.array(planes)
    broken[0, 5, 5] += 1e-3
    with pytest.raises(ValueError):
        from_feature_map(LightFeatureMap(planes=broken))


def test_feature_map_disk_round_trip(tmp_path) -> None:
    import json

    light = GaussianLight(u=0.37, v=0.61, sigma=0.23, gamma=4.5)
    fmap = to_feature_map(light)
    path = tmp_path / "light.fmap"
    save_feature_map(fmap, path)
    raw = np.fromfile(path, dtype="<f4")
    assert raw.shape == (4 * 32 * 32,)
    assert np.array_equal(raw.reshape(4, 32, 32),
                          fmap.planes.astype(np.float32))
    sidecar = json.loads((tmp_path / "light.fmap.json").read_text())
    assert sidecar["schema"] == "light-feature-map/1"
    assert sidecar["sigma_max"] == pytest.approx(SIGMA_MAX)
    assert sidecar["gamma_max"] == GAMMA_MAX
    assert sidecar["light"]["u"] == pytest.approx(light.u)
    loaded = load_feature_map(path)
    assert np.array_equal(loaded.planes,
                          fmap.planes.astype(np.float32).astype(np.float64))
    back = from_feature_map(loaded)
    assert abs(back.sigma - light.sigma) < 1e-6
    assert abs(back.gamma - light.gamma) < 1e-6
