"""Image-based relighting: basis renders, compositing, edits, tonemapping."""

from __future__ import annotations

import math

import numpy as np
import pytest

from compose_kit.envmap import EnvironmentMap, diffuse_env, scale_env
from compose_kit.errors import FormatError, NoDominantLight
from compose_kit.gausslight import GaussianLight, synth_gaussian_env
from compose_kit.relight import (
    EditRequest,
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
from compose_kit.synthstage import build_olat_basis, builtin_scene, fibonacci_directions


def _random_basis(rng: np.random.Generator, n: int = 12, size: int = 8) -> OlatBasis:
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    weights = rng.random(n) + 0.5
    weights *= 4.0 * math.pi / weights.sum()
    images = rng.random((n, size, size, 3)).astype(np.float32)
    return OlatBasis(directions=dirs, weights=weights, images=images,
                     width=size, height=size, mask=None)


def _random_env(rng: np.random.Generator, width: int = 16) -> EnvironmentMap:
    return EnvironmentMap.from_array(rng.random((width // 2, width, 3)))


# ---------------------------------------------------------------------------
# Containers

def test_linear_image_validation() -> None:
    good = np.zeros((4, 6, 3), dtype=np.float32)
    img = LinearImage(width=6, height=4, data=good)
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 1.0  # stored read-only
    with pytest.raises(ValueError):
        LinearImage(width=6, height=4, data=good - 1.0)
    with pytest.raises(ValueError):
        LinearImage(width=6, height=4, data=good + np.nan)
    with pytest.raises(ValueError):
        LinearImage(width=5, height=4, data=good)
    with pytest.raises(ValueError):
        LinearImage(width=6, height=4, data=good,
                    mask=np.ones((3, 6), dtype=bool))


def test_olat_basis_validation() -> None:
    rng = np.random.default_rng(0)
    basis = _random_basis(rng)
    with pytest.raises(ValueError):
        OlatBasis(directions=basis.directions * 2.0, weights=basis.weights,
                  images=basis.images, width=8, height=8, mask=None)
    with pytest.raises(ValueError):
        OlatBasis(directions=basis.directions, weights=basis.weights * 0.5,
                  images=basis.images, width=8, height=8, mask=None)
    with pytest.raises(ValueError):
        OlatBasis(directions=basis.directions, weights=basis.weights,
                  images=basis.images[:, :4], width=8, height=8, mask=None)


# ---------------------------------------------------------------------------
# Rendering

@pytest.mark.parametrize("seed", range(5))
def test_render_is_linear_in_the_environment(seed: int) -> None:
    rng = np.random.default_rng(100 + seed)
    basis = _random_basis(rng)
    e1, e2 = _random_env(rng), _random_env(rng)
    a, b = 0.7, 2.3
    combo = EnvironmentMap.from_array(a * e1.data + b * e2.data)
    lhs = render_olat(basis, combo).data
    rhs = a * render_olat(basis, e1).data + b * render_olat(basis, e2).data
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-13)


def test_render_scales_exactly_with_power_of_two_gain() -> None:
    rng = np.random.default_rng(7)
    basis = _random_basis(rng)
    env = _random_env(rng)
    one = render_olat(basis, env)
    two = render_olat(basis, scale_env(env, 2.0))
    assert np.array_equal(two.data, 2.0 * one.data)


def test_render_carries_the_basis_mask() -> None:
    basis = build_olat_basis(builtin_scene("head_proxy"), n_lights=8,
                             width=24, height=24)
    img = render_olat(basis, EnvironmentMap.uniform(16, 1.0))
    assert img.mask is not None and not img.mask.all()
    assert np.abs(img.data[~img.mask]).max() == 0.0


# ---------------------------------------------------------------------------
# Compositing

def test_composite_endpoints_are_bitwise_exact() -> None:
    rng = np.random.default_rng(3)
    d = LinearImage(width=8, height=8, data=rng.random((8, 8, 3)))
    s = LinearImage(width=8, height=8, data=rng.random((8, 8, 3)))
    assert np.array_equal(composite(d, s, 1.0).data, d.data)
    assert np.array_equal(composite(d, s, 0.0).data, s.data)


def test_composite_stays_within_the_branch_envelope() -> None:
    rng = np.random.default_rng(4)
    d = LinearImage(width=8, height=8, data=rng.random((8, 8, 3)))
    s = LinearImage(width=8, height=8, data=rng.random((8, 8, 3)))
    for w in (0.25, 0.5, 0.9):
        out = composite(d, s, w).data
        lo = np.minimum(d.data, s.data)
        hi = np.maximum(d.data, s.data)
        assert (out >= lo - 1e-12).all()
        assert (out <= hi + 1e-12).all()


def test_composite_validates_inputs() -> None:
    rng = np.random.default_rng(5)
    d = LinearImage(width=8, height=8, data=rng.random((8, 8, 3)))
    s = LinearImage(width=4, height=4, data=rng.random((4, 4, 3)))
    with pytest.raises(ValueError):
        composite(d, d, 1.5)
    with pytest.raises(ValueError):
        composite(d, s, 0.5)


# ---------------------------------------------------------------------------
# The edit pipeline

@pytest.fixture(scope="module")
def small_basis() -> OlatBasis:
    return build_olat_basis(builtin_scene("sphere_on_plane"), n_lights=40,
                            width=32, height=32)


def test_edit_intermediates_recompose_bitwise(small_basis: OlatBasis) -> None:
    env = synth_gaussian_env(GaussianLight(u=0.3, v=0.3, sigma=0.3, gamma=3.0), 32)
    res = edit(small_basis, env, EditRequest(omega_d=0.37))
    again = composite(res.diffuse, res.shadowed, 0.37)
    assert np.array_equal(res.image.data, again.data)


def test_full_diffuse_ignores_the_requested_light(small_basis: OlatBasis) -> None:
    env = synth_gaussian_env(GaussianLight(u=0.3, v=0.3, sigma=0.3, gamma=3.0), 32)
    a = EditRequest.absolute(GaussianLight(u=0.1, v=0.2, sigma=0.1, gamma=1.0),
                             omega_d=1.0)
    b = EditRequest.absolute(GaussianLight(u=0.8, v=0.6, sigma=0.7, gamma=6.0),
                             omega_d=1.0)
    res_a, res_b = edit(small_basis, env, a), edit(small_basis, env, b)
    assert np.array_equal(res_a.image.data, res_b.image.data)
    assert np.array_equal(res_a.image.data, res_a.diffuse.data)


def test_full_shadowed_equals_synthetic_render(small_basis: OlatBasis) -> None:
    env = synth_gaussian_env(GaussianLight(u=0.3, v=0.3, sigma=0.3, gamma=3.0), 32)
    light = GaussianLight(u=0.62, v=0.31, sigma=0.2, gamma=4.0)
    res = edit(small_basis, env, EditRequest.absolute(light, omega_d=0.0))
    direct = render_olat(small_basis, synth_gaussian_env(light, 32))
    assert np.array_equal(res.image.data, res.shadowed.data)
    assert np.array_equal(res.shadowed.data, direct.data)


def test_diffuse_branch_matches_blurred_map_render(small_basis: OlatBasis) -> None:
    env = synth_gaussian_env(GaussianLight(u=0.4, v=0.35, sigma=0.25, gamma=2.0), 32)
    direct = render_olat(small_basis, diffuse_env(env, 0.6))
    assert np.array_equal(diffuse_image(small_basis, env, 0.6).data, direct.data)


def test_partial_request_fills_fields_from_the_fit(small_basis: OlatBasis) -> None:
    source = GaussianLight(u=0.30, v=0.30, sigma=0.30, gamma=3.0)
    env = synth_gaussian_env(source, 64)
    res = edit(small_basis, env, EditRequest(gamma=5.0, omega_d=0.0))
    assert res.fit is not None
    assert res.light.gamma == 5.0
    assert abs(res.light.u - source.u) <= 1.0 / 64
    assert abs(res.light.v - source.v) <= 1.0 / 64
    assert abs(res.light.sigma - source.sigma) / source.sigma < 0.05


def test_in_place_edit_propagates_missing_dominant_light(small_basis: OlatBasis) -> None:
    flat = EnvironmentMap.uniform(32, 1.0)
    with pytest.raises(NoDominantLight):
        edit(small_basis, flat, EditRequest(gamma=2.0))
    # a fully specified request never fits, so the same map is fine
    res = edit(small_basis, flat,
               EditRequest.absolute(GaussianLight(u=0.5, v=0.3, sigma=0.2,
                                                  gamma=2.0)))
    assert res.fit is None


def test_edit_request_validation() -> None:
    with pytest.raises(ValueError):
        EditRequest(omega_d=1.2)
    with pytest.raises(ValueError):
        EditRequest(beta=0.0)
    with pytest.raises(ValueError):
        EditRequest(exposure=0.0)
    with pytest.raises(ValueError):
        EditRequest(u=0.5).resolve(None)


# ---------------------------------------------------------------------------
# Tonemapping and image files

def test_tonemap_hits_the_exposure_anchors() -> None:
    data = np.array([[[0.0, 0.25, 2.0]]])
    img = LinearImage(width=1, height=1, data=data)
    codes = tonemap(img, exposure=4.0)
    assert codes.dtype == np.uint8
    assert codes[0, 0, 0] == 0
    assert codes[0, 0, 1] == 255  # 0.25 * 4 = 1.0 saturates the range
    assert codes[0, 0, 2] == 255
    ramp = LinearImage(width=8, height=1,
                       data=np.linspace(0, 1, 24).reshape(1, 8, 3))
    flat = tonemap(ramp).reshape(-1).astype(int)
    assert (np.diff(flat) >= 0).all()
    with pytest.raises(ValueError):
        tonemap(img, exposure=0.0)


def test_pfm_image_round_trip_is_bitwise(tmp_path) -> None:
    rng = np.random.default_rng(11)
    img = LinearImage(width=8, height=6,
                      data=(rng.random((6, 8, 3)) * 9.0).astype(np.float32))
    path = tmp_path / "img.pfm"
    save_image(img, path)
    back = load_image(path)
    assert np.array_equal(back.data, img.data)


def test_png_image_round_trip_stays_within_quantization(tmp_path) -> None:
    rng = np.random.default_rng(12)
    img = LinearImage(width=8, height=6, data=rng.random((6, 8, 3)))
    path = tmp_path / "img.png"
    save_image(img, path)
    back = load_image(path)
    assert np.abs(back.data - img.data).max() < 0.006
    with pytest.raises(FormatError):
        save_image(img, tmp_path / "img.tiff")


# ---------------------------------------------------------------------------
# Basis persistence

def test_basis_directory_round_trip_is_bitwise(tmp_path) -> None:
    basis = build_olat_basis(builtin_scene("head_proxy"), n_lights=6,
                             width=16, height=16)
    root = tmp_path / "basis"
    save_olat_basis(basis, root)
    back = load_olat_basis(root)
    assert np.array_equal(back.images, basis.images)
    assert np.array_equal(back.directions, basis.directions)
    assert np.array_equal(back.weights, basis.weights)
    assert np.array_equal(back.mask, basis.mask)
    assert (back.width, back.height) == (basis.width, basis.height)


def test_basis_loader_rejects_broken_directories(tmp_path) -> None:
    with pytest.raises(FormatError):
        load_olat_basis(tmp_path / "missing")
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "manifest.json").write_text('{"schema": "other/1"}')
    with pytest.raises(FormatError):
        load_olat_basis(bad)
    (bad / "manifest.json").write_text("{broken")
    with pytest.raises(FormatError):
        load_olat_basis(bad)


def test_fibonacci_count_matches_default() -> None:
    dirs = fibonacci_directions(40)
    assert dirs.shape == (40, 3)
    assert np.array_equal(dirs, fibonacci_directions(40))
