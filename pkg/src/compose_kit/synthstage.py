"""Synthetic light stage: spheres over a ground plane, traced per light.

The tracer is deliberately minimal: one primary ray per pixel center, a
Lambertian BRDF (albedo * max(0, n . d) / pi), one binary shadow ray per
shading point (hard shadows), black background, single bounce and no
interreflection.  Everything is pure numpy and bitwise deterministic for a
given input, which is what the relighting stack needs from it.

Scenes are hashable frozen dataclasses built from plain tuples, so primary
ray intersections can be cached per (scene, resolution) and shared by the
per-light tracer, the environment reference tracer and the umbra extractor.
"""

from __future__ import annotations

import functools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .envmap import EnvironmentMap, sample_env
from .errors import FormatError
from .relight import LinearImage, OlatBasis

__all__ = [
    "Camera",
    "Sphere",
    "GroundPlane",
    "SceneSpec",
    "BUILTIN_SCENES",
    "builtin_scene",
    "scene_to_json",
    "scene_from_json",
    "save_scene",
    "load_scene",
    "fibonacci_directions",
    "raytrace_directional",
    "build_olat_basis",
    "raytrace_env",
    "umbra_mask",
    "umbra_centroid",
]

_EPS = 1e-6
_SCENE_SCHEMA = "scene/1"

Vec3 = tuple[float, float, float]


def _vec3(value, name: str) -> Vec3:
    arr = tuple(float(x) for x in value)
    if len(arr) != 3 or not all(math.isfinite(x) for x in arr):
        raise ValueError(f"{name} must be three finite numbers, got {value!r}")
    return arr


def _albedo(value, name: str) -> Vec3:
    rgb = _vec3(value, name)
    if not all(0.0 <= x <= 1.0 for x in rgb):
        raise ValueError(f"{name} must lie in [0, 1], got {rgb}")
    return rgb


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: position, look-at target and vertical field of view."""

    position: Vec3
    look_at: Vec3
    vfov_deg: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        object.__setattr__(self, "look_at", _vec3(self.look_at, "look_at"))
        object.__setattr__(self, "vfov_deg", float(self.vfov_deg))
        if not (0.0 < self.vfov_deg < 180.0):
            raise ValueError(f"vfov_deg must be in (0, 180), got {self.vfov_deg}")
        if self.position == self.look_at:
            raise ValueError("camera position and look_at coincide")


@dataclass(frozen=True)
class Sphere:
    center: Vec3
    radius: float
    albedo: Vec3

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", _vec3(self.center, "center"))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "albedo", _albedo(self.albedo, "albedo"))
        if not self.radius > 0.0:
            raise ValueError(f"radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class GroundPlane:
    height: float
    albedo: Vec3

    def __post_init__(self) -> None:
        object.__setattr__(self, "height", float(self.height))
        object.__setattr__(self, "albedo", _albedo(self.albedo, "albedo"))
        if not math.isfinite(self.height):
            raise ValueError("plane height must be finite")


@dataclass(frozen=True)
class SceneSpec:
    """Versioned scene description: camera, ground plane and spheres."""

    name: str
    camera: Camera
    plane: GroundPlane
    spheres: tuple[Sphere, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "spheres", tuple(self.spheres))
        if not self.spheres:
            raise ValueError("scene needs at least one sphere")
        pos = np.array(self.camera.position)
        for sphere in self.spheres:
            if np.linalg.norm(pos - np.array(sphere.center)) <= sphere.radius:
                raise ValueError("camera is inside a sphere")
        if abs(pos[1] - self.plane.height) < 1e-9:
            raise ValueError("camera sits exactly on the ground plane")


def scene_to_json(scene: SceneSpec) -> str:
    doc = {
        "schema": _SCENE_SCHEMA,
        "name": scene.name,
        "camera": {
            "position": list(scene.camera.position),
            "look_at": list(scene.camera.look_at),
            "vfov_deg": scene.camera.vfov_deg,
        },
        "plane": {"height": scene.plane.height,
                  "albedo": list(scene.plane.albedo)},
        "spheres": [{"center": list(s.center), "radius": s.radius,
                     "albedo": list(s.albedo)} for s in scene.spheres],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def scene_from_json(text: str) -> SceneSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid scene JSON: {exc}") from exc
    if doc.get("schema") != _SCENE_SCHEMA:
        raise FormatError(f"unknown scene schema {doc.get('schema')!r}")
    try:
        return SceneSpec(
            name=str(doc["name"]),
            camera=Camera(**doc["camera"]),
            plane=GroundPlane(**doc["plane"]),
            spheres=tuple(Sphere(**s) for s in doc["spheres"]),
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed scene document: {exc}") from exc


def save_scene(scene: SceneSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(scene_to_json(scene))


def load_scene(path) -> SceneSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return scene_from_json(fh.read())


def builtin_scene(name: str) -> SceneSpec:
    """Return a named builtin scene.

    ``sphere_on_plane``: one matte sphere resting on the ground, camera
    raised enough to see the shadow all around it.  ``head_proxy``: a big
    head sphere with a small nose sphere in front, so the nose casts a
    visible shadow that moves with the light.
    """
    if name == "sphere_on_plane":
        return SceneSpec(
            name="sphere_on_plane",
            camera=Camera(position=(0.0, 5.5, 4.0),
                          look_at=(0.0, 0.2, 0.0), vfov_deg=48.0),
            plane=GroundPlane(height=0.0, albedo=(0.75, 0.72, 0.68)),
            spheres=(Sphere(center=(0.0, 1.0, 0.0), radius=1.0,
                            albedo=(0.80, 0.36, 0.28)),),
        )
    if name == "head_proxy":
        return SceneSpec(
            name="head_proxy",
            camera=Camera(position=(0.0, 2.6, 4.6),
                          look_at=(0.0, 1.1, 0.0), vfov_deg=42.0),
            plane=GroundPlane(height=0.0, albedo=(0.70, 0.70, 0.70)),
            spheres=(
                Sphere(center=(0.0, 1.5, 0.0), radius=1.0,
                       albedo=(0.85, 0.62, 0.50)),
                Sphere(center=(0.0, 1.42, 1.02), radius=0.22,
                       albedo=(0.85, 0.58, 0.46)),
            ),
        )
    raise ValueError(f"unknown builtin scene {name!r}; "
                     f"choose from {', '.join(BUILTIN_SCENES)}")


BUILTIN_SCENES = ("sphere_on_plane", "head_proxy")


# ---------------------------------------------------------------------------
# Intersection core

def _camera_rays(scene: SceneSpec, width: int, height: int):
    cam = scene.camera
    origin = np.array(cam.position)
    forward = np.array(cam.look_at) - origin
    forward /= np.linalg.norm(forward)
    world_up = np.array([0.0, 1.0, 0.0])
    if abs(forward @ world_up) > 0.999:
        world_up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, world_up)
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)

    tan_half = math.tan(math.radians(cam.vfov_deg) / 2.0)
    aspect = width / height
    px = (np.arange(width) + 0.5) / width * 2.0 - 1.0
    py = 1.0 - (np.arange(height) + 0.5) / height * 2.0
    x = px[None, :, None] * (tan_half * aspect)
    y = py[:, None, None] * tan_half
    dirs = forward[None, None, :] + x * right[None, None, :] + y * up[None, None, :]
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return origin, dirs


def _sphere_hit_t(origins: np.ndarray, dirs: np.ndarray, sphere: Sphere) -> np.ndarray:
    oc = origins - np.array(sphere.center)
    b = np.sum(dirs * oc, axis=-1)
    c = np.sum(oc * oc, axis=-1) - sphere.radius ** 2
    disc = b * b - c
    hit = disc >= 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t_near = -b - sq
    t_far = -b + sq
    t = np.where(t_near > _EPS, t_near, t_far)
    return np.where(hit & (t > _EPS), t, np.inf)


def _plane_hit_t(origins: np.ndarray, dirs: np.ndarray, plane: GroundPlane) -> np.ndarray:
    dy = dirs[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (plane.height - origins[..., 1]) / dy
    return np.where((np.abs(dy) > 1e-12) & (t > _EPS), t, np.inf)


@functools.lru_cache(maxsize=8)
def _primary_hits(scene: SceneSpec, width: int, height: int):
    """First-hit geometry per pixel: mask, points, normals, albedo, plane flag."""
    origin, dirs = _camera_rays(scene, width, height)
    origins = np.broadcast_to(origin, dirs.shape)
    best_t = _plane_hit_t(origins, dirs, scene.plane)
    prim = np.where(np.isfinite(best_t), 0, -1)
    for k, sphere in enumerate(scene.spheres, start=1):
        t = _sphere_hit_t(origins, dirs, sphere)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        prim = np.where(closer, k, prim)

    mask = prim >= 0
    t_safe = np.where(mask, best_t, 0.0)
    points = origins + dirs * t_safe[..., None]
    normals = np.zeros_like(points)
    albedo = np.zeros_like(points)
    normals[prim == 0] = (0.0, 1.0, 0.0)
    albedo[prim == 0] = scene.plane.albedo
    for k, sphere in enumerate(scene.spheres, start=1):
        sel = prim == k
        normals[sel] = (points[sel] - np.array(sphere.center)) / sphere.radius
        albedo[sel] = sphere.albedo
    for arr in (points, normals, albedo, mask, prim):
        arr.flags.writeable = False
    return mask, points, normals, albedo, prim


def _occluded(scene: SceneSpec, points: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Binary any-hit test for shadow rays offset along the ray direction."""
    origins = points + dirs * 1e-4
    blocked = np.zeros(points.shape[:-1], dtype=bool)
    for sphere in scene.spheres:
        blocked |= np.isfinite(_sphere_hit_t(origins, dirs, sphere))
    blocked |= np.isfinite(_plane_hit_t(origins, dirs, scene.plane))
    return blocked


def _unit(d) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64).reshape(3)
    n = np.linalg.norm(d)
    if not np.isfinite(n) or abs(n - 1.0) > 1e-6:
        raise ValueError("light direction must be unit length")
    return d


def raytrace_directional(scene: SceneSpec, light_dir, width: int,
                         height: int) -> LinearImage:
    """Render the scene under a unit-radiance directional light.

    ``light_dir`` points from the surface toward the light.  Shading is
    Lambertian with one binary shadow ray; background pixels are black with
    mask False.
    """
    d = _unit(light_dir)
    mask, points, normals, albedo, _ = _primary_hits(scene, width, height)
    cos_term = np.maximum(normals @ d, 0.0)
    lit = mask & (cos_term > 0.0)
    shadowed = np.zeros_like(lit)
    if lit.any():
        shadowed[lit] = _occluded(scene, points[lit], np.broadcast_to(d, points[lit].shape))
    cos_term = np.where(lit & ~shadowed, cos_term, 0.0)
    data = albedo * (cos_term / math.pi)[..., None]
    return LinearImage(width=width, height=height, data=data, mask=mask.copy())


def umbra_mask(scene: SceneSpec, light_dir, width: int, height: int) -> np.ndarray:
    """Ground-plane pixels whose shadow ray toward the light is occluded."""
    d = _unit(light_dir)
    _, points, _, _, prim = _primary_hits(scene, width, height)
    on_plane = prim == 0
    out = np.zeros(on_plane.shape, dtype=bool)
    if on_plane.any():
        rays = np.broadcast_to(d, points[on_plane].shape)
        out[on_plane] = _occluded(scene, points[on_plane], rays)
    return out


def umbra_centroid(scene: SceneSpec, light_dir, width: int,
                   height: int) -> tuple[float, float]:
    """Scene-space (x, z) centroid of the visible umbra on the ground plane.

    Raises ValueError when no umbra pixel is visible; the azimuth
    ``atan2(z, x)`` of the result tracks the light around the vertical axis.
    """
    um = umbra_mask(scene, light_dir, width, height)
    if not um.any():
        raise ValueError("no visible umbra for this light direction")
    _, points, _, _, _ = _primary_hits(scene, width, height)
    return float(points[um][:, 0].mean()), float(points[um][:, 2].mean())


def fibonacci_directions(count: int) -> np.ndarray:
    """Near-uniform unit directions from the Fibonacci spiral, shape (N, 3)."""
    if count < 4:
        raise ValueError(f"need at least 4 directions, got {count}")
    i = np.arange(count, dtype=np.float64)
    offset = 2.0 / count
    y = i * offset - 1.0 + offset / 2.0
    r = np.sqrt(np.maximum(1.0 - y * y, 0.0))
    increment = math.pi * (3.0 - math.sqrt(5.0))
    phi = i * increment
    dirs = np.stack([np.cos(phi) * r, y, np.sin(phi) * r], axis=1)
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def build_olat_basis(scene: SceneSpec, n_lights: int = 160, width: int = 256,
                     height: int = 256, threads: int | None = None) -> OlatBasis:
    """Trace one image per Fibonacci light direction, weight 4*pi/N each.

    ``threads`` parallelizes over lights; images land in direction order,
    so the result is bitwise independent of the thread count.
    """
    dirs = fibonacci_directions(n_lights)
    weights = np.full(n_lights, 4.0 * math.pi / n_lights)
    images = np.empty((n_lights, height, width, 3), dtype=np.float32)

    def trace(i: int) -> None:
        images[i] = raytrace_directional(scene, dirs[i], width, height).data

    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(trace, range(n_lights)))
    else:
        for i in range(n_lights):
            trace(i)
    mask, *_ = _primary_hits(scene, width, height)
    return OlatBasis(directions=dirs, weights=weights, images=images,
                     width=width, height=height, mask=mask.copy())


def raytrace_env(scene: SceneSpec, env: EnvironmentMap, samples_per_pixel: int,
                 width: int, height: int, seed: int = 0) -> LinearImage:
    """Reference render under an environment map by hemisphere quadrature.

    Stratified cosine-weighted sampling over each shading point's hemisphere
    with binary shadow rays: L = albedo * mean_k(E(w_k) * V(w_k)).  Jitter
    comes from one seeded PCG64 stream consumed in a fixed order, so the
    output is deterministic for a given seed and independent of chunking.
    """
    if samples_per_pixel < 1:
        raise ValueError("samples_per_pixel must be >= 1")
    mask, points, normals, albedo, _ = _primary_hits(scene, width, height)
    fg = np.flatnonzero(mask.reshape(-1))
    data = np.zeros((height * width, 3))
    if fg.size == 0:
        return LinearImage(width=width, height=height,
                           data=data.reshape(height, width, 3), mask=mask.copy())

    p = points.reshape(-1, 3)[fg]
    n = normals.reshape(-1, 3)[fg]
    rho = albedo.reshape(-1, 3)[fg]

    # Per-point tangent frame, branch chosen by the dominant normal axis.
    helper = np.where(np.abs(n[:, 1:2]) < 0.9,
                      np.array([[0.0, 1.0, 0.0]]), np.array([[1.0, 0.0, 0.0]]))
    t1 = np.cross(n, helper)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(n, t1)

    s1 = max(int(math.floor(math.sqrt(samples_per_pixel))), 1)
    s2 = int(math.ceil(samples_per_pixel / s1))
    cells = np.stack(np.meshgrid(np.arange(s1), np.arange(s2), indexing="ij"),
                     axis=-1).reshape(-1, 2)[:samples_per_pixel]

    rng = np.random.default_rng(np.random.PCG64(seed))
    accum = np.zeros_like(rho)
    block = max(1, (1 << 22) // max(fg.size, 1))
    for start in range(0, samples_per_pixel, block):
        sub = cells[start:start + block]
        jitter = rng.random((fg.size, sub.shape[0], 2))
        u1 = (sub[None, :, 0] + jitter[:, :, 0]) / s1
        u2 = (sub[None, :, 1] + jitter[:, :, 1]) / s2
        cos_t = np.sqrt(1.0 - u1)
        sin_t = np.sqrt(u1)
        ang = 2.0 * math.pi * u2
        local_x = (sin_t * np.cos(ang))[..., None]
        local_y = (sin_t * np.sin(ang))[..., None]
        local_z = cos_t[..., None]
        w = local_x * t1[:, None, :] + local_y * t2[:, None, :] + local_z * n[:, None, :]
        w /= np.linalg.norm(w, axis=-1, keepdims=True)
        radiance = sample_env(env, w)
        vis = ~_occluded(scene, np.broadcast_to(p[:, None, :], w.shape), w)
        accum += (radiance * vis[..., None]).sum(axis=1)

    data[fg] = rho * accum / samples_per_pixel
    return LinearImage(width=width, height=height,
                       data=data.reshape(height, width, 3), mask=mask.copy())
