"""HTTP facade for the interactive editor.

One app instance owns an OLAT basis per scene plus, per scene, the current
source environment and its fitted dominant light.  Uploading an environment
replaces that state atomically; renders are pure functions of query
parameters and the stored environment, so identical requests always return
identical PNG bytes (and are served from a small cache).

Error shape: 404 unknown scene, 400 malformed parameters, 422 for domain
failures with ``{"error": <name>, "detail": <message>}`` bodies.
"""

from __future__ import annotations

import base64
import binascii
import io
import math
import os
import tempfile
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Literal

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, model_validator

from .envmap import EnvironmentMap, load_envmap
from .errors import ComposeKitError, FormatError, NoDominantLight
from .gausslight import (
    SIGMA_MAX,
    GaussianLight,
    LightFit,
    fit_gaussian,
    synth_gaussian_env,
)
from .relight import (
    LinearImage,
    OlatBasis,
    composite,
    diffuse_image,
    load_olat_basis,
    render_olat,
    tonemap,
)
from .synthstage import BUILTIN_SCENES, build_olat_basis, builtin_scene

__all__ = ["BUILTIN_ENVIRONMENTS", "create_app"]

# named source environments the UI can load without uploading bytes
BUILTIN_ENVIRONMENTS = {
    "side_sun": (GaussianLight(u=0.50, v=0.28, sigma=0.12, gamma=4.0), 0.05),
    "low_sun": (GaussianLight(u=0.30, v=0.38, sigma=0.08, gamma=6.0), 0.03),
    "overcast": (GaussianLight(u=0.25, v=0.20, sigma=0.60, gamma=1.2), 0.15),
}
_CACHE_SLOTS = 64


class _DomainError(Exception):
    """Mapped to a 422 JSON response."""

    def __init__(self, name: str, detail: str) -> None:
        super().__init__(detail)
        self.name = name
        self.detail = detail


class EnvBody(BaseModel):
    """POST body: exactly one environment source."""

    builtin: str | None = None
    gaussian: dict | None = None
    envmap_b64: str | None = None
    format: Literal["pfm", "hdr"] | None = None

    @model_validator(mode="after")
    def _one_source(self) -> "EnvBody":
        given = [x is not None for x in (self.builtin, self.gaussian,
                                         self.envmap_b64)]
        if sum(given) != 1:
            raise ValueError(
                "provide exactly one of builtin, gaussian, envmap_b64")
        if self.envmap_b64 is not None and self.format is None:
            raise ValueError("envmap_b64 uploads require format")
        return self


@dataclass(frozen=True)
class _EnvState:
    env: EnvironmentMap | None
    fit: LightFit | None
    version: int


class _SceneState:
    """Basis plus the atomically swapped environment snapshot."""

    def __init__(self, name: str, basis: OlatBasis) -> None:
        self.name = name
        self.basis = basis
        self._state = _EnvState(env=None, fit=None, version=0)
        self._lock = threading.Lock()

    def snapshot(self) -> _EnvState:
        return self._state

    def replace_env(self, env: EnvironmentMap) -> _EnvState:
        """Store the new environment (even when no dominant light fits)."""
        try:
            fit = fit_gaussian(env)
        except NoDominantLight:
            fit = None
        with self._lock:
            state = _EnvState(env=env, fit=fit,
                              version=self._state.version + 1)
            self._state = state
        return state


class _LruCache:
    """Tiny thread-safe LRU keyed by parameter tuples."""

    def __init__(self, slots: int) -> None:
        self._slots = slots
        self._data: OrderedDict[tuple, object] = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key: tuple):
        with self._lock:
            value = self._data.get(key)
            if value is not None:
                self._data.move_to_end(key)
            return value

    def put(self, key: tuple, value) -> None:
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self._slots:
                self._data.popitem(last=False)


def _decode_upload(body: EnvBody) -> EnvironmentMap:
    if body.builtin is not None:
        if body.builtin not in BUILTIN_ENVIRONMENTS:
            raise _DomainError(
                "UnknownEnvironment",
                f"unknown builtin environment {body.builtin!r}; "
                f"available: {sorted(BUILTIN_ENVIRONMENTS)}")
        light, ambient = BUILTIN_ENVIRONMENTS[body.builtin]
        env = synth_gaussian_env(light, 64)
        return EnvironmentMap.from_array(env.data + ambient)
    if body.gaussian is not None:
        try:
            light = GaussianLight(
                u=float(body.gaussian["u"]),
                v=float(body.gaussian["v"]),
                sigma=float(body.gaussian["sigma"]),
                gamma=float(body.gaussian["gamma"]),
            )
        except KeyError as exc:
            raise _DomainError("BadGaussian",
                               f"gaussian body missing field {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise _DomainError("BadGaussian", str(exc)) from exc
        width = int(body.gaussian.get("width", 64))
        ambient = float(body.gaussian.get("ambient", 0.0))
        env = synth_gaussian_env(light, width)
        if ambient > 0.0:
            env = EnvironmentMap.from_array(env.data + ambient)
        return env
    try:
        raw = base64.b64decode(body.envmap_b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise _DomainError("BadUpload", f"invalid base64: {exc}") from exc
    suffix = f".{body.format}"
    tmp = tempfile.NamedTemporaryFile(suffix=suffix, delete=False)
    try:
        tmp.write(raw)
        tmp.close()
        return load_envmap(tmp.name)
    except (FormatError, ComposeKitError, ValueError) as exc:
        raise _DomainError("BadUpload", str(exc)) from exc
    finally:
        os.unlink(tmp.name)


def _fit_payload(fit: LightFit) -> dict:
    return {
        "u": fit.light.u,
        "v": fit.light.v,
        "sigma": fit.light.sigma,
        "gamma": fit.light.gamma,
        "ambient": [float(x) for x in fit.ambient],
        "peak_to_mean": fit.peak_to_mean,
    }


def create_app(basis_dir: str | None = None, width: int = 256,
               height: int = 256, n_lights: int = 160) -> FastAPI:
    """Build the app; bases come from ``basis_dir`` subdirectories (one per
    scene) when given, otherwise the builtin scenes are traced in memory."""
    scenes: dict[str, _SceneState] = {}
    if basis_dir is not None:
        for entry in sorted(os.listdir(basis_dir)):
            sub = os.path.join(basis_dir, entry)
            if os.path.isfile(os.path.join(sub, "manifest.json")):
                scenes[entry] = _SceneState(entry, load_olat_basis(sub))
        if not scenes:
            raise FormatError(f"no basis subdirectories under {basis_dir}")
    else:
        for name in BUILTIN_SCENES:
            basis = build_olat_basis(builtin_scene(name), n_lights,
                                     width, height)
            scenes[name] = _SceneState(name, basis)

    app = FastAPI(title="compose-kit service")
    app.add_middleware(
        CORSMiddleware,
        allow_origin_regex=r"http://(localhost|127\.0\.0\.1)(:\d+)?",
        allow_methods=["*"],
        allow_headers=["*"],
    )
    render_cache = _LruCache(_CACHE_SLOTS)
    diffuse_cache = _LruCache(_CACHE_SLOTS)

    @app.exception_handler(RequestValidationError)
    async def _on_validation(request: Request,
                             exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(status_code=400,
                            content={"error": "ValidationError",
                                     "detail": str(exc.errors())})

    @app.exception_handler(_DomainError)
    async def _on_domain(request: Request, exc: _DomainError) -> JSONResponse:
        return JSONResponse(status_code=422,
                            content={"error": exc.name, "detail": exc.detail})

    @app.get("/api/health")
    async def health() -> dict:
        return {"status": "ok"}

    @app.get("/api/scenes")
    async def list_scenes() -> dict:
        out = []
        for name in sorted(scenes):
            scene = scenes[name]
            state = scene.snapshot()
            out.append({
                "id": name,
                "width": scene.basis.width,
                "height": scene.basis.height,
                "n_lights": scene.basis.n_lights,
                "has_env": state.env is not None,
                "fit": None if state.fit is None else _fit_payload(state.fit),
            })
        return {"scenes": out, "builtin_environments": sorted(BUILTIN_ENVIRONMENTS)}

    @app.post("/api/scenes/{scene_id}/env")
    async def post_env(scene_id: str, body: EnvBody):
        scene = scenes.get(scene_id)
        if scene is None:
            return JSONResponse(status_code=404,
                                content={"error": "UnknownScene",
                                         "detail": scene_id})
        env = _decode_upload(body)
        state = scene.replace_env(env)
        if state.fit is None:
            # the environment is stored; renders with explicit light
            # parameters still work
            return JSONResponse(
                status_code=422,
                content={"error": "NoDominantLight",
                         "detail": "no dominant light in this environment; "
                                   "explicit light parameters still render"})
        return {"fit": _fit_payload(state.fit),
                "env_width": env.width, "version": state.version}

    @app.get("/api/scenes/{scene_id}/render")
    async def render(
        scene_id: str,
        which: Literal["edited", "diffuse", "shadowed", "envmap"] = "edited",
        u: float | None = Query(default=None),
        v: float | None = Query(default=None, ge=0.0, le=1.0),
        sigma: float | None = Query(default=None, gt=0.0, le=SIGMA_MAX),
        gamma: float | None = Query(default=None, gt=0.0),
        omega_d: float = Query(default=0.5, ge=0.0, le=1.0),
        beta: float = Query(default=0.8, gt=0.0, le=math.pi),
        exposure: float = Query(default=1.0, gt=0.0),
    ) -> Response:
        scene = scenes.get(scene_id)
        if scene is None:
            return JSONResponse(status_code=404,
                                content={"error": "UnknownScene",
                                         "detail": scene_id})
        state = scene.snapshot()
        if state.env is None:
            raise _DomainError("NoEnvironment",
                               "POST an environment to this scene first")
        key = (scene_id, state.version, which, u, v, sigma, gamma,
               omega_d, beta, exposure)
        cached = render_cache.get(key)
        if cached is not None:
            return Response(content=cached, media_type="image/png")

        if which == "envmap":
            image = LinearImage(width=state.env.width,
                                height=state.env.height,
                                data=state.env.data)
            png = _encode_png(tonemap(image, exposure))
            render_cache.put(key, png)
            return Response(content=png, media_type="image/png")

        light = _resolve_light(state, u, v, sigma, gamma)
        if which == "diffuse":
            final = _diffuse_branch(scene, state, beta)
        elif which == "shadowed":
            final = _shadowed_branch(scene, state, light)
        else:
            final = composite(_diffuse_branch(scene, state, beta),
                              _shadowed_branch(scene, state, light), omega_d)
        png = _encode_png(tonemap(final, exposure))
        render_cache.put(key, png)
        return Response(content=png, media_type="image/png")

    def _resolve_light(state: _EnvState, u, v, sigma, gamma) -> GaussianLight:
        fields = {"u": u, "v": v, "sigma": sigma, "gamma": gamma}
        missing = [k for k, val in fields.items() if val is None]
        if missing and state.fit is None:
            raise _DomainError(
                "NoDominantLight",
                f"no fitted light to default {missing}; pass them explicitly")
        base = state.fit.light if state.fit is not None else None
        try:
            return GaussianLight(
                u=float(u) % 1.0 if u is not None else base.u,
                v=v if v is not None else base.v,
                sigma=sigma if sigma is not None else base.sigma,
                gamma=gamma if gamma is not None else base.gamma,
            )
        except ValueError as exc:
            raise _DomainError("BadLight", str(exc)) from exc

    def _diffuse_branch(scene: _SceneState, state: _EnvState,
                        beta: float) -> LinearImage:
        key = (scene.name, state.version, beta)
        hit = diffuse_cache.get(key)
        if hit is not None:
            return hit
        image = diffuse_image(scene.basis, state.env, beta)
        diffuse_cache.put(key, image)
        return image

    def _shadowed_branch(scene: _SceneState, state: _EnvState,
                         light: GaussianLight) -> LinearImage:
        return render_olat(scene.basis,
                           synth_gaussian_env(light, state.env.width))

    return app


def _encode_png(codes: np.ndarray) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(codes, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
