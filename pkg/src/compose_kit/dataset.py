"""Synthetic training-pair emission.

Each sample couples a rendered input image with the ground-truth light that
produced it plus the two relit branches a compositing model needs.  Sample i
draws every random quantity from ``default_rng(seed ^ i)``, so any sample can
be regenerated in isolation and the emitted bytes do not depend on worker
count or execution order.

Sample directory layout::

    sample_00000/
        input.pfm      render under the source environment
        env.pfm        the source environment map
        diffuse.pfm    diffuse branch (blurred environment)
        shadowed.pfm   shadowed branch (synthetic target light)
        light.fmap     feature map of the source light (+ .json sidecar)

plus one ``manifest.jsonl`` line per sample at the dataset root.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import fileio
from .envmap import EnvironmentMap, diffuse_env
from .gausslight import (
    SIGMA_MAX,
    GaussianLight,
    edit_light,
    save_feature_map,
    synth_gaussian_env,
    to_feature_map,
)
from .relight import DEFAULT_LIGHT_COUNT, OlatBasis, render_olat
from .synthstage import build_olat_basis, builtin_scene

__all__ = ["SAMPLE_SCHEMA", "DatasetRecipe", "draw_sample_params",
           "emit_dataset", "read_manifest"]

SAMPLE_SCHEMA = "dataset-sample/1"

# Source lights stay above the horizon and off the zenith so every sample
# carries a visible cast shadow.
_V_RANGE = (0.08, 0.45)
_SIGMA_MIN = 0.03
_GAMMA_RANGE = (0.5, 8.0)
_AMBIENT_RANGE = (0.02, 0.12)
_BETA_RANGE = (0.3, 1.5)
_DELTA_U_RANGE = (-0.25, 0.25)


@dataclass(frozen=True)
class DatasetRecipe:
    """Everything needed to regenerate a dataset bit for bit."""

    count: int
    seed: int = 0
    scenes: tuple[str, ...] = ("sphere_on_plane", "head_proxy")
    width: int = 96
    height: int = 96
    env_width: int = 64
    n_lights: int = DEFAULT_LIGHT_COUNT

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError(f"count must be positive, got {self.count}")
        if not self.scenes:
            raise ValueError("at least one scene name is required")
        if self.width < 8 or self.height < 8:
            raise ValueError("render resolution must be at least 8x8")
        if self.n_lights < 4:
            raise ValueError("need at least 4 basis lights")
        for name in self.scenes:
            builtin_scene(name)  # raises on unknown names


def draw_sample_params(recipe: DatasetRecipe, index: int) -> dict:
    """Draw the randomized part of sample ``index``.

    The draw order below is frozen; changing it changes every emitted byte.
    """
    rng = np.random.default_rng(recipe.seed ^ index)
    scene = recipe.scenes[int(rng.integers(len(recipe.scenes)))]
    delta_u = float(rng.uniform(*_DELTA_U_RANGE))
    ambient = rng.uniform(*_AMBIENT_RANGE, size=3)
    u = float(rng.uniform())
    v = float(rng.uniform(*_V_RANGE))
    # maps uniform (min, max] draws onto sigma in (min, max]
    sigma = float(SIGMA_MAX + _SIGMA_MIN - rng.uniform(_SIGMA_MIN, SIGMA_MAX))
    gamma = float(math.exp(rng.uniform(math.log(_GAMMA_RANGE[0]),
                                       math.log(_GAMMA_RANGE[1]))))
    omega_d = float(rng.uniform())
    beta = float(rng.uniform(*_BETA_RANGE))
    return {
        "scene": scene,
        "light": GaussianLight(u=u, v=v, sigma=sigma, gamma=gamma),
        "ambient": ambient,
        "delta_u": delta_u,
        "omega_d": omega_d,
        "beta": beta,
    }


def _emit_sample(recipe: DatasetRecipe, index: int, out_dir: str,
                 basis: OlatBasis) -> dict:
    params = draw_sample_params(recipe, index)
    light: GaussianLight = params["light"]
    target = edit_light(light, u=light.u + params["delta_u"])

    env = synth_gaussian_env(light, recipe.env_width)
    env = EnvironmentMap.from_array(env.data + params["ambient"])

    sample_name = f"sample_{index:05d}"
    sample_dir = os.path.join(out_dir, sample_name)
    os.makedirs(sample_dir, exist_ok=True)

    fileio.write_pfm(os.path.join(sample_dir, "input.pfm"),
                     render_olat(basis, env).data)
    fileio.write_pfm(os.path.join(sample_dir, "env.pfm"), env.data)
    fileio.write_pfm(os.path.join(sample_dir, "diffuse.pfm"),
                     render_olat(basis, diffuse_env(env, params["beta"])).data)
    fileio.write_pfm(
        os.path.join(sample_dir, "shadowed.pfm"),
        render_olat(basis, synth_gaussian_env(target, recipe.env_width)).data)
    save_feature_map(to_feature_map(light),
                     os.path.join(sample_dir, "light.fmap"))

    return {
        "schema": SAMPLE_SCHEMA,
        "index": index,
        "dir": sample_name,
        "scene": params["scene"],
        "seed": recipe.seed ^ index,
        "light": {"u": light.u, "v": light.v,
                  "sigma": light.sigma, "gamma": light.gamma},
        "target_light": {"u": target.u, "v": target.v,
                         "sigma": target.sigma, "gamma": target.gamma},
        "ambient": [float(x) for x in params["ambient"]],
        "delta_u": params["delta_u"],
        "omega_d": params["omega_d"],
        "beta": params["beta"],
        "files": {
            "input": f"{sample_name}/input.pfm",
            "env": f"{sample_name}/env.pfm",
            "diffuse": f"{sample_name}/diffuse.pfm",
            "shadowed": f"{sample_name}/shadowed.pfm",
            "light": f"{sample_name}/light.fmap",
        },
    }


def emit_dataset(recipe: DatasetRecipe, out_dir, threads: int = 1) -> list[dict]:
    """Write every sample plus manifest.jsonl; returns the manifest records.

    ``threads`` only changes wall time, never the bytes on disk.
    """
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    # one basis per scene, shared by all samples
    bases = {name: build_olat_basis(builtin_scene(name), recipe.n_lights,
                                    recipe.width, recipe.height,
                                    threads=threads)
             for name in recipe.scenes}

    def run(index: int) -> dict:
        scene = draw_sample_params(recipe, index)["scene"]
        return _emit_sample(recipe, index, out_dir, bases[scene])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(run, range(recipe.count)))
    else:
        records = [run(i) for i in range(recipe.count)]

    with open(os.path.join(out_dir, "manifest.jsonl"), "w",
              encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return records


def read_manifest(path) -> list[dict]:
    """Parse a manifest.jsonl written by emit_dataset."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
