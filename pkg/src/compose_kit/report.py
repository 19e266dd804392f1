"""Shadow-behavior report: parameter sweeps as CSV plus rendered figures.

The report fixes one scene and one dominant source light, then sweeps the
three controls that matter most: the diffuse blend weight, the light size
(at constant flux) and the light azimuth.  Every sweep lands twice, once as
a delimited CSV and once as a PNG figure, plus a panel montage of the
pipeline intermediates.
"""

from __future__ import annotations

import csv
import math
import os

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  backend must be set first

from .envmap import EnvironmentMap, uv_to_direction
from .gausslight import GaussianLight, fit_gaussian, synth_gaussian_env
from .metrics import shadow_stats
from .relight import EditRequest, edit, tonemap
from .synthstage import (
    build_olat_basis,
    builtin_scene,
    umbra_centroid,
    umbra_mask,
)

__all__ = ["generate_report"]

_SOURCE_LIGHT = GaussianLight(u=0.50, v=0.28, sigma=0.12, gamma=4.0)
_AMBIENT = 0.05
_OMEGA_STEPS = 9
_SIGMA_SWEEP = (0.04, 0.08, 0.16, 0.32)
_AZIMUTH_STEPS = 8
# elevation low enough that the cast shadow stays camera-visible all the way
# around the subject
_AZIMUTH_V = 0.34


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _line_figure(path: str, x, series: dict[str, list], xlabel: str,
                 title: str) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.4), constrained_layout=True)
    for label, values in series.items():
        ax.plot(x, values, marker="o", label=label)
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def generate_report(out_dir, scene_name: str = "sphere_on_plane",
                    width: int = 96, height: int = 96, n_lights: int = 160,
                    env_width: int = 64, exposure: float = 2.5) -> dict[str, str]:
    """Render all sweeps and figures into ``out_dir``; returns written paths."""
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    scene = builtin_scene(scene_name)
    basis = build_olat_basis(scene, n_lights, width, height)

    source_env = synth_gaussian_env(_SOURCE_LIGHT, env_width)
    source_env = EnvironmentMap.from_array(source_env.data + _AMBIENT)
    fit = fit_gaussian(source_env)
    light = fit.light
    umbra = umbra_mask(scene, uv_to_direction(light.u, light.v), width, height)

    paths: dict[str, str] = {}

    # 1. blend weight sweep: deeper diffuse blend lifts the umbra
    omegas = [i / (_OMEGA_STEPS - 1) for i in range(_OMEGA_STEPS)]
    rows = []
    for omega in omegas:
        res = edit(basis, source_env,
                   EditRequest.absolute(light, omega_d=omega))
        stats = shadow_stats(res.image, umbra)
        rows.append([omega, stats.umbra_mean, stats.edge_max_gradient])
    paths["omega_csv"] = os.path.join(out_dir, "omega_sweep.csv")
    _write_csv(paths["omega_csv"],
               ["omega_d", "umbra_mean", "edge_max_gradient"], rows)
    paths["omega_png"] = os.path.join(out_dir, "omega_sweep.png")
    _line_figure(paths["omega_png"], omegas,
                 {"umbra mean": [r[1] for r in rows],
                  "edge max gradient": [r[2] for r in rows]},
                 "diffuse blend weight", "Shadow response to blending")

    # 2. light size sweep at constant flux: bigger lights mean softer edges
    rows = []
    for sigma in _SIGMA_SWEEP:
        # constant flux: intensity drops as the solid angle grows
        scaled = GaussianLight(u=light.u, v=light.v, sigma=sigma,
                               gamma=light.gamma * (light.sigma / sigma) ** 2)
        res = edit(basis, source_env,
                   EditRequest.absolute(scaled, omega_d=0.0))
        stats = shadow_stats(res.image, umbra)
        rows.append([sigma, scaled.gamma, stats.umbra_mean,
                     stats.edge_max_gradient])
    paths["sigma_csv"] = os.path.join(out_dir, "sigma_sweep.csv")
    _write_csv(paths["sigma_csv"],
               ["sigma", "gamma", "umbra_mean", "edge_max_gradient"], rows)
    paths["sigma_png"] = os.path.join(out_dir, "sigma_sweep.png")
    _line_figure(paths["sigma_png"], list(_SIGMA_SWEEP),
                 {"umbra mean": [r[2] for r in rows],
                  "edge max gradient": [r[3] for r in rows]},
                 "light angular size (rad)", "Shadow response to light size")

    # 3. azimuth sweep: the cast shadow orbits the subject
    rows = []
    for k in range(_AZIMUTH_STEPS):
        u = (light.u + k / _AZIMUTH_STEPS) % 1.0
        d = uv_to_direction(u, _AZIMUTH_V)
        cx, cz = umbra_centroid(scene, d, width, height)
        rows.append([u, math.atan2(cz, cx),
                     int(umbra_mask(scene, d, width, height).sum())])
    paths["azimuth_csv"] = os.path.join(out_dir, "azimuth_sweep.csv")
    _write_csv(paths["azimuth_csv"],
               ["u", "centroid_azimuth_rad", "umbra_pixels"], rows)
    paths["azimuth_png"] = os.path.join(out_dir, "azimuth_sweep.png")
    _line_figure(paths["azimuth_png"], [r[0] for r in rows],
                 {"centroid azimuth (rad)": [r[1] for r in rows]},
                 "light position u", "Shadow direction follows the light")

    # 4. panel montage of the pipeline intermediates
    res = edit(basis, source_env, EditRequest.absolute(light, omega_d=0.5))
    env_preview = np.clip(source_env.data / source_env.data.max(), 0.0, 1.0)
    panels = [
        ("source environment", env_preview ** (1 / 2.2)),
        ("diffuse branch", tonemap(res.diffuse, exposure) / 255.0),
        ("shadowed branch", tonemap(res.shadowed, exposure) / 255.0),
        ("composite", tonemap(res.image, exposure) / 255.0),
    ]
    fig, axes = plt.subplots(2, 2, figsize=(7.2, 5.6), constrained_layout=True)
    for ax, (title, img) in zip(axes.ravel(), panels):
        ax.imshow(img, aspect="auto" if img.shape[0] != img.shape[1] else None)
        ax.set_title(title, fontsize=9)
        ax.axis("off")
    paths["panels_png"] = os.path.join(out_dir, "panels.png")
    fig.savefig(paths["panels_png"], dpi=120)
    plt.close(fig)

    return paths
