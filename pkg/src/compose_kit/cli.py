"""Command line front end.

Exit codes: 0 on success, 1 for usage errors (bad flags, missing arguments),
2 for domain failures (unreadable files, no dominant light, bad parameter
values).  Domain failures print ``ErrorType: message`` on stderr and never a
stack dump, so scripts can branch on them.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from .dataset import DatasetRecipe, emit_dataset
from .envmap import diffuse_env, load_envmap, save_envmap
from .errors import ComposeKitError
from .gausslight import (
    GaussianLight,
    fit_gaussian,
    save_feature_map,
    synth_gaussian_env,
    to_feature_map,
)
from .metrics import mae, mse, ssim
from .relight import (
    EditRequest,
    composite,
    edit,
    load_image,
    load_olat_basis,
    render_olat,
    save_image,
    save_olat_basis,
)
from .report import generate_report
from .synthstage import BUILTIN_SCENES, build_olat_basis, builtin_scene

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    """argparse reserves exit code 2; this tool uses 1 for usage errors."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _size(text: str) -> tuple[int, int]:
    """Parse WxH, e.g. 256x256."""
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"expected WxH, got {text!r}")
    return int(parts[0]), int(parts[1])


def _default_threads() -> int:
    env = os.environ.get("COMPOSE_KIT_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _resolve_sigma(args) -> float | None:
    if getattr(args, "sigma", None) is not None:
        return args.sigma
    if getattr(args, "sigma_deg", None) is not None:
        return math.radians(args.sigma_deg)
    return None


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="compose-kit",
                     description="Lighting decomposition and shadow editing.")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for randomized commands")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: COMPOSE_KIT_THREADS or 1)")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress progress messages")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("gen-olat", help="trace a one-light-at-a-time basis")
    p.add_argument("--scene", choices=BUILTIN_SCENES, default="sphere_on_plane")
    p.add_argument("--lights", type=int, default=160)
    p.add_argument("--size", type=_size, default=(256, 256), metavar="WxH")
    p.add_argument("--out", required=True, help="basis directory to write")

    p = sub.add_parser("fit", help="fit the dominant light of an environment")
    p.add_argument("--env", required=True)
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--out", help="optional feature-map output (.fmap)")

    p = sub.add_parser("synth-env", help="synthesize a single-light environment")
    p.add_argument("--u", type=float, required=True)
    p.add_argument("--v", type=float, required=True)
    sig = p.add_mutually_exclusive_group(required=True)
    sig.add_argument("--sigma", type=float, help="angular size in radians")
    sig.add_argument("--sigma-deg", type=float, help="angular size in degrees")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--size", type=int, default=64, metavar="W",
                   help="map width (height is W/2)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("diffuse", help="diffuse an environment map")
    p.add_argument("--env", required=True)
    p.add_argument("--beta", type=float, default=0.8)
    p.add_argument("--out", required=True)

    p = sub.add_parser("render", help="relight a basis under an environment")
    p.add_argument("--basis", required=True)
    p.add_argument("--env", required=True)
    p.add_argument("--exposure", type=float, default=1.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("edit", help="full edit: fit, relight both branches, blend")
    p.add_argument("--basis", required=True)
    p.add_argument("--env", required=True)
    p.add_argument("--u", type=float)
    p.add_argument("--v", type=float)
    sig = p.add_mutually_exclusive_group()
    sig.add_argument("--sigma", type=float, help="angular size in radians")
    sig.add_argument("--sigma-deg", type=float, help="angular size in degrees")
    p.add_argument("--gamma", type=float)
    p.add_argument("--omega-d", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=0.8)
    p.add_argument("--exposure", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--save-intermediates", metavar="DIR",
                   help="also write diffuse.pfm, shadowed.pfm and light.json")

    p = sub.add_parser("composite", help="blend two branch images")
    p.add_argument("--a", required=True, help="diffuse branch image")
    p.add_argument("--b", required=True, help="shadowed branch image")
    p.add_argument("--omega-d", type=float, required=True)
    p.add_argument("--exposure", type=float, default=1.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("metrics", help="compare two images")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--mask", help="restrict comparison to bright mask pixels")
    p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("emit-dataset", help="write synthetic training pairs")
    p.add_argument("--recipe", required=True, help="JSON recipe file")
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="run the HTTP editing service")
    p.add_argument("--basis", help="directory of saved bases, one per scene")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    p = sub.add_parser("report", help="write sweep CSVs and figures")
    p.add_argument("--scene", choices=BUILTIN_SCENES, default="sphere_on_plane")
    p.add_argument("--size", type=_size, default=(96, 96), metavar="WxH")
    p.add_argument("--lights", type=int, default=160)
    p.add_argument("--env-width", type=int, default=64)
    p.add_argument("--out", required=True)

    return parser


def _cmd_gen_olat(args) -> int:
    scene = builtin_scene(args.scene)
    width, height = args.size
    basis = build_olat_basis(scene, args.lights, width, height,
                             threads=args.threads)
    save_olat_basis(basis, args.out)
    _say(args, f"wrote {args.lights}-light basis to {args.out}")
    return 0


def _fit_payload(fit) -> dict:
    return {
        "u": fit.light.u,
        "v": fit.light.v,
        "sigma": fit.light.sigma,
        "gamma": fit.light.gamma,
        "ambient": [float(x) for x in fit.ambient],
        "rms_residual": fit.rms_residual,
        "peak_to_mean": fit.peak_to_mean,
        "iterations": fit.iterations,
    }


def _cmd_fit(args) -> int:
    fit = fit_gaussian(load_envmap(args.env))
    if args.out:
        save_feature_map(to_feature_map(fit.light), args.out)
        _say(args, f"wrote feature map to {args.out}")
    payload = _fit_payload(fit)
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        for key in ("u", "v", "sigma", "gamma", "ambient",
                    "rms_residual", "peak_to_mean", "iterations"):
            print(f"{key}: {payload[key]}")
    return 0


def _cmd_synth_env(args) -> int:
    light = GaussianLight(u=args.u, v=args.v, sigma=_resolve_sigma(args),
                          gamma=args.gamma)
    save_envmap(synth_gaussian_env(light, args.size), args.out)
    _say(args, f"wrote environment to {args.out}")
    return 0


def _cmd_diffuse(args) -> int:
    env = diffuse_env(load_envmap(args.env), args.beta)
    save_envmap(env, args.out)
    _say(args, f"wrote diffused environment to {args.out}")
    return 0


def _cmd_render(args) -> int:
    basis = load_olat_basis(args.basis)
    image = render_olat(basis, load_envmap(args.env))
    save_image(image, args.out, exposure=args.exposure)
    _say(args, f"wrote render to {args.out}")
    return 0


def _cmd_edit(args) -> int:
    basis = load_olat_basis(args.basis)
    env = load_envmap(args.env)
    request = EditRequest(u=args.u, v=args.v, sigma=_resolve_sigma(args),
                          gamma=args.gamma, omega_d=args.omega_d,
                          beta=args.beta, exposure=args.exposure)
    result = edit(basis, env, request)
    save_image(result.image, args.out, exposure=args.exposure)
    if args.save_intermediates:
        os.makedirs(args.save_intermediates, exist_ok=True)
        save_image(result.diffuse,
                   os.path.join(args.save_intermediates, "diffuse.pfm"))
        save_image(result.shadowed,
                   os.path.join(args.save_intermediates, "shadowed.pfm"))
        light = {"u": result.light.u, "v": result.light.v,
                 "sigma": result.light.sigma, "gamma": result.light.gamma}
        with open(os.path.join(args.save_intermediates, "light.json"),
                  "w", encoding="utf-8") as fh:
            json.dump(light, fh, sort_keys=True)
            fh.write("\n")
    _say(args, f"wrote edit to {args.out} "
               f"(light u={result.light.u:.4f} v={result.light.v:.4f} "
               f"sigma={result.light.sigma:.4f} gamma={result.light.gamma:.4f})")
    return 0


def _cmd_composite(args) -> int:
    blended = composite(load_image(args.a), load_image(args.b), args.omega_d)
    save_image(blended, args.out, exposure=args.exposure)
    _say(args, f"wrote composite to {args.out}")
    return 0


def _cmd_metrics(args) -> int:
    a, b = load_image(args.a), load_image(args.b)
    mask = None
    if args.mask:
        mask = load_image(args.mask).data.max(axis=2) > 0.5
    values = {
        "mae": mae(a, b, mask=mask),
        "mse": mse(a, b, mask=mask),
        "ssim": ssim(a, b, mask=mask),
    }
    if args.json:
        print(json.dumps(values, sort_keys=True))
    else:
        for name in ("mae", "mse", "ssim"):
            print(f"{name},{values[name]:.10g}")
    return 0


def _cmd_emit_dataset(args) -> int:
    with open(args.recipe, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ComposeKitError("recipe must be a JSON object")
    allowed = {"count", "seed", "scenes", "width", "height",
               "env_width", "n_lights"}
    unknown = set(doc) - allowed
    if unknown:
        raise ComposeKitError(f"unknown recipe keys: {sorted(unknown)}")
    if "count" not in doc:
        raise ComposeKitError("recipe must set count")
    doc.setdefault("seed", args.seed)
    if "scenes" in doc:
        doc["scenes"] = tuple(doc["scenes"])
    try:
        recipe = DatasetRecipe(**doc)
    except TypeError as exc:
        raise ComposeKitError(f"bad recipe: {exc}") from exc
    records = emit_dataset(recipe, args.out, threads=args.threads)
    _say(args, f"wrote {len(records)} samples to {args.out}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(basis_dir=args.basis), host=args.host,
                port=args.port, log_level="warning" if args.quiet else "info")
    return 0


def _cmd_report(args) -> int:
    width, height = args.size
    paths = generate_report(args.out, scene_name=args.scene, width=width,
                            height=height, n_lights=args.lights,
                            env_width=args.env_width)
    _say(args, f"wrote {len(paths)} report files to {args.out}")
    return 0


_COMMANDS = {
    "gen-olat": _cmd_gen_olat,
    "fit": _cmd_fit,
    "synth-env": _cmd_synth_env,
    "diffuse": _cmd_diffuse,
    "render": _cmd_render,
    "edit": _cmd_edit,
    "composite": _cmd_composite,
    "metrics": _cmd_metrics,
    "emit-dataset": _cmd_emit_dataset,
    "serve": _cmd_serve,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads is None:
        args.threads = _default_threads()
    try:
        return _COMMANDS[args.command](args)
    except (ComposeKitError, OSError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
