"""Command-line surface: phantom generation, projection, masking,
completion, reconstruction, metrics, and external-agent checks.

Outputs are raster pairs (JSON header + raw f32 payload) plus JSON
sidecars. Every subcommand that writes results also writes a manifest
with the fully resolved configuration and the toolkit version, and runs
are bit-reproducible for a fixed config and seed. Diagnostics go to
stderr only. Exit codes: 0 success, 1 usage, 2 I/O or format problems,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .ce import CEConfig, dice_reconstruct
from .completion import AngularInterpolation, ExternalCompleter, ZeroFill, complete, enforce_consistency
from .data_agent import DataAgentConfig
from .errors import (
    AgentRemoteError,
    FormatError,
    NumericalError,
    ShapeError,
    StageError,
    TransportError,
)
from .fbp import FilterSpec, fbp
from .fileio import read_raster, write_json, write_raster
from .image_agent import (
    ExternalImageAgent,
    GaussianSmoother,
    IdentityAgent,
    TVDenoiser,
    apply_image_agent,
)
from .metrics import HU_INTERCEPT, HU_SLOPE, psnr, rmse, ssim
from .phantoms import random_ellipse_scene, rasterize_scene, shepp_logan
from .protocol import AgentFrame, AgentHandle, agent_call
from .tomo import AngularMask, Geometry, Image, Sinogram, apply_mask, forward_project

__all__ = ["main", "cli_main", "CONFIG_SCHEMA", "DEFAULT_CONFIG"]


class UsageError(Exception):
    pass


CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "image_size": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 1},
                    "minItems": 2,
                    "maxItems": 2,
                },
                "pixel_size": {"type": "number", "exclusiveMinimum": 0},
                "n_angles": {"type": "integer", "minimum": 1},
                "n_detectors": {"type": ["integer", "null"], "minimum": 1},
                "detector_spacing": {"type": ["number", "null"], "exclusiveMinimum": 0},
            },
        },
        "mask": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "observed_degrees": {
                    "type": "array",
                    "items": {"type": "number"},
                    "minItems": 2,
                    "maxItems": 2,
                }
            },
        },
        "completer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {
                    "enum": ["zero-fill", "angular-interpolation", "external-agent"]
                },
                "agent_cmd": {"type": ["string", "null"]},
            },
        },
        "image_agent": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {
                    "enum": ["identity", "tv-denoiser", "gaussian-smoother", "external-agent"]
                },
                "lambda_tv": {"type": "number", "exclusiveMinimum": 0},
                "inner_iters": {"type": "integer", "minimum": 1},
                "sigma_px": {"type": "number", "exclusiveMinimum": 0},
                "agent_cmd": {"type": ["string", "null"]},
            },
        },
        "ce": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rho": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "mu": {
                    "type": "array",
                    "items": {"type": "number", "minimum": 0},
                    "minItems": 2,
                    "maxItems": 2,
                },
                "sigma2": {"type": "number", "exclusiveMinimum": 0},
                "outer_iters": {"type": "integer", "minimum": 0},
                "cg_iters": {"type": "integer", "minimum": 1},
                "cg_tol": {"type": "number", "minimum": 0},
                "nonneg": {"type": "boolean"},
                "convergence_tol": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "consistency_source": {"enum": ["post-agent", "pre-agent"]},
            },
        },
        "filter": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["ram-lak", "hann"]},
                "cutoff": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "weights": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "model": {"enum": ["uniform", "variance"]},
                "gain": {"type": "number", "exclusiveMinimum": 0},
                "floor": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "seed": {"type": ["integer", "null"]},
        "output_dir": {"type": "string"},
    },
}

DEFAULT_CONFIG = {
    "geometry": {
        "image_size": [256, 256],
        "pixel_size": 1.0,
        "n_angles": 720,
        "n_detectors": None,
        "detector_spacing": None,
    },
    "mask": {"observed_degrees": [0.0, 90.0]},
    "completer": {"kind": "angular-interpolation", "agent_cmd": None},
    "image_agent": {
        "kind": "tv-denoiser",
        "lambda_tv": 0.05,
        "inner_iters": 40,
        "sigma_px": 1.0,
        "agent_cmd": None,
    },
    "ce": {
        "rho": 0.25,
        "mu": [0.6, 0.4],
        "sigma2": 1e-8,
        "outer_iters": 4,
        "cg_iters": 20,
        "cg_tol": 0.0,
        "nonneg": True,
        "convergence_tol": None,
        "consistency_source": "post-agent",
    },
    "filter": {"kind": "ram-lak", "cutoff": 1.0},
    "weights": {"model": "uniform", "gain": 1.0, "floor": 1e-6},
    "seed": None,
    "output_dir": "out",
}


def _merge(base: dict, overlay: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | None, overrides: dict | None = None) -> dict:
    """Resolve defaults <- config file <- CLI overrides, then validate."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        cfg = _merge(cfg, raw)
    if overrides:
        cfg = _merge(cfg, overrides)
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise FormatError(f"config invalid: {exc.message}") from exc
    return cfg


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_observed_deg(text: str) -> tuple[float, float]:
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError as exc:
        raise UsageError(f"--observed-deg expects LO:HI degrees, got {text!r}") from exc


def _geometry_from_config(cfg: dict) -> Geometry:
    g = cfg["geometry"]
    return Geometry.uniform(
        tuple(g["image_size"]),
        n_angles=g["n_angles"],
        n_detectors=g["n_detectors"],
        pixel_size=g["pixel_size"],
        detector_spacing=g["detector_spacing"],
    )


def _geometry_for_sinogram(sino: Sinogram, cfg: dict) -> Geometry:
    g = cfg["geometry"]
    return Geometry(
        n_detectors=sino.n_detectors,
        detector_spacing=sino.detector_spacing,
        angles=sino.angles,
        image_size=tuple(g["image_size"]),
        pixel_size=g["pixel_size"],
    )


def _build_image_agent(cfg: dict, handles: list):
    spec = cfg["image_agent"]
    kind = spec["kind"]
    if kind == "identity":
        return IdentityAgent()
    if kind == "tv-denoiser":
        return TVDenoiser(spec["lambda_tv"], spec["inner_iters"])
    if kind == "gaussian-smoother":
        return GaussianSmoother(spec["sigma_px"])
    if kind == "external-agent":
        if not spec.get("agent_cmd"):
            raise UsageError("external image agent requires an agent command")
        handle = AgentHandle(spec["agent_cmd"])
        handles.append(handle)
        return ExternalImageAgent(handle)
    raise FormatError(f"unknown image agent kind {kind!r}")


def _build_completer(cfg: dict, handles: list):
    spec = cfg["completer"]
    kind = spec["kind"]
    if kind == "zero-fill":
        return ZeroFill()
    if kind == "angular-interpolation":
        return AngularInterpolation()
    if kind == "external-agent":
        if not spec.get("agent_cmd"):
            raise UsageError("external completer requires an agent command")
        handle = AgentHandle(spec["agent_cmd"])
        handles.append(handle)
        return ExternalCompleter(handle)
    raise FormatError(f"unknown completer kind {kind!r}")


def _filter_from_config(cfg: dict) -> FilterSpec:
    return FilterSpec(cfg["filter"]["kind"], cfg["filter"]["cutoff"])


def _ce_config(cfg: dict, image_agent) -> CEConfig:
    ce = cfg["ce"]
    return CEConfig(
        rho=ce["rho"],
        mu=tuple(ce["mu"]),
        outer_iters=ce["outer_iters"],
        data_cfg=DataAgentConfig(
            sigma2=ce["sigma2"],
            cg_iters=ce["cg_iters"],
            cg_tol=ce["cg_tol"],
            nonneg=ce["nonneg"],
        ),
        image_agent=image_agent,
        convergence_tol=ce["convergence_tol"],
        consistency_source=ce["consistency_source"],
    )


def _write_manifest(outdir: Path, name: str, command: str, config: dict, extra: dict | None = None):
    manifest = {
        "version": f"dicect-{__version__}",
        "command": command,
        "config": config,
    }
    if extra:
        manifest.update(extra)
    write_json(outdir / name, manifest)


def _outdir(args) -> Path:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _log(*parts):
    print(*parts, file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_phantom(args) -> int:
    out = _outdir(args)
    if args.kind == "shepp-logan":
        img = shepp_logan(args.n, variant=args.variant, pixel_size=args.pixel_size)
        scene_info = {"kind": "shepp-logan", "variant": args.variant}
    else:
        scene = random_ellipse_scene(args.n, seed=args.seed if args.seed is not None else 0)
        img = rasterize_scene(scene, pixel_size=args.pixel_size)
        scene_info = {"kind": "random-ellipses", "ellipses": scene.ellipses}
    path = write_raster(out / "phantom.json", img)
    _write_manifest(
        out,
        "phantom_manifest.json",
        "phantom",
        {"kind": args.kind, "n": args.n, "seed": args.seed, "pixel_size": args.pixel_size},
        {"scene": scene_info},
    )
    _log(f"wrote {path}")
    return 0


def cmd_project(args) -> int:
    out = _outdir(args)
    obj = read_raster(args.image)
    if not isinstance(obj, Image):
        raise FormatError(f"{args.image} is not an image raster")
    geom = Geometry.uniform(
        (obj.width, obj.height),
        n_angles=args.n_angles,
        n_detectors=args.n_detectors,
        pixel_size=obj.pixel_size,
        detector_spacing=args.detector_spacing,
    )
    sino = forward_project(obj, geom)
    path = write_raster(out / "sinogram.json", sino)
    _write_manifest(
        out,
        "project_manifest.json",
        "project",
        {
            "image": str(args.image),
            "n_angles": geom.n_angles,
            "n_detectors": geom.n_detectors,
            "detector_spacing": geom.detector_spacing,
            "pixel_size": geom.pixel_size,
        },
    )
    _log(f"wrote {path}")
    return 0


def cmd_mask(args) -> int:
    lo, hi = _parse_observed_deg(args.observed_deg)
    out = _outdir(args)
    sino = _read_sinogram(args.sino)
    geom = Geometry(
        n_detectors=sino.n_detectors,
        detector_spacing=sino.detector_spacing,
        angles=sino.angles,
        image_size=(sino.n_detectors, sino.n_detectors),
    )
    mask = AngularMask.from_observed_degrees(geom, lo, hi)
    masked = apply_mask(sino, mask)
    path = write_raster(out / "masked.json", masked)
    write_json(out / "mask.json", {"observed": mask.observed.astype(int).tolist()})
    _write_manifest(
        out,
        "mask_manifest.json",
        "mask",
        {"sino": str(args.sino), "observed_degrees": [lo, hi]},
        {"observed_views": int(mask.observed.sum()), "missing_views": mask.n_missing},
    )
    _log(f"wrote {path} ({int(mask.observed.sum())} observed rows)")
    return 0


def _read_sinogram(path) -> Sinogram:
    obj = read_raster(path)
    if not isinstance(obj, Sinogram):
        raise FormatError(f"{path} is not a sinogram raster")
    return obj


def cmd_fbp(args) -> int:
    out = _outdir(args)
    sino = _read_sinogram(args.sino)
    geom = Geometry(
        n_detectors=sino.n_detectors,
        detector_spacing=sino.detector_spacing,
        angles=sino.angles,
        image_size=(args.image_size, args.image_size),
        pixel_size=args.pixel_size,
    )
    spec = FilterSpec(args.filter, args.cutoff)
    img = fbp(sino, geom, spec)
    path = write_raster(out / "fbp.json", img)
    _write_manifest(
        out,
        "fbp_manifest.json",
        "fbp",
        {
            "sino": str(args.sino),
            "image_size": args.image_size,
            "pixel_size": args.pixel_size,
            "filter": {"kind": spec.kind, "cutoff": spec.cutoff},
        },
    )
    _log(f"wrote {path}")
    return 0


def cmd_complete(args) -> int:
    out = _outdir(args)
    cfg = load_config(args.config, _complete_overrides(args))
    sino = _read_sinogram(args.sino)
    lo, hi = cfg["mask"]["observed_degrees"]
    geom = _geometry_for_sinogram(sino, cfg)
    mask = AngularMask.from_observed_degrees(geom, lo, hi)
    handles = []
    try:
        completer = _build_completer(cfg, handles)
        completed = complete(sino, mask, completer)
        path = write_raster(out / "completed.json", completed)
        written = [str(path)]
        if args.enforce:
            consistent, recon = enforce_consistency(completed, geom, _filter_from_config(cfg))
            written.append(str(write_raster(out / "consistent.json", consistent)))
            written.append(str(write_raster(out / "cycle_image.json", recon)))
    finally:
        for h in handles:
            h.close()
    _write_manifest(out, "complete_manifest.json", "complete", cfg)
    _log("wrote " + ", ".join(written))
    return 0


def _complete_overrides(args) -> dict:
    over: dict = {}
    if args.observed_deg:
        lo, hi = _parse_observed_deg(args.observed_deg)
        over["mask"] = {"observed_degrees": [lo, hi]}
    if args.completer:
        over["completer"] = {"kind": args.completer}
    if args.agent_cmd:
        over.setdefault("completer", {})["agent_cmd"] = args.agent_cmd
        over["completer"].setdefault("kind", "external-agent")
    return over


def _reconstruct_overrides(args) -> dict:
    over: dict = {}
    if args.observed_deg:
        lo, hi = _parse_observed_deg(args.observed_deg)
        over["mask"] = {"observed_degrees": [lo, hi]}
    if args.image_size:
        over["geometry"] = {"image_size": [args.image_size, args.image_size]}
    if args.agent_cmd:
        over["image_agent"] = {"kind": "external-agent", "agent_cmd": args.agent_cmd}
    if args.seed is not None:
        over["seed"] = args.seed
    return over


def cmd_reconstruct(args) -> int:
    out = _outdir(args)
    cfg = load_config(args.config, _reconstruct_overrides(args))
    sino = _read_sinogram(args.sino)
    geom = _geometry_for_sinogram(sino, cfg)
    lo, hi = cfg["mask"]["observed_degrees"]
    mask = AngularMask.from_observed_degrees(geom, lo, hi)
    limited = apply_mask(sino, mask)
    spec = _filter_from_config(cfg)
    handles = []
    trace = None
    try:
        if args.method == "fbp":
            recon = fbp(limited, geom, spec)
        elif args.method == "fbp-pp-style":
            agent = _build_image_agent(cfg, handles)
            recon = apply_image_agent(fbp(limited, geom, spec), agent)
        elif args.method == "dc-fbp":
            completer = _build_completer(cfg, handles)
            recon = fbp(complete(limited, mask, completer), geom, spec)
        elif args.method in ("dice", "data-only"):
            completer = _build_completer(cfg, handles)
            if args.method == "data-only":
                agent = IdentityAgent()
            else:
                agent = _build_image_agent(cfg, handles)
            ce_cfg = _ce_config(cfg, agent)
            recon, trace = dice_reconstruct(
                limited, mask, completer, ce_cfg, geom, fbp_filter=spec
            )
        else:
            raise UsageError(f"unknown method {args.method!r}")
    finally:
        for h in handles:
            h.close()
    path = write_raster(out / "recon.json", recon)
    if trace is not None:
        write_json(
            out / "trace.json",
            {
                "mann_residuals": trace.mann_residuals,
                "equilibrium_residuals": [list(t) for t in trace.equilibrium_residuals],
            },
        )
        _log(f"mann residuals: {['%.3e' % r for r in trace.mann_residuals]}")
    _write_manifest(
        out, "reconstruct_manifest.json", "reconstruct", cfg, {"method": args.method}
    )
    _log(f"wrote {path}")
    return 0


def cmd_metrics(args) -> int:
    out = _outdir(args)
    img = read_raster(args.image)
    ref = read_raster(args.ref)
    if not isinstance(img, Image) or not isinstance(ref, Image):
        raise FormatError("metrics expects two image rasters")
    err = rmse(img, ref)
    result = {
        "rmse": err,
        "rmse_hu": err * HU_SLOPE,
        "psnr_db": psnr(img, ref, peak=args.peak),
        "ssim": ssim(img, ref),
        "hu_slope": HU_SLOPE,
        "hu_intercept": HU_INTERCEPT,
    }
    if result["psnr_db"] == float("inf"):
        result["psnr_db"] = "inf"
    write_json(out / "metrics.json", result)
    print(json.dumps(result, sort_keys=True))
    _write_manifest(
        out,
        "metrics_manifest.json",
        "metrics",
        {"image": str(args.image), "ref": str(args.ref), "peak": args.peak},
    )
    return 0


def cmd_agent_check(args) -> int:
    rng = np.random.default_rng(0)
    values = rng.random((args.rows, args.cols)).astype(np.float32)
    with AgentHandle(args.agent_cmd, timeout=args.timeout) as handle:
        _log("hello exchange: ok")
        reply = agent_call(handle, AgentFrame.image_request(values))
        if reply.msg_type != 3 or reply.payload.shape != values.shape:
            raise TransportError("agent image response malformed")
        _log(f"image round-trip: ok (shape {values.shape})")
        observed = np.ones(args.rows, dtype=bool)
        observed[args.rows // 2 :] = False
        masked = values.copy()
        masked[~observed] = 0.0
        reply = agent_call(handle, AgentFrame.sinogram_request(masked, observed))
        if reply.msg_type != 3 or reply.payload.shape != values.shape:
            raise TransportError("agent sinogram response malformed")
        if not np.array_equal(reply.payload[observed], masked[observed]):
            _log("note: agent does not pass observed rows through unchanged")
        _log(f"sinogram round-trip: ok (shape {values.shape})")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dicect", description=__doc__)
    parser.add_argument("--version", action="version", version=f"dicect-{__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a test phantom")
    p.add_argument("--kind", choices=["shepp-logan", "random-ellipses"], default="shepp-logan")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--variant", choices=["standard", "symmetric"], default="standard")
    p.add_argument("--pixel-size", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("project", help="forward-project an image")
    p.add_argument("--image", required=True)
    p.add_argument("--n-angles", type=int, default=720)
    p.add_argument("--n-detectors", type=int, default=None)
    p.add_argument("--detector-spacing", type=float, default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("mask", help="zero unobserved views")
    p.add_argument("--sino", required=True)
    p.add_argument("--observed-deg", required=True, help="LO:HI degrees, half-open")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("fbp", help="filtered backprojection")
    p.add_argument("--sino", required=True)
    p.add_argument("--image-size", type=int, required=True)
    p.add_argument("--pixel-size", type=float, default=1.0)
    p.add_argument("--filter", choices=["ram-lak", "hann"], default="ram-lak")
    p.add_argument("--cutoff", type=float, default=1.0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_fbp)

    p = sub.add_parser("complete", help="complete a limited sinogram")
    p.add_argument("--sino", required=True)
    p.add_argument("--observed-deg", default=None)
    p.add_argument(
        "--completer",
        choices=["zero-fill", "angular-interpolation", "external-agent"],
        default=None,
    )
    p.add_argument("--agent-cmd", default=None)
    p.add_argument("--enforce", action="store_true", help="also run the consistency cycle")
    p.add_argument("--config", default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("reconstruct", help="reconstruct from limited data")
    p.add_argument("--sino", required=True)
    p.add_argument(
        "--method",
        choices=["fbp", "fbp-pp-style", "dc-fbp", "dice", "data-only"],
        default="dice",
    )
    p.add_argument("--observed-deg", default=None)
    p.add_argument("--image-size", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--agent-cmd", default=None, help="external image agent command")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("metrics", help="quality metrics between two images")
    p.add_argument("--image", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--peak", type=float, default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("agent-check", help="verify an external agent speaks the protocol")
    p.add_argument("--agent-cmd", required=True)
    p.add_argument("--rows", type=int, default=16)
    p.add_argument("--cols", type=int, default=16)
    p.add_argument("--timeout", type=float, default=30.0)
    p.set_defaults(func=cmd_agent_check)

    return parser


def cli_main(argv=None) -> int:
    """Run one CLI invocation and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        _log(f"usage error: {exc}")
        return 1
    except StageError as exc:
        # transport trouble inside a pipeline stage is an I/O failure;
        # everything else that aborts a stage is numerical
        _log(f"stage failure: {exc}")
        if isinstance(exc.cause, (TransportError, AgentRemoteError, OSError)):
            return 2
        return 3
    except (
        FormatError,
        ShapeError,
        TransportError,
        AgentRemoteError,
        OSError,
        json.JSONDecodeError,
        ValueError,
    ) as exc:
        _log(f"error: {exc}")
        return 2
    except (NumericalError, FloatingPointError) as exc:
        _log(f"numerical failure: {exc}")
        return 3


def main(argv=None) -> int:
    code = cli_main(argv)
    if argv is None:
        sys.exit(code)
    return code
