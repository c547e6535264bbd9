"""Command line for the depth toolbox.

Every subcommand builds one request model and either executes it
in-process (default) or POSTs it to a running service when ``--server``
is given, so both paths produce identical results. Exit codes: 0
success, 1 input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from pydantic import ValidationError

from .errors import InputError, NumericalError
from .service import handlers, models

_AUF_FLAGS = {"on": True, "off": False, None: None}


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _floats(text: str) -> list[float]:
    try:
        return [float(token) for token in text.split(",") if token.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _post(server: str, path: str, request) -> dict:
    import httpx

    url = server.rstrip("/") + path
    try:
        response = httpx.post(url, json=request.model_dump(mode="json"), timeout=600.0)
    except httpx.HTTPError as exc:
        raise InputError(f"cannot reach server {server}: {exc}") from exc
    if response.status_code == 200:
        return response.json()
    try:
        payload = response.json()
    except ValueError:
        raise NumericalError(f"server error {response.status_code}: {response.text[:200]}")
    error_type = payload.get("error_type")
    if error_type == "numerical":
        raise NumericalError(payload.get("message", "numerical failure"))
    raise InputError(payload.get("message", str(payload)))


def _run(server: str | None, path: str, request, handler) -> dict:
    if server is not None:
        return _post(server, path, request)
    return handler(request).model_dump(mode="json")


def _cmd_depth(args: argparse.Namespace) -> int:
    request = models.DepthRequest(
        ref=args.ref,
        src=args.src,
        cams=args.cams,
        config=args.config,
        levels=args.levels,
        strategy=args.strategy,
        auf=_AUF_FLAGS[args.auf],
        out=args.out,
        confidence_out=args.confidence_out,
    )
    data = _run(args.server, "/depth", request, handlers.depth)
    if args.summary:
        for stage in data["stages"]:
            _emit(stage)
        _emit({key: value for key, value in data.items() if key != "stages"})
    else:
        print(
            f"wrote {data['out']} ({data['width']}x{data['height']}), "
            f"finest spacing {data['finest_spacing']:.6g}"
        )
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    request = models.SynthRequest(
        scene=args.scene,
        surface=args.surface,
        seed=args.seed,
        out=args.out,
        gt_cloud=args.gt_cloud,
        gt_cloud_stride=args.stride,
        min_visibility=args.min_visibility,
    )
    _emit(_run(args.server, "/synth", request, handlers.synth))
    return 0


def _cmd_fuse(args: argparse.Namespace) -> int:
    request = models.FuseRequest(
        depths=args.depths,
        images=args.images,
        cams=args.cams,
        out=args.out,
        min_support=args.min_support,
        tau_px=args.tau_px,
        tau_rel=args.tau_rel,
        voxel_size=args.voxel_size,
    )
    _emit(_run(args.server, "/fuse", request, handlers.fuse_job))
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    if args.kind == "depth":
        request = models.EvalDepthRequest(
            est=args.est, gt=args.gt, spacing=args.spacing, margin=args.margin
        )
        _emit(_run(args.server, "/eval/depth", request, handlers.eval_depth_job))
    else:
        request = models.EvalCloudRequest(est=args.est, gt=args.gt, truncation=args.truncation)
        _emit(_run(args.server, "/eval/cloud", request, handlers.eval_cloud_job))
    return 0


def _cmd_losscheck(args: argparse.Namespace) -> int:
    request = models.LosscheckRequest(instances=args.instances, seed=args.seed)
    data = _run(args.server, "/losscheck", request, handlers.losscheck_job)
    for row in data["rows"]:
        verdict = "PASS" if row["passed"] else "FAIL"
        print(f"{row['name']:<40s} {row['value']:>12.3e}  <= {row['tolerance']:.1e}  {verdict}")
    if not data["passed"]:
        failed = [row["name"] for row in data["rows"] if not row["passed"]]
        raise NumericalError(f"losscheck failed: {', '.join(failed)}")
    print("losscheck: PASS")
    return 0


def _cmd_calibrate(args: argparse.Namespace) -> int:
    request = models.CalibrateRequest(
        scene=args.scene,
        surface=args.surface,
        seed=args.seed,
        config=args.config,
        alphas=args.alphas,
        betas=args.betas,
    )
    _emit(_run(args.server, "/calibrate-interval", request, handlers.calibrate_job))
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    request = models.AblateRequest(
        scene=args.scene, surface=args.surface, seed=args.seed, config=args.config
    )
    _emit(_run(args.server, "/ablate", request, handlers.ablate_job))
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return 0


def _add_scene_source(parser: argparse.ArgumentParser, default_surface: str) -> None:
    parser.add_argument("--scene", help="scene spec text file (overrides --surface)")
    parser.add_argument(
        "--surface", choices=models.SURFACES, default=default_surface,
        help=f"built-in scene to render (default: {default_surface})",
    )
    parser.add_argument("--seed", type=int, default=None, help="texture seed override")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pyramvs",
        description="Coarse-to-fine plane-sweep depth estimation toolbox.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    depth = sub.add_parser("depth", help="estimate a depth map for one reference view")
    depth.add_argument("--ref", required=True, help="reference image")
    depth.add_argument("--src", required=True, nargs="+", help="source images")
    depth.add_argument("--cams", required=True, help="directory of <stem>_cam.txt files")
    depth.add_argument("--config", help="configuration text file")
    depth.add_argument("--levels", type=int, help="pyramid level count override")
    depth.add_argument(
        "--strategy", choices=models.STRATEGIES, default="full",
        help="hypothesis schedule override (default: full)",
    )
    depth.add_argument("--auf", choices=("on", "off"), help="override the unimodal filter")
    depth.add_argument("--out", required=True, help="output depth map (PFM)")
    depth.add_argument("--confidence-out", help="optional confidence map output (PFM)")
    depth.add_argument(
        "--summary", action="store_true",
        help="print a machine-readable run summary, one JSON line per stage",
    )
    depth.set_defaults(func=_cmd_depth)

    synth = sub.add_parser("synth", help="render a synthetic scene to disk")
    _add_scene_source(synth, "plane")
    synth.add_argument("--out", required=True, help="output directory")
    synth.add_argument("--gt-cloud", help="also write the ground-truth point cloud (PLY)")
    synth.add_argument("--stride", type=int, default=1, help="pixel stride for the cloud")
    synth.add_argument(
        "--min-visibility", type=int, default=2,
        help="views that must see a point for it to enter the cloud",
    )
    synth.set_defaults(func=_cmd_synth)

    fuse = sub.add_parser("fuse", help="fuse depth maps into a point cloud")
    fuse.add_argument("--depths", required=True, nargs="+", help="per-view depth maps (PFM)")
    fuse.add_argument("--images", required=True, nargs="+", help="matching color images")
    fuse.add_argument("--cams", required=True, help="directory of <stem>_cam.txt files")
    fuse.add_argument("--out", required=True, help="output point cloud (PLY)")
    fuse.add_argument("--min-support", type=int, default=2, help="agreeing views required")
    fuse.add_argument("--tau-px", type=float, default=1.0, help="reprojection threshold (px)")
    fuse.add_argument("--tau-rel", type=float, default=0.01, help="relative depth threshold")
    fuse.add_argument("--voxel-size", type=float, default=0.0, help="deduplication voxel size")
    fuse.set_defaults(func=_cmd_fuse)

    evaluate = sub.add_parser("eval", help="score an estimate against ground truth")
    eval_sub = evaluate.add_subparsers(dest="kind", required=True)
    eval_depth = eval_sub.add_parser("depth", help="depth map metrics")
    eval_depth.add_argument("--est", required=True, help="estimated depth map (PFM)")
    eval_depth.add_argument("--gt", required=True, help="ground-truth depth map (PFM)")
    eval_depth.add_argument(
        "--spacing", type=float, default=1.0,
        help="hypothesis spacing for the within-k fractions (default: 1.0)",
    )
    eval_depth.add_argument("--margin", type=int, default=0, help="border crop before scoring")
    eval_depth.set_defaults(func=_cmd_eval)
    eval_cloud = eval_sub.add_parser("cloud", help="point cloud metrics")
    eval_cloud.add_argument("--est", required=True, help="estimated cloud (PLY)")
    eval_cloud.add_argument("--gt", required=True, help="ground-truth cloud (PLY)")
    eval_cloud.add_argument(
        "--truncation", type=float, default=None,
        help="cap per-point distances at this value (default: no cap)",
    )
    eval_cloud.set_defaults(func=_cmd_eval)

    losscheck = sub.add_parser("losscheck", help="finite-difference checks on the loss suite")
    losscheck.add_argument("--instances", type=int, default=50, help="random instances per check")
    losscheck.add_argument("--seed", type=int, default=0, help="base seed")
    losscheck.set_defaults(func=_cmd_losscheck)

    calibrate = sub.add_parser(
        "calibrate-interval", help="sweep the stage-2 interval parameters on a synthetic scene"
    )
    _add_scene_source(calibrate, "plane")
    calibrate.add_argument("--config", help="configuration text file")
    calibrate.add_argument(
        "--alphas", type=_floats, default=[0.5, 1.0, 1.5, 2.0],
        help="comma-separated variance scales (default: 0.5,1.0,1.5,2.0)",
    )
    calibrate.add_argument(
        "--betas", type=_floats, default=[0.0],
        help="comma-separated constant offsets (default: 0.0)",
    )
    calibrate.set_defaults(func=_cmd_calibrate)

    ablate = sub.add_parser("ablate", help="run every strategy schedule on one scene")
    _add_scene_source(ablate, "step")
    ablate.add_argument("--config", help="configuration text file")
    ablate.set_defaults(func=_cmd_ablate)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1", help="bind address")
    serve.add_argument("--port", type=int, default=8000, help="bind port")
    serve.set_defaults(func=_cmd_serve)

    for name, command in sub.choices.items():
        if name not in ("serve", "eval"):
            command.add_argument("--server", help="POST the job to this service URL instead")
    for name, command in (("depth", eval_depth), ("cloud", eval_cloud)):
        command.add_argument("--server", help="POST the job to this service URL instead")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (None, 0) else 1
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
