"""Command-line client for the luckyhdr service.

The CLI is a thin HTTP client: every subcommand is one request against the
service API. By default the app is mounted in-process (no server needed);
pass --server to talk to a running instance instead. Exit codes: 0 success,
1 usage error, 2 I/O error, 3 data/format error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys

import httpx

from . import __version__

_EXIT_BY_CODE = {"usage": 1, "io": 2, "format": 3}
_EXIT_BY_STATUS = {400: 1, 403: 2, 404: 2, 422: 3}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("LHDR_THREADS", "1")))
    except ValueError:
        return 1


def build_parser() -> _Parser:
    parser = _Parser(prog="luckyhdr", description=__doc__)
    parser.add_argument("--version", action="version", version=f"luckyhdr {__version__}")
    parser.add_argument("--server", default=None, help="service URL; default runs the app in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic burst dataset")
    p.add_argument("--source", action="append", required=True, help="HDR source PFM (repeatable)")
    p.add_argument("--out", required=True, help="dataset output directory")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-frames", type=int, default=None)
    p.add_argument("--exposure-step-ev", type=float, default=None)
    p.add_argument("--ns-range", type=float, nargs=2, default=None, metavar=("LO", "HI"))
    p.add_argument("--no-range", type=float, nargs=2, default=None, metavar=("LO", "HI"))
    p.add_argument("--shift-mixture", type=float, nargs=3, default=None, metavar=("P", "M_S", "M_L"))
    p.add_argument("--blur-prob", type=float, default=None)
    p.add_argument("--bg-blur-max", type=float, default=None)
    p.add_argument("--fg-blur-max", type=float, default=None)
    p.add_argument("--unmatchable-shift-px", type=float, default=None)
    p.add_argument("--powerlaw-range", type=float, nargs=2, default=None, metavar=("LO", "HI"))
    p.add_argument("--bit-depth", type=int, default=None)
    p.add_argument("--no-foreground", action="store_true", help="disable the moving foreground layer")
    p.add_argument("--integer-shifts", action="store_true", help="round global shifts to whole pixels")

    p = sub.add_parser("merge", help="align and merge a bracket of frame PFMs")
    p.add_argument("--frames", nargs="+", required=True, help="frame PFMs, short to long")
    p.add_argument("--weights", required=True, help="LHDRW001 weight file")
    p.add_argument("--out", required=True, help="output HDR PFM (base-exposure units)")
    p.add_argument("--weight-maps", default=None, help="directory for per-iteration w_A heatmaps")

    p = sub.add_parser("plan-exposure", help="plan a bracket from a viewfinder frame")
    p.add_argument("--frame", required=True, help="viewfinder PFM (sidecar provides current settings)")
    p.add_argument("--noise-a", type=float, required=True, help="shot-noise slope a of sigma^2 = a*x + b")
    p.add_argument("--noise-b", type=float, required=True, help="read-noise floor b")
    p.add_argument("--lam", type=float, default=0.05, help="shadow-SNR weight in the AE loss")
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--duration-s", type=float, default=None)
    p.add_argument("--iso", type=float, default=None)

    p = sub.add_parser("eval", help="evaluate merges over a simulated dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", default=None, help="write line-delimited records here")
    p.add_argument("--threads", type=int, default=_default_threads())

    p = sub.add_parser("weights-inspect", help="print a weight file's layer table")
    p.add_argument("path")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


async def _post(server: str | None, path: str, payload: dict) -> httpx.Response:
    if server:
        async with httpx.AsyncClient(base_url=server, timeout=3600.0) as client:
            return await client.post(path, json=payload)
    from .service import create_app

    transport = httpx.ASGITransport(app=create_app())
    async with httpx.AsyncClient(transport=transport, base_url="http://luckyhdr.local", timeout=3600.0) as client:
        return await client.post(path, json=payload)


def _request(server: str | None, path: str, payload: dict):
    """POST and return (exit_code, body). Non-2xx responses print their error."""
    try:
        response = asyncio.run(_post(server, path, payload))
    except httpx.HTTPError as e:
        print(f"error: cannot reach service: {e}", file=sys.stderr)
        return 2, None
    if response.is_success:
        return 0, response.json()
    try:
        detail = response.json().get("detail", {})
    except ValueError:
        detail = {}
    if isinstance(detail, dict):
        code = detail.get("code")
        message = detail.get("message", response.text)
    else:
        code, message = None, str(detail)
    print(f"error: {message}", file=sys.stderr)
    return _EXIT_BY_CODE.get(code, _EXIT_BY_STATUS.get(response.status_code, 1)), None


def _cmd_simulate(args) -> int:
    payload = {
        "sources": args.source,
        "out_dir": args.out,
        "count": args.count,
        "seed": args.seed,
        "n_frames": args.n_frames,
        "exposure_step_ev": args.exposure_step_ev,
        "ns_range": args.ns_range,
        "no_range": args.no_range,
        "shift_mixture": args.shift_mixture,
        "blur_prob": args.blur_prob,
        "bg_blur_max": args.bg_blur_max,
        "fg_blur_max": args.fg_blur_max,
        "unmatchable_shift_px": args.unmatchable_shift_px,
        "powerlaw_range": args.powerlaw_range,
        "bit_depth": args.bit_depth,
        "fg_enabled": False if args.no_foreground else None,
        "integer_shifts": True if args.integer_shifts else None,
    }
    rc, body = _request(args.server, "/simulate", payload)
    if rc:
        return rc
    print(f"wrote {len(body['sample_dirs'])} sample(s) under {body['out_dir']}")
    print("config: " + json.dumps(body["config"], sort_keys=True))
    return 0


def _cmd_merge(args) -> int:
    payload = {
        "frames": args.frames,
        "weights": args.weights,
        "out": args.out,
        "weight_maps_dir": args.weight_maps,
    }
    rc, body = _request(args.server, "/merge", payload)
    if rc:
        return rc
    print(f"merged {len(args.frames)} frames -> {body['out']} (exposure_scale {body['exposure_scale']:g})")
    for it in body["iterations"]:
        print(
            "  frame {frame_index}: ratio {exposure_ratio:.3g}, |shift| mean {shift_mean:.3f} "
            "max {shift_max:.3f}, mean w_A {mean_w_a:.3f}, coverage {validity_coverage:.3f}".format(**it)
        )
    return 0


def _cmd_plan(args) -> int:
    payload = {
        "frame": args.frame,
        "noise_a": args.noise_a,
        "noise_b": args.noise_b,
        "lam": args.lam,
        "n": args.n,
        "duration_s": args.duration_s,
        "iso": args.iso,
    }
    rc, body = _request(args.server, "/plan-exposure", payload)
    if rc:
        return rc
    for f in body["frames"]:
        print(f"{f['ev_offset']:+.2f} {f['duration_s']:.6f} {f['iso']:.0f}")
    if body["warning"]:
        print("warning: plan clamped by device limits", file=sys.stderr)
    return 0


def _cmd_eval(args) -> int:
    payload = {
        "dataset_dir": args.dataset,
        "weights": args.weights,
        "report": args.out,
        "threads": args.threads,
    }
    rc, body = _request(args.server, "/evaluate", payload)
    if rc:
        return rc
    rows = body["rows"]
    if rows:
        header = f"{'sample':<14} {'psnr_l':>8} {'psnr_mu':>8} {'l_pred':>8} {'l_warp':>8} {'l_var':>8} {'cvx':>4} {'ms':>8}"
        print(header)
        for r in rows:
            print(
                f"{r['sample_id']:<14} {r['psnr_l']:>8.2f} {r['psnr_mu']:>8.2f} "
                f"{r['l_pred']:>8.4f} {r['l_warp']:>8.4f} {r['l_var']:>8.4f} "
                f"{'ok' if r['convexity_ok'] else 'FAIL':>4} {r['ms_per_merge']:>8.1f}"
            )
        agg = body["aggregate"]
        print(
            f"aggregate over {agg['count']}: PSNR_l {agg['psnr_l']:.2f} dB, PSNR_mu {agg['psnr_mu']:.2f} dB, "
            f"base PSNR_mu {agg['psnr_mu_base']:.2f} dB, convexity pass rate {agg['convexity_pass_rate']:.2f}"
        )
    else:
        print("no samples found")
    for path, message in body["errors"]:
        print(f"skipped {path}: {message}", file=sys.stderr)
    if body["report"]:
        print(f"report: {body['report']}")
    return 0


def _cmd_inspect(args) -> int:
    rc, body = _request(args.server, "/weights/inspect", {"path": args.path})
    if rc:
        return rc
    print(f"{args.path}: {len(body['layers'])} layers, architecture hash {body['architecture_hash']}")
    for i, layer in enumerate(body["layers"]):
        print(
            f"  layer {i}: {layer['kernel_size']}x{layer['kernel_size']} "
            f"{layer['in_channels']}->{layer['out_channels']} {layer['activation']:<5} {layer['params']:>7} params"
        )
    print(f"total params: {body['total_params']} (budget {body['param_budget']})")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "merge": _cmd_merge,
        "plan-exposure": _cmd_plan,
        "eval": _cmd_eval,
        "weights-inspect": _cmd_inspect,
        "serve": _cmd_serve,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
