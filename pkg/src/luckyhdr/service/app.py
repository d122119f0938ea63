"""FastAPI service wrapping the core package.

Loaded network stacks are cached per weight-file path (keyed by mtime), so a
long-running service pays the load cost once per bundle while many clients
submit merge and evaluation jobs against it.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .. import __version__
from ..autoexpose import ExposureSettings, NoiseModel, plan_bracket, select_reference_exposure
from ..dataset import generate_dataset
from ..errors import (
    DegenerateInputError,
    DeviceLimitError,
    FormatError,
    ParameterError,
)
from ..nets import NetStack
from ..pfm import load_frame, read_sidecar, sidecar_path, write_pfm
from ..pipeline import evaluate, iterative_merge
from ..simulate import SimConfig
from ..tinycnn import PARAM_BUDGET, load_weights
from . import models

_SIM_OVERRIDE_FIELDS = (
    "n_frames",
    "exposure_step_ev",
    "ns_range",
    "no_range",
    "shift_mixture",
    "blur_prob",
    "bg_blur_max",
    "fg_blur_max",
    "unmatchable_shift_px",
    "powerlaw_range",
    "bit_depth",
    "fg_enabled",
    "integer_shifts",
)


class _StackCache:
    def __init__(self):
        self._cache: dict[tuple[str, float], NetStack] = {}

    def get(self, path: str) -> NetStack:
        key = (os.path.abspath(path), os.path.getmtime(path))
        if key not in self._cache:
            self._cache.clear()
            self._cache[key] = NetStack.load(path)
        return self._cache[key]


def _sanitize(value):
    """Replace non-finite floats for strict-JSON responses."""
    if isinstance(value, float):
        if math.isinf(value):
            return 1e12 if value > 0 else -1e12
        if math.isnan(value):
            return None
    if isinstance(value, dict):
        return {k: _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    return value


def create_app() -> FastAPI:
    app = FastAPI(title="luckyhdr", version=__version__)
    stacks = _StackCache()

    def _error(status: int, code: str, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"detail": {"code": code, "message": message}})

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        loc = ".".join(str(p) for p in first.get("loc", ()) if p != "body")
        return _error(400, "usage", f"invalid request: {loc}: {first.get('msg', 'validation failed')}")

    @app.exception_handler(ParameterError)
    async def _usage_handler(request: Request, exc: ParameterError):
        return _error(400, "usage", str(exc))

    @app.exception_handler(DeviceLimitError)
    async def _limit_handler(request: Request, exc: DeviceLimitError):
        return _error(400, "usage", str(exc))

    @app.exception_handler(FileNotFoundError)
    async def _missing_handler(request: Request, exc: FileNotFoundError):
        return _error(404, "io", str(exc))

    @app.exception_handler(PermissionError)
    async def _perm_handler(request: Request, exc: PermissionError):
        return _error(403, "io", str(exc))

    @app.exception_handler(IsADirectoryError)
    async def _isdir_handler(request: Request, exc: IsADirectoryError):
        return _error(400, "io", str(exc))

    @app.exception_handler(FormatError)
    async def _format_handler(request: Request, exc: FormatError):
        return _error(422, "format", str(exc))

    @app.exception_handler(DegenerateInputError)
    async def _degenerate_handler(request: Request, exc: DegenerateInputError):
        return _error(422, "format", str(exc))

    @app.get("/healthz", response_model=models.HealthResponse)
    def healthz():
        return models.HealthResponse(status="ok", version=__version__)

    @app.post("/simulate", response_model=models.SimulateResponse)
    def simulate(req: models.SimulateRequest):
        overrides = {}
        for name in _SIM_OVERRIDE_FIELDS:
            value = getattr(req, name)
            if value is not None:
                overrides[name] = value
        cfg = SimConfig(seed=req.seed, **overrides)
        sources = [(Path(p).name, load_frame(p)) for p in req.sources]
        dirs = generate_dataset(sources, req.out_dir, req.count, cfg, seed=req.seed)
        return models.SimulateResponse(
            out_dir=str(req.out_dir),
            sample_dirs=[str(d) for d in dirs],
            config=dataclasses.asdict(cfg),
        )

    @app.post("/plan-exposure", response_model=models.PlanExposureResponse)
    def plan_exposure(req: models.PlanExposureRequest):
        frame = load_frame(req.frame)
        meta = {}
        sc = sidecar_path(req.frame)
        if sc.exists():
            meta = read_sidecar(sc)
        duration = req.duration_s if req.duration_s is not None else float(meta.get("duration_s", 1.0 / 60.0))
        iso = req.iso if req.iso is not None else float(meta.get("iso", 100.0))
        if duration <= 0:
            duration = 1.0 / 60.0
        current = ExposureSettings(duration_s=min(duration, 1.0), iso=max(iso, 100.0))
        noise = NoiseModel(req.noise_a, req.noise_b)

        reference = select_reference_exposure(frame, current, noise, req.lam)
        # Shadow level predicted for the reference frame by rescaling the viewfinder.
        shadow_now = float(np.percentile(frame.data, 15.0))
        shadow_ref = min(shadow_now * reference.total_exposure / current.total_exposure, 1.0)
        plan = plan_bracket(reference, noise, n=req.n, shadow_level=shadow_ref)
        return models.PlanExposureResponse(
            frames=[
                models.PlanFrame(ev_offset=ev, duration_s=s.duration_s, iso=s.iso)
                for ev, s in zip(plan.ev_offsets, plan.settings)
            ],
            reference_index=plan.reference_index,
            warning=plan.warning,
        )

    @app.post("/merge", response_model=models.MergeResponse)
    def merge_burst(req: models.MergeRequest):
        nets = stacks.get(req.weights)
        frames = [load_frame(p) for p in req.frames]
        trace = iterative_merge(frames, nets)
        write_pfm(req.out, trace.estimate.data)
        if req.weight_maps_dir:
            out_dir = Path(req.weight_maps_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            for rec in trace.iterations:
                write_pfm(out_dir / f"w_a_{rec.frame_index}.pfm", rec.weights.w_a)
        return models.MergeResponse(
            out=str(req.out),
            exposure_scale=trace.estimate.exposure_scale,
            iterations=[models.IterationSummary(**row) for row in trace.summary()],
        )

    @app.post("/evaluate", response_model=models.EvalResponse)
    def evaluate_dataset(req: models.EvalRequest):
        if not Path(req.dataset_dir).is_dir():
            raise FileNotFoundError(f"dataset directory not found: {req.dataset_dir}")
        nets = stacks.get(req.weights)
        rows, aggregate, errors = evaluate(req.dataset_dir, nets, threads=req.threads)
        report = None
        if req.report is not None:
            report = str(req.report)
            tmp = report + ".tmp"
            with open(tmp, "w") as f:
                for row in rows:
                    f.write(json.dumps(row, sort_keys=True) + "\n")
            os.replace(tmp, report)
        return models.EvalResponse(
            rows=[_sanitize(r) for r in rows],
            aggregate=_sanitize(aggregate),
            errors=errors,
            report=report,
        )

    @app.post("/weights/inspect", response_model=models.WeightsInspectResponse)
    def weights_inspect(req: models.WeightsInspectRequest):
        bundle = load_weights(req.path)
        layers = [
            models.LayerInfo(
                kernel_size=lw.spec.kernel_size,
                in_channels=lw.spec.in_channels,
                out_channels=lw.spec.out_channels,
                activation=lw.activation,
                params=lw.spec.param_count,
            )
            for lw in bundle.layers
        ]
        total = bundle.param_count
        if total > PARAM_BUDGET:
            raise FormatError(f"bundle has {total} parameters, over the {PARAM_BUDGET} budget")
        return models.WeightsInspectResponse(
            path=str(req.path),
            layers=layers,
            total_params=total,
            param_budget=PARAM_BUDGET,
            architecture_hash=f"{bundle.architecture_hash:#018x}",
        )

    return app

