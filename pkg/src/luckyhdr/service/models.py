"""Pydantic request/response models for the HTTP service.

The service is job-style: requests carry server-local paths, image payloads
stay on disk. Every error response body is {"detail": {"code", "message"}}
with code one of "usage", "io", "format" so thin clients can map outcomes to
exit codes without parsing messages.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class SimulateRequest(BaseModel):
    sources: list[str] = Field(min_length=1, description="HDR source PFM paths")
    out_dir: str
    count: int = Field(default=1, ge=1)
    seed: int
    # SimConfig overrides; None keeps the default.
    n_frames: int | None = None
    exposure_step_ev: float | None = None
    ns_range: tuple[float, float] | None = None
    no_range: tuple[float, float] | None = None
    shift_mixture: tuple[float, float, float] | None = None
    blur_prob: float | None = None
    bg_blur_max: float | None = None
    fg_blur_max: float | None = None
    unmatchable_shift_px: float | None = None
    powerlaw_range: tuple[float, float] | None = None
    bit_depth: int | None = None
    fg_enabled: bool | None = None
    integer_shifts: bool | None = None


class SimulateResponse(BaseModel):
    out_dir: str
    sample_dirs: list[str]
    config: dict


class PlanExposureRequest(BaseModel):
    frame: str = Field(description="viewfinder frame PFM path")
    noise_a: float = Field(ge=0)
    noise_b: float = Field(ge=0)
    lam: float = 0.05
    n: int = Field(default=5, ge=1)
    duration_s: float | None = Field(default=None, description="current shutter; sidecar value if omitted")
    iso: float | None = None


class PlanFrame(BaseModel):
    ev_offset: float
    duration_s: float
    iso: float


class PlanExposureResponse(BaseModel):
    frames: list[PlanFrame]
    reference_index: int
    warning: bool


class MergeRequest(BaseModel):
    frames: list[str] = Field(min_length=2, description="frame PFM paths, short to long")
    weights: str
    out: str
    weight_maps_dir: str | None = Field(default=None, description="emit per-iteration w_A heatmap PFMs here")


class IterationSummary(BaseModel):
    frame_index: int
    exposure_ratio: float
    shift_mean: float
    shift_max: float
    mean_w_a: float
    validity_coverage: float


class MergeResponse(BaseModel):
    out: str
    exposure_scale: float
    iterations: list[IterationSummary]


class EvalRequest(BaseModel):
    dataset_dir: str
    weights: str
    report: str | None = Field(default=None, description="write line-delimited records here")
    threads: int = Field(default=1, ge=1)


class EvalResponse(BaseModel):
    rows: list[dict]
    aggregate: dict
    errors: list[tuple[str, str]]
    report: str | None


class WeightsInspectRequest(BaseModel):
    path: str


class LayerInfo(BaseModel):
    kernel_size: int
    in_channels: int
    out_channels: int
    activation: str
    params: int


class WeightsInspectResponse(BaseModel):
    path: str
    layers: list[LayerInfo]
    total_params: int
    param_budget: int
    architecture_hash: str
