"""Run configuration: validated JSON documents and bundled case presets."""

from __future__ import annotations

import json
import math
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ContractViolation


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CylinderCfg(_Strict):
    cx: float = 0.0
    cy: float = 0.0
    r: float = Field(0.5, gt=0)


class DomainCfg(_Strict):
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    t0: float = 0.0
    t1: float = 0.0
    cylinder: Optional[CylinderCfg] = None

    @model_validator(mode="after")
    def _bounds(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError("rectangle bounds must satisfy min < max")
        if self.t1 < self.t0:
            raise ValueError("time span must satisfy t0 <= t1")
        return self


class FluidCfg(_Strict):
    nu: float = Field(gt=0)
    rho: float = Field(1.0, gt=0)


class NetworkCfg(_Strict):
    hidden_layers: int = Field(ge=1)
    neurons: int = Field(ge=1)
    activation: Literal["silu", "sigmoid", "tanh", "identity"] = "silu"
    literal_output_activation: bool = False


class SamplingCfg(_Strict):
    """Pool sizes are full-scale values; ``scale`` shrinks them for desk runs.

    The ``data`` role has a batch size only: its pool is every snapshot
    point inside the data window.
    """

    pool: dict[str, int]
    batch: dict[str, int]
    scale: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _roles(self):
        if set(self.pool) != set(self.batch) - {"data"}:
            raise ValueError(f"pool roles {sorted(self.pool)} differ from batch roles {sorted(self.batch)}")
        for role, n in self.batch.items():
            if n < 1:
                raise ValueError(f"batch size for {role!r} must be >= 1")
        return self

    def scaled_pool(self) -> dict[str, int]:
        """Pool sizes after scaling, never below the batch size."""
        return {r: max(self.batch[r], int(math.floor(n * self.scale + 0.5))) for r, n in self.pool.items()}


class RootGammaCfg(_Strict):
    factor: float = Field(gt=0, le=1)
    period: float = Field(gt=0)


class ScheduleCfg(_Strict):
    kind: Literal["exponential", "cyclical"] = "cyclical"
    eta0: float = Field(1.5e-3, gt=0)
    eta_low: float = Field(1.5e-5, gt=0)
    eta_high: float = Field(1.5e-3, gt=0)
    n_c: int = Field(5000, ge=1)
    gamma: float = Field(0.999989, gt=0, le=1)
    # when set, gamma is factor**(1/period) evaluated without rounding drift
    gamma_root: Optional[RootGammaCfg] = None

    @model_validator(mode="after")
    def _order(self):
        if self.eta_low > self.eta_high:
            raise ValueError("eta_low must not exceed eta_high")
        return self


class OptimizerCfg(_Strict):
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)


class DataCfg(_Strict):
    snapshot_dir: str
    window: tuple[float, float]


class EvaluationCfg(_Strict):
    nx: int = Field(64, ge=1)
    ny: int = Field(64, ge=1)
    times: list[float] = Field(default_factory=lambda: [0.2 * k for k in range(11)])


class RunConfig(_Strict):
    case: Literal["tgv", "cylinder"]
    variant: Literal["steady", "unsteady", "data-driven"]
    domain: DomainCfg
    fluid: FluidCfg
    network: NetworkCfg
    sampling: SamplingCfg
    schedule: ScheduleCfg = ScheduleCfg()
    optimizer: OptimizerCfg = OptimizerCfg()
    iterations: int = Field(ge=0)
    log_every: int = Field(100, ge=1)
    checkpoint_every: int = Field(0, ge=0)
    seed: int = Field(0, ge=0)
    precision: Literal[32, 64] = 64
    weights: Optional[dict[str, float]] = None
    pin: Optional[tuple[float, float]] = None
    convection_speed: float = 1.0
    data: Optional[DataCfg] = None
    evaluation: EvaluationCfg = EvaluationCfg()

    @model_validator(mode="after")
    def _variant(self):
        d = self.domain
        if self.variant == "steady":
            if d.t1 != d.t0:
                raise ValueError("steady variant needs a degenerate time span (t1 == t0)")
            if "initial" in self.sampling.batch:
                raise ValueError("steady variant has no initial-condition role")
        else:
            if d.t1 <= d.t0:
                raise ValueError(f"{self.variant} variant needs t1 > t0")
        if self.variant == "data-driven":
            if self.data is None:
                raise ValueError("data-driven variant needs a data section")
            lo, hi = self.data.window
            if not (d.t0 <= lo <= hi <= d.t1):
                raise ValueError(f"data window {self.data.window} must lie within [{d.t0}, {d.t1}]")
            if "data" not in self.sampling.batch:
                raise ValueError("data-driven variant needs a 'data' batch size")
        if self.case == "cylinder" and d.cylinder is None:
            raise ValueError("cylinder case needs domain.cylinder")
        return self


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{path}: {err['msg']}")
    return "; ".join(lines)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON config; errors name the offending field path."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ContractViolation(f"config is not valid JSON at byte {exc.pos}: {exc.msg}") from None
    return validate_config(raw)


def validate_config(raw) -> RunConfig:
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ContractViolation(f"invalid config: {_format_errors(exc)}") from None


def config_to_json(cfg: RunConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    """Re-validated copy with top-level fields (or ``sampling_scale``) replaced."""
    raw = cfg.model_dump(mode="json")
    scale = changes.pop("sampling_scale", None)
    if scale is not None:
        raw["sampling"]["scale"] = scale
    for key, value in changes.items():
        if value is not None:
            raw[key] = value
    return validate_config(raw)


# -- presets ----------------------------------------------------------------

_PI = math.pi

# Full-scale point counts: 8192e4 points per role, 8192 per iteration
_TGV_POOL = {"interior": 81_920_000, "initial": 81_920_000, "inlet": 81_920_000,
             "outlet": 81_920_000, "bottom": 81_920_000, "top": 81_920_000}

# Cylinder cases: 2.56e8 interior; 2.56e7 on y=+-10 and 1.28e7 on x=-10, 30
# (split evenly between the two sides of each pair); 5.12e6 on the cylinder
_CYL_POOL = {"interior": 256_000_000, "top": 12_800_000, "bottom": 12_800_000,
             "inlet": 6_400_000, "outlet": 6_400_000, "cylinder": 5_120_000,
             "initial": 25_600_000}
_CYL_BATCH = {"interior": 25_600, "top": 1_280, "bottom": 1_280, "inlet": 640,
              "outlet": 640, "cylinder": 512, "initial": 2_560}


def _drop(d: dict, *keys) -> dict:
    return {k: v for k, v in d.items() if k not in keys}


def _tgv(desk: bool) -> dict:
    side = dict(xmin=-_PI, xmax=_PI, ymin=-_PI, ymax=_PI, t0=0.0)
    if desk:
        batch = {"interior": 2048, "initial": 512, "inlet": 512, "outlet": 512, "bottom": 512, "top": 512}
        return dict(
            case="tgv", variant="unsteady", domain=dict(side, t1=2.0), fluid=dict(nu=0.01, rho=1.0),
            network=dict(hidden_layers=3, neurons=64),
            # 1/80 of full scale: each interior point is seen 40 times over 20k iterations
            sampling=dict(pool=_TGV_POOL, batch=batch, scale=1.0 / 80.0),
            schedule=dict(kind="cyclical", eta_low=1.5e-5, eta_high=1.5e-3, n_c=5000, gamma=0.999989),
            iterations=20_000, log_every=100, precision=32,
            evaluation=dict(nx=64, ny=64, times=[0.2 * k for k in range(11)]),
        )
    batch = {"interior": 8192, "initial": 8192, "inlet": 2048, "outlet": 2048, "bottom": 2048, "top": 2048}
    return dict(
        case="tgv", variant="unsteady", domain=dict(side, t1=100.0), fluid=dict(nu=0.01, rho=1.0),
        network=dict(hidden_layers=3, neurons=128),
        sampling=dict(pool=_TGV_POOL, batch=batch),
        schedule=dict(kind="cyclical", eta_low=1.5e-5, eta_high=1.5e-3, n_c=5000, gamma=0.999989),
        iterations=400_000, log_every=100, precision=32,
        evaluation=dict(nx=512, ny=512, times=[2.0 * k for k in range(51)]),
    )


def _cylinder(re: int, variant: str) -> dict:
    if re == 40:
        rect, t1, nu, iters, gamma = (-10.0, 30.0, -10.0, 10.0), 20.0, 0.025, 400_000, 0.99998
    else:
        rect, t1, nu, iters, gamma = (-8.0, 25.0, -8.0, 8.0), 200.0, 0.005, 1_000_000, 0.9999915
    pool, batch = dict(_CYL_POOL), dict(_CYL_BATCH)
    t0, data = 0.0, None
    if variant == "steady":
        t1 = 0.0
        pool, batch = _drop(pool, "initial"), _drop(batch, "initial")
    elif variant == "data-driven":
        # PDE/BC points only in [125, 200]; data replaces the initial condition
        t0 = 125.0
        pool, batch = _drop(pool, "initial"), _drop(batch, "initial")
        batch["data"] = 6_400
        data = dict(snapshot_dir="snapshots", window=(125.0, 140.0))
    cfg = dict(
        case="cylinder", variant=variant,
        domain=dict(xmin=rect[0], xmax=rect[1], ymin=rect[2], ymax=rect[3], t0=t0, t1=t1,
                    cylinder=dict(cx=0.0, cy=0.0, r=0.5)),
        fluid=dict(nu=nu, rho=1.0), network=dict(hidden_layers=6, neurons=512),
        sampling=dict(pool=pool, batch=batch),
        schedule=dict(kind="cyclical", eta_low=1e-6, eta_high=1e-2, n_c=5000, gamma=gamma),
        iterations=iters, precision=32,
    )
    if data is not None:
        cfg["data"] = data
    return cfg


PRESETS = {
    "tgv-desk": lambda: _tgv(True),
    "tgv-paper": lambda: _tgv(False),
    "re40-steady": lambda: _cylinder(40, "steady"),
    "re40-unsteady": lambda: _cylinder(40, "unsteady"),
    "re200-steady": lambda: _cylinder(200, "steady"),
    "re200-unsteady": lambda: _cylinder(200, "unsteady"),
    "re200-data": lambda: _cylinder(200, "data-driven"),
}


def preset(name: str) -> RunConfig:
    try:
        raw = PRESETS[name]()
    except KeyError:
        raise ContractViolation(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return validate_config(raw)
