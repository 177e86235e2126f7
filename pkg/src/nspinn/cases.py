"""Turn a validated RunConfig into domains, residual problems and point pools."""

from __future__ import annotations

import numpy as np

from .config import RunConfig
from .diagnostics import Grid
from .errors import ContractViolation
from .koopman import SnapshotSeries
from .network import Mlp, new_mlp
from .physics import ConditionSpec, FluidProps, Problem, tgv_solution, tgv_target
from .sampling import Cylinder, DomainSpec, PointPool, RoleBatch, build_pool
from .training import LrSchedule, RootGamma, TrainConfig


def build_domain(cfg: RunConfig) -> DomainSpec:
    d = cfg.domain
    hole = None if d.cylinder is None else Cylinder(d.cylinder.cx, d.cylinder.cy, d.cylinder.r)
    return DomainSpec(d.xmin, d.xmax, d.ymin, d.ymax, d.t0, d.t1, hole)


def fluid_props(cfg: RunConfig) -> FluidProps:
    return FluidProps(cfg.fluid.nu, cfg.fluid.rho)


def build_problem(cfg: RunConfig) -> Problem:
    """Residual specification for every role the config samples."""
    props = fluid_props(cfg)
    domain = build_domain(cfg)
    steady = cfg.variant == "steady"
    conds: dict[str, ConditionSpec] = {}
    if cfg.case == "tgv":
        u, v, p = (tgv_target(c, props) for c in range(3))
        for side in ("inlet", "outlet", "bottom", "top"):
            conds[side] = ConditionSpec("dirichlet", u=u, v=v)
        conds["initial"] = ConditionSpec("initial", u=u, v=v, p=p)
    else:
        for side in ("inlet", "bottom", "top"):
            conds[side] = ConditionSpec("dirichlet", u=1.0, v=0.0)
        conds["cylinder"] = ConditionSpec("dirichlet", u=0.0, v=0.0)
        if steady:
            # with the time derivative gone the convective outlet reduces to d/dn = 0
            conds["outlet"] = ConditionSpec("neumann", u=0.0, v=0.0, normal=domain.normal("outlet"))
        else:
            conds["outlet"] = ConditionSpec("convective", normal=domain.normal("outlet"),
                                            c=cfg.convection_speed)
        conds["initial"] = ConditionSpec("initial", u=1.0, v=0.0)
    if cfg.variant == "data-driven":
        conds.pop("initial", None)
        conds["data"] = ConditionSpec("data", window=tuple(cfg.data.window))
    if cfg.pin is not None:
        conds["pin"] = ConditionSpec("pin", p=0.0)
    roles = set(cfg.sampling.batch) | ({"pin"} if cfg.pin is not None else set())
    return Problem(props, steady, {r: c for r, c in conds.items() if r in roles})


def data_pool(series: SnapshotSeries, window) -> RoleBatch:
    """Every (x, y, t) snapshot point inside the data window, with its (u, v, p)."""
    lo, hi = window
    pts, vals = [], []
    xy = series.grid.points()
    for snap in series.snapshots:
        if lo - 1e-9 <= snap.t <= hi + 1e-9:
            t = min(max(snap.t, lo), hi)
            pts.append(np.column_stack([xy, np.full(len(xy), t)]))
            vals.append(np.column_stack([snap.u, snap.v, snap.p]))
    if not pts:
        raise ContractViolation(f"no snapshots inside the data window {window}")
    return RoleBatch(np.concatenate(pts), np.concatenate(vals))


def build_point_pool(cfg: RunConfig, series: SnapshotSeries | None = None) -> PointPool:
    domain = build_domain(cfg)
    sizes = cfg.sampling.scaled_pool()
    if cfg.pin is not None:
        sizes.setdefault("pin", 1024)
    extra = None
    if cfg.variant == "data-driven":
        if series is None:
            raise ContractViolation("data-driven run needs a snapshot series")
        extra = {"data": data_pool(series, cfg.data.window)}
    return build_pool(domain, sizes, cfg.seed, pin_location=cfg.pin, extra=extra)


def batch_sizes(cfg: RunConfig, pool: PointPool) -> dict[str, int]:
    sizes = dict(cfg.sampling.batch)
    if cfg.pin is not None:
        sizes.setdefault("pin", 1)
    if "data" in sizes:
        sizes["data"] = min(sizes["data"], len(pool.roles["data"].points))
    return sizes


def build_schedule(cfg: RunConfig) -> LrSchedule:
    s = cfg.schedule
    gamma = s.gamma if s.gamma_root is None else RootGamma(s.gamma_root.factor, s.gamma_root.period)
    return LrSchedule(s.kind, s.eta0, s.eta_low, s.eta_high, s.n_c, gamma)


def train_config(cfg: RunConfig, pool: PointPool, iterations: int | None = None,
                 record_elapsed: bool = False) -> TrainConfig:
    o = cfg.optimizer
    return TrainConfig(
        iterations=cfg.iterations if iterations is None else iterations,
        batch_sizes=batch_sizes(cfg, pool), schedule=build_schedule(cfg), seed=cfg.seed,
        beta1=o.beta1, beta2=o.beta2, eps=o.eps, weights=cfg.weights, log_every=cfg.log_every,
        checkpoint_every=cfg.checkpoint_every, record_elapsed=record_elapsed, variant=cfg.variant,
    )


def init_network(cfg: RunConfig) -> Mlp:
    n = cfg.network
    return new_mlp(n.hidden_layers, n.neurons, n.activation, seed=cfg.seed,
                   unsteady=cfg.variant != "steady", precision=cfg.precision,
                   literal_output_activation=n.literal_output_activation)


def evaluation_grid(cfg: RunConfig) -> Grid:
    return Grid.over(build_domain(cfg), cfg.evaluation.nx, cfg.evaluation.ny)


def tgv_reference(cfg: RunConfig):
    props = fluid_props(cfg)
    return lambda pts: tgv_solution(pts, props)
