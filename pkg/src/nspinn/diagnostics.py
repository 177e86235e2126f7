"""Grid evaluation, vorticity, Q-criterion, surface forces and error norms.

A *model* here is either an :class:`Mlp` or any callable mapping an
``(N, 3)`` array of (x, y, t) points to an :class:`OutputJet`; the latter lets
analytic solutions stand in for a trained network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .autodiff import jet_eval
from .errors import ContractViolation
from .jets import OutputJet
from .network import Mlp, atomic_write_text
from .physics import FluidProps
from .sampling import DomainSpec

FIELDS = ("u", "v", "p")
DERIVED = ("omega", "q")


# -- model evaluation -------------------------------------------------------


def model_jet(model, points: np.ndarray, order: int = 1) -> OutputJet:
    """Jet of ``model`` at (x, y, t) points; steady nets ignore t."""
    pts = np.asarray(points, dtype=float)
    if isinstance(model, Mlp):
        if model.input_dim == 2:
            pts = pts[:, :2]
        elif pts.shape[1] == 2:
            raise ContractViolation("unsteady model needs a time coordinate")
        return jet_eval(model, pts, order)
    return model(pts)


def _with_time(xy: np.ndarray, t: float) -> np.ndarray:
    return np.column_stack([xy, np.full(len(xy), float(t))])


# -- point-wise derived quantities ------------------------------------------


def vorticity(jet: OutputJet) -> np.ndarray:
    """Out-of-plane vorticity dv/dx - du/dy."""
    g = jet.velocity_gradient()
    return g[:, 1, 0] - g[:, 0, 1]


def q_criterion(jet: OutputJet) -> np.ndarray:
    """Q = (|Omega|^2 - |S|^2) / 2 from the 2D velocity-gradient tensor."""
    g = jet.velocity_gradient()
    gt = np.transpose(g, (0, 2, 1))
    rot = 0.5 * (g - gt)
    strain = 0.5 * (g + gt)
    return 0.5 * (np.sum(rot * rot, axis=(1, 2)) - np.sum(strain * strain, axis=(1, 2)))


# -- grids and snapshots ----------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid; points run row-major with y outermost."""

    nx: int
    ny: int
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ContractViolation("grid needs nx, ny >= 1")
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ContractViolation("grid bounds must satisfy min < max")

    @classmethod
    def over(cls, domain: DomainSpec, nx: int, ny: int) -> "Grid":
        return cls(nx, ny, domain.xmin, domain.xmax, domain.ymin, domain.ymax)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def axes(self):
        dx = (self.xmax - self.xmin) / self.nx
        dy = (self.ymax - self.ymin) / self.ny
        xs = self.xmin + (np.arange(self.nx) + 0.5) * dx
        ys = self.ymin + (np.arange(self.ny) + 0.5) * dy
        return xs, ys

    def points(self) -> np.ndarray:
        xs, ys = self.axes()
        xx, yy = np.meshgrid(xs, ys)  # rows follow y
        return np.column_stack([xx.ravel(), yy.ravel()])

    def header(self, t: float) -> str:
        return (f"# t={t!r} nx={self.nx} ny={self.ny} xmin={self.xmin!r} xmax={self.xmax!r} "
                f"ymin={self.ymin!r} ymax={self.ymax!r}")


@dataclass
class FieldSnapshot:
    t: float
    grid: Grid
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    omega: np.ndarray | None = None
    q: np.ndarray | None = None

    def __post_init__(self):
        for name in FIELDS + DERIVED:
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float).ravel()
                if arr.size != self.grid.size:
                    raise ContractViolation(f"{name} has {arr.size} entries, grid has {self.grid.size}")
                setattr(self, name, arr)

    def field(self, name: str) -> np.ndarray:
        return getattr(self, name)


def evaluate_snapshot(model, grid: Grid, t: float, derived: bool = False) -> FieldSnapshot:
    """Fields of ``model`` at the grid's cell centres at time ``t``."""
    jet = model_jet(model, _with_time(grid.points(), t), order=1 if derived else 0)
    snap = FieldSnapshot(float(t), grid, jet.u, jet.v, jet.p)
    if derived:
        snap.omega = vorticity(jet)
        snap.q = q_criterion(jet)
    return snap


def snapshot_to_csv(snap: FieldSnapshot, comments: Sequence[str] = ()) -> str:
    derived = snap.omega is not None and snap.q is not None
    cols = ["x", "y", *FIELDS] + (list(DERIVED) if derived else [])
    lines = [snap.grid.header(snap.t), *(f"# {c}" for c in comments), ",".join(cols)]
    pts = snap.grid.points()
    data = [pts[:, 0], pts[:, 1], snap.u, snap.v, snap.p]
    if derived:
        data += [snap.omega, snap.q]
    for row in zip(*(d.tolist() for d in data)):
        lines.append(",".join(repr(x) for x in row))
    return "\n".join(lines) + "\n"


def write_snapshot(snap: FieldSnapshot, path, comments: Sequence[str] = ()):
    atomic_write_text(path, snapshot_to_csv(snap, comments))


def _parse_header(line: str) -> dict[str, str]:
    if not line.startswith("# "):
        raise ContractViolation("snapshot file must start with a '# t=...' header")
    out = {}
    for tok in line[2:].split():
        key, _, val = tok.partition("=")
        out[key] = val
    missing = {"t", "nx", "ny", "xmin", "xmax", "ymin", "ymax"} - set(out)
    if missing:
        raise ContractViolation(f"snapshot header lacks {sorted(missing)}")
    return out


def read_snapshot(path) -> FieldSnapshot:
    lines = Path(path).read_text().splitlines()
    head = _parse_header(lines[0])
    grid = Grid(int(head["nx"]), int(head["ny"]), float(head["xmin"]), float(head["xmax"]),
                float(head["ymin"]), float(head["ymax"]))
    body = [ln for ln in lines[1:] if not ln.startswith("#")]
    cols = body[0].split(",")
    table = np.array([[float(c) for c in ln.split(",")] for ln in body[1:]]).reshape(-1, len(cols))
    get = {name: table[:, i] for i, name in enumerate(cols)}
    return FieldSnapshot(float(head["t"]), grid, get["u"], get["v"], get["p"],
                         get.get("omega"), get.get("q"))


# -- surface quantities -----------------------------------------------------


@dataclass(frozen=True)
class ForceCoefficients:
    t: float
    cd: float
    cdp: float
    cdf: float
    cl: float
    speed: float
    diameter: float
    rho: float


def _surface_nodes(domain: DomainSpec, n: int):
    hole = domain.hole
    if hole is None:
        raise ContractViolation("domain has no cylinder")
    theta = 2.0 * np.pi * np.arange(n) / n
    normal = np.column_stack([np.cos(theta), np.sin(theta)])  # out of the body, into the fluid
    xy = np.array([hole.cx, hole.cy]) + hole.r * normal
    return theta, xy, normal, hole


def force_coefficients(model, domain: DomainSpec, t: float, props: FluidProps,
                       n_surface: int = 256, speed: float = 1.0) -> ForceCoefficients:
    """Drag/lift coefficients by periodic trapezoid quadrature on the cylinder.

    The body feels -p n from pressure and mu (grad u + grad u^T) n from
    viscous stress, with n the body's outward normal. Both integrals share
    the same nodes, so C_D = C_Dp + C_Df up to one rounding.
    """
    if n_surface < 16:
        raise ContractViolation("n_surface must be >= 16")
    _, xy, normal, hole = _surface_nodes(domain, n_surface)
    jet = model_jet(model, _with_time(xy, t), order=1)
    g = jet.velocity_gradient()
    mu = props.rho * props.nu
    tau = mu * (g + np.transpose(g, (0, 2, 1)))
    f_press = -jet.p[:, None] * normal
    f_visc = np.einsum("nij,nj->ni", tau, normal)
    ds = 2.0 * np.pi * hole.r / n_surface
    press = f_press.sum(axis=0) * ds
    visc = f_visc.sum(axis=0) * ds
    scale = 0.5 * props.rho * speed ** 2 * hole.diameter
    cdp = float(press[0] / scale)
    cdf = float(visc[0] / scale)
    cl = float((press[1] + visc[1]) / scale)
    return ForceCoefficients(float(t), cdp + cdf, cdp, cdf, cl, speed, hole.diameter, props.rho)


SURFACE_CONVENTION = "theta in radians from the downstream (+x) surface point, counterclockwise"


def surface_pressure(model, domain: DomainSpec, t: float, n: int = 360) -> np.ndarray:
    """``(n, 2)`` array of (theta, p) at uniform angles on the cylinder surface."""
    if n < 1:
        raise ContractViolation("n must be >= 1")
    theta, xy, _, _ = _surface_nodes(domain, n)
    jet = model_jet(model, _with_time(xy, t), order=0)
    return np.column_stack([theta, jet.p])


def surface_pressure_csv(table: np.ndarray, t: float) -> str:
    lines = [f"# t={t!r} {SURFACE_CONVENTION}", "theta,p"]
    lines += [f"{a!r},{b!r}" for a, b in table.tolist()]
    return "\n".join(lines) + "\n"


# -- error norm -------------------------------------------------------------


def l2_spacetime_error(pred_fn: Callable, ref_fn: Callable, grid: Grid, times: Sequence[float]) -> float:
    """Root-mean-square difference over every grid cell and listed time.

    ``pred_fn`` and ``ref_fn`` map an ``(N, 3)`` array of (x, y, t) to ``(N,)``
    values of one field.
    """
    times = list(times)
    if not times:
        raise ContractViolation("need at least one time")
    xy = grid.points()
    total = 0.0
    for t in times:
        pts = _with_time(xy, t)
        d = np.asarray(pred_fn(pts), dtype=float) - np.asarray(ref_fn(pts), dtype=float)
        total += float(np.dot(d, d))
    return math.sqrt(total / (grid.size * len(times)))


def field_errors(model, reference, grid: Grid, times: Sequence[float]) -> dict[str, float]:
    """l2_spacetime_error of u, v and p between two models."""
    out = {}
    for comp, name in enumerate(FIELDS):
        out[name] = l2_spacetime_error(
            lambda pts: model_jet(model, pts, 0).values[:, comp],
            lambda pts: model_jet(reference, pts, 0).values[:, comp],
            grid, times)
    return out
