"""Navier-Stokes, initial/boundary and data residuals, the Taylor-Green
vortex, and loss aggregation.

Residuals are computed from jet stacks. Each residual also exposes its
partial derivatives with respect to jet entries so the autodiff module can
seed the reverse sweep without a general tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Sequence, Union

import numpy as np

from .errors import ContractViolation
from .jets import DT, DX, DXX, DY, DYY, P, U, V, VAL, OutputJet

TERM_NAMES = tuple(f"L{i}" for i in range(1, 11))
PIN_TERM = "pin"

Target = Union[float, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class FluidProps:
    nu: float
    rho: float = 1.0

    def __post_init__(self):
        if not (self.nu > 0 and self.rho > 0):
            raise ContractViolation(f"nu and rho must be positive, got {self.nu}, {self.rho}")


CONDITION_KINDS = ("dirichlet", "neumann", "convective", "initial", "data", "pin")


@dataclass(frozen=True, eq=False)
class ConditionSpec:
    """What a role's training points must satisfy.

    ``u``, ``v``, ``p`` are targets (constants or callables of the point
    array); a ``None`` target drops that component's loss term. ``normal``
    is the outward unit normal, a pair or a callable returning ``(N, 2)``.
    ``data`` kinds take their targets from the batch values instead.
    """

    kind: str
    u: Target | None = None
    v: Target | None = None
    p: Target | None = None
    normal: tuple[float, float] | Callable[[np.ndarray], np.ndarray] | None = None
    c: float | None = None
    window: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in CONDITION_KINDS:
            raise ContractViolation(f"unknown condition kind {self.kind!r}")
        if self.kind == "convective" and (self.c is None or self.normal is None):
            raise ContractViolation("convective condition needs speed c and normal n")
        if self.kind == "neumann" and self.normal is None:
            raise ContractViolation("neumann condition needs a normal n")
        if self.kind == "data" and self.window is None:
            raise ContractViolation("data condition needs its time window T_data")


@dataclass(frozen=True, eq=False)
class Problem:
    """Residual specification: fluid, steadiness and per-role conditions.

    The ``interior`` role always carries the PDE residuals (L1-L3); every
    other role must appear in ``conditions``.
    """

    props: FluidProps
    steady: bool = False
    conditions: Mapping[str, ConditionSpec] = field(default_factory=dict)


@dataclass
class LossBreakdown:
    terms: dict[str, float]
    counts: dict[str, int]
    weights: dict[str, float]
    total: float

    def row(self) -> list[float]:
        return [self.terms.get(name, 0.0) for name in TERM_NAMES]


class Term(NamedTuple):
    name: str
    residual: np.ndarray
    # (channel, component, coefficient) triples: d residual / d jet[channel, :, component]
    partials: list


def _target(t: Target, points: np.ndarray) -> np.ndarray:
    if callable(t):
        return np.asarray(t(points), dtype=points.dtype)
    return np.full(len(points), t, dtype=points.dtype)


def _normal(spec: ConditionSpec, points: np.ndarray) -> tuple:
    n = spec.normal
    if callable(n):
        arr = np.asarray(n(points), dtype=points.dtype)
        return arr[:, 0], arr[:, 1]
    return n[0], n[1]


# -- interior ---------------------------------------------------------------


def _ns_terms(stack: np.ndarray, props: FluidProps, steady: bool) -> list[Term]:
    u, v = stack[VAL, :, U], stack[VAL, :, V]
    ux, uy, ut = stack[DX, :, U], stack[DY, :, U], stack[DT, :, U]
    vx, vy, vt = stack[DX, :, V], stack[DY, :, V], stack[DT, :, V]
    px, py = stack[DX, :, P], stack[DY, :, P]
    nu, inv_rho = props.nu, 1.0 / props.rho

    cont = ux + vy
    mx = u * ux + v * uy + inv_rho * px - nu * (stack[DXX, :, U] + stack[DYY, :, U])
    my = u * vx + v * vy + inv_rho * py - nu * (stack[DXX, :, V] + stack[DYY, :, V])
    if not steady:
        mx = ut + mx
        my = vt + my

    pmx = [(VAL, U, ux), (DX, U, u), (VAL, V, uy), (DY, U, v), (DX, P, inv_rho),
           (DXX, U, -nu), (DYY, U, -nu)]
    pmy = [(VAL, U, vx), (DX, V, u), (VAL, V, vy), (DY, V, v), (DY, P, inv_rho),
           (DXX, V, -nu), (DYY, V, -nu)]
    if not steady:
        pmx.append((DT, U, 1.0))
        pmy.append((DT, V, 1.0))
    return [
        Term("L1", cont, [(DX, U, 1.0), (DY, V, 1.0)]),
        Term("L2", mx, pmx),
        Term("L3", my, pmy),
    ]


def ns_residual(jet: OutputJet, props: FluidProps, steady: bool = False):
    """Continuity and x/y momentum residuals of the incompressible equations."""
    if not np.isfinite(jet.stack).all():
        raise ContractViolation("jet has non-finite entries")
    cont, mx, my = (t.residual for t in _ns_terms(jet.stack, props, steady))
    return cont, mx, my


# -- Taylor-Green vortex ----------------------------------------------------


def tgv_solution(points, props: FluidProps) -> OutputJet:
    """Closed-form decaying Taylor-Green vortex and its exact derivatives."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    t = pts[:, 2] if pts.shape[1] > 2 else np.zeros(len(pts))
    nu, rho = props.nu, props.rho
    ev = np.exp(-2.0 * nu * t)
    ep = np.exp(-4.0 * nu * t)
    cx, sx, cy, sy = np.cos(x), np.sin(x), np.cos(y), np.sin(y)

    u = cx * sy * ev
    v = -sx * cy * ev
    p = -0.25 * rho * (np.cos(2 * x) + np.cos(2 * y)) * ep
    du = np.stack([-sx * sy * ev, cx * cy * ev, -2.0 * nu * u], axis=1)
    dv = np.stack([-cx * cy * ev, sx * sy * ev, -2.0 * nu * v], axis=1)
    dp = np.stack([0.5 * rho * np.sin(2 * x) * ep, 0.5 * rho * np.sin(2 * y) * ep,
                   -4.0 * nu * p], axis=1)
    d2u = np.stack([-u, -u], axis=1)
    d2v = np.stack([-v, -v], axis=1)
    return OutputJet.from_fields(u, v, p, du, dv, dp, d2u, d2v)


def tgv_target(component: int, props: FluidProps) -> Callable[[np.ndarray], np.ndarray]:
    """Callable target returning one TGV field, for boundary/initial specs."""

    def target(points):
        return tgv_solution(points, props).values[:, component]

    return target


# -- conditions -------------------------------------------------------------


def _condition_terms(spec: ConditionSpec, stack, points, values) -> list[Term]:
    kind = spec.kind
    terms = []
    if kind in ("initial", "data"):
        names = ("L4", "L5", "L6")
        for comp, name in zip((U, V, P), names):
            if kind == "data":
                if values is None:
                    raise ContractViolation("data role requires tabulated values")
                if points.shape[1] > 2:
                    t = points[:, 2]
                    lo, hi = spec.window
                    if t.min() < lo or t.max() > hi:
                        raise ContractViolation(f"data point outside T_data={spec.window}")
                target = values[:, comp]
            else:
                tgt = (spec.u, spec.v, spec.p)[comp]
                if tgt is None:
                    continue
                target = _target(tgt, points)
            terms.append(Term(name, stack[VAL, :, comp] - target, [(VAL, comp, 1.0)]))
    elif kind == "dirichlet":
        for comp, tgt, name in ((U, spec.u, "L7"), (V, spec.v, "L8")):
            if tgt is not None:
                r = stack[VAL, :, comp] - _target(tgt, points)
                terms.append(Term(name, r, [(VAL, comp, 1.0)]))
    elif kind == "neumann":
        nx, ny = _normal(spec, points)
        for comp, tgt, name in ((U, spec.u, "L9"), (V, spec.v, "L10")):
            if tgt is not None:
                r = nx * stack[DX, :, comp] + ny * stack[DY, :, comp] - _target(tgt, points)
                terms.append(Term(name, r, [(DX, comp, nx), (DY, comp, ny)]))
    elif kind == "convective":
        nx, ny = _normal(spec, points)
        c = spec.c
        for comp, name in ((U, "L9"), (V, "L10")):
            r = stack[DT, :, comp] + c * (nx * stack[DX, :, comp] + ny * stack[DY, :, comp])
            terms.append(Term(name, r, [(DT, comp, 1.0), (DX, comp, c * nx), (DY, comp, c * ny)]))
    elif kind == "pin":
        tgt = 0.0 if spec.p is None else spec.p
        terms.append(Term(PIN_TERM, stack[VAL, :, P] - _target(tgt, points), [(VAL, P, 1.0)]))
    return terms


def required_order(spec: ConditionSpec | None) -> int:
    """Derivative order a role needs from the network (interior is None)."""
    if spec is None:
        return 2
    return 1 if spec.kind in ("neumann", "convective") else 0


def bc_residual(jet: OutputJet, spec: ConditionSpec, points=None) -> np.ndarray:
    """Boundary residual vector, shape (N, 2).

    dirichlet: (u - u_D, v - v_D); neumann: (du/dn - u_N, dv/dn - v_N);
    convective: (du/dt + c du/dn, dv/dt + c dv/dn).
    """
    if spec.kind not in ("dirichlet", "neumann", "convective"):
        raise ContractViolation(f"{spec.kind!r} is not a boundary condition kind")
    stack = jet.stack
    if points is None:
        points = np.zeros((stack.shape[1], 3), dtype=stack.dtype)
    terms = _condition_terms(spec, stack, np.asarray(points, dtype=stack.dtype), None)
    out = np.zeros((stack.shape[1], 2), dtype=stack.dtype)
    for term in terms:
        out[:, 0 if term.name in ("L7", "L9") else 1] = term.residual
    return out


def data_residual(pred, data) -> np.ndarray:
    """Component-wise (u, v, p) mismatch against tabulated data."""
    return np.asarray(pred, dtype=float) - np.asarray(data, dtype=float)


def role_terms(role: str, problem: Problem, stack, points, values=None) -> list[Term]:
    """All loss terms a role contributes, with their jet partials."""
    if role == "interior":
        return _ns_terms(stack, problem.props, problem.steady)
    try:
        spec = problem.conditions[role]
    except KeyError:
        raise ContractViolation(f"no condition declared for role {role!r}") from None
    return _condition_terms(spec, stack, points, values)


def role_order(role: str, problem: Problem) -> int:
    return 2 if role == "interior" else required_order(problem.conditions.get(role))


# -- aggregation ------------------------------------------------------------


def aggregate_loss(
    groups: Mapping[str, Sequence[np.ndarray] | np.ndarray],
    weights: Mapping[str, float] | None = None,
) -> LossBreakdown:
    """Mean of squared residuals per term, then the weighted sum.

    ``groups`` maps a term name to its residuals (one array, or a sequence
    of arrays that are concatenated in order). Weights default to 1.
    """
    weights = dict(weights or {})
    terms, counts, used = {}, {}, {}
    for name, res in groups.items():
        r = np.concatenate([np.ravel(a) for a in res]) if isinstance(res, (list, tuple)) else np.ravel(res)
        counts[name] = r.size
        if r.size:
            terms[name] = float(np.mean(r * r))
            used[name] = float(weights.get(name, 1.0))
    if not terms:
        raise ContractViolation("every residual group is empty")
    total = 0.0
    for name in sorted(terms, key=_term_key):
        total += used[name] * terms[name]
    for name in TERM_NAMES:
        terms.setdefault(name, 0.0)
        counts.setdefault(name, 0)
    return LossBreakdown(terms=terms, counts=counts, weights=used, total=total)


def _term_key(name: str):
    return (0, int(name[1:])) if name in TERM_NAMES else (1, name)
