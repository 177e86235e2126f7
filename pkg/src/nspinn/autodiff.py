"""Exact input derivatives and parameter gradients of the MLP surrogate.

Input derivatives are carried forward as jets (value, d/dx, d/dy, d/dt,
d2/dx2, d2/dy2) through each affine map and activation. Parameter gradients
come from a reverse sweep over that same extended forward pass, so a PDE
residual built from second derivatives is differentiated exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ContractViolation, NumericError, NumericOverflowError
from .jets import CHANNELS_FOR_ORDER, OutputJet
from .network import Mlp, affine, as_points
from .physics import LossBreakdown, Problem, aggregate_loss, role_order, role_terms


@dataclass
class _Layer:
    h: np.ndarray          # layer input values (N, d)
    dh: np.ndarray | None  # input derivative channels (C-1, N, d); None for the seeded first layer
    dz: np.ndarray | None  # pre-activation derivative channels
    fs: list | None        # activation derivatives at z, or None for a linear layer


# overflow is detected and reported by layer below, not warned about
@np.errstate(over="ignore", invalid="ignore")
def _propagate(net: Mlp, pts: np.ndarray, order: int, keep: bool):
    n_chan = CHANNELS_FOR_ORDER[order]
    n, d = pts.shape
    act = net.act
    n_derivs = order + 1 if keep else order
    h, dh = pts, None
    cache = []
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = affine(h, w, b)
        if not np.isfinite(z).all():
            raise NumericOverflowError(k)
        m = w.shape[0]
        dz = None
        if n_chan > 1:
            if k == 0:
                # input seeds are unit vectors: d z / d x_i is column i of A, for every point
                dz = np.zeros((n_chan - 1, 1, m), dtype=z.dtype)
                dz[:d, 0, :] = w.T
            else:
                dz = (dh.reshape(-1, dh.shape[2]) @ w.T).reshape(n_chan - 1, n, m)
        fs = None
        if net.layer_activated(k):
            fs = act.derivatives(z, n_derivs)
            a, da = fs[0], None
            if dz is not None:
                da = np.empty((n_chan - 1, n, m), dtype=z.dtype)
                np.multiply(fs[1], dz[:3], out=da[:3])
                if order == 2:
                    np.multiply(fs[2], dz[:2] * dz[:2], out=da[3:])
                    if k > 0:
                        da[3:] += fs[1] * dz[3:]
        else:
            a = z
            da = None if dz is None else np.broadcast_to(dz, (n_chan - 1, n, m))
        if keep:
            cache.append(_Layer(h, dh if k > 0 else None, dz, fs))
        h, dh = a, da
    stack = h[None] if dh is None else np.concatenate([h[None], dh], axis=0)
    if not np.isfinite(stack).all():
        raise NumericOverflowError(len(net.weights) - 1, "non-finite network output")
    return stack, cache


def _act_backward(g0, gd, layer: _Layer, order: int):
    """Pull output-jet adjoints back through an element-wise activation."""
    fs, dz = layer.fs, layer.dz
    gz = g0 * fs[1]
    if gd is None:
        return gz, None
    first = np.einsum("cnm,cnm->nm", gd[:3], np.broadcast_to(dz[:3], gd[:3].shape))
    first *= fs[2]
    gz += first
    gdz = gd * fs[1]
    if order == 2:
        f2dz = fs[2] * dz[:2]
        sq = np.einsum("cnm,cnm->nm", gd[3:], np.broadcast_to(dz[:2] * dz[:2], gd[3:].shape))
        gz += fs[3] * sq
        if layer.dh is not None:
            lin = np.einsum("cnm,cnm->nm", gd[3:], dz[3:])
            gz += fs[2] * lin
        gdz[:2] += 2.0 * gd[3:] * f2dz
    return gz, gdz


def _backprop(net: Mlp, cache: list[_Layer], g: np.ndarray, order: int) -> list[np.ndarray]:
    """Reverse sweep; ``g`` is d loss / d output stack, shape (C, N, 3)."""
    grads: list[np.ndarray] = [None] * (2 * len(net.weights))
    g0 = g[0]
    gd = g[1:] if g.shape[0] > 1 else None
    for k in range(len(net.weights) - 1, -1, -1):
        layer = cache[k]
        w = net.weights[k]
        if layer.fs is not None:
            gz, gdz = _act_backward(g0, gd, layer, order)
        else:
            gz, gdz = g0, gd
        m, d = w.shape
        gw = gz.T @ layer.h
        if gdz is not None:
            if layer.dh is None:
                gw[:, :d] += gdz[:d].sum(axis=1).T
            else:
                gw += gdz.reshape(-1, m).T @ layer.dh.reshape(-1, d)
        grads[2 * k] = gw
        grads[2 * k + 1] = gz.sum(axis=0)
        if k > 0:
            g0 = gz @ w
            if gdz is not None:
                gd = (gdz.reshape(-1, m) @ w).reshape(gdz.shape[0], gdz.shape[1], d)
    return grads


def jet_eval(net: Mlp, points, order: int = 2) -> OutputJet:
    """Values and exact input derivatives of the network at ``points``."""
    pts = as_points(net, points)
    stack, _ = _propagate(net, pts, order, keep=False)
    return OutputJet(stack)


@dataclass
class FdReport:
    max_error: float
    worst: str
    errors: dict[str, float]


def _scaled_error(a, b, floor):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def fd_check(net: Mlp, point, step: float = 1e-5, floor: float = 1e-2) -> FdReport:
    """Compare jet_eval against central finite differences at one point.

    First derivatives are differenced from values; second derivatives from
    the jet's first derivatives. Errors are relative, with ``floor`` as the
    magnitude below which they become absolute errors scaled by 1/floor.
    """
    if not 0.0 < step <= 1e-2:
        raise ContractViolation(f"step must lie in (0, 1e-2], got {step}")
    pts = as_points(net, point)
    jet = jet_eval(net, pts).stack
    errors = {}
    names = "xyt"
    for i in range(pts.shape[1]):
        shift = np.zeros_like(pts)
        shift[:, i] = step
        plus = jet_eval(net, pts + shift).stack
        minus = jet_eval(net, pts - shift).stack
        fd1 = (plus[0] - minus[0]) / (2 * step)
        errors[f"d/d{names[i]}"] = _scaled_error(jet[1 + i], fd1, floor)
        if i < 2:
            fd2 = (plus[1 + i] - minus[1 + i]) / (2 * step)
            errors[f"d2/d{names[i]}2"] = _scaled_error(jet[4 + i], fd2, floor)
    worst = max(errors, key=errors.get)
    return FdReport(errors[worst], worst, errors)


# -- losses -----------------------------------------------------------------


def _role_batch(item):
    if isinstance(item, np.ndarray):
        return item, None
    points, values = item
    return points, values


def evaluate_loss(
    net: Mlp,
    batch: Mapping,
    problem: Problem,
    weights: Mapping[str, float] | None = None,
    with_grad: bool = True,
) -> tuple[LossBreakdown, list[np.ndarray] | None]:
    """Aggregate loss over a batch and, optionally, its exact θ-gradient.

    ``batch`` maps role names to point arrays or ``(points, values)`` pairs.
    Roles needing the same derivative order share one forward pass.
    """
    roles = [r for r in sorted(batch) if len(_role_batch(batch[r])[0])]
    if not roles:
        raise ContractViolation("empty batch")
    by_order: dict[int, list[str]] = {}
    for role in roles:
        by_order.setdefault(role_order(role, problem), []).append(role)

    passes = []  # (order, cache, stack, [(role, slice, terms)])
    groups: dict[str, list[np.ndarray]] = {}
    for order in sorted(by_order, reverse=True):
        members = by_order[order]
        arrays = [as_points(net, _role_batch(batch[r])[0]) for r in members]
        stack, cache = _propagate(net, np.concatenate(arrays), order, keep=with_grad)
        offset, entries = 0, []
        for role, pts in zip(members, arrays):
            sl = slice(offset, offset + len(pts))
            offset += len(pts)
            values = _role_batch(batch[role])[1]
            terms = role_terms(role, problem, stack[:, sl], pts, values)
            for term in terms:
                bad = ~np.isfinite(term.residual)
                if bad.any():
                    idx = int(np.argmax(bad))
                    raise NumericError(
                        f"non-finite {term.name} residual for role {role!r} at point {pts[idx].tolist()}"
                    )
                groups.setdefault(term.name, []).append(term.residual)
            entries.append((sl, terms))
        passes.append((order, cache, stack, entries))

    breakdown = aggregate_loss(groups, weights)
    if not with_grad:
        return breakdown, None

    grads = None
    for order, cache, stack, entries in passes:
        g = np.zeros_like(stack)
        for sl, terms in entries:
            for term in terms:
                scale = 2.0 * breakdown.weights[term.name] / breakdown.counts[term.name]
                seed = scale * term.residual
                for chan, comp, coef in term.partials:
                    g[chan, sl, comp] += seed * coef
        part = _backprop(net, cache, g, order)
        grads = part if grads is None else [a + b for a, b in zip(grads, part)]
    return breakdown, grads


def loss_gradient(net: Mlp, batch: Mapping, problem: Problem, weights=None):
    """Scalar aggregated loss and its gradient w.r.t. ``net.params``."""
    breakdown, grads = evaluate_loss(net, batch, problem, weights, with_grad=True)
    return breakdown.total, grads
