"""Shared builders for tests: random networks and hand-written jets."""

import numpy as np

from nspinn.jets import OutputJet
from nspinn.network import Mlp


def random_net(rng, widths, activation="silu", unsteady=True, scale=1.0, precision=64):
    """Net with Gaussian weights and non-zero biases (new_mlp zeroes biases)."""
    sizes = [3 if unsteady else 2, *widths, 3]
    ws, bs = [], []
    for fi, fo in zip(sizes[:-1], sizes[1:]):
        ws.append(scale * rng.normal(size=(fo, fi)) / np.sqrt(fi))
        bs.append(0.3 * rng.normal(size=fo))
    return Mlp(tuple(ws), tuple(bs), activation=activation, precision=precision)


def linear_net(unsteady=True):
    """One identity hidden layer; output (2x, 3y, 5t)."""
    d = 3 if unsteady else 2
    w0 = np.eye(d)
    w1 = np.zeros((3, d))
    w1[0, 0], w1[1, 1] = 2.0, 3.0
    if unsteady:
        w1[2, 2] = 5.0
    return Mlp((w0, w1), (np.zeros(d), np.zeros(3)), activation="identity")


def zero_net(width=4, unsteady=True, activation="silu"):
    d = 3 if unsteady else 2
    return Mlp((np.zeros((width, d)), np.zeros((3, width))), (np.zeros(width), np.zeros(3)),
               activation=activation)


def field_jet(n, u=0.0, v=0.0, p=0.0, du=(0, 0, 0), dv=(0, 0, 0), dp=(0, 0, 0),
              d2u=(0, 0), d2v=(0, 0)):
    """Jet of n identical points with the given constant entries."""
    rep = lambda a, k: np.tile(np.asarray(a, dtype=float), (n, 1)) if k else np.full(n, float(a))
    return OutputJet.from_fields(rep(u, 0), rep(v, 0), rep(p, 0), rep(du, 1), rep(dv, 1),
                                 rep(dp, 1), rep(d2u, 1), rep(d2v, 1))


def rel_err(a, b, floor):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def full_problem(nu=0.03, steady=False):
    """Problem exercising every residual kind, with its matching batch builder."""
    from nspinn.physics import ConditionSpec, FluidProps, Problem

    conds = {
        "inlet": ConditionSpec("dirichlet", u=lambda p: np.sin(p[:, 1]), v=0.25),
        "bottom": ConditionSpec("neumann", u=0.1, v=lambda p: p[:, 0], normal=(0.0, -1.0)),
        "outlet": ConditionSpec("convective", normal=(0.6, 0.8), c=1.3),
        "initial": ConditionSpec("initial", u=0.5, v=lambda p: p[:, 0] * p[:, 1], p=-0.2),
        "data": ConditionSpec("data", window=(0.0, 1.0)),
        "pin": ConditionSpec("pin", p=0.3),
    }
    if steady:
        for role in ("outlet", "initial", "data"):
            conds.pop(role)
    return Problem(FluidProps(nu), steady, conds)


def full_batch(rng, problem, n=4):
    d = 2 if problem.steady else 3
    batch = {"interior": rng.uniform(-1, 1, size=(n, d))}
    for role in problem.conditions:
        pts = rng.uniform(-1, 1, size=(n, d))
        if role == "data":
            pts[:, 2] = rng.uniform(0, 1, size=n)
            batch[role] = (pts, rng.normal(size=(n, 3)))
        else:
            batch[role] = pts
    return batch


def fd_gradient(f, params, h=1e-4):
    """Fourth-order central differences of scalar f(params) for every entry."""
    out = []
    for k, p in enumerate(params):
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            vals = []
            for s in (h, -h, 2 * h, -2 * h):
                q = [a.copy() for a in params]
                q[k][idx] += s
                vals.append(f(q))
            g[idx] = (8.0 * (vals[0] - vals[1]) - (vals[2] - vals[3])) / (12.0 * h)
        out.append(g)
    return out


def fd_jet(net, pts, h=1e-3):
    """Jet stack (6, N, 3) by fourth-order central differences.

    First derivatives difference forward(); second derivatives difference
    the first-derivative channels, which are themselves checked against
    forward() differences.
    """
    from nspinn.autodiff import jet_eval
    from nspinn.network import forward

    pts = np.asarray(pts, dtype=float)
    diff = lambda f, e: (8.0 * (f(pts + e) - f(pts - e)) - (f(pts + 2 * e) - f(pts - 2 * e))) / (12.0 * h)
    out = [forward(net, pts)]
    second = []
    for i in range(3):
        if i >= pts.shape[1]:
            out.append(np.zeros_like(out[0]))
            continue
        e = np.zeros(pts.shape[1])
        e[i] = h
        out.append(diff(lambda q: forward(net, q), e))
        if i < 2:
            second.append(diff(lambda q: jet_eval(net, q, 1).stack[1 + i], e))
    return np.stack(out + second)
