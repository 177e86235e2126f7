"""Adam with exponential/cyclical learning rates and the PINN training loop."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .autodiff import evaluate_loss
from .errors import ContractViolation, NumericError, TrainingDivergence
from .network import Checkpoint, Mlp, atomic_write_text, save_checkpoint
from .physics import TERM_NAMES, Problem
from .sampling import BatchStream, PointPool

log = logging.getLogger(__name__)


# -- learning-rate schedules --------------------------------------------------


class RootGamma(NamedTuple):
    """Decay rate ``factor ** (1 / period)``, kept symbolic.

    ``gamma ** i`` is evaluated as ``factor ** (i / period)``, so after exactly
    ``period`` iterations the rate has decayed by ``factor`` with no
    accumulated rounding.
    """

    factor: float
    period: float

    def __float__(self):
        return self.factor ** (1.0 / self.period)

    def power(self, i) -> float:
        return self.factor ** (i / self.period)


def _gamma_power(gamma, i) -> float:
    if isinstance(gamma, RootGamma):
        return gamma.power(i)
    return gamma ** i


def lr_exponential(i: int, gamma, eta0: float) -> float:
    if i < 0:
        raise ContractViolation("iteration must be >= 0")
    return eta0 * _gamma_power(gamma, i)


def lr_cyclical(i: int, eta_low: float, eta_high: float, n_c: int, gamma) -> float:
    """Triangular cycles of half-period ``n_c`` with an envelope decaying as gamma**i."""
    if i < 0:
        raise ContractViolation("iteration must be >= 0")
    tri = max(0.0, 1.0 - abs(i / n_c - 2 * math.floor(i / (2 * n_c)) - 1))
    return eta_low + (eta_high - eta_low) * tri * _gamma_power(gamma, i)


@dataclass(frozen=True)
class LrSchedule:
    kind: str = "cyclical"
    eta0: float = 1.5e-3
    eta_low: float = 1.5e-5
    eta_high: float = 1.5e-3
    n_c: int = 5000
    gamma: float | RootGamma = 0.999989

    def __post_init__(self):
        if self.kind not in ("exponential", "cyclical"):
            raise ContractViolation(f"unknown schedule kind {self.kind!r}")
        g = float(self.gamma)
        if not 0.0 < g <= 1.0:
            raise ContractViolation(f"gamma must lie in (0, 1], got {g}")
        if self.kind == "cyclical":
            if not (0 < self.eta_low <= self.eta_high) or self.n_c < 1:
                raise ContractViolation("cyclical schedule needs 0 < eta_low <= eta_high and n_c >= 1")
        elif self.eta0 <= 0:
            raise ContractViolation("eta0 must be positive")

    def __call__(self, i: int) -> float:
        if self.kind == "exponential":
            return lr_exponential(i, self.gamma, self.eta0)
        return lr_cyclical(i, self.eta_low, self.eta_high, self.n_c, self.gamma)


# -- Adam -------------------------------------------------------------------


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params: Sequence[np.ndarray], beta1=0.9, beta2=0.999, eps=1e-8):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                   0, beta1, beta2, eps)


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
              lr: float, iteration: int | None = None):
    """One bias-corrected Adam update; returns ``(new_state, new_params)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ContractViolation("params, grads and optimizer state are not congruent")
    for g in grads:
        if not np.isfinite(g).all():
            raise TrainingDivergence(state.step if iteration is None else iteration,
                                     "non-finite gradient")
    b1, b2 = state.beta1, state.beta2
    t = state.step + 1
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return AdamState(new_m, new_v, t, b1, b2, state.eps), new_p


# -- training loop ----------------------------------------------------------


@dataclass
class TrainConfig:
    iterations: int
    batch_sizes: Mapping[str, int]
    schedule: LrSchedule = field(default_factory=LrSchedule)
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weights: Mapping[str, float] | None = None
    log_every: int = 100
    checkpoint_every: int = 0
    record_elapsed: bool = False
    variant: str = "unsteady"


class HistoryRow(NamedTuple):
    iteration: int
    terms: list[float]
    total: float
    lr: float
    elapsed: float


HISTORY_HEADER = ",".join(["iter", *TERM_NAMES, "total", "lr", "elapsed_s"])


@dataclass
class LossHistory:
    rows: list[HistoryRow] = field(default_factory=list)

    def append(self, row: HistoryRow):
        if self.rows and row.iteration <= self.rows[-1].iteration:
            raise ContractViolation("history iterations must increase strictly")
        self.rows.append(row)

    def to_csv(self) -> str:
        lines = [HISTORY_HEADER]
        for r in self.rows:
            cells = [str(r.iteration), *(repr(float(x)) for x in r.terms),
                     repr(float(r.total)), repr(float(r.lr)), repr(float(r.elapsed))]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def write(self, path):
        atomic_write_text(path, self.to_csv())

    @classmethod
    def read(cls, path) -> "LossHistory":
        hist = cls()
        lines = Path(path).read_text().splitlines()
        if not lines or lines[0] != HISTORY_HEADER:
            raise ContractViolation(f"{path}: unexpected history header")
        for line in lines[1:]:
            cells = line.split(",")
            vals = [float(c) for c in cells[1:]]
            hist.append(HistoryRow(int(cells[0]), vals[:10], vals[10], vals[11], vals[12]))
        return hist

    @property
    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.rows])


def train(config: TrainConfig, problem: Problem, pool: PointPool, net: Mlp,
          out_dir=None, start_iteration: int = 0, history: LossHistory | None = None):
    """Run Adam on the aggregated PINN loss; returns ``(net, history)``.

    Batches, learning rates and checkpoints are indexed by the global
    iteration, so a run resumed at ``start_iteration`` continues the same
    numbering. On a blow-up the last finite parameters are checkpointed
    (when ``out_dir`` is given) and :class:`TrainingDivergence` is raised.
    """
    history = history if history is not None else LossHistory()
    if config.iterations == 0:
        return net, history
    out = Path(out_dir) if out_dir is not None else None
    stream = BatchStream(pool, config.batch_sizes, config.seed)
    state = AdamState.fresh(net.params, config.beta1, config.beta2, config.eps)
    t_start = time.perf_counter()
    end = start_iteration + config.iterations
    last_total = None

    def checkpoint(it, loss):
        if out is None:
            return None
        path = out / f"ckpt_{it}.json"
        save_checkpoint(Checkpoint(net, config.variant, it, loss), path)
        return path

    for i in range(start_iteration, end):
        batch = stream[i]
        try:
            breakdown, grads = evaluate_loss(net, batch, problem, config.weights)
            if not math.isfinite(breakdown.total):
                raise NumericError("non-finite total loss")
            lr = config.schedule(i)
            if i % config.log_every == 0 or i == end - 1:
                elapsed = time.perf_counter() - t_start if config.record_elapsed else 0.0
                history.append(HistoryRow(i, breakdown.row(), breakdown.total, lr, elapsed))
                log.info("iter %d loss %.4e lr %.3e", i, breakdown.total, lr)
            state, params = adam_step(state, net.params, grads, lr, iteration=i)
        except TrainingDivergence as exc:
            exc.checkpoint = checkpoint(i, last_total)
            raise
        except NumericError as exc:
            raise TrainingDivergence(i, str(exc), checkpoint(i, last_total)) from exc
        net = net.with_params(params)
        last_total = breakdown.total
        done = i + 1
        if config.checkpoint_every and done % config.checkpoint_every == 0 and done != end:
            checkpoint(done, last_total)
    checkpoint(end, last_total)
    return net, history
