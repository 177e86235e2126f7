"""Synthetic wake-like snapshot series with known spectral content.

The field is a steady mean plus travelling waves at a base Strouhal number
and its harmonics. Harmonic h has amplitude ``amplitude * exp(-decay*(h-1))``
and the same transverse profile, so exact DMD must return eigenvalues
``exp(+-2 pi i h St dt)`` and strengths that fall off by ``exp(-decay)`` per
harmonic. It stands in for solver output when exercising the DMD and
data-driven pipelines.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .diagnostics import FieldSnapshot, Grid
from .errors import ContractViolation


@dataclass(frozen=True)
class LimitCycle:
    strouhal: float = 0.2
    harmonics: int = 3
    amplitude: float = 0.3
    decay: float = 1.0
    wavelength: float = 5.0
    width: float = 1.5
    diameter: float = 1.0
    speed: float = 1.0

    def __post_init__(self):
        if self.harmonics < 1 or self.strouhal <= 0 or self.width <= 0 or self.wavelength <= 0:
            raise ContractViolation("limit cycle needs harmonics >= 1 and positive scales")

    def harmonic_amplitude(self, h: int) -> float:
        return self.amplitude * float(np.exp(-self.decay * (h - 1)))

    def frequency(self, h: int) -> float:
        return h * self.strouhal * self.speed / self.diameter

    def fields(self, points: np.ndarray, t: float):
        x, y = points[:, 0], points[:, 1]
        profile = np.exp(-(y / self.width) ** 2)
        u = self.speed * (1.0 - 0.5 * profile)
        v = np.zeros_like(x)
        p = -0.25 * profile
        for h in range(1, self.harmonics + 1):
            phase = 2.0 * np.pi * (h * x / self.wavelength - self.frequency(h) * t)
            a = self.harmonic_amplitude(h)
            u = u + a * profile * np.cos(phase)
            v = v + a * profile * np.sin(phase)
            p = p + 0.5 * a * profile * np.cos(phase)
        return u, v, p

    def snapshot(self, grid: Grid, t: float) -> FieldSnapshot:
        u, v, p = self.fields(grid.points(), t)
        return FieldSnapshot(float(t), grid, u, v, p)

    def series(self, grid: Grid, times: Sequence[float]) -> list[FieldSnapshot]:
        return [self.snapshot(grid, t) for t in times]


def uniform_times(t0: float, dt: float, count: int) -> list[float]:
    """``count`` times ``t0 + k dt`` (computed by multiplication, not accumulation)."""
    if count < 1 or dt <= 0:
        raise ContractViolation("need count >= 1 and dt > 0")
    return [t0 + k * dt for k in range(count)]
