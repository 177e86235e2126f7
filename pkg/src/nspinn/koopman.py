"""Exact dynamic mode decomposition of uniformly spaced snapshot series."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .diagnostics import FIELDS, FieldSnapshot, Grid, read_snapshot, write_snapshot
from .errors import ContractViolation, NumericError
from .network import atomic_write_text

DEFAULT_MASK = ("u", "v")
CLASSES = ("neutral", "damped", "growing")
MODE_TABLE_HEADER = "index,re_lambda,im_lambda,growth_rate,frequency,strouhal,strength,class"

SPACING_TOL = 1e-9
RANK_RTOL = 1e-10  # singular values below this fraction of the largest are noise


@dataclass(frozen=True)
class SnapshotSeries:
    snapshots: tuple[FieldSnapshot, ...]
    dt: float

    def __post_init__(self):
        snaps = self.snapshots
        if len(snaps) < 2:
            raise ContractViolation("a series needs at least 2 snapshots")
        if self.dt <= 0:
            raise ContractViolation("dt must be positive")
        grid = snaps[0].grid
        for k in range(1, len(snaps)):
            if snaps[k].grid != grid:
                raise ContractViolation(f"snapshot {k} grid differs from snapshot 0")
            if abs(snaps[k].t - snaps[k - 1].t - self.dt) >= SPACING_TOL:
                raise ContractViolation(f"snapshot {k} breaks the uniform spacing dt={self.dt}")

    @classmethod
    def from_snapshots(cls, snapshots: Sequence[FieldSnapshot], dt: float | None = None):
        snaps = tuple(sorted(snapshots, key=lambda s: s.t))
        if dt is None:
            if len(snaps) < 2:
                raise ContractViolation("a series needs at least 2 snapshots")
            dt = (snaps[-1].t - snaps[0].t) / (len(snaps) - 1)
        return cls(snaps, float(dt))

    @classmethod
    def read_dir(cls, directory, dt: float | None = None) -> "SnapshotSeries":
        paths = sorted(Path(directory).glob("*.csv"))
        if not paths:
            raise ContractViolation(f"no snapshot files in {directory}")
        return cls.from_snapshots([read_snapshot(p) for p in paths], dt)

    @property
    def grid(self) -> Grid:
        return self.snapshots[0].grid

    def __len__(self):
        return len(self.snapshots)


def _check_mask(mask: Sequence[str]) -> tuple[str, ...]:
    mask = tuple(mask)
    if not mask or any(m not in FIELDS for m in mask) or len(set(mask)) != len(mask):
        raise ContractViolation(f"mask must be distinct names from {FIELDS}, got {mask}")
    return mask


def state_vector(snap: FieldSnapshot, mask: Sequence[str] = DEFAULT_MASK) -> np.ndarray:
    return np.concatenate([snap.field(name) for name in _check_mask(mask)])


def build_state_matrix(series: SnapshotSeries, mask: Sequence[str] = DEFAULT_MASK):
    """Snapshot matrices X (columns 0..m-2) and the one-step-shifted Y (1..m-1)."""
    grid = series.grid
    for k, s in enumerate(series.snapshots):
        if s.grid != grid:
            raise ContractViolation(f"snapshot {k} grid differs from snapshot 0")
    full = np.column_stack([state_vector(s, mask) for s in series.snapshots])
    return full[:, :-1], full[:, 1:]


@dataclass(frozen=True, eq=False)
class DmdMode:
    eigenvalue: complex
    growth_rate: float
    frequency: float
    strouhal: float
    strength: float
    amplitude: complex
    field: np.ndarray  # complex, same layout as the state vectors

    @property
    def radius(self) -> float:
        return abs(self.eigenvalue)


def dmd(X, Y, dt: float, energy_cutoff: float = 1.0, diameter: float = 1.0,
        speed: float = 1.0) -> list[DmdMode]:
    """Exact DMD; modes are returned sorted by strength, strongest first.

    The rank is the smallest r whose leading singular values hold at least
    ``energy_cutoff`` of the total squared energy, after discarding values
    below 1e-10 of the largest.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != Y.shape or X.ndim != 2:
        raise ContractViolation(f"X {X.shape} and Y {Y.shape} must be congruent matrices")
    if not 0.0 < energy_cutoff <= 1.0:
        raise ContractViolation("energy_cutoff must lie in (0, 1]")
    if dt <= 0:
        raise ContractViolation("dt must be positive")
    try:
        U, s, Vh = np.linalg.svd(X, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD did not converge: {exc}") from exc
    if s.size == 0 or s[0] == 0.0:
        raise NumericError("rank 0 after truncation")
    rank = int(np.sum(s > RANK_RTOL * s[0]))
    if energy_cutoff < 1.0:
        energy = np.cumsum(s[:rank] ** 2) / np.sum(s[:rank] ** 2)
        rank = min(rank, int(np.searchsorted(energy, energy_cutoff)) + 1)
    U, s, V = U[:, :rank], s[:rank], Vh[:rank].conj().T

    YVS = Y @ V / s
    atilde = U.conj().T @ YVS
    try:
        lam, W = np.linalg.eig(atilde)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolve did not converge: {exc}") from exc
    if not np.isfinite(lam).all():
        raise NumericError("eigensolve returned non-finite eigenvalues")

    tiny = np.abs(lam) <= 1e-14 * max(1.0, float(np.max(np.abs(lam))))
    phi = np.where(tiny, U @ W, (YVS @ W) / np.where(tiny, 1.0, lam))
    b = np.linalg.lstsq(phi, X[:, 0], rcond=None)[0]
    raw = np.abs(b) * np.linalg.norm(phi, axis=0)
    norm = np.linalg.norm(raw)
    strength = raw / norm if norm > 0 else raw

    modes = []
    for j in range(rank):
        lj = complex(lam[j])
        radius = abs(lj)
        growth = math.log(radius) / dt if radius > 0 else -math.inf
        freq = math.atan2(lj.imag, lj.real) / (2.0 * math.pi * dt)
        modes.append(DmdMode(lj, growth, freq, freq * diameter / speed, float(strength[j]),
                             complex(b[j]), phi[:, j]))
    # strongest first; conjugate partners ordered positive frequency first
    modes.sort(key=lambda m: (-round(m.strength, 12), -m.frequency))
    return modes


def reconstruct(modes: Sequence[DmdMode], k: int) -> np.ndarray:
    """Sum of b_j phi_j lambda_j^k: the model's prediction of snapshot k."""
    out = sum(m.amplitude * m.field * m.eigenvalue ** k for m in modes)
    return np.real_if_close(np.asarray(out))


# -- classification ---------------------------------------------------------


def mode_class(mode: DmdMode, radius_tol: float) -> str:
    r = mode.radius
    if abs(r - 1.0) <= radius_tol:
        return "neutral"
    return "damped" if r < 1.0 else "growing"


def classify_modes(modes: Sequence[DmdMode], radius_tol: float) -> dict[str, list[DmdMode]]:
    """Split modes by eigenvalue radius; each class sorted by strength, descending."""
    if radius_tol <= 0:
        raise ContractViolation("radius_tol must be positive")
    out = {c: [] for c in CLASSES}
    for m in modes:
        out[mode_class(m, radius_tol)].append(m)
    for c in CLASSES:
        out[c].sort(key=lambda m: (-round(m.strength, 12), -m.frequency))
    return out


def mode_table(modes: Sequence[DmdMode], radius_tol: float) -> str:
    if radius_tol <= 0:
        raise ContractViolation("radius_tol must be positive")
    lines = [MODE_TABLE_HEADER]
    for i, m in enumerate(modes):
        cells = [m.eigenvalue.real, m.eigenvalue.imag, m.growth_rate, m.frequency,
                 m.strouhal, m.strength]
        lines.append(",".join([str(i), *(repr(float(c)) for c in cells), mode_class(m, radius_tol)]))
    return "\n".join(lines) + "\n"


def write_mode_table(modes, radius_tol: float, path):
    atomic_write_text(path, mode_table(modes, radius_tol))


# -- mode fields ------------------------------------------------------------


def mode_snapshots(mode: DmdMode, grid: Grid, mask: Sequence[str] = DEFAULT_MASK):
    """Real and imaginary parts of a mode as snapshots; unmasked fields are 0."""
    mask = _check_mask(mask)
    n = grid.size
    if mode.field.size != n * len(mask):
        raise ContractViolation(f"mode has {mode.field.size} entries, mask x grid needs {n * len(mask)}")
    parts = {}
    for part, fn in (("re", np.real), ("im", np.imag)):
        arrays = {name: np.zeros(n) for name in FIELDS}
        for i, name in enumerate(mask):
            arrays[name] = np.array(fn(mode.field[i * n:(i + 1) * n]), dtype=float)
        parts[part] = FieldSnapshot(0.0, grid, arrays["u"], arrays["v"], arrays["p"])
    return parts["re"], parts["im"]


def export_mode(mode: DmdMode, grid: Grid, path, mask: Sequence[str] = DEFAULT_MASK):
    """Write ``<path>_re.csv`` and ``<path>_im.csv``; returns the two paths."""
    mask = _check_mask(mask)
    base = Path(path)
    written = []
    for part, snap in zip(("re", "im"), mode_snapshots(mode, grid, mask)):
        tags = [f"strouhal={mode.strouhal!r} growth_rate={mode.growth_rate!r} "
                f"strength={mode.strength!r} part={part} mask={'+'.join(mask)}"]
        target = base.with_name(f"{base.name}_{part}.csv")
        write_snapshot(snap, target, tags)
        written.append(target)
    return written


def read_mode(path, mask: Sequence[str] = DEFAULT_MASK) -> np.ndarray:
    """Complex mode vector from the pair written by :func:`export_mode`."""
    base = Path(path)
    re = read_snapshot(base.with_name(f"{base.name}_re.csv"))
    im = read_snapshot(base.with_name(f"{base.name}_im.csv"))
    return state_vector(re, mask) + 1j * state_vector(im, mask)
