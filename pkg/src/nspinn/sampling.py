"""Computational domains, collocation point pools and per-iteration batches."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Iterator, Mapping, NamedTuple

import numpy as np

from .errors import ContractViolation

SEGMENTS = ("inlet", "outlet", "bottom", "top", "cylinder", "initial")


@dataclass(frozen=True)
class Cylinder:
    cx: float
    cy: float
    r: float

    @property
    def diameter(self) -> float:
        return 2.0 * self.r


@dataclass(frozen=True)
class DomainSpec:
    """Rectangle [xmin, xmax] x [ymin, ymax] over [t0, t1], minus an optional hole.

    A degenerate time span (t1 == t0) denotes a steady problem whose points
    carry no time coordinate.
    """

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    t0: float = 0.0
    t1: float = 0.0
    hole: Cylinder | None = None

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ContractViolation("rectangle bounds must satisfy min < max")
        if self.t1 < self.t0:
            raise ContractViolation("time span must satisfy t0 <= t1")
        h = self.hole
        if h is not None:
            if h.r <= 0:
                raise ContractViolation("hole radius must be positive")
            if not (self.xmin < h.cx - h.r and h.cx + h.r < self.xmax
                    and self.ymin < h.cy - h.r and h.cy + h.r < self.ymax):
                raise ContractViolation("hole must lie strictly inside the rectangle")

    @property
    def steady(self) -> bool:
        return self.t1 == self.t0

    @property
    def dim(self) -> int:
        return 2 if self.steady else 3

    @property
    def area(self) -> float:
        a = (self.xmax - self.xmin) * (self.ymax - self.ymin)
        if self.hole is not None:
            a -= np.pi * self.hole.r ** 2
        return a

    def with_time(self, t0: float, t1: float) -> "DomainSpec":
        return DomainSpec(self.xmin, self.xmax, self.ymin, self.ymax, t0, t1, self.hole)

    def contains(self, points: np.ndarray) -> np.ndarray:
        x, y = points[:, 0], points[:, 1]
        inside = (x >= self.xmin) & (x <= self.xmax) & (y >= self.ymin) & (y <= self.ymax)
        if self.hole is not None:
            inside &= (x - self.hole.cx) ** 2 + (y - self.hole.cy) ** 2 >= self.hole.r ** 2
        return inside

    def normal(self, segment: str):
        """Outward unit normal of the fluid domain on ``segment``.

        Constant pairs for the rectangle sides; a callable of the points for
        the cylinder (pointing into the cylinder, away from the fluid).
        """
        fixed = {"inlet": (-1.0, 0.0), "outlet": (1.0, 0.0),
                 "bottom": (0.0, -1.0), "top": (0.0, 1.0)}
        if segment in fixed:
            return fixed[segment]
        if segment == "cylinder":
            hole = self._require_hole()

            def inward(points):
                return -np.stack([points[:, 0] - hole.cx, points[:, 1] - hole.cy], axis=1) / hole.r

            return inward
        raise ContractViolation(f"segment {segment!r} has no normal")

    def _require_hole(self) -> Cylinder:
        if self.hole is None:
            raise ContractViolation("domain has no cylinder")
        return self.hole


def role_seed(seed: int, role: str, *extra: int) -> np.random.Generator:
    """Independent, reproducible stream per (seed, role, extra...)."""
    return np.random.default_rng([seed, zlib.crc32(role.encode()), *extra])


def _times(domain: DomainSpec, rng, n):
    return rng.uniform(domain.t0, domain.t1, n)


def _spatial(domain: DomainSpec, rng, n):
    out = np.empty((0, 2))
    while len(out) < n:
        need = n - len(out)
        draw = max(16, int(need * 1.1) + 16)
        xy = np.column_stack([rng.uniform(domain.xmin, domain.xmax, draw),
                              rng.uniform(domain.ymin, domain.ymax, draw)])
        out = np.concatenate([out, xy[domain.contains(xy)]])
    return out[:n]


def sample_interior(domain: DomainSpec, n: int, seed: int) -> np.ndarray:
    """Uniform points over the rectangle (times the time span) minus the hole."""
    if n < 1:
        raise ContractViolation("n must be >= 1")
    rng = role_seed(seed, "interior")
    xy = _spatial(domain, rng, n)
    if domain.steady:
        return xy
    return np.column_stack([xy, _times(domain, rng, n)])


def sample_boundary(domain: DomainSpec, segment: str, n: int, seed: int) -> np.ndarray:
    """Uniform points on a named segment (times the time span).

    Cylinder points are parameterized by a uniform angle; ``initial`` points
    are interior locations at t = t0.
    """
    if n < 1:
        raise ContractViolation("n must be >= 1")
    rng = role_seed(seed, segment)
    if segment in ("inlet", "outlet"):
        x = np.full(n, domain.xmin if segment == "inlet" else domain.xmax)
        xy = np.column_stack([x, rng.uniform(domain.ymin, domain.ymax, n)])
    elif segment in ("bottom", "top"):
        y = np.full(n, domain.ymin if segment == "bottom" else domain.ymax)
        xy = np.column_stack([rng.uniform(domain.xmin, domain.xmax, n), y])
    elif segment == "cylinder":
        hole = domain._require_hole()
        theta = rng.uniform(0.0, 2.0 * np.pi, n)
        xy = np.column_stack([hole.cx + hole.r * np.cos(theta), hole.cy + hole.r * np.sin(theta)])
    elif segment == "initial":
        if domain.steady:
            raise ContractViolation("a steady domain has no initial slice")
        xy = _spatial(domain, rng, n)
        return np.column_stack([xy, np.full(n, domain.t0)])
    else:
        raise ContractViolation(f"unknown segment {segment!r}; expected one of {SEGMENTS}")
    if domain.steady:
        return xy
    return np.column_stack([xy, _times(domain, rng, n)])


def sample_pin(domain: DomainSpec, location, n: int, seed: int) -> np.ndarray:
    """Repeated copies of one spatial location, at random times if unsteady."""
    rng = role_seed(seed, "pin")
    xy = np.tile(np.asarray(location, dtype=float), (n, 1))
    if domain.steady:
        return xy
    return np.column_stack([xy, _times(domain, rng, n)])


class RoleBatch(NamedTuple):
    points: np.ndarray
    values: np.ndarray | None = None


@dataclass
class PointPool:
    roles: dict[str, RoleBatch] = field(default_factory=dict)
    seed: int = 0

    @property
    def sizes(self) -> dict[str, int]:
        return {r: len(b.points) for r, b in self.roles.items()}


def build_pool(domain: DomainSpec, sizes: Mapping[str, int], seed: int,
               pin_location=None, extra: Mapping[str, RoleBatch] | None = None) -> PointPool:
    """Sample every role's pool. ``extra`` supplies ready-made pools (data)."""
    roles: dict[str, RoleBatch] = {}
    for role in sorted(sizes):
        n = int(sizes[role])
        if role == "interior":
            pts = sample_interior(domain, n, seed)
        elif role == "pin":
            if pin_location is None:
                raise ContractViolation("pin role needs a pin location")
            pts = sample_pin(domain, pin_location, n, seed)
        elif role in SEGMENTS:
            pts = sample_boundary(domain, role, n, seed)
        else:
            continue
        roles[role] = RoleBatch(pts)
    for role, rb in (extra or {}).items():
        roles[role] = RoleBatch(np.asarray(rb.points, dtype=float),
                                None if rb.values is None else np.asarray(rb.values, dtype=float))
    return PointPool(roles, seed)


class BatchStream:
    """Epoch-shuffled batches: every pool entry is used once per epoch.

    Batch ``i`` for a role covers positions ``[i*B, (i+1)*B)`` of the infinite
    concatenation of per-epoch permutations, so any iteration can be
    regenerated directly (resumed runs) and the stream is reproducible.
    """

    def __init__(self, pool: PointPool, batch_sizes: Mapping[str, int], seed: int):
        self.pool = pool
        self.seed = seed
        self.batch_sizes = {}
        for role in sorted(batch_sizes):
            b = int(batch_sizes[role])
            if role not in pool.roles:
                raise ContractViolation(f"no pool for role {role!r}")
            if b < 1:
                raise ContractViolation(f"batch size for {role!r} must be >= 1")
            if b > len(pool.roles[role].points):
                raise ContractViolation(f"batch size for {role!r} exceeds its pool")
            self.batch_sizes[role] = b
        self._perm_cache: dict[tuple[str, int], np.ndarray] = {}

    def _perm(self, role: str, epoch: int) -> np.ndarray:
        key = (role, epoch)
        perm = self._perm_cache.get(key)
        if perm is None:
            for old in [k for k in self._perm_cache if k[0] == role and k[1] < epoch - 1]:
                del self._perm_cache[old]
            size = len(self.pool.roles[role].points)
            perm = role_seed(self.seed, role, 1, epoch).permutation(size)
            self._perm_cache[key] = perm
        return perm

    def indices(self, role: str, iteration: int) -> np.ndarray:
        b = self.batch_sizes[role]
        size = len(self.pool.roles[role].points)
        start = iteration * b
        epoch, off = divmod(start, size)
        first = self._perm(role, epoch)[off:off + b]
        if len(first) == b:
            return first
        return np.concatenate([first, self._perm(role, epoch + 1)[: b - len(first)]])

    def __getitem__(self, iteration: int) -> dict[str, RoleBatch]:
        out = {}
        for role in self.batch_sizes:
            idx = self.indices(role, iteration)
            rb = self.pool.roles[role]
            out[role] = RoleBatch(rb.points[idx], None if rb.values is None else rb.values[idx])
        return out


def batches(pool: PointPool, batch_sizes: Mapping[str, int], iterations: int,
            seed: int, start: int = 0) -> Iterator[dict[str, RoleBatch]]:
    stream = BatchStream(pool, batch_sizes, seed)
    for i in range(start, start + iterations):
        yield stream[i]
