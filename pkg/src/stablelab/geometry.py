"""Bounded open sets: exact distance to the complement, corkscrew balls and
Stolz approach regions.

Three shapes are supported. Every shape supplies a closed-form (or exact
polygonal) distance function and a deterministic boundary sampler; there is
no general mesh.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BadGeometry, NoCorkscrew

TOL_BDRY = 1e-12
GRID_START = 32
GRID_LEVELS = 3


@dataclass(frozen=True)
class FatCharacteristics:
    kappa: float
    R: float

    def __post_init__(self):
        if not 0.0 < self.kappa <= 0.5:
            raise BadGeometry(f"kappa must lie in (0, 1/2], got {self.kappa}")
        if not self.R > 0:
            raise BadGeometry(f"R must be positive, got {self.R}")


class Shape:
    """Interface every shape implements. Points are arrays of shape (..., n)."""

    dim: int = 2

    def dist(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def boundary_points(self, count: int) -> np.ndarray:
        raise NotImplementedError

    def boundary_distance(self, z: np.ndarray) -> float:
        """Distance from ``z`` to the boundary set (used for on-boundary checks)."""
        raise NotImplementedError

    @property
    def circumradius(self) -> float:
        raise NotImplementedError

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError


@dataclass(frozen=True)
class Ball(Shape):
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise BadGeometry("ball radius must be positive")
        if len(self.center) < 2:
            raise BadGeometry("dimension must be at least 2")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    def dist(self, x):
        x = np.asarray(x, dtype=float)
        return np.maximum(self.radius - np.linalg.norm(x - self.c, axis=-1), 0.0)

    def boundary_distance(self, z):
        return abs(float(np.linalg.norm(np.asarray(z, float) - self.c)) - self.radius)

    def boundary_points(self, count):
        if self.dim == 2:
            t = 2 * np.pi * (np.arange(count) + 0.5) / count
            u = np.stack([np.cos(t), np.sin(t)], axis=-1)
        else:
            # Fibonacci sphere, deterministic
            i = np.arange(count) + 0.5
            phi = np.arccos(1 - 2 * i / count)
            theta = np.pi * (1 + 5 ** 0.5) * i
            u = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=-1)
            if self.dim > 3:
                u = np.concatenate([u, np.zeros((count, self.dim - 3))], axis=-1)
        return self.c + self.radius * u

    @property
    def circumradius(self):
        return self.radius

    @property
    def bbox(self):
        return self.c - self.radius, self.c + self.radius


@dataclass(frozen=True)
class SlittedRectangle(Shape):
    """(-1,1) x (0,1) with the horizontal slits y = 2^-k, k = 1..k_max, removed.

    The slits cut the rectangle into disjoint horizontal strips; the strip
    below y = 2^-k_max is left whole.
    """

    k_max: int = 8

    def __post_init__(self):
        if self.k_max < 3:
            raise BadGeometry("SlittedRectangle needs k_max >= 3")

    @property
    def levels(self) -> np.ndarray:
        slits = 2.0 ** -np.arange(self.k_max, 0, -1)
        return np.concatenate([[0.0], slits, [1.0]])

    def dist(self, x):
        x = np.asarray(x, dtype=float)
        px, py = x[..., 0], x[..., 1]
        lv = self.levels
        idx = np.clip(np.searchsorted(lv, py, side="right"), 1, len(lv) - 1)
        lower, upper = lv[idx - 1], lv[idx]
        d = np.minimum(np.minimum(px + 1.0, 1.0 - px), np.minimum(py - lower, upper - py))
        return np.maximum(d, 0.0)

    def boundary_distance(self, z):
        zx, zy = float(z[0]), float(z[1])
        if not (-1.0 <= zx <= 1.0 and 0.0 <= zy <= 1.0):
            dx = max(-1.0 - zx, 0.0, zx - 1.0)
            dy = max(-zy, 0.0, zy - 1.0)
            return math.hypot(dx, dy)
        d = min(zx + 1.0, 1.0 - zx)
        return min(d, float(np.min(np.abs(self.levels - zy))))

    def segments(self) -> list[tuple[np.ndarray, np.ndarray]]:
        corners = [(-1, 0), (1, 0), (1, 1), (-1, 1)]
        segs = [(np.array(corners[i], float), np.array(corners[(i + 1) % 4], float)) for i in range(4)]
        for y in self.levels[1:-1]:
            segs.append((np.array([-1.0, y]), np.array([1.0, y])))
        return segs

    def boundary_points(self, count):
        return _sample_segments(self.segments(), count)

    @property
    def circumradius(self):
        return math.hypot(1.0, 0.5)

    @property
    def bbox(self):
        return np.array([-1.0, 0.0]), np.array([1.0, 1.0])


@dataclass(frozen=True)
class PolygonUnion(Shape):
    """Union of convex polygons in the plane (vertex lists)."""

    polygons: tuple

    def __post_init__(self):
        if not self.polygons:
            raise BadGeometry("PolygonUnion needs at least one polygon")

    @property
    def _geom(self):
        import shapely
        from shapely.ops import unary_union

        cached = self.__dict__.get("_cached_geom")
        if cached is None:
            union = unary_union([shapely.Polygon(p) for p in self.polygons])
            shapely.prepare(union)
            cached = (union, union.boundary)
            object.__setattr__(self, "_cached_geom", cached)
        return cached

    def dist(self, x):
        import shapely

        union, boundary = self._geom
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 2)
        pts = shapely.points(flat)
        inside = shapely.contains(union, pts)
        d = np.where(inside, shapely.distance(boundary, pts), 0.0)
        return d.reshape(x.shape[:-1]) if x.ndim > 1 else float(d[0])

    def boundary_distance(self, z):
        import shapely

        return float(shapely.distance(self._geom[1], shapely.Point(z)))

    def boundary_points(self, count):
        import shapely

        boundary = self._geom[1]
        s = (np.arange(count) + 0.5) / count
        pts = shapely.line_interpolate_point(boundary, s, normalized=True)
        return shapely.get_coordinates(pts)

    @property
    def circumradius(self):
        lo, hi = self.bbox
        return 0.5 * float(np.linalg.norm(hi - lo))

    @property
    def bbox(self):
        b = self._geom[0].bounds
        return np.array(b[:2]), np.array(b[2:])


def _sample_segments(segs, count):
    lengths = np.array([np.linalg.norm(b - a) for a, b in segs])
    total = lengths.sum()
    s = (np.arange(count) + 0.5) / count * total
    edges = np.concatenate([[0.0], np.cumsum(lengths)])
    out = np.empty((count, 2))
    for i, si in enumerate(s):
        j = min(np.searchsorted(edges, si, side="right") - 1, len(segs) - 1)
        a, b = segs[j]
        out[i] = a + (si - edges[j]) / lengths[j] * (b - a)
    return out


@dataclass(frozen=True)
class Domain:
    shape: Shape
    x0: tuple
    fat: FatCharacteristics = field(default_factory=lambda: FatCharacteristics(0.5, 1.0))

    def __post_init__(self):
        if not float(self.shape.dist(np.asarray(self.x0, float))) > 0:
            raise BadGeometry(f"anchor x0={self.x0} is not strictly inside the domain")

    @property
    def dim(self) -> int:
        return self.shape.dim

    @property
    def diam(self) -> float:
        return 2.0 * self.shape.circumradius

    @property
    def tol_bdry(self) -> float:
        return TOL_BDRY * self.diam

    def dist(self, x):
        return self.shape.dist(x)

    def contains(self, x):
        return self.shape.dist(x) > 0

    def on_boundary(self, z) -> bool:
        return self.shape.boundary_distance(z) <= self.tol_bdry

    def boundary_points(self, count: int) -> np.ndarray:
        return self.shape.boundary_points(count)


def unit_disk(kappa: float = 0.5, R: float = 1.0) -> Domain:
    return Domain(Ball((0.0, 0.0), 1.0), (0.0, 0.0), FatCharacteristics(kappa, R))


def slitted_rectangle(k_max: int = 8, kappa: float = 0.125, R: float = 2.0 ** -6,
                      x0=(0.0, 0.75)) -> Domain:
    return Domain(SlittedRectangle(k_max), x0, FatCharacteristics(kappa, R))


def dist_to_complement(domain: Domain, x) -> float | np.ndarray:
    """Exact distance from ``x`` to the complement; 0 outside the domain."""
    d = domain.dist(np.asarray(x, dtype=float))
    return float(d) if np.ndim(d) == 0 else d


def _clearance(domain: Domain, pts: np.ndarray, z: np.ndarray, r: float) -> np.ndarray:
    return np.minimum(domain.dist(pts), r - np.linalg.norm(pts - z, axis=-1))


def corkscrew_point(domain: Domain, z, r: float) -> np.ndarray:
    """Centre ``a`` of a ball B(a, kappa*r) inside B(z, r) and the domain."""
    z = np.asarray(z, dtype=float)
    kappa, R = domain.fat.kappa, domain.fat.R
    if not 0 < r < R:
        raise BadGeometry(f"corkscrew radius {r} outside (0, R={R})")
    if not domain.on_boundary(z):
        raise BadGeometry(f"{z} is not on the boundary")
    shape = domain.shape
    if isinstance(shape, Ball):
        direction = z - shape.c
        norm = np.linalg.norm(direction)
        return z - 0.5 * r * direction / norm
    if domain.dim != 2:
        raise NoCorkscrew("grid search implemented for planar shapes only")

    centre, half = z.copy(), r
    best, best_val = None, -np.inf
    for _ in range(GRID_LEVELS + 1):
        ticks = (np.arange(GRID_START) + 0.5) / GRID_START * 2 - 1
        gx, gy = np.meshgrid(centre[0] + half * ticks, centre[1] + half * ticks, indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        vals = _clearance(domain, pts, z, r)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best, best_val = pts[i], float(vals[i])
        centre, half = best, 2 * half / GRID_START
    if best_val < kappa * r * (1 - 1e-12):
        raise NoCorkscrew(f"no ball of radius {kappa * r:.3g} found in B({z}, {r:.3g}); "
                          f"best clearance {best_val:.3g}")
    return best


def corkscrew_sequence(domain: Domain, z, count: int) -> list[np.ndarray]:
    if count < 1:
        raise ValueError("count must be >= 1")
    R = domain.fat.R
    return [corkscrew_point(domain, z, R / 2 ** k) for k in range(1, count + 1)]


@dataclass(frozen=True)
class StolzParams:
    domain: Domain
    z: tuple
    beta: float
    x0: tuple | None = None

    def __post_init__(self):
        kappa = self.domain.fat.kappa
        if not self.beta > (1 - kappa) / kappa:
            raise BadGeometry(f"beta={self.beta} must exceed (1-kappa)/kappa={(1 - kappa) / kappa}")

    @property
    def anchor(self) -> np.ndarray:
        return np.asarray(self.x0 if self.x0 is not None else self.domain.x0, dtype=float)


def stolz_contains(params: StolzParams, y) -> bool:
    dom = params.domain
    y = np.asarray(y, dtype=float)
    d = float(dom.dist(y))
    cap = min(float(dom.dist(params.anchor)) / 3.0, dom.fat.R)
    return bool(0 < d < cap and np.linalg.norm(y - np.asarray(params.z, float)) < params.beta * d)


@dataclass
class FatReport:
    n_checked: int
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures


def verify_kappa_fat(domain: Domain, boundary_samples: int, radii: Sequence[float]) -> FatReport:
    """Attempt a corkscrew for every (boundary sample, radius) pair."""
    failures = []
    n = 0
    for z in domain.boundary_points(boundary_samples):
        for r in radii:
            n += 1
            try:
                corkscrew_point(domain, z, r)
            except (NoCorkscrew, BadGeometry) as exc:
                failures.append((tuple(map(float, z)), float(r), str(exc)))
    return FatReport(n, failures)
