"""Finite measures on the unit circle: a density against the normalized arc
measure plus finitely many atoms.

The density is the sum of a general callable and a piecewise-constant part
stored as arcs ``(lo, hi, value)``; the arcs are kept explicitly because their
Poisson integrals have a closed form."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2 * math.pi


def wrap(theta):
    return np.mod(theta, TWO_PI)


@dataclass(frozen=True)
class BoundaryMeasure:
    """``density(theta) >= 0`` against sigma_1 (total mass of sigma_1 is one).

    ``breakpoints`` lists angles where the density may jump; quadrature splits
    there. ``sup`` is an upper bound of the density, needed for exact
    rejection sampling of boundary points.
    """

    density: Callable | None = None
    breakpoints: tuple = ()
    sup: float = 0.0
    atoms: tuple = ()
    label: str = ""
    arcs: tuple = ()

    def __post_init__(self):
        for _, mass in self.atoms:
            if mass < 0:
                raise ValueError("atom masses must be non-negative")
        for lo, hi, v in self.arcs:
            if v < 0 or hi <= lo or hi - lo > TWO_PI:
                raise ValueError(f"bad arc ({lo}, {hi}, {v})")
        if self.has_density and not self.sup > 0:
            raise ValueError("a density needs a positive upper bound 'sup'")

    def U(self, theta):
        theta = wrap(np.asarray(theta, dtype=float))
        out = np.zeros_like(theta)
        if self.density is not None:
            out = out + np.asarray(self.density(theta), dtype=float)
        for lo, hi, v in self.arcs:
            out = out + v * (wrap(theta - lo) <= (hi - lo))
        return out

    def U_smooth(self, theta):
        """The callable part of the density only (zero if absent)."""
        theta = wrap(np.asarray(theta, dtype=float))
        if self.density is None:
            return np.zeros_like(theta)
        return np.asarray(self.density(theta), dtype=float) * np.ones_like(theta)

    @property
    def has_density(self) -> bool:
        return self.density is not None or bool(self.arcs)

    @property
    def atom_mass(self) -> float:
        return float(sum(m for _, m in self.atoms))

    def total_mass(self, n_nodes: int = 4096) -> float:
        mass = self.atom_mass + sum(v * (hi - lo) for lo, hi, v in self.arcs) / TWO_PI
        if self.density is not None:
            edges = np.sort(np.unique(np.concatenate([[0.0, TWO_PI], wrap(np.asarray(self.breakpoints, float))])))
            x, w = np.polynomial.legendre.leggauss(32)
            for a, b in zip(edges[:-1], edges[1:]):
                t = 0.5 * (b - a) * x + 0.5 * (a + b)
                mass += float(np.sum(0.5 * (b - a) * w * self.U_smooth(t))) / TWO_PI
        return mass

    def __add__(self, other: "BoundaryMeasure") -> "BoundaryMeasure":
        dens = _sum_densities(self.density, other.density)
        return BoundaryMeasure(dens, tuple(self.breakpoints) + tuple(other.breakpoints),
                               self.sup + other.sup, tuple(self.atoms) + tuple(other.atoms),
                               f"{self.label}+{other.label}", tuple(self.arcs) + tuple(other.arcs))

    def scaled(self, c: float) -> "BoundaryMeasure":
        if c < 0:
            raise ValueError("scale must be non-negative")
        dens = None if self.density is None else (lambda t, f=self.density: c * f(t))
        return BoundaryMeasure(dens, self.breakpoints, c * self.sup if self.has_density else 0.0,
                               tuple((a, c * m) for a, m in self.atoms), f"{c}*{self.label}",
                               tuple((lo, hi, c * v) for lo, hi, v in self.arcs))

    def multiplied(self, g: Callable, g_sup: float, breakpoints: Sequence[float] = ()) -> "BoundaryMeasure":
        """Density multiplied by g (atoms dropped)."""
        if not self.has_density:
            raise ValueError("no density to multiply")
        return BoundaryMeasure(lambda t, f=self.U: f(t) * g(t),
                               tuple(self.breakpoints) + tuple(breakpoints), self.sup * g_sup, (),
                               f"{self.label}*g")


def _sum_densities(f, g):
    if f is None:
        return g
    if g is None:
        return f
    return lambda t: f(t) + g(t)


def uniform(mass: float = 1.0) -> BoundaryMeasure:
    return BoundaryMeasure(lambda t: np.full_like(np.asarray(t, float), mass), (), mass, (), "uniform")


def cosine(a: float = 0.5, b: float = 0.5) -> BoundaryMeasure:
    """Density a + b cos(theta) (requires a >= |b|)."""
    if a < abs(b):
        raise ValueError("density would be negative")
    return BoundaryMeasure(lambda t: a + b * np.cos(t), (), a + abs(b), (), f"cosine({a},{b})")


def piecewise_constant(pieces: Sequence[tuple[float, float, float]], label: str = "table") -> BoundaryMeasure:
    """Density equal to ``value`` on each arc [lo, hi] (angles may wrap), 0 elsewhere."""
    arcs = tuple((float(lo), float(hi), float(v)) for lo, hi, v in pieces)
    bps = tuple(x for lo, hi, _ in arcs for x in (lo, hi))
    sup = max(sum(v for *_, v in arcs), 1e-300)
    return BoundaryMeasure(None, bps, sup, (), label, arcs)


def arc_indicator(theta0: float, half_width: float, value: float = 1.0) -> BoundaryMeasure:
    return piecewise_constant([(theta0 - half_width, theta0 + half_width, value)], f"arc({theta0},{half_width})")


def atom(theta: float, mass: float = 1.0) -> BoundaryMeasure:
    return BoundaryMeasure(None, (), 0.0, ((float(theta), float(mass)),), f"atom({theta})")
