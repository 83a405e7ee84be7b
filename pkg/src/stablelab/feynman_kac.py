r"""Nonlocal Feynman-Kac functionals of the killed stable process.

Paths are sampled on a time grid with exact isotropic increments
``sqrt(2 S) * N(0, I)``, where ``S`` is a positive ``alpha/2``-stable variable
(Kanter's representation) scaled so that ``E exp(i xi . X_dt) = exp(-dt |xi|^alpha)``.
Killing is checked at grid times only.

The additive functional of a grid path is

.. math::

   A = \Delta t \sum_{k < k^*} q(X_k) + \sum_{1 \le k < k^*} F(X_{k-1}, X_k),

with ``k*`` the first grid index outside ``D`` (the jump into the cemetery
carries no F-term). The Green function of the perturbed semigroup is built
from the Neumann series ``V = sum_k (G K)^k G`` on a polar Gauss grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from .errors import LogDomain, NotContractive, PathDeadAtStart, SingularPoint
from .geometry import Ball, Domain
from .kernels import BallSpec, StableParams, ball_green, ball_martin, free_green, psi, relativistic_ingredients
from .rng import MCEstimate, Moments, RngState, estimate_from_chunks, map_chunks

PATH_CHUNK = 1 << 14
MAX_GRID_STEPS = 1_000_000
CONTRACTION_LIMIT = 0.9
SERIES_TOL = 1e-6
SERIES_MAX_TERMS = 500


@dataclass(frozen=True)
class PerturbationSpec:
    """Potential density q and jump function F (F vanishes on the diagonal).

    ``eta`` declares F(x,y) = O(|x-y|^{1+eta}) near the diagonal; ``F_bound``
    bounds |F| on D x D. ``F = None`` means F = 0.
    """

    q: Callable | None = None
    F: Callable | None = None
    F_bound: float = 0.0
    eta: float = 1.0
    label: str = ""

    def q_at(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self.q is None:
            return np.zeros(x.shape[:-1])
        return np.broadcast_to(np.asarray(self.q(x), float), x.shape[:-1])

    def F_at(self, x, y) -> np.ndarray:
        x, y = np.asarray(x, float), np.asarray(y, float)
        shape = np.broadcast_shapes(x.shape, y.shape)[:-1]
        if self.F is None:
            return np.zeros(shape)
        return np.broadcast_to(np.asarray(self.F(x, y), float), shape)

    @property
    def is_zero(self) -> bool:
        return self.q is None and self.F is None


def zero_spec() -> PerturbationSpec:
    return PerturbationSpec(label="zero")


def constant_q_spec(c: float) -> PerturbationSpec:
    return PerturbationSpec(q=lambda x: np.full(np.asarray(x).shape[:-1], float(c)), label=f"constant-q c={c}")


@dataclass(frozen=True)
class RelativisticSpec:
    m: float

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("m must be positive")


def relativistic_spec(params: StableParams, m: float, domain: Domain | None = None) -> PerturbationSpec:
    """q = -(drift compensator + q_m) (identically m up to quadrature error), F = ln psi."""
    ing = relativistic_ingredients(params, RelativisticSpec(m).m, domain)
    scale = ing.scale
    diam = 2 * ing.ball.radius

    def log_psi(x, y):
        with np.errstate(divide="ignore"):  # psi underflows to 0 for very long jumps
            return np.log(psi(params, scale * np.linalg.norm(np.asarray(x) - np.asarray(y), axis=-1)))

    return PerturbationSpec(
        q=lambda x: -(ing.drift_compensator(x) + ing.q(x)),
        F=log_psi,
        F_bound=float(-math.log(psi(params, scale * diam))),
        eta=1.0,
        label=f"relativistic m={m}",
    )


# ---------------------------------------------------------------- paths

def positive_stable(gen: np.random.Generator, beta: float, size) -> np.ndarray:
    """Kanter's representation: E exp(-lam S) = exp(-lam^beta), 0 < beta < 1."""
    u = gen.random(size) * math.pi
    e = gen.standard_exponential(size)
    a = np.sin(beta * u) / np.sin(u) ** (1 / beta)
    b = (np.sin((1 - beta) * u) / e) ** ((1 - beta) / beta)
    return a * b


def stable_increments(gen: np.random.Generator, params: StableParams, dt: float, size: int) -> np.ndarray:
    if not dt > 0:
        raise ValueError("dt must be positive")
    s = positive_stable(gen, params.alpha / 2, size) * dt ** (2 / params.alpha)
    return np.sqrt(2 * s)[:, None] * gen.standard_normal((size, params.n))


@dataclass
class DiscretePath:
    times: np.ndarray
    positions: np.ndarray
    alive_until: int  # first grid index outside D, or len(times) if none

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0


def sample_stable_path(rng: RngState, params: StableParams, x, dt: float, horizon: float | None = None,
                       domain: Domain | None = None, max_steps: int = MAX_GRID_STEPS) -> DiscretePath:
    """A grid path from x; without a horizon it runs until the first grid point outside ``domain``."""
    if horizon is None and domain is None:
        raise ValueError("need a horizon or a domain to stop at")
    gen = rng.generator()
    x = np.asarray(x, float)
    steps = max_steps if horizon is None else int(round(horizon / dt))
    pos = [x]
    alive_until = None
    if domain is not None and float(domain.dist(x)) <= 0:
        alive_until = 0
    cur = x
    block = 1024
    while len(pos) <= steps and alive_until is None:
        k = min(block, steps + 1 - len(pos))
        new = cur + np.cumsum(stable_increments(gen, params, dt, k), axis=0)
        if domain is not None:
            out = np.flatnonzero(domain.dist(new) <= 0)
            if out.size:
                new = new[: out[0] + 1]
                alive_until = len(pos) + int(out[0])
        pos.extend(new)
        cur = new[-1]
    positions = np.array(pos)
    return DiscretePath(dt * np.arange(len(positions)), positions,
                        alive_until if alive_until is not None else len(positions))


def additive_functional(path: DiscretePath, spec: PerturbationSpec, domain: Domain) -> float:
    if path.alive_until == 0 or float(domain.dist(path.positions[0])) <= 0:
        raise PathDeadAtStart("path starts outside the domain")
    k_star = path.alive_until
    n_q = min(k_star, len(path.positions) - 1)
    alive = path.positions[:k_star]
    total = path.dt * float(np.sum(spec.q_at(path.positions[:n_q])))
    if k_star > 1:
        total += float(np.sum(spec.F_at(alive[:-1], alive[1:])))
    return total


def relativistic_functional(path: DiscretePath, m: float, domain: Domain, params: StableParams) -> float:
    """log K^m along a grid path: sum ln psi(jumps) - dt * sum (drift + q)."""
    ing = relativistic_ingredients(params, m, domain)
    k_star = path.alive_until
    n_q = min(k_star, len(path.positions) - 1)
    alive = path.positions[:k_star]
    val = 0.0
    if k_star > 1:
        one_plus = psi(params, ing.scale * np.linalg.norm(np.diff(alive, axis=0), axis=1))
        if np.any(np.asarray(one_plus) <= 0):
            raise LogDomain("1 + F_m <= 0 encountered")
        val += float(np.sum(np.log(one_plus)))
    pts = path.positions[:n_q]
    val -= path.dt * float(np.sum(ing.drift_compensator(pts) + ing.q(pts)))
    return val


def _functional_batch(gen, params: StableParams, domain: Domain, spec: PerturbationSpec, x, dt: float, size: int,
                      horizon: float | None, max_steps: int, exit_jump: bool = False):
    """Streaming version of ``additive_functional`` for a batch of paths.

    ``exit_jump`` also adds F over the jump that leaves D (the unkilled
    functional stopped at tau_D), which is the one with unit expectation when
    q compensates every jump.
    """
    x = np.asarray(x, float)
    if float(domain.dist(x)) <= 0:
        raise PathDeadAtStart("start point outside the domain")
    steps = max_steps if horizon is None else int(round(horizon / dt))
    pos = np.broadcast_to(x, (size, x.size)).copy()
    A = np.zeros(size)
    alive = np.ones(size, dtype=bool)
    capped = np.zeros(size, dtype=bool)
    k = 0
    while alive.any() and k < steps:
        idx = np.flatnonzero(alive)
        cur = pos[idx]
        A[idx] += dt * spec.q_at(cur)
        new = cur + stable_increments(gen, params, dt, idx.size)
        inside = domain.dist(new) > 0
        scored = np.ones_like(inside) if exit_jump else inside
        if spec.F is not None and scored.any():
            A[idx[scored]] += spec.F_at(cur[scored], new[scored])
        pos[idx] = new
        alive[idx[~inside]] = False
        k += 1
    if horizon is None:
        capped = alive.copy()
    return A, capped


@dataclass(frozen=True)
class GaugeReport:
    coarse: MCEstimate  # at dt
    fine: MCEstimate  # at dt / 2
    dt: float
    flagged: int = 0

    @property
    def difference(self) -> float:
        return self.coarse.mean - self.fine.mean

    @property
    def richardson(self) -> float:
        """First-order extrapolation 2 * fine - coarse."""
        return 2 * self.fine.mean - self.coarse.mean

    def as_dict(self) -> dict:
        return {"dt": self.dt, "coarse": self.coarse.as_dict(), "fine": self.fine.as_dict(),
                "difference": self.difference, "richardson": self.richardson, "flagged": self.flagged}


def _gauge_at(rng, params, domain, spec, x, dt, N, horizon, max_steps, threads, exit_jump) -> tuple[MCEstimate, int]:
    def chunk(gen, size):
        A, capped = _functional_batch(gen, params, domain, spec, x, dt, size, horizon, max_steps, exit_jump)
        return np.where(capped, 0.0, np.exp(A)), int(capped.sum())

    parts = map_chunks(chunk, N, rng, threads, PATH_CHUNK)
    est = estimate_from_chunks([p[0] for p in parts])
    flagged = sum(p[1] for p in parts)
    return MCEstimate(est.mean, est.stderr, est.n_samples, flagged), flagged


def gauge_estimate(rng: RngState, params: StableParams, domain: Domain, spec: PerturbationSpec, x, dt: float,
                   N: int, horizon: float | None = None, max_steps: int = MAX_GRID_STEPS,
                   threads: int | None = None, exit_jump: bool = False) -> GaugeReport:
    """E_x exp(A(tau_D)) (or at tau_D ^ horizon) at steps dt and dt/2 on independent streams."""
    coarse, f1 = _gauge_at(rng.substream(0), params, domain, spec, x, dt, N, horizon, max_steps, threads, exit_jump)
    fine, f2 = _gauge_at(rng.substream(1), params, domain, spec, x, dt / 2, N, horizon, 2 * max_steps, threads,
                         exit_jump)
    return GaugeReport(coarse, fine, dt, f1 + f2)


def relativistic_gauge(rng: RngState, params: StableParams, domain: Domain, m: float, x, dt: float, N: int,
                       horizon: float | None = None, threads: int | None = None,
                       exit_jump: bool = False) -> GaugeReport:
    return gauge_estimate(rng, params, domain, relativistic_spec(params, m, domain), x, dt, N, horizon,
                          threads=threads, exit_jump=exit_jump)


# ---------------------------------------------------------------- Neumann series on the disk

@dataclass(frozen=True)
class PolarGrid:
    """Tensor grid on the unit disk: Gauss-Legendre in r, uniform in angle.

    Node (k, j) owns the polar cell [e_k, e_{k+1}] x [j, j+1] * 2 pi / n_angular
    where e_k are the cumulative radial Gauss weights.
    """

    n_radial: int = 24
    n_angular: int = 24

    @property
    def nodes(self) -> np.ndarray:
        r, _ = self._radial()
        th = self.dtheta * (np.arange(self.n_angular) + 0.5)
        return np.stack([np.outer(r, np.cos(th)).ravel(), np.outer(r, np.sin(th)).ravel()], axis=1)

    @property
    def weights(self) -> np.ndarray:
        r, w = self._radial()
        return np.repeat(w * r * self.dtheta, self.n_angular)

    @property
    def dtheta(self) -> float:
        return 2 * math.pi / self.n_angular

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self._radial()[1])])

    def _radial(self):
        z, w = np.polynomial.legendre.leggauss(self.n_radial)
        return 0.5 * (z + 1), 0.5 * w

    def cell_of(self, x) -> tuple[int, int]:
        r = float(np.hypot(x[0], x[1]))
        k = int(np.clip(np.searchsorted(self.edges, r, side="right") - 1, 0, self.n_radial - 1))
        j = int(np.mod(math.atan2(x[1], x[0]), 2 * math.pi) // self.dtheta) % self.n_angular
        return k, j


def _cell_ray_lengths(x: np.ndarray, r_lo: float, r_hi: float, th_lo: float, th_hi: float,
                      phi: np.ndarray) -> np.ndarray:
    """Distance from x along direction phi to the boundary of a polar cell containing x."""
    e = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    b = e @ x
    c0 = x @ x
    out = np.full(phi.shape, np.inf)
    for rr in (r_lo, r_hi):
        if rr <= 0:
            continue
        disc = b * b - (c0 - rr * rr)
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        for t in (-b - sq, -b + sq):
            good = ok & (t > 1e-15)
            out = np.where(good, np.minimum(out, t), out)
    for th in (th_lo, th_hi):
        d = np.array([math.cos(th), math.sin(th)])
        nrm = np.array([-d[1], d[0]])
        den = e @ nrm
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -(x @ nrm) / den
        hit = x + t[:, None] * e
        good = (t > 1e-15) & (hit @ d > 0) & np.isfinite(t)
        out = np.where(good, np.minimum(out, t), out)
    return out


_GL16 = np.polynomial.legendre.leggauss(16)
_GL24 = np.polynomial.legendre.leggauss(24)


def _own_cell_integral(params: StableParams, grid: PolarGrid, x: np.ndarray, k: int, j: int) -> float:
    """int over cell (k, j) of G_B(x, y) dy for x inside that cell.

    Local polar coordinates around x; the substitution u = r^alpha removes the
    r^{alpha - n} singularity, and the angular range is split at the corners.
    """
    a = params.alpha
    edges, dth = grid.edges, grid.dtheta
    th_lo, th_hi = j * dth, (j + 1) * dth
    corners = [math.atan2(rr * math.sin(th) - x[1], rr * math.cos(th) - x[0])
               for rr in (edges[k], edges[k + 1]) for th in (th_lo, th_hi)]
    cuts = np.unique(np.mod(np.array(corners), 2 * math.pi))
    cuts = np.concatenate([cuts, [cuts[0] + 2 * math.pi]])
    zu, wu = _GL16
    zp, wp = _GL24
    ball = BallSpec.unit(2)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        phi = 0.5 * (hi - lo) * zp + 0.5 * (hi + lo)
        L = _cell_ray_lengths(x, edges[k], edges[k + 1], th_lo, th_hi, phi)
        u = 0.5 * L[:, None] ** a * (zu[None, :] + 1)
        rr = u ** (1 / a)
        y = x + rr[..., None] * np.stack([np.cos(phi), np.sin(phi)], axis=1)[:, None, :]
        g = ball_green(params, ball, np.broadcast_to(x, y.shape), y)
        inner = np.sum(0.5 * L[:, None] ** a * wu[None, :] * g * rr ** (2 - a) / a, axis=1)
        total += float(np.sum(0.5 * (hi - lo) * wp * inner))
    return total


def _sub_cells(grid: PolarGrid, sub: int):
    """Sub-quadrature nodes (per ring, for the cell at angular index 0) and weights."""
    z, w = np.polynomial.legendre.leggauss(sub)
    edges, dth = grid.edges, grid.dtheta
    out = []
    for k in range(grid.n_radial):
        rs = 0.5 * (edges[k + 1] - edges[k]) * z + 0.5 * (edges[k + 1] + edges[k])
        wr = 0.5 * (edges[k + 1] - edges[k]) * w * rs
        ts = 0.5 * dth * (z + 1)
        wt = 0.5 * dth * w
        R, T = np.meshgrid(rs, ts, indexing="ij")
        out.append((R.ravel(), T.ravel(), np.outer(wr, wt).ravel()))
    return out


def cell_integrals_at(params: StableParams, grid: PolarGrid, x, sub: int = 6) -> np.ndarray:
    """Row vector c_l = int_{cell l} G_B(x, y) dy for an arbitrary x in the disk."""
    x = np.asarray(x, float)
    ball = BallSpec.unit(2)
    na = grid.n_angular
    off = grid.dtheta * np.arange(na)
    row = np.empty(grid.n_radial * na)
    own = grid.cell_of(x)
    for k, (R, T, Wt) in enumerate(_sub_cells(grid, sub)):
        ang = T[None, :] + off[:, None]
        Y = np.stack([R[None, :] * np.cos(ang), R[None, :] * np.sin(ang)], axis=-1)
        g = ball_green(params, ball, np.broadcast_to(x, Y.shape), Y)
        row[k * na:(k + 1) * na] = g @ Wt
    k, j = own
    row[k * na + j] = _own_cell_integral(params, grid, x, k, j)
    return row


@lru_cache(maxsize=8)
def green_operators(params: StableParams, grid: PolarGrid, sub: int = 6) -> tuple[np.ndarray, np.ndarray]:
    """(G_pt, C): point values of G_B on the grid and cell integrals C_il = int_{cell l} G_B(x_i, y) dy.

    The diagonal of G_pt holds the cell average of G_B(x_i, .) over the node's
    own cell. Rotational symmetry reduces C to one ring-by-ring table per
    angular offset.
    """
    if params.n != 2:
        raise NotImplementedError("planar grid only")
    X = grid.nodes
    nr, na = grid.n_radial, grid.n_angular
    ball = BallSpec.unit(2)
    subs = _sub_cells(grid, sub)
    table = np.zeros((nr, nr, na))  # [ring of x, ring of cell, angular offset]
    xs = X[::na]  # one node per ring, angular index 0
    off = grid.dtheta * np.arange(na)
    for k, (R, T, Wt) in enumerate(subs):
        ang = T[None, :] + off[:, None]
        Y = np.stack([R[None, :] * np.cos(ang), R[None, :] * np.sin(ang)], axis=-1)  # (na, s, 2)
        for i, x in enumerate(xs):
            if i == k:
                g = np.zeros(Y.shape[:-1])
                g[1:] = ball_green(params, ball, np.broadcast_to(x, Y[1:].shape), Y[1:])
                table[i, k] = g @ Wt
                table[i, k, 0] = _own_cell_integral(params, grid, x, k, 0)
            else:
                table[i, k] = ball_green(params, ball, np.broadcast_to(x, Y.shape), Y) @ Wt
    idx = np.arange(nr * na)
    ring, ang = idx // na, idx % na
    C = table[ring[:, None], ring[None, :], (ang[None, :] - ang[:, None]) % na]
    G = np.zeros((len(X), len(X)))
    i, j = np.triu_indices(len(X), 1)
    vals = ball_green(params, ball, X[i], X[j])
    G[i, j] = vals
    G[j, i] = vals
    edges = grid.edges
    area = np.repeat(0.5 * (edges[1:] ** 2 - edges[:-1] ** 2) * grid.dtheta, na)
    G[idx, idx] = np.diag(C) / area
    G.setflags(write=False)
    C.setflags(write=False)
    return G, C


def _jump_matrix(params: StableParams, grid: PolarGrid, spec: PerturbationSpec) -> np.ndarray:
    """(e^F - 1) J on the grid; diagonal from the quadratic behaviour of e^F - 1."""
    X, W = grid.nodes, grid.weights
    N = len(X)
    Jh = np.zeros((N, N))
    if spec.F is None:
        return Jh
    i, j = np.triu_indices(N, 1)
    d = np.linalg.norm(X[i] - X[j], axis=1)
    kern = params.jump * d ** (-params.alpha - params.n)
    vals = 0.5 * (np.expm1(spec.F_at(X[i], X[j])) + np.expm1(spec.F_at(X[j], X[i]))) * kern
    Jh[i, j] = vals
    Jh[j, i] = vals
    rho = np.sqrt(W / math.pi)
    # e^F - 1 ~ c r^2 near the diagonal; c estimated by a small offset
    h = 1e-3 * rho
    probe = X + np.stack([h, np.zeros_like(h)], axis=1)
    c = np.expm1(spec.F_at(X, probe)) / h ** 2
    a = params.alpha
    Jh[np.arange(N), np.arange(N)] = c * params.jump * params.sphere_area * rho ** (2 - a) / (2 - a) / W
    return Jh


@dataclass
class SeriesResult:
    V: np.ndarray
    G: np.ndarray
    grid: PolarGrid
    T: np.ndarray  # discretized G o K acting on nodal values
    KW: np.ndarray  # W diag(q) + W J W
    C: np.ndarray  # cell integrals of G
    terms: int
    norm: float  # infinity norm of T
    spectral_radius: float
    last_change: float
    asymmetry: float  # max |V - V^T| / max |V| before symmetrization
    band: float  # c with V/G in [1/c, c] off the diagonal
    spec: PerturbationSpec
    params: StableParams

    def as_dict(self) -> dict:
        return {"terms": self.terms, "norm": self.norm, "spectral_radius": self.spectral_radius,
                "last_change": self.last_change, "asymmetry": self.asymmetry, "band": self.band,
                "nodes": int(self.V.shape[0])}


def perturbed_green_series(params: StableParams, spec: PerturbationSpec, grid: PolarGrid = PolarGrid(),
                           K: int | None = None, domain: Domain | None = None) -> SeriesResult:
    """V = G + sum_{k>=0} (G K)^k G K G on a polar grid over the unit disk.

    Every integral against G uses the cell integrals C (product integration),
    so with Gr = C W^-1 the first correction Gr KW Gr^T is symmetric and the
    higher ones are T^k of it with T = Gr KW. The series is refused
    (NotContractive) unless the spectral radius of T is below 0.9. Without
    ``K`` terms are added until one more changes V by less than 1e-6 relative
    to max |V|.
    """
    if params.n != 2:
        raise NotImplementedError("the Neumann series is implemented on the unit disk")
    if domain is not None and not (isinstance(domain.shape, Ball) and domain.shape.radius == 1.0
                                   and not np.any(domain.shape.c)):
        raise ValueError("the Neumann series is implemented on the unit disk")
    G, C = green_operators(params, grid)
    W = grid.weights
    if spec.is_zero:
        z = np.zeros_like(G)
        return SeriesResult(G.copy(), G, grid, z, z, C, 0, 0.0, 0.0, 0.0, 0.0, 1.0, spec, params)
    q = spec.q_at(grid.nodes)
    Jh = _jump_matrix(params, grid, spec)
    KW = np.diag(W * q) + W[:, None] * Jh * W[None, :]
    Gr = C / W[None, :]
    T = Gr @ KW
    norm = float(np.max(np.sum(np.abs(T), axis=1)))
    radius = float(np.max(np.abs(np.linalg.eigvals(T))))
    if not radius < CONTRACTION_LIMIT:
        raise NotContractive(f"spectral radius of G o K is {radius:.3f} >= {CONTRACTION_LIMIT}")
    term = Gr @ KW @ Gr.T
    V = G + term
    terms, change = 1, float(np.max(np.abs(term)) / np.max(np.abs(V)))
    limit = K if K is not None else SERIES_MAX_TERMS
    while terms < limit and not (K is None and change < SERIES_TOL):
        term = T @ term
        V = V + term
        terms += 1
        change = float(np.max(np.abs(term)) / np.max(np.abs(V)))
    asym = float(np.max(np.abs(V - V.T)) / np.max(np.abs(V)))
    V = 0.5 * (V + V.T)
    off = ~np.eye(len(V), dtype=bool)
    ratio = V[off] / G[off]
    band = math.inf if np.any(ratio <= 0) else float(max(ratio.max(), 1 / ratio.min()))
    return SeriesResult(V, G, grid, T, KW, C, terms, norm, radius, change, asym, band, spec, params)


def conditional_gauge(series: SeriesResult, x, z) -> float:
    """u(x, z) from (u - 1) M(x, z) = int V(x, y) (K M(., z))(y) dy.

    With f = K M at the nodes, phi = V K M at the nodes solves phi = Gr W f + T phi;
    at x, V K M (x) = c_x . (f + K phi) / W-weights, c_x the cell integrals of G(x, .).
    """
    params, spec = series.params, series.spec
    if spec.is_zero:
        return 1.0
    x, z = np.asarray(x, float), np.asarray(z, float)
    grid = series.grid
    nodes, W = grid.nodes, grid.weights
    Mz = ball_martin(params, nodes, z)
    KWM = series.KW @ Mz  # W * (K M)(nodes)
    Gr = series.C / W[None, :]
    phi = np.linalg.solve(np.eye(len(W)) - series.T, Gr @ KWM)
    cx = cell_integrals_at(params, grid, x)
    vkm = float(cx @ ((KWM + series.KW @ phi) / W))
    return 1.0 + vkm / float(ball_martin(params, x, z))


def perturbed_martin(params: StableParams, spec: PerturbationSpec, x, z, grid: PolarGrid = PolarGrid(),
                     K: int | None = None, x0=(0.0, 0.0), series: SeriesResult | None = None) -> float:
    """K_D(x, z) = M(x, z) u(x, z) / u(x0, z), with M the Martin kernel normalized at x0."""
    x, x0, z = np.asarray(x, float), np.asarray(x0, float), np.asarray(z, float)
    if np.array_equal(x, x0):
        return 1.0
    m = float(ball_martin(params, x, z)) / float(ball_martin(params, x0, z))
    if spec.is_zero:
        return m
    series = series or perturbed_green_series(params, spec, grid, K)
    return m * conditional_gauge(series, x, z) / conditional_gauge(series, x0, z)
