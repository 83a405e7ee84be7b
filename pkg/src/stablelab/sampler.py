r"""Walk-on-balls simulation of the killed stable process and Monte Carlo
estimators built on it.

From a point ``w`` the walk draws the exact exit position from the ball
``B(w, lam * delta_D(w))``; the process leaves a ball by a jump, so the
landing is strictly outside it. The walk stops at the first landing outside
``D``, which is then an exact draw from harmonic measure.

Batches of walks advance in lock-step as numpy arrays. Estimators split
their budget into chunks with their own RNG streams (see :mod:`stablelab.rng`).

The h-conditioned chain draws its next landing with density proportional to
``P_B(w, y) h(y) 1_D(y)``. For ``h = M_B(., z)`` on the unit ball we use the
envelope

.. math::

   E(y) = P_B(w,y)\,\phi(\eta) + P_{\max}\,\phi(y)\,1_{|y-z|<\eta},
   \qquad \phi(y) = 2^{\alpha/2}|y-z|^{\alpha/2-n} \ge M_B(y,z),

with ``eta = (|z-w| - rho)/2``. Both parts can be sampled exactly. A Martin
integral ``h = \int M_B(., w) nu(dw)`` is handled as the mixture of pole
conditionings: the pole is drawn once from ``M_B(x, w) nu(dw) / h(x)``.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BadGeometry, EnvelopeViolation, RejectionOverflow, SingularPoint
from .geometry import Ball, Domain, corkscrew_sequence
from .kernels import (BallSpec, StableParams, ball_exit_density, ball_green, ball_martin, free_green,
                      ball_expected_exit_time, green_fraction)
from .measures import BoundaryMeasure
from .rng import MCEstimate, Moments, RngState, estimate_from_chunks, map_chunks, pairwise_reduce

DEFAULT_LAMBDA = 0.5
MAX_STEPS = 100_000
MAX_REJECTIONS = 1_000_000
# walks per RNG chunk; large so that the long step-count tail is vectorized
WALK_CHUNK = 1 << 15


@dataclass(frozen=True)
class Caps:
    max_steps: int = MAX_STEPS
    eps_life: float | None = None  # default 1e-4 * diam for conditioned chains
    lam: float = DEFAULT_LAMBDA


@dataclass
class WalkTrace:
    steps: list  # (BallSpec, landing)
    exit_point: np.ndarray
    expected_time_accumulated: float
    weight: float = 1.0
    capped: bool = False

    def rows(self) -> list[tuple]:
        """Columnar rows (step_index, cx, cy, r, lx, ly) for trace dumps."""
        out = []
        for k, (ball, landing) in enumerate(self.steps):
            out.append((k, *ball.center[:2], ball.radius, *landing[:2]))
        return out


@dataclass(frozen=True)
class HittingReport:
    estimate: MCEstimate
    capped: int


# ---------------------------------------------------------------- ball exits

def _unit_directions(gen: np.random.Generator, size: int, n: int) -> np.ndarray:
    g = gen.standard_normal((size, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _centered_exit_radii(gen: np.random.Generator, alpha: float, size: int) -> np.ndarray:
    """|Y - c| / r for exits from the centre: (r/|Y-c|)^2 ~ Beta(alpha/2, 1 - alpha/2)."""
    out = np.empty(size)
    todo = np.arange(size)
    while todo.size:
        t = gen.beta(alpha / 2, 1 - alpha / 2, todo.size)
        s = 1.0 / np.sqrt(t)
        ok = (t > 0) & (s > 1.0) & np.isfinite(s)
        out[todo[ok]] = s[ok]
        todo = todo[~ok]
    return out


def centered_exits(gen: np.random.Generator, params: StableParams, centers: np.ndarray,
                   radii: np.ndarray) -> np.ndarray:
    centers = np.atleast_2d(centers)
    size, n = centers.shape
    out = np.empty_like(centers)
    todo = np.arange(size)
    while todo.size:
        s = _centered_exit_radii(gen, params.alpha, todo.size)
        y = centers[todo] + (radii[todo] * s)[:, None] * _unit_directions(gen, todo.size, n)
        # rounding can put a landing back on the sphere; redraw those
        ok = np.linalg.norm(y - centers[todo], axis=1) > radii[todo]
        out[todo[ok]] = y[ok]
        todo = todo[~ok]
    return out


def sample_ball_exits(gen: np.random.Generator, params: StableParams, ball: BallSpec, x, size: int) -> np.ndarray:
    """``size`` exact draws of the exit position from ``ball`` started at ``x``."""
    x = np.asarray(x, dtype=float)
    c, r = ball.c, ball.radius
    d = float(np.linalg.norm(x - c))
    if d >= r:
        raise BadGeometry("x must be strictly inside the ball")
    centers = np.broadcast_to(c, (size, c.size)).copy()
    radii = np.full(size, r)
    if d == 0:
        return centered_exits(gen, params, centers, radii)
    # rejection from the centred exit law; density ratio <= bound
    bound = (1 - d * d / (r * r)) ** (params.alpha / 2) * (r / (r - d)) ** params.n
    out = np.empty((size, c.size))
    todo = np.arange(size)
    fails = np.zeros(size, dtype=np.int64)
    while todo.size:
        y = centered_exits(gen, params, centers[: todo.size], radii[: todo.size])
        ratio = (1 - d * d / (r * r)) ** (params.alpha / 2) * (
            np.linalg.norm(y - c, axis=1) / np.linalg.norm(y - x, axis=1)) ** params.n
        acc = gen.random(todo.size) * bound < ratio
        out[todo[acc]] = y[acc]
        fails[todo[~acc]] += 1
        if np.any(fails[todo[~acc]] >= MAX_REJECTIONS):
            raise RejectionOverflow("off-centre exit sampler rejected 10^6 times in a row")
        todo = todo[~acc]
    return out


def sample_ball_exit(rng: RngState, params: StableParams, ball: BallSpec, x) -> np.ndarray:
    return sample_ball_exits(rng.generator(), params, ball, x, 1)[0]


# ---------------------------------------------------------------- walks

class _Punctured:
    """Domain minus a closed ball; used for exact hitting detection."""

    def __init__(self, domain: Domain, center, radius):
        self.domain = domain
        self.c = np.asarray(center, dtype=float)
        self.r = float(radius)

    def dist(self, x):
        return np.minimum(self.domain.dist(x), np.maximum(np.linalg.norm(x - self.c, axis=-1) - self.r, 0.0))


@dataclass
class BatchResult:
    exits: np.ndarray
    steps: np.ndarray
    expected_time: np.ndarray
    capped: np.ndarray
    record: list | None = None


def walk_batch(gen: np.random.Generator, params: StableParams, domain, x, size: int,
               lam: float = DEFAULT_LAMBDA, max_steps: int = MAX_STEPS,
               on_step: Callable | None = None, record: bool = False) -> BatchResult:
    """Advance ``size`` independent walks from ``x`` until they leave ``domain``.

    ``on_step(idx, centres, radii)`` is called before each ball exit with the
    indices of the walks still alive.
    """
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    x = np.asarray(x, dtype=float)
    pos = np.broadcast_to(x, (size, x.size)).copy()
    alive = np.ones(size, dtype=bool)
    steps = np.zeros(size, dtype=np.int64)
    etime = np.zeros(size)
    capped = np.zeros(size, dtype=bool)
    rec = [] if record else None
    const = params.exit_time
    if np.any(domain.dist(x[None, :]) <= 0):
        raise BadGeometry(f"start point {x} is not inside the domain")
    shape = getattr(domain, "shape", None)
    if lam == 1 and isinstance(shape, Ball) and on_step is None:
        # the domain is itself a ball: one exact (off-centre) exit step
        ball = BallSpec.of(shape)
        y = sample_ball_exits(gen, params, ball, x, size)
        etime[:] = ball_expected_exit_time(params, ball, x)
        if rec is not None:
            rec.append((np.arange(size), np.broadcast_to(ball.c, pos.shape), np.full(size, ball.radius), y))
        return BatchResult(y, np.ones(size, dtype=np.int64), etime, capped, rec)
    while alive.any():
        idx = np.flatnonzero(alive)
        w = pos[idx]
        rad = lam * domain.dist(w)
        if on_step is not None:
            on_step(idx, w, rad)
        etime[idx] += const * rad ** params.alpha
        y = centered_exits(gen, params, w, rad)
        if rec is not None:
            rec.append((idx, w, rad, y))
        pos[idx] = y
        steps[idx] += 1
        out = domain.dist(y) <= 0
        alive[idx[out]] = False
        over = (steps[idx] >= max_steps) & ~out
        if over.any():
            alive[idx[over]] = False
            capped[idx[over]] = True
    return BatchResult(pos, steps, etime, capped, rec)


def _traces_from_record(res: BatchResult, size: int) -> list[WalkTrace]:
    per = [[] for _ in range(size)]
    for idx, w, rad, y in res.record:
        for k, i in enumerate(idx):
            per[i].append((BallSpec(tuple(map(float, w[k])), float(rad[k])), y[k].copy()))
    return [WalkTrace(per[i], res.exits[i].copy(), float(res.expected_time[i]), 1.0, bool(res.capped[i]))
            for i in range(size)]


def walk_on_balls(rng: RngState, params: StableParams, domain: Domain, x, lam: float = DEFAULT_LAMBDA,
                  caps: Caps = Caps()) -> WalkTrace:
    res = walk_batch(rng.generator(), params, domain, x, 1, lam, caps.max_steps, record=True)
    return _traces_from_record(res, 1)[0]


def walk_traces(rng: RngState, params: StableParams, domain: Domain, x, count: int,
                lam: float = DEFAULT_LAMBDA, caps: Caps = Caps()) -> list[WalkTrace]:
    res = walk_batch(rng.generator(), params, domain, x, count, lam, caps.max_steps, record=True)
    return _traces_from_record(res, count)


# ---------------------------------------------------------------- estimators

def harmonic_measure_estimate(rng: RngState, params: StableParams, domain: Domain, x, f: Callable, N: int,
                              lam: float = DEFAULT_LAMBDA, caps: Caps = Caps(),
                              threads: int | None = None) -> MCEstimate:
    """Mean of ``f(exit point)``; capped walks are counted in ``flagged`` and score 0."""
    def chunk(gen, size):
        res = walk_batch(gen, params, domain, x, size, lam, caps.max_steps)
        vals = np.where(res.capped, 0.0, np.asarray(f(res.exits), dtype=float))
        return vals, int(res.capped.sum())

    parts = map_chunks(chunk, N, rng, threads, WALK_CHUNK)
    est = estimate_from_chunks([p[0] for p in parts])
    return _flag(est, sum(p[1] for p in parts))


def _flag(est: MCEstimate, flagged: int) -> MCEstimate:
    return dataclasses.replace(est, flagged=flagged)


def mean_step_count(rng: RngState, params: StableParams, domain: Domain, x, N: int,
                    lam: float = DEFAULT_LAMBDA, threads: int | None = None) -> MCEstimate:
    parts = map_chunks(lambda g, s: walk_batch(g, params, domain, x, s, lam).steps.astype(float), N, rng, threads, WALK_CHUNK)
    return estimate_from_chunks(parts)


def expected_exit_time_estimate(rng: RngState, params: StableParams, domain: Domain, x, N: int,
                                lam: float = DEFAULT_LAMBDA, threads: int | None = None) -> MCEstimate:
    """E_x[tau_D] from the per-step ball expected exit times (optional stopping)."""
    parts = map_chunks(lambda g, s: walk_batch(g, params, domain, x, s, lam).expected_time, N, rng, threads, WALK_CHUNK)
    return estimate_from_chunks(parts)


def _occupation_scorer(params: StableParams, targets: np.ndarray, scores: np.ndarray):
    """on_step hook adding G_{B(w,rho)}(w, target) for every target inside the current ball."""
    def hook(idx, w, rad):
        for j, t in enumerate(targets):
            d = np.linalg.norm(w - t, axis=1)
            inside = d < rad
            if not inside.any():
                continue
            wi, ri, di = w[inside], rad[inside], d[inside]
            # ball centred at w: fraction depends on |t - w|/rho only
            u = 1.0 - (di / ri) ** 2
            a = params.alpha
            from scipy.special import betainc
            scores[idx[inside], j] += params.riesz * di ** (a - params.n) * betainc(a / 2, (params.n - a) / 2, u)
    return hook


def green_estimate(rng: RngState, params: StableParams, domain: Domain, x, y, N: int,
                   lam: float = DEFAULT_LAMBDA, method: str = "decomposition", caps: Caps = Caps(),
                   threads: int | None = None) -> MCEstimate:
    """Unbiased estimate of G_D(x, y).

    ``decomposition`` (default) uses G_D(x,y) = G(x,y) - E_x[G(X_tau, y)];
    ``occupation`` sums G_{B_k}(w_k, y) over the balls of the walk that
    contain y. The occupation scores have infinite variance when n <= 2 alpha
    is violated only marginally (log-divergent for n = 2, alpha = 1), so they
    are kept as a cross-check rather than the default.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    if np.linalg.norm(x - y) < 1e-9 * domain.diam:
        raise SingularPoint("x and y coincide")
    samples, flagged = green_samples(rng, params, domain, x, y[None, :], N, lam, method, caps, threads)
    return _flag(Moments.of(samples[:, 0]).estimate(), flagged)


@dataclass(frozen=True)
class MartinRow:
    y: tuple
    ratio: float
    stderr: float
    numerator: MCEstimate
    denominator: MCEstimate


def green_samples(rng: RngState, params: StableParams, domain: Domain, start, targets, N: int,
                  lam: float = DEFAULT_LAMBDA, method: str = "decomposition", caps: Caps = Caps(),
                  threads: int | None = None) -> tuple[np.ndarray, int]:
    """Per-walk unbiased scores of G_D(start, t) for several targets t from common walks.

    Returns an (N, len(targets)) array and the number of capped walks (their
    scores are set to zero).
    """
    targets = np.atleast_2d(np.asarray(targets, float))
    start = np.asarray(start, float)
    if method not in ("decomposition", "occupation"):
        raise ValueError(f"unknown method {method!r}")

    def chunk(gen, size):
        if method == "occupation":
            scores = np.zeros((size, len(targets)))
            res = walk_batch(gen, params, domain, start, size, lam, caps.max_steps,
                             on_step=_occupation_scorer(params, targets, scores))
        else:
            res = walk_batch(gen, params, domain, start, size, lam, caps.max_steps)
            scores = np.stack([float(free_green(params, start, t)) - free_green(params, res.exits, t)
                               for t in targets], axis=1)
        scores[res.capped] = 0.0
        return scores, int(res.capped.sum())

    parts = map_chunks(chunk, N, rng, threads, WALK_CHUNK)
    return np.concatenate([p[0] for p in parts], axis=0), sum(p[1] for p in parts)


def ratio_with_stderr(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Ratio of means with delta-method standard error (common samples)."""
    n = a.size
    ma, mb = float(np.mean(a)), float(np.mean(b))
    if mb == 0:
        return math.inf, math.inf
    r = ma / mb
    if n < 2:
        return r, 0.0
    cov = np.cov(np.stack([a, b]), ddof=1)
    var = (cov[0, 0] - 2 * r * cov[0, 1] + r * r * cov[1, 1]) / (mb * mb * n)
    return r, math.sqrt(max(var, 0.0))


def martin_estimate(rng: RngState, params: StableParams, domain: Domain, x, x0, z, depth: int, N: int,
                    lam: float = DEFAULT_LAMBDA, method: str = "decomposition", caps: Caps = Caps(),
                    threads: int | None = None) -> list[MartinRow]:
    """G_D(x, y_j) / G_D(x0, y_j) along the corkscrew sequence y_j -> z.

    By symmetry of G_D the walks start at y_j and score G_D(y_j, x) and
    G_D(y_j, x0) on the same walks, so x = x0 gives ratios of exactly one.
    """
    rows = []
    for j, yj in enumerate(corkscrew_sequence(domain, z, depth)):
        s, _ = green_samples(rng.substream(j), params, domain, yj, [x, x0], N, lam, method, caps, threads)
        r, se = ratio_with_stderr(s[:, 0], s[:, 1])
        rows.append(MartinRow(tuple(map(float, yj)), r, se,
                              Moments.of(s[:, 0]).estimate(), Moments.of(s[:, 1]).estimate()))
    return rows


def cauchy_diagnostic(rows: Sequence[MartinRow], start: int = 5, n_sigma: float = 3.0) -> dict:
    """Self-convergence check of a ratio sequence beyond index ``start``.

    Consecutive differences must be within ``n_sigma`` joint standard errors
    (the sequence is Cauchy up to Monte Carlo resolution) and the spread of
    the tail must not exceed that of the first tail differences.
    """
    r = np.array([row.ratio for row in rows])
    se = np.array([row.stderr for row in rows])
    diffs = np.abs(np.diff(r))[start:]
    joint = np.sqrt(se[:-1] ** 2 + se[1:] ** 2)[start:]
    z = diffs / np.where(joint > 0, joint, np.inf)
    return {"diffs": diffs.tolist(), "z": z.tolist(), "passed": bool(np.all(z <= n_sigma)) if z.size else True}


def hitting_prob_estimate(rng: RngState, params: StableParams, domain: Domain, x0, y, lam_target: float, N: int,
                          lam: float = DEFAULT_LAMBDA, caps: Caps = Caps(),
                          threads: int | None = None) -> HittingReport:
    """P_{x0}(T_{B(y, lam_target delta(y))} < tau_D).

    The walk runs in D minus the closed target ball; it leaves that set either
    into the target (a hit) or into D^c, so the estimator is exact.
    """
    x0, y = np.asarray(x0, float), np.asarray(y, float)
    dy = float(domain.dist(y))
    if not np.linalg.norm(y - x0) > 2 * dy:
        raise BadGeometry("need |y - x0| > 2 delta_D(y)")
    radius = lam_target * dy
    punct = _Punctured(domain, y, radius)

    def chunk(gen, size):
        res = walk_batch(gen, params, punct, x0, size, lam, caps.max_steps)
        hit = (np.linalg.norm(res.exits - y, axis=1) < radius) & ~res.capped
        return hit.astype(float), int(res.capped.sum())

    parts = map_chunks(chunk, N, rng, threads, WALK_CHUNK)
    return HittingReport(estimate_from_chunks([p[0] for p in parts]), sum(p[1] for p in parts))


# ---------------------------------------------------------------- conditioned chains

class PositiveHarmonic:
    """A positive singular harmonic function usable to condition walks."""

    def __call__(self, x):
        raise NotImplementedError


class BoundedHarmonic(PositiveHarmonic):
    """Arbitrary h with a user bound ``bound(w, rho) >= sup of h on D minus B(w, rho)``."""

    def __init__(self, fn: Callable, bound: Callable):
        self.fn = fn
        self.bound = bound

    def __call__(self, x):
        return self.fn(x)


class BallMartinHarmonic(PositiveHarmonic):
    """h = int M_B(., w) nu(dw) on the unit ball (atoms in any dimension, densities for n = 2)."""

    def __init__(self, params: StableParams, measure: BoundaryMeasure):
        if measure.has_density and params.n != 2:
            raise NotImplementedError("boundary densities are supported for n = 2 only")
        if measure.total_mass() <= 0:
            raise ValueError("measure has zero mass")
        self.params = params
        self.measure = measure

    @classmethod
    def pole(cls, params: StableParams, z) -> "BallMartinHarmonic":
        z = np.asarray(z, float)
        h = cls.__new__(cls)
        h.params, h.measure, h._pole = params, None, z / np.linalg.norm(z)
        return h

    def __call__(self, x):
        if self.measure is None:
            return ball_martin(self.params, x, self._pole)
        from .fatou_lab import martin_integral
        return martin_integral(self.params, self.measure, x)

    def sample_poles(self, gen: np.random.Generator, x, size: int) -> np.ndarray:
        """Poles w drawn from M_B(x, w) nu(dw) / h(x)."""
        x = np.asarray(x, float)
        n = self.params.n
        if self.measure is None:
            return np.broadcast_to(self._pole, (size, n)).copy()
        meas = self.measure
        atoms = [(np.array([math.cos(a), math.sin(a)]), m) for a, m in meas.atoms]
        w_atoms = np.array([m * float(ball_martin(self.params, x, p)) for p, m in atoms])
        w_dens = 0.0
        if meas.has_density:
            from .fatou_lab import martin_integral
            w_dens = float(martin_integral(self.params, BoundaryMeasure(meas.density, meas.breakpoints, meas.sup), x))
        weights = np.concatenate([w_atoms, [w_dens]])
        choice = gen.choice(weights.size, size=size, p=weights / weights.sum())
        out = np.empty((size, 2))
        for k, (p, _) in enumerate(atoms):
            out[choice == k] = p
        dens_idx = np.flatnonzero(choice == len(atoms))
        if dens_idx.size:
            rx = float(np.linalg.norm(x))
            mmax = (1 - rx * rx) ** (self.params.alpha / 2) / (1 - rx) ** 2
            todo = dens_idx
            while todo.size:
                th = gen.random(todo.size) * 2 * math.pi
                pts = np.stack([np.cos(th), np.sin(th)], axis=1)
                target = ball_martin(self.params, x, pts) * meas.U(th)
                acc = gen.random(todo.size) * mmax * meas.sup < target
                out[todo[acc]] = pts[acc]
                todo = todo[~acc]
        return out


def _require_unit_ball(domain: Domain):
    shape = domain.shape
    if not (isinstance(shape, Ball) and shape.radius == 1.0 and not np.any(shape.c)):
        raise BadGeometry("Martin-kernel conditioning is implemented for the unit ball")


def _conditioned_batch(gen: np.random.Generator, params: StableParams, domain: Domain, x, poles: np.ndarray,
                       lam: float, eps_life: float, max_steps: int, record: bool = False,
                       lifetime: bool = False, on_step: Callable | None = None):
    """Advance chains conditioned to converge to their poles (unit ball, h = M_B(., pole))."""
    if not 0 < lam < 1:
        raise ValueError("conditioned chains need lambda in (0, 1)")
    n, a = params.n, params.alpha
    size = poles.shape[0]
    pos = np.broadcast_to(np.asarray(x, float), (size, n)).copy()
    alive = domain.dist(pos) >= eps_life
    steps = np.zeros(size, dtype=np.int64)
    life = np.zeros(size)
    capped = np.zeros(size, dtype=bool)
    attempts = np.zeros(size, dtype=np.int64)
    accepted = np.zeros(size, dtype=np.int64)
    rec = [] if record else None
    cphi = 2 ** (a / 2)
    near_mass_const = cphi * params.sphere_area / (a / 2)
    while alive.any():
        idx = np.flatnonzero(alive)
        w, z = pos[idx], poles[idx]
        rho = lam * domain.dist(w)
        dz = np.linalg.norm(z - w, axis=1)
        eta = 0.5 * (dz - rho)
        if on_step is not None:
            on_step(idx, w, rho)
        if lifetime:
            life[idx] += _conditioned_step_time(gen, params, w, rho, z)
        phi_eta = cphi * eta ** (a / 2 - n)
        s = rho + eta
        pmax = params.poisson * rho ** a * (s * s - rho * rho) ** (-a / 2) * s ** (-n)
        m1, m2 = phi_eta, pmax * near_mass_const * eta ** (a / 2)
        todo = np.arange(idx.size)
        fails = np.zeros(idx.size, dtype=np.int64)
        new = np.empty_like(w)
        while todo.size:
            k = todo.size
            far = gen.random(k) * (m1[todo] + m2[todo]) < m1[todo]
            y = np.empty((k, n))
            if far.any():
                y[far] = centered_exits(gen, params, w[todo[far]], rho[todo[far]])
            if (~far).any():
                sel = todo[~far]
                rad = eta[sel] * gen.random(sel.size) ** (2 / a)
                y[~far] = z[sel] + rad[:, None] * _unit_directions(gen, sel.size, n)
            wt, zt, rt = w[todo], z[todo], rho[todo]
            yn = np.linalg.norm(y, axis=1)
            inside = yn < 1
            dyz = np.linalg.norm(y - zt, axis=1)
            dyw = np.linalg.norm(y - wt, axis=1)
            p = params.poisson * (rt * rt / np.maximum(dyw * dyw - rt * rt, 1e-300)) ** (a / 2) * dyw ** (-n)
            mval = np.where(inside, (1 - np.minimum(yn, 1) ** 2) ** (a / 2) / np.maximum(dyz, 1e-300) ** n, 0.0)
            env = p * phi_eta[todo] + np.where(dyz < eta[todo], pmax[todo] * cphi * dyz ** (a / 2 - n), 0.0)
            target = p * mval
            if np.any(target > env * (1 + 1e-9)):
                raise EnvelopeViolation("conditioned-chain envelope below target density")
            acc = inside & (gen.random(k) * env < target)
            attempts[idx[todo]] += 1
            new[todo[acc]] = y[acc]
            accepted[idx[todo[acc]]] += 1
            fails[todo[~acc]] += 1
            if np.any(fails >= MAX_REJECTIONS):
                raise RejectionOverflow("conditioned chain rejected 10^6 proposals in a row")
            todo = todo[~acc]
        if rec is not None:
            rec.append((idx, w.copy(), rho.copy(), new.copy(), m1 + m2))
        pos[idx] = new
        steps[idx] += 1
        done = domain.dist(new) < eps_life
        over = (steps[idx] >= max_steps) & ~done
        alive[idx[done | over]] = False
        capped[idx[over]] = True
    return pos, steps, life, capped, rec, attempts, accepted


def _sample_ball_occupation(gen: np.random.Generator, params: StableParams, size: int) -> np.ndarray:
    """Radii s/r with density proportional to G_B(c, .) (radial law in the unit ball)."""
    a, n = params.alpha, params.n
    out = np.empty(size)
    todo = np.arange(size)
    from scipy.special import betainc
    while todo.size:
        s = gen.random(todo.size) ** (1 / a)
        acc = gen.random(todo.size) < betainc(a / 2, (n - a) / 2, 1 - s * s)
        out[todo[acc]] = s[acc]
        todo = todo[~acc]
    return out


def _conditioned_step_time(gen, params: StableParams, w, rho, z):
    """One-sample estimate of E^h_w[tau_B] = int G_B(w,y) h(y) dy / h(w), h = M_B(., z)."""
    n = params.n
    s = _sample_ball_occupation(gen, params, w.shape[0])
    y = w + (rho * s)[:, None] * _unit_directions(gen, w.shape[0], n)
    ratio = ball_martin(params, y, z) / ball_martin(params, w, z)
    return params.exit_time * rho ** params.alpha * ratio


def _default_eps(domain: Domain, caps: Caps) -> float:
    return caps.eps_life if caps.eps_life is not None else 1e-4 * domain.diam


def sample_conditioned_chain(rng: RngState, params: StableParams, domain: Domain, h: PositiveHarmonic, x,
                             caps: Caps = Caps()) -> WalkTrace:
    return conditioned_traces(rng, params, domain, h, x, 1, caps)[0]


def conditioned_traces(rng: RngState, params: StableParams, domain: Domain, h: PositiveHarmonic, x, count: int,
                       caps: Caps = Caps()) -> list[WalkTrace]:
    gen = rng.generator()
    eps = _default_eps(domain, caps)
    if isinstance(h, BoundedHarmonic):
        return [_bounded_chain(gen, params, domain, h, x, caps.lam, eps, caps.max_steps) for _ in range(count)]
    _require_unit_ball(domain)
    poles = h.sample_poles(gen, x, count)
    pos, steps, life, capped, rec, *_ = _conditioned_batch(gen, params, domain, x, poles, caps.lam, eps,
                                                           caps.max_steps, record=True, lifetime=True)
    per = [[] for _ in range(count)]
    for idx, w, rho, y, _ in rec:
        for k, i in enumerate(idx):
            per[i].append((BallSpec(tuple(map(float, w[k])), float(rho[k])), y[k].copy()))
    return [WalkTrace(per[i], pos[i].copy(), float(life[i]), 1.0, bool(capped[i])) for i in range(count)]


def _bounded_chain(gen, params, domain, h: BoundedHarmonic, x, lam, eps, max_steps) -> WalkTrace:
    """Plain rejection with a user-supplied envelope (one chain)."""
    w = np.asarray(x, float)
    steps = []
    while float(domain.dist(w)) >= eps and len(steps) < max_steps:
        rho = lam * float(domain.dist(w))
        bound = float(h.bound(w, rho))
        for _ in range(MAX_REJECTIONS):
            y = centered_exits(gen, params, w[None, :], np.array([rho]))[0]
            hy = float(h(y)) if float(domain.dist(y)) > 0 else 0.0
            if hy > bound * (1 + 1e-9):
                raise EnvelopeViolation(f"h({y}) = {hy} exceeds the supplied bound {bound}")
            if gen.random() * bound < hy:
                break
        else:
            raise RejectionOverflow("bounded-h chain rejected 10^6 proposals in a row")
        steps.append((BallSpec(tuple(map(float, w)), rho), y))
        w = y
    return WalkTrace(steps, w, math.nan, 1.0, len(steps) >= max_steps)


@dataclass(frozen=True)
class ChainSummary:
    endpoints: np.ndarray
    poles: np.ndarray
    steps: np.ndarray
    lifetime: np.ndarray
    capped: np.ndarray
    normalizer: np.ndarray  # per-step envelope mass * acceptance indicators, see normalizer_estimate


def conditioned_endpoints(rng: RngState, params: StableParams, domain: Domain, h: BallMartinHarmonic, x, N: int,
                          caps: Caps = Caps(), threads: int | None = None) -> ChainSummary:
    _require_unit_ball(domain)
    eps = _default_eps(domain, caps)

    def chunk(gen, size):
        poles = h.sample_poles(gen, x, size)
        pos, steps, life, capped, *_ = _conditioned_batch(gen, params, domain, x, poles, caps.lam, eps,
                                                          caps.max_steps, lifetime=True)
        return pos, poles, steps, life, capped

    parts = map_chunks(chunk, N, rng, threads, WALK_CHUNK)
    cat = [np.concatenate([p[k] for p in parts]) for k in range(5)]
    return ChainSummary(*cat, normalizer=np.empty(0))


def normalizer_estimate(rng: RngState, params: StableParams, z, w, lam: float = DEFAULT_LAMBDA,
                        N: int = 100_000) -> tuple[MCEstimate, float]:
    """Estimate int P_B(w,y) M_B(y,z) 1_D(y) dy by envelope mass x acceptance; compare with h(w)."""
    gen = rng.generator()
    n, a = params.n, params.alpha
    w, z = np.asarray(w, float), np.asarray(z, float)
    rho = lam * (1 - float(np.linalg.norm(w)))
    eta = 0.5 * (float(np.linalg.norm(z - w)) - rho)
    cphi = 2 ** (a / 2)
    phi_eta = cphi * eta ** (a / 2 - n)
    s = rho + eta
    pmax = params.poisson * rho ** a * (s * s - rho * rho) ** (-a / 2) * s ** (-n)
    m1, m2 = phi_eta, pmax * cphi * params.sphere_area / (a / 2) * eta ** (a / 2)
    far = gen.random(N) * (m1 + m2) < m1
    y = np.empty((N, n))
    y[far] = centered_exits(gen, params, np.broadcast_to(w, (int(far.sum()), n)), np.full(int(far.sum()), rho))
    k = int((~far).sum())
    y[~far] = z + (eta * gen.random(k) ** (2 / a))[:, None] * _unit_directions(gen, k, n)
    yn = np.linalg.norm(y, axis=1)
    dyz = np.linalg.norm(y - z, axis=1)
    dyw = np.linalg.norm(y - w, axis=1)
    p = params.poisson * (rho * rho / np.maximum(dyw * dyw - rho * rho, 1e-300)) ** (a / 2) * dyw ** (-n)
    mval = np.where(yn < 1, (1 - np.minimum(yn, 1) ** 2) ** (a / 2) / dyz ** n, 0.0)
    env = p * phi_eta + np.where(dyz < eta, pmax * cphi * dyz ** (a / 2 - n), 0.0)
    vals = (m1 + m2) * mval * p / env
    return Moments.of(vals).estimate(), float(ball_martin(params, w, z))


def conditioned_lifetime_estimate(rng: RngState, params: StableParams, domain: Domain, z, x, N: int,
                                  caps: Caps = Caps(), threads: int | None = None) -> MCEstimate:
    """E^z_x[tau_D]: sum over conditioned-chain steps of one-sample E^h_w[tau_B] estimates."""
    h = BallMartinHarmonic.pole(params, z)
    summary = conditioned_endpoints(rng, params, domain, h, x, N, caps, threads)
    return Moments.of(summary.lifetime).estimate()


def ratio_transitions(rng: RngState, params: StableParams, domain: Domain, h: BallMartinHarmonic,
                      ratio_fn: Callable, x, N: int, caps: Caps = Caps(),
                      threads: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(current, next) values of ``ratio_fn`` over every transition of N conditioned chains."""
    _require_unit_ball(domain)
    eps = _default_eps(domain, caps)

    def chunk(gen, size):
        poles = h.sample_poles(gen, x, size)
        *_, rec, _, _ = _conditioned_batch(gen, params, domain, x, poles, caps.lam, eps, caps.max_steps,
                                           record=True)
        cur = np.concatenate([ratio_fn(w) for _, w, _, _, _ in rec])
        nxt = np.concatenate([np.where(np.linalg.norm(y, axis=1) < 1,
                                       ratio_fn(np.where((np.linalg.norm(y, axis=1) < 1)[:, None], y, 0.0)), 0.0)
                              for _, _, _, y, _ in rec])
        return cur, nxt

    parts = map_chunks(chunk, N, rng, threads, WALK_CHUNK)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
