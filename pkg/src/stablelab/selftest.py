"""Fast closed-form and invariant checks across all modules (``stablelab selftest``).

Every check is deterministic: Monte Carlo checks run on fixed seeds with the
chunked, thread-count-independent reduction of :mod:`stablelab.rng`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from . import fatou_lab as fl
from . import feynman_kac as fk
from . import measures
from . import sampler as sm
from .errors import BadGeometry, SingularPoint, StableLabError
from .geometry import (Ball, Domain, FatCharacteristics, StolzParams, corkscrew_point, corkscrew_sequence,
                       dist_to_complement, slitted_rectangle, stolz_contains, unit_disk, verify_kappa_fat)
from .kernels import (BallSpec, StableParams, ball_exit_density, ball_expected_exit_time, ball_green, ball_martin,
                      free_green, jump_kernel_density, psi, transition_density_oracle)
from .rng import RngState

P = StableParams(2, 1.0)
DISK = unit_disk()
E1 = np.array([1.0, 0.0])


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


_CHECKS: list[tuple[str, Callable]] = []


def check(name: str):
    def deco(fn):
        _CHECKS.append((name, fn))
        return fn
    return deco


def _random_pairs(seed: int, count: int, radius: float = 0.95):
    gen = np.random.default_rng(seed)
    pts = gen.uniform(-1, 1, (4 * count, 2))
    pts = pts[np.linalg.norm(pts, axis=1) < radius][: 2 * count]
    return pts[:count], pts[count: 2 * count]


# ---------------------------------------------------------------- geometry

@check("geometry: delta at centre of unit disk = 1")
def _():
    v = float(dist_to_complement(DISK, [0, 0]))
    return v == 1.0, f"{v}"


@check("geometry: delta at (0.9, 0) = 0.1")
def _():
    v = float(dist_to_complement(DISK, [0.9, 0]))
    return abs(v - 0.1) < 1e-15, f"{v}"


@check("geometry: radial corkscrews of the disk")
def _():
    a = corkscrew_point(DISK, [1, 0], 0.5)
    b = corkscrew_point(DISK, [0, -1], 0.2)
    ok = np.allclose(a, [0.75, 0], atol=1e-15) and np.allclose(b, [0, -0.9], atol=1e-15)
    return ok, f"{a.tolist()} {b.tolist()}"


@check("geometry: stolz_contains radial point and depth cap")
def _():
    sp = StolzParams(DISK, (1.0, 0.0), 2.0)
    return stolz_contains(sp, [0.9, 0]) and not stolz_contains(sp, [0.5, 0]), ""


@check("geometry: corkscrew_sequence radial with R = 1/2")
def _():
    d = unit_disk(0.5, 0.5)
    ys = corkscrew_sequence(d, [1, 0], 3)
    ok = np.allclose(ys, [[0.875, 0], [0.9375, 0], [0.96875, 0]], atol=1e-15)
    return ok, f"{np.asarray(ys)[:, 0].tolist()}"


@check("geometry: unit disk is 1/2-fat (64 samples x 4 radii)")
def _():
    rep = verify_kappa_fat(DISK, 64, [0.5, 0.25, 0.125, 0.0625])
    return rep.ok and rep.n_checked == 256, f"failures={len(rep.failures)}"


@check("geometry: kappa > 1/2 rejected at construction")
def _():
    try:
        FatCharacteristics(0.9, 1.0)
    except BadGeometry:
        return True, ""
    return False, "accepted kappa=0.9"


# ---------------------------------------------------------------- kernels

@check("kernels: constants positive and finite")
def _():
    vals = [getattr(StableParams(n, a), c) for n in (2, 3) for a in (0.3, 1.0, 1.7)
            for c in ("riesz", "poisson", "jump", "exit_time")]
    return all(0 < v < math.inf for v in vals), ""


@check("kernels: free Green homogeneity and symmetry")
def _():
    x, y = _random_pairs(1, 50)
    ok = abs(free_green(P, [0, 0], [2, 0]) - 1 / (4 * math.pi)) < 1e-15
    ok &= bool(np.array_equal(free_green(P, x, y), free_green(P, y, x)))
    return ok, ""


@check("kernels: centred exit density is radial")
def _():
    ys = 1.7 * np.stack([np.cos(np.linspace(0, 6, 7)), np.sin(np.linspace(0, 6, 7))], axis=1)
    v = ball_exit_density(P, BallSpec.unit(2), [0, 0], ys)
    return float(np.ptp(v)) < 1e-15 * float(v.max()), ""


@check("kernels: G_B symmetric and below free Green")
def _():
    x, y = _random_pairs(2, 1000)
    g, gt = ball_green(P, BallSpec.unit(2), x, y), ball_green(P, BallSpec.unit(2), y, x)
    ok = float(np.max(np.abs(g - gt) / g)) < 1e-12 and bool(np.all(g <= free_green(P, x, y)))
    return ok, ""


@check("kernels: exit time scales as r^alpha")
def _():
    a = ball_expected_exit_time(P, BallSpec((0.0, 0.0), 1.0), [0.3, 0.1])
    b = ball_expected_exit_time(P, BallSpec((0.0, 0.0), 2.0), [0.6, 0.2])
    return abs(b / a - 2 ** P.alpha) < 1e-12, f"{b / a}"


@check("kernels: Martin kernel equals 1 at the centre")
def _():
    th = np.linspace(0, 2 * math.pi, 9)
    z = np.stack([np.cos(th), np.sin(th)], axis=1)
    return bool(np.allclose(ball_martin(P, np.zeros((9, 2)), z), 1.0, rtol=0, atol=1e-15)), ""


@check("kernels: jump kernel homogeneity and positivity")
def _():
    a = jump_kernel_density(P, [0, 0], [0.3, 0])
    b = jump_kernel_density(P, [0, 0], [0.6, 0])
    return a > 0 and abs(a / b - 2 ** (P.n + P.alpha)) < 1e-12, ""


@check("kernels: transition density integrates to one and scales")
def _():
    from scipy import integrate

    mass, _ = integrate.quad(lambda r: 2 * math.pi * r * transition_density_oracle(P, 1.0, r), 0, np.inf, limit=200)
    t, r = 0.5, 0.7
    lhs = transition_density_oracle(P, t, r)
    rhs = t ** (-P.n / P.alpha) * transition_density_oracle(P, 1.0, t ** (-1 / P.alpha) * r)
    return abs(mass - 1) < 1e-6 and abs(lhs / rhs - 1) < 1e-8, f"mass={mass:.9f}"


@check("kernels: psi(0) = 1 and F_m -> 0 as m -> 0")
def _():
    from .kernels import relativistic_ingredients

    ing = relativistic_ingredients(P, 1e-12)
    f = ing.F_m(np.zeros(2), np.array([0.5, 0.0]))
    return psi(P, 0.0) == 1.0 and abs(f) < 1e-20, f"{f}"


@check("kernels: free Green rejects coincident points")
def _():
    try:
        free_green(P, [0.1, 0.2], [0.1, 0.2])
    except SingularPoint:
        return True, ""
    return False, "no error"


# ---------------------------------------------------------------- sampler

@check("sampler: ball exits land strictly outside; centred angle uniform (chi2, 32 bins)")
def _():
    gen = RngState(11).generator()
    y = sm.sample_ball_exits(gen, P, BallSpec.unit(2), np.zeros(2), 50_000)
    ang = np.mod(np.arctan2(y[:, 1], y[:, 0]), 2 * math.pi)
    counts = np.bincount((ang / (2 * math.pi) * 32).astype(int) % 32, minlength=32)
    p = stats.chisquare(counts).pvalue
    return bool(np.all(np.linalg.norm(y, axis=1) > 1)) and p > 0.01, f"p={p:.3f}"


@check("sampler: lambda = 1 in a ball is a single exact step")
def _():
    dom = Domain(Ball((0.5, 0.5), 2.0), (0.5, 0.5))
    traces = sm.walk_traces(RngState(12), P, dom, (1.0, 0.0), 20, lam=1.0)
    return all(len(t.steps) == 1 for t in traces), ""


@check("sampler: slitted-rectangle landings inside, exits outside")
def _():
    dom = slitted_rectangle()
    traces = sm.walk_traces(RngState(13), P, dom, dom.x0, 20)
    ok = all(all(dom.contains(l) for _, l in t.steps[:-1]) and not dom.contains(t.exit_point) for t in traces)
    return ok, ""


@check("sampler: harmonic measure of f = 1 is 1 +- 0")
def _():
    e = sm.harmonic_measure_estimate(RngState(14), P, DISK, (0.3, 0.2), lambda y: np.ones(len(y)), 2000)
    return e.mean == 1.0 and e.stderr == 0.0, f"{e.mean}"


@check("sampler: harmonic measure of the first quadrant from 0 is 1/4")
def _():
    f = lambda y: ((y[:, 0] > 0) & (y[:, 1] > 0)).astype(float)
    e = sm.harmonic_measure_estimate(RngState(15), P, DISK, (0.0, 0.0), f, 20_000)
    return abs(e.z_score(0.25)) < 3, f"{e.mean:.4f} +- {e.stderr:.4f}"


@check("sampler: Green estimate symmetric and dominated")
def _():
    x, y = (0.1, 0.2), (-0.4, 0.3)
    a = sm.green_estimate(RngState(16), P, DISK, x, y, 20_000)
    b = sm.green_estimate(RngState(17), P, DISK, y, x, 20_000)
    joint = math.hypot(a.stderr, b.stderr)
    ok = abs(a.mean - b.mean) < 3 * joint and a.mean <= float(free_green(P, x, y)) + 3 * a.stderr
    return ok, f"{a.mean:.4f} vs {b.mean:.4f}"


@check("sampler: Martin ratios are exactly 1 at x = x0")
def _():
    rows = sm.martin_estimate(RngState(18), P, DISK, (0.0, 0.0), (0.0, 0.0), (1.0, 0.0), 4, 2000)
    return all(r.ratio == 1.0 for r in rows), ""


@check("sampler: hitting probability in [0, 1] and monotone in lambda")
def _():
    lo = sm.hitting_prob_estimate(RngState(19), P, DISK, (0.0, 0.0), (0.8, 0.0), 0.3, 5000).estimate
    hi = sm.hitting_prob_estimate(RngState(19), P, DISK, (0.0, 0.0), (0.8, 0.0), 0.6, 5000).estimate
    ok = 0 <= lo.mean <= 1 and 0 <= hi.mean <= 1 and hi.mean >= lo.mean - 3 * lo.stderr
    return ok, f"{lo.mean:.3f} <= {hi.mean:.3f}"


@check("sampler: acceptance normalizer equals h(w)")
def _():
    est, hw = sm.normalizer_estimate(RngState(20), P, (1.0, 0.0), (0.3, 0.1), N=20_000)
    return abs(est.z_score(hw)) < 3, f"{est.mean:.4f} vs {hw:.4f}"


@check("sampler: conditioned lifetime from 0 is rotation invariant")
def _():
    a = sm.conditioned_lifetime_estimate(RngState(21), P, DISK, (1.0, 0.0), (0.0, 0.0), 2000)
    b = sm.conditioned_lifetime_estimate(RngState(22), P, DISK, (0.0, -1.0), (0.0, 0.0), 2000)
    return abs(a.mean - b.mean) < 3 * math.hypot(a.stderr, b.stderr), f"{a.mean:.3f} vs {b.mean:.3f}"


# ---------------------------------------------------------------- feynman_kac

@check("feynman_kac: increment angle uniform (chi2, 32 bins)")
def _():
    inc = fk.stable_increments(RngState(23).generator(), P, 0.01, 50_000)
    ang = np.mod(np.arctan2(inc[:, 1], inc[:, 0]), 2 * math.pi)
    p = stats.chisquare(np.bincount((ang / (2 * math.pi) * 32).astype(int) % 32, minlength=32)).pvalue
    return p > 0.01, f"p={p:.3f}"


@check("feynman_kac: increments scale as dt^(1/alpha)")
def _():
    a = np.linalg.norm(fk.stable_increments(RngState(24).generator(), P, 0.01, 40_000), axis=1)
    b = np.linalg.norm(fk.stable_increments(RngState(25).generator(), P, 0.04, 40_000), axis=1)
    p = stats.ks_2samp(4 ** (1 / P.alpha) * a, b).pvalue
    return p > 0.01, f"p={p:.3f}"


@check("feynman_kac: empty and constant functionals")
def _():
    path = fk.sample_stable_path(RngState(26), P, (0.0, 0.0), 0.01, domain=DISK)
    zero = fk.additive_functional(path, fk.zero_spec(), DISK)
    minus = fk.additive_functional(path, fk.constant_q_spec(-1.0), DISK)
    return zero == 0.0 and abs(minus + path.dt * path.alive_until) < 1e-12, f"{minus}"


@check("feynman_kac: zero perturbation has unit gauge")
def _():
    g = fk.gauge_estimate(RngState(27), P, DISK, fk.zero_spec(), (0.2, 0.0), 0.05, 200)
    return g.coarse.mean == 1.0 and g.fine.mean == 1.0 and g.fine.stderr == 0.0, ""


@check("feynman_kac: relativistic functional of one jump is ln psi")
def _():
    m, d = 1.0, 0.3
    path = fk.DiscretePath(np.zeros(2), np.array([[0.0, 0.0], [d, 0.0]]), 2)
    v = fk.relativistic_functional(path, m, DISK, P)
    tiny = fk.relativistic_functional(path, 1e-12, DISK, P)
    return abs(v - math.log(psi(P, m ** (1 / P.alpha) * d))) < 1e-14 and abs(tiny) < 1e-12, f"{v}"


@check("feynman_kac: zero perturbation gives V = G and K_D = M")
def _():
    res = fk.perturbed_green_series(P, fk.zero_spec(), fk.PolarGrid(8, 8))
    kd = fk.perturbed_martin(P, fk.zero_spec(), (0.5, 0.0), (1.0, 0.0))
    return bool(np.array_equal(res.V, res.G)) and kd == float(ball_martin(P, [0.5, 0.0], [1.0, 0.0])), ""


@check("feynman_kac: K_D(x0, z) = 1 for every z")
def _():
    spec = fk.relativistic_spec(P, 1.0, DISK)
    s = fk.perturbed_green_series(P, spec, fk.PolarGrid(12, 12))
    vals = [fk.perturbed_martin(P, spec, (0.0, 0.0), z, series=s) for z in ((1.0, 0.0), (0.0, -1.0))]
    vals.append(fk.perturbed_martin(P, spec, (0.2, 0.1), (0.6, 0.8), x0=(0.2, 0.1), series=s))
    return all(v == 1.0 for v in vals), ""


# ---------------------------------------------------------------- fatou_lab

@check("fatou_lab: U = 1 Martin integral at 0 is 1; atom gives the kernel")
def _():
    a = fl.martin_integral(P, measures.uniform(), np.zeros(2))
    b = fl.martin_integral(P, measures.atom(0.0), np.array([0.5, 0.0]))
    return abs(a - 1) < 1e-12 and abs(b - float(ball_martin(P, [0.5, 0], [1, 0]))) < 1e-12, f"{a}"


@check("fatou_lab: identical integrands give ratio exactly 1")
def _():
    d = fl.ratio_probe(P, measures.cosine(), measures.cosine(), fl.Radial(0.7, depth=20))
    return bool(np.all(d.ratios == 1.0)) and d.converged and d.verdict.limit == 1.0, ""


@check("fatou_lab: smaller eps gives smaller delta")
def _():
    a = fl.lemma_3_19_delta(P, 0.1, 0.785).delta_used
    b = fl.lemma_3_19_delta(P, 0.05, 0.785).delta_used
    return b < a, f"{b:.4f} < {a:.4f}"


@check("fatou_lab: tangential circle leaves every Stolz cone near the boundary")
def _():
    tc = fl.TangentialCircle(0.0)
    sp = StolzParams(DISK, (1.0, 0.0), 3.0)
    pts = [tc.point(tc.psi_at_depth(d)) for d in np.geomspace(1e-3, 1e-6, 12)]
    return not any(stolz_contains(sp, p) for p in pts), ""


@check("fatou_lab: u = h recovers phi = 1")
def _():
    r = fl.radon_nikodym_recover(P, measures.uniform(), measures.uniform(), M=16)
    return r.max_rel_error < 1e-6 and bool(np.allclose(r.phi_hat, 1.0)), f"{r.max_rel_error:.1e}"


@check("fatou_lab: g = 0 reduces the representation to the Martin integral")
def _():
    x = np.array([0.3, -0.2])
    res = fl.poisson_martin_representation_check(P, lambda y: np.zeros(len(y)), measures.cosine(), [x])
    direct = fl.martin_integral(P, measures.cosine(), x)
    return abs(float(res.u[0]) - direct) < 1e-10, ""


def run_all(seed: int = 0, threads: int | None = None) -> list[CheckResult]:
    """Run every check. ``seed`` and ``threads`` are accepted for interface symmetry;
    each check pins its own seed and results do not depend on the thread count."""
    from .rng import default_threads, set_default_threads

    saved = default_threads()
    if threads:
        set_default_threads(threads)
    out = []
    try:
        for name, fn in _CHECKS:
            try:
                ok, detail = fn()
                out.append(CheckResult(name, bool(ok), detail))
            except (StableLabError, ValueError, NotImplementedError) as exc:
                out.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))
    finally:
        set_default_threads(saved)
    return out


def main() -> int:
    results = run_all()
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name}  {r.detail}")
    return 0 if all(r.ok for r in results) else 1


if __name__ == "__main__":
    raise SystemExit(main())
