import math

import numpy as np
import pytest
from scipy import stats

from stablelab import sampler as sm
from stablelab.errors import BadGeometry, EnvelopeViolation, SingularPoint
from stablelab.geometry import Ball, Domain
from stablelab.kernels import (BallSpec, StableParams, ball_exit_radial_cdf, ball_expected_exit_time, ball_green,
                               ball_martin, free_green)
from stablelab.measures import uniform
from stablelab.rng import RngState


def within(est, target, k=4.0):
    return abs(est.mean - target) <= k * est.stderr


@pytest.mark.parametrize("alpha", [0.6, 1.0, 1.6])
def test_centred_exit_radius_law(alpha):
    p = StableParams(2, alpha)
    y = sm.sample_ball_exits(RngState(1).generator(), p, BallSpec.unit(2), np.zeros(2), 20_000)
    s = np.linalg.norm(y, axis=1)
    assert np.all(s > 1)
    assert stats.kstest(s, lambda v: ball_exit_radial_cdf(p, v)).pvalue > 1e-3


@pytest.mark.parametrize("alpha", [0.7, 1.0, 1.5])
def test_offcentre_exit_law_by_green_decomposition(alpha):
    """E_x[G(Y, t)] = G(x, t) - G_B(x, t) for t inside the ball."""
    p = StableParams(2, alpha)
    ball = BallSpec((0.2, -0.1), 1.5)
    x, t = np.array([0.8, 0.3]), np.array([-0.4, -0.2])
    y = sm.sample_ball_exits(RngState(2).generator(), p, ball, x, 40_000)
    assert np.all(np.linalg.norm(y - ball.c, axis=1) > ball.radius)
    vals = free_green(p, y, t)
    target = float(free_green(p, x, t)) - float(ball_green(p, ball, x, t))
    assert abs(vals.mean() - target) < 4 * vals.std() / math.sqrt(vals.size)


def test_exit_sampler_rejects_outside_start(cauchy, unit_ball):
    with pytest.raises(BadGeometry):
        sm.sample_ball_exits(RngState(0).generator(), cauchy, unit_ball, [1.0, 0.0], 3)


@pytest.mark.parametrize("alpha", [0.8, 1.0, 1.4])
def test_walk_exit_law_in_disk(alpha, disk):
    """The multi-step walk must reproduce the one-ball exit law of the disk."""
    p = StableParams(2, alpha)
    x, t = (0.5, 0.2), np.array([-0.3, 0.1])
    est = sm.harmonic_measure_estimate(RngState(3), p, disk, x, lambda y: free_green(p, y, t), 40_000)
    target = float(free_green(p, x, t)) - float(ball_green(p, BallSpec.unit(2), x, t))
    assert within(est, target) and est.flagged == 0


def test_expected_exit_time_estimate(cauchy, disk):
    x = (0.3, -0.4)
    est = sm.expected_exit_time_estimate(RngState(4), cauchy, disk, x, 40_000)
    assert within(est, ball_expected_exit_time(cauchy, BallSpec.unit(2), x))


def test_estimates_thread_independent(cauchy, disk):
    f = lambda y: y[:, 0] ** 2
    a = sm.harmonic_measure_estimate(RngState(5), cauchy, disk, (0.1, 0.1), f, 70_000, threads=1)
    b = sm.harmonic_measure_estimate(RngState(5), cauchy, disk, (0.1, 0.1), f, 70_000, threads=3)
    assert a == b


def test_lambda_one_single_step(cauchy):
    dom = Domain(Ball((0.5, 0.5), 2.0), (0.5, 0.5))
    res = sm.walk_batch(RngState(6).generator(), cauchy, dom, (1.0, 0.0), 100, lam=1.0)
    assert np.all(res.steps == 1)
    assert np.all(np.linalg.norm(res.exits - dom.shape.c, axis=1) > 2.0)


def test_walk_traces_geometry(cauchy, slitted):
    for tr in sm.walk_traces(RngState(7), cauchy, slitted, slitted.x0, 10):
        for ball, landing in tr.steps[:-1]:
            assert slitted.contains(landing)
        for ball, _ in tr.steps:
            # each ball is a proper fraction of the distance to the complement
            assert ball.radius == pytest.approx(sm.DEFAULT_LAMBDA * float(slitted.dist(ball.c)), rel=1e-12)
        assert not slitted.contains(tr.exit_point)
        rows = tr.rows()
        assert [r[0] for r in rows] == list(range(len(tr.steps))) and all(len(r) == 6 for r in rows)


@pytest.mark.parametrize("method", ["decomposition", "occupation"])
def test_green_estimate(cauchy, disk, method):
    x, y = (0.2, 0.1), (-0.3, 0.3)
    est = sm.green_estimate(RngState(8), cauchy, disk, x, y, 40_000, method=method)
    assert within(est, float(ball_green(cauchy, BallSpec.unit(2), x, y)), k=5)


def test_green_estimate_rejects_diagonal(cauchy, disk):
    with pytest.raises(SingularPoint):
        sm.green_estimate(RngState(0), cauchy, disk, (0.1, 0.1), (0.1, 0.1), 10)
    with pytest.raises(ValueError):
        sm.green_samples(RngState(0), cauchy, disk, (0.1, 0.1), [(0.2, 0.2)], 10, method="nope")


def test_ratio_with_stderr():
    gen = np.random.default_rng(0)
    b = gen.uniform(1, 2, 10_000)
    r, se = sm.ratio_with_stderr(3 * b, b)
    assert r == pytest.approx(3.0) and se < 1e-8
    a = gen.uniform(0, 1, 10_000)
    r, se = sm.ratio_with_stderr(a, b)
    assert abs(r - 0.5 / 1.5) < 4 * se


def test_martin_estimate_ball(cauchy, disk):
    rows = sm.martin_estimate(RngState(9), cauchy, disk, (0.5, 0.0), (0.0, 0.0), (1.0, 0.0), 6, 20_000)
    last = rows[-1]
    assert abs(last.ratio - 2 * math.sqrt(3)) < 4 * last.stderr
    exact = [float(ball_green(cauchy, BallSpec.unit(2), (0.5, 0), r.y) / ball_green(cauchy, BallSpec.unit(2), (0, 0), r.y))
             for r in rows]
    assert all(abs(r.ratio - e) < 4.5 * r.stderr for r, e in zip(rows, exact))
    assert sm.cauchy_diagnostic(rows, start=3)["passed"]


def test_martin_ratios_one_at_reference(cauchy, slitted):
    rows = sm.martin_estimate(RngState(10), cauchy, slitted, slitted.x0, slitted.x0, (0.0, 0.0), 3, 500)
    assert all(r.ratio == 1.0 for r in rows)


def test_hitting_probability(cauchy, disk):
    reps = [sm.hitting_prob_estimate(RngState(11), cauchy, disk, (0.0, 0.0), (0.7, 0.0), lt, 20_000).estimate
            for lt in (0.2, 0.5, 0.9)]
    assert all(0 < e.mean < 1 for e in reps)
    assert reps[0].mean < reps[1].mean < reps[2].mean
    with pytest.raises(BadGeometry):
        sm.hitting_prob_estimate(RngState(0), cauchy, disk, (0.6, 0.0), (0.7, 0.0), 0.5, 10)


def test_conditioned_chains_converge_to_pole(cauchy, disk):
    z = np.array([0.0, 1.0])
    h = sm.BallMartinHarmonic.pole(cauchy, z)
    summary = sm.conditioned_endpoints(RngState(12), cauchy, disk, h, (0.3, -0.2), 2000)
    d = np.linalg.norm(summary.endpoints - z, axis=1)
    assert np.mean(d < 0.05) >= 0.99 and not summary.capped.any()


@pytest.mark.parametrize("w", [(0.3, 0.1), (0.8, 0.5), (-0.6, 0.0)])
def test_envelope_normalizer(cauchy, w):
    est, hw = sm.normalizer_estimate(RngState(13), cauchy, (1.0, 0.0), w, N=50_000)
    assert within(est, hw)


def test_conditioned_lifetime(cauchy, disk):
    est = sm.conditioned_lifetime_estimate(RngState(14), cauchy, disk, (1.0, 0.0), (0.0, 0.0), 5000)
    assert within(est, math.pi / 4)


def test_uniform_mixture_poles_are_uniform(cauchy):
    h = sm.BallMartinHarmonic(cauchy, uniform())
    poles = h.sample_poles(RngState(15).generator(), np.zeros(2), 20_000)
    ang = np.mod(np.arctan2(poles[:, 1], poles[:, 0]), 2 * math.pi)
    counts = np.bincount((ang / (2 * math.pi) * 16).astype(int) % 16, minlength=16)
    assert stats.chisquare(counts).pvalue > 1e-3
    # int M_B(x, w) sigma_1(dw) = (1 - |x|^2)^(alpha/2 - 1) for n = 2
    assert float(h(np.zeros(2))) == pytest.approx(1.0, rel=1e-8)
    assert float(h(np.array([0.2, 0.3]))) == pytest.approx(0.87 ** -0.5, rel=1e-6)


def test_bounded_harmonic_envelope_checked(cauchy, disk):
    h = sm.BoundedHarmonic(lambda y: ball_martin(cauchy, y, np.array([1.0, 0.0])), lambda w, rho: 1e-3)
    with pytest.raises(EnvelopeViolation):
        sm.sample_conditioned_chain(RngState(16), cauchy, disk, h, (0.2, 0.0))


def test_conditioning_preconditions(cauchy, slitted, disk):
    h = sm.BallMartinHarmonic.pole(cauchy, (1.0, 0.0))
    with pytest.raises(BadGeometry):
        sm.conditioned_endpoints(RngState(0), cauchy, slitted, h, slitted.x0, 10)
    with pytest.raises(ValueError):
        sm.conditioned_endpoints(RngState(0), cauchy, disk, h, (0.0, 0.0), 10, caps=sm.Caps(lam=1.0))
