import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from stablelab import fatou_lab as fl
from stablelab import measures
from stablelab.errors import BadGeometry, BandViolated, UnboundedRatio
from stablelab.geometry import StolzParams, stolz_contains, unit_disk
from stablelab.kernels import BallSpec, StableParams, ball_exit_density, ball_exit_radial_cdf, ball_martin


def martin_integral_by_quad(params, measure, x):
    """Direct angular quadrature of M_B(x, e^{i theta}) U(theta) d theta / 2 pi."""
    th_x = math.atan2(x[1], x[0])
    pts = sorted({t % (2 * math.pi) for t in (*measure.breakpoints, th_x)})
    f = lambda t: float(ball_martin(params, x, np.array([math.cos(t), math.sin(t)]))) * float(measure.U(t))
    return integrate.quad(f, 0, 2 * math.pi, points=pts, limit=500, epsabs=1e-13, epsrel=1e-12)[0] / (2 * math.pi)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
@pytest.mark.parametrize("m", [measures.cosine(0.6, 0.4), measures.arc_indicator(0.3, 0.7, 2.0),
                               measures.uniform() + measures.arc_indicator(2.0, 0.2, 3.0)])
def test_martin_integral_matches_direct_quadrature(alpha, m):
    p = StableParams(2, alpha)
    for x in ([0.0, 0.0], [0.4, -0.3], [0.0, 0.9]):
        x = np.array(x)
        assert fl.martin_integral(p, m, x) == pytest.approx(martin_integral_by_quad(p, m, x), rel=1e-8)


def test_martin_integral_atoms(cauchy):
    x = np.array([0.2, 0.5])
    m = measures.atom(1.0, 0.3) + measures.atom(4.0, 0.7)
    expected = sum(w * float(ball_martin(cauchy, x, [math.cos(a), math.sin(a)])) for a, w in ((1.0, 0.3), (4.0, 0.7)))
    assert fl.martin_integral(cauchy, m, x) == pytest.approx(expected, rel=1e-14)


def test_martin_integral_near_boundary(cauchy):
    """Deep points: the substitution keeps the quadrature accurate where the kernel is a spike."""
    m = measures.cosine(0.5, 0.5)
    for rho in (1 - 1e-4, 1 - 1e-7):
        x = rho * np.array([math.cos(0.3), math.sin(0.3)])
        # Poisson extension of 0.5 + 0.5 cos is 0.5 + 0.5 rho cos
        expected = (1 - rho * rho) ** -0.5 * (0.5 + 0.5 * rho * math.cos(0.3))
        assert fl.martin_integral(cauchy, m, x) == pytest.approx(expected, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 0.99), st.floats(-math.pi, math.pi), st.floats(-3, 3), st.floats(0.01, 3.0))
def test_arc_harmonic_measure(rho, th_x, lo, length):
    """Classical formula: the arc's harmonic measure is (angle subtended at x - arc length / 2) / pi."""
    x = rho * np.array([math.cos(th_x), math.sin(th_x)])
    a = np.array([math.cos(lo), math.sin(lo)])
    b = np.array([math.cos(lo + length), math.sin(lo + length)])
    cross = (a - x)[0] * (b - x)[1] - (a - x)[1] * (b - x)[0]
    subtended = math.atan2(cross, (a - x) @ (b - x)) % (2 * math.pi)
    expected = (subtended - length / 2) / math.pi
    assert fl._arc_harmonic_measure(lo, lo + length, th_x, rho) == pytest.approx(expected, abs=1e-9)


def test_ratio_independent_of_alpha():
    u, h = measures.cosine(0.5, 0.3), measures.uniform() + measures.arc_indicator(1.0, 0.5)
    x = np.array([0.3, 0.6])
    vals = [fl.martin_ratio(StableParams(2, a), u, h, x)[2] for a in (0.4, 1.0, 1.7)]
    assert np.ptp(vals) < 1e-12


def test_classify():
    assert isinstance(fl.classify([3, 2, 1.5, 1.2, 1.0001, 1.0, 1.0, 1.0]), fl.Converged)
    v = fl.classify([0, 1, 0, 1, 0, 1, 0, 1])
    assert isinstance(v, fl.Oscillating) and v.amplitude == 1.0
    with pytest.raises(ValueError):
        fl.classify([1, 1, 1])


@pytest.mark.parametrize("side", [0, 1, -1])
def test_stolz_edge_points_inside_cone(side):
    path = fl.StolzSequence(0.7, beta=3.0, side=side, depth=30)
    sp = StolzParams(unit_disk(), tuple(path.z), 3.0)
    pts = path.points()
    assert all(stolz_contains(sp, p) for p in pts)
    d = np.linalg.norm(pts - path.z, axis=1)
    assert np.all(np.diff(d) < 0) and d[-1] < 1e-8
    with pytest.raises(BadGeometry):
        fl.StolzSequence(0.0, beta=1.0).points()


def test_tangential_circle_depths():
    tc = fl.TangentialCircle(1.0, rho_c=0.3)
    for d in (1e-2, 1e-4, 1e-7):
        p = tc.point(tc.psi_at_depth(d))
        assert 1 - np.linalg.norm(p) == pytest.approx(d, rel=1e-6)
    with pytest.raises(BadGeometry):
        fl.TangentialCircle(0.0, rho_c=1.0)


def test_radial_limit_is_boundary_value(cauchy):
    """For a continuous density the radial limit of u / h is the density ratio at the endpoint."""
    u, h = measures.cosine(0.5, 0.4), measures.uniform()
    for theta in (0.0, 2.0):
        d = fl.ratio_probe(cauchy, u, h, fl.Radial(theta))
        assert d.converged and d.verdict.limit == pytest.approx(0.5 + 0.4 * math.cos(theta), abs=1e-6)
        assert len(d.rows()) == fl.PROBE_DEPTH and d.summary()["verdict"] == "converged"


def test_arc_limits_agree_along_all_approaches(cauchy):
    u, h = measures.arc_indicator(0.0, 0.5), measures.uniform()
    paths = [fl.Radial(0.0), fl.StolzSequence(0.0, side=1), fl.StolzSequence(0.0, side=0, rule="corkscrew")]
    for path in paths:
        d = fl.ratio_probe(cauchy, u, h, path)
        assert d.converged and abs(d.verdict.limit - 1.0) < 1e-3


def test_band_lemma(cauchy):
    rep = fl.lemma_3_19_delta(cauchy, 0.1, 0.785)
    assert rep.band_ok and 0 < rep.delta_used <= 1 / math.pi
    assert all(0.9 <= r <= 1 for r in rep.ratios)
    smaller = fl.lemma_3_19_delta(cauchy, 0.01, 0.785)
    assert smaller.delta_used < rep.delta_used
    with pytest.raises(ValueError):
        fl.lemma_3_19_delta(cauchy, 0.1, 4.0)


def test_band_violation_reported(cauchy, monkeypatch):
    # a tight epsilon is still met after recalibrating delta
    rep = fl.lemma_3_19_delta(cauchy, 1e-3, 0.785, raise_on_failure=False)
    assert rep.band_ok
    # a ratio stuck at 1/2 must be reported with the offending radius
    monkeypatch.setattr(fl, "martin_ratio", lambda *a: (0.5, 1.0, 0.5))
    with pytest.raises(BandViolated) as info:
        fl.lemma_3_19_delta(cauchy, 0.1, 0.785)
    assert info.value.rho is not None


def test_oscillation_witness(cauchy):
    rep = fl.oscillation_witness(cauchy, K=5)
    assert rep.oscillation >= fl.OSC_MIN
    assert rep.radial_converged >= 15
    assert rep.summary()["arcs"] == 20


def test_rn_recovery(cauchy):
    rep = fl.radon_nikodym_recover(cauchy, measures.cosine(0.5, 0.5), measures.uniform())
    assert rep.max_rel_error < 1e-2
    np.testing.assert_allclose(rep.phi_hat, 0.5 + 0.5 * np.cos(rep.angles), atol=1e-3)
    with pytest.raises(UnboundedRatio):
        fl.radon_nikodym_recover(cauchy, measures.atom(0.0), measures.uniform(), M=8)
    with pytest.raises(ValueError):
        fl.radon_nikodym_recover(cauchy, measures.uniform(), measures.atom(0.0))


@pytest.mark.parametrize("alpha", [0.6, 1.0, 1.5])
def test_poisson_part_at_centre(alpha):
    p = StableParams(2, alpha)
    g = fl.annulus_indicator(1.2, 2.0)
    val = fl.poisson_part(p, g, np.zeros(2), 1.2, 2.0)
    assert val == pytest.approx(ball_exit_radial_cdf(p, 2.0) - ball_exit_radial_cdf(p, 1.2), rel=1e-8)
    full = fl.poisson_part(p, lambda y: np.ones(len(y)), np.zeros(2), 1.0, 3.0)
    assert full == pytest.approx(ball_exit_radial_cdf(p, 3.0), rel=1e-8)


def test_poisson_part_off_centre(cauchy):
    x = np.array([0.4, 0.3])
    g = lambda y: np.asarray(y)[..., 0] ** 2
    f = lambda th, s: s * float(ball_exit_density(cauchy, BallSpec.unit(2), x, [s * math.cos(th), s * math.sin(th)])) \
        * (s * math.cos(th)) ** 2
    direct = integrate.dblquad(f, 1.2, 2.0, 0, 2 * math.pi, epsabs=1e-11)[0]
    assert fl.poisson_part(cauchy, g, x, 1.2, 2.0) == pytest.approx(direct, rel=1e-7)
    with pytest.raises(ValueError):
        fl.poisson_part(cauchy, g, x, 0.5, 2.0)


def test_representation(cauchy):
    xs = [[0.0, 0.0], [0.3, -0.4]]
    from stablelab.rng import RngState
    rep = fl.poisson_martin_representation_check(cauchy, fl.annulus_indicator(), measures.cosine(), xs,
                                                 rng=RngState(3), N=20_000)
    assert rep.max_z < 4 and rep.bounded
    np.testing.assert_allclose(rep.u, rep.poisson + rep.martin)
    zero = fl.poisson_martin_representation_check(cauchy, lambda y: np.zeros(len(y)), measures.cosine(), xs)
    assert zero.u[1] == pytest.approx(fl.martin_integral(cauchy, measures.cosine(), np.array(xs[1])), rel=1e-12)
