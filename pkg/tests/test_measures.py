import math

import numpy as np
import pytest
from scipy import integrate

from stablelab import measures
from stablelab.measures import BoundaryMeasure


def mass_by_quad(m):
    edges = sorted({0.0, 2 * math.pi, *[t % (2 * math.pi) for t in m.breakpoints]})
    dens = sum(integrate.quad(lambda t: float(m.U(t)), a, b, limit=200)[0] for a, b in zip(edges[:-1], edges[1:]))
    return dens / (2 * math.pi) + m.atom_mass


@pytest.mark.parametrize("m", [measures.uniform(), measures.uniform(2.5), measures.cosine(0.5, 0.5),
                               measures.cosine(1.0, -0.3), measures.arc_indicator(0.0, 0.5),
                               measures.arc_indicator(3.0, 1.0, 2.0),
                               measures.piecewise_constant([(0, 1, 1.0), (5.5, 7.0, 3.0)])])
def test_total_mass(m):
    assert m.total_mass() == pytest.approx(mass_by_quad(m), rel=1e-10)


def test_known_masses():
    assert measures.uniform().total_mass() == pytest.approx(1.0)
    assert measures.cosine(0.5, 0.5).total_mass() == pytest.approx(0.5)
    assert measures.arc_indicator(0.0, 0.5).total_mass() == pytest.approx(1 / (2 * math.pi))
    assert measures.atom(1.0, 0.3).total_mass() == pytest.approx(0.3)


def test_arc_wraps_around_zero():
    m = measures.arc_indicator(0.0, 0.5)
    np.testing.assert_array_equal(m.U([0.0, 0.4, 2 * math.pi - 0.4, 0.6, math.pi]), [1, 1, 1, 0, 0])
    assert m.U(-0.2) == 1.0


def test_density_below_sup():
    th = np.linspace(0, 2 * math.pi, 1001)
    for m in (measures.cosine(0.7, -0.6), measures.piecewise_constant([(0, 2, 1.0), (1, 3, 2.0)]),
              measures.uniform() + measures.arc_indicator(1.0, 0.2, 4.0)):
        assert np.all(m.U(th) <= m.sup + 1e-12)


def test_sum_scale_multiply():
    m = measures.uniform() + measures.atom(0.5, 2.0)
    assert m.total_mass() == pytest.approx(3.0)
    s = m.scaled(0.5)
    assert s.total_mass() == pytest.approx(1.5) and s.atom_mass == 1.0
    g = measures.cosine(1.0, 1.0).multiplied(lambda t: (np.cos(t) > 0).astype(float), 1.0,
                                             (math.pi / 2, 3 * math.pi / 2))
    assert g.total_mass() == pytest.approx(0.5 + 1 / math.pi, rel=1e-10)
    assert g.atoms == ()


def test_invalid_measures():
    with pytest.raises(ValueError):
        measures.cosine(0.2, 0.5)
    with pytest.raises(ValueError):
        measures.atom(0.0, -1.0)
    with pytest.raises(ValueError):
        measures.piecewise_constant([(1.0, 0.5, 1.0)])
    with pytest.raises(ValueError):
        BoundaryMeasure(lambda t: t, sup=0.0)
    with pytest.raises(ValueError):
        measures.atom(0.0).multiplied(np.cos, 1.0)
    with pytest.raises(ValueError):
        measures.uniform().scaled(-1)
