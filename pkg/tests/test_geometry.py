import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stablelab.errors import BadGeometry, NoCorkscrew
from stablelab.geometry import (Ball, Domain, FatCharacteristics, PolygonUnion, SlittedRectangle, StolzParams,
                                corkscrew_point, corkscrew_sequence, dist_to_complement, slitted_rectangle,
                                stolz_contains, unit_disk, verify_kappa_fat)


def brute_force_dist(shape, x, per_segment=20001):
    best = math.inf
    for a, b in shape.segments():
        t = np.linspace(0, 1, per_segment)[:, None]
        pts = a + t * (b - a)
        best = min(best, float(np.min(np.linalg.norm(pts - x, axis=1))))
    return best


def test_disk_distances(disk):
    assert dist_to_complement(disk, [0, 0]) == 1.0
    assert dist_to_complement(disk, [0.9, 0]) == pytest.approx(0.1, abs=1e-15)
    assert dist_to_complement(disk, [1.5, 0]) == 0.0


def test_slitted_distance_matches_brute_force():
    dom = slitted_rectangle(k_max=5)
    x = np.array([0.0, 0.1875])
    assert dist_to_complement(dom, x) == pytest.approx(0.0625, abs=1e-15)
    assert brute_force_dist(dom.shape, x) == pytest.approx(0.0625, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.99, 0.99), st.floats(0.001, 0.999))
def test_slitted_distance_property(px, py):
    shape = SlittedRectangle(5)
    x = np.array([px, py])
    if np.min(np.abs(shape.levels - py)) == 0:
        return
    assert shape.dist(x) == pytest.approx(brute_force_dist(shape, x), abs=2e-4)


def test_radial_corkscrews(disk):
    np.testing.assert_allclose(corkscrew_point(disk, [1, 0], 0.5), [0.75, 0], atol=1e-15)
    np.testing.assert_allclose(corkscrew_point(disk, [0, -1], 0.2), [0, -0.9], atol=1e-15)


def test_corkscrew_preconditions(disk):
    with pytest.raises(BadGeometry):
        corkscrew_point(disk, [1, 0], 1.5)
    with pytest.raises(BadGeometry):
        corkscrew_point(disk, [0.5, 0], 0.1)


def test_slitted_corkscrew_at_origin():
    slitted = slitted_rectangle(R=0.125)
    r = 2.0 ** -4
    a = corkscrew_point(slitted, [0, 0], r)
    kappa = slitted.fat.kappa
    assert 0 < a[1] < r  # an open strip between slits inside B(0, r)
    assert np.min(np.abs(slitted.shape.levels - a[1])) > 0
    assert dist_to_complement(slitted, a) >= kappa * r * (1 - 1e-9)
    assert np.linalg.norm(a) + kappa * r <= r * (1 + 1e-9)


def test_corkscrew_postcondition_random(disk, slitted):
    gen = np.random.default_rng(3)
    for dom in (disk, slitted):
        zs = dom.boundary_points(200)
        for z in zs[gen.choice(len(zs), 40, replace=False)]:
            r = dom.fat.R * gen.uniform(0.05, 0.95)
            a = corkscrew_point(dom, z, r)
            k = dom.fat.kappa
            assert dist_to_complement(dom, a) >= k * r * (1 - 1e-9)
            assert np.linalg.norm(a - z) + k * r <= r * (1 + 1e-9)


def test_stolz_examples(disk):
    sp = StolzParams(disk, (1.0, 0.0), 2.0)
    assert stolz_contains(sp, [0.9, 0])
    assert not stolz_contains(sp, [0.5, 0])
    narrow = StolzParams(disk, (1.0, 0.0), 1.05)
    y = np.array([0.92, 0.06])
    d = 1 - np.linalg.norm(y)
    assert np.linalg.norm(y - [1, 0]) > 1.05 * d  # direct evaluation of the aperture inequality
    assert not stolz_contains(narrow, y)


def test_stolz_aperture_must_exceed_fatness_bound(disk):
    with pytest.raises(BadGeometry):
        StolzParams(disk, (1.0, 0.0), 0.9)


def test_corkscrew_sequence_radial():
    dom = unit_disk(0.5, 0.5)
    ys = corkscrew_sequence(dom, [1, 0], 3)
    np.testing.assert_allclose(ys, [[0.875, 0], [0.9375, 0], [0.96875, 0]], atol=1e-15)


@pytest.mark.parametrize("make", [unit_disk, slitted_rectangle])
def test_corkscrew_sequence_converges_and_enters_cones(make):
    dom = make()
    z = np.array([1.0, 0.0]) if make is unit_disk else np.array([0.0, 0.0])
    ys = corkscrew_sequence(dom, z, 8)
    kappa, R = dom.fat.kappa, dom.fat.R
    sp = StolzParams(dom, tuple(z), (1 - kappa) / kappa + 0.01)
    cap = min(float(dist_to_complement(dom, np.asarray(dom.x0))) / 3, R)
    for k, y in enumerate(ys, 1):
        d = float(dist_to_complement(dom, y))
        assert d > 0
        assert np.linalg.norm(y - z) <= R / 2 ** k * (1 + 1e-12)
        assert np.linalg.norm(y - z) <= (1 - kappa) / kappa * d * (1 + 1e-9)
        if d < cap:
            assert stolz_contains(sp, y)


def test_verify_fat():
    assert verify_kappa_fat(unit_disk(), 64, [0.5, 0.25, 0.125, 0.0625]).ok
    rep = verify_kappa_fat(slitted_rectangle(k_max=6, kappa=1 / 8, R=2.0 ** -6), 256, [2.0 ** -7])
    assert rep.ok and rep.n_checked == 256


def test_overclaimed_fatness_is_caught():
    dom = slitted_rectangle(k_max=6, kappa=0.5, R=0.5)
    assert not verify_kappa_fat(dom, 32, [0.4]).ok
    with pytest.raises(NoCorkscrew):
        corkscrew_point(dom, [0, 0.25], 0.4)


def test_fat_characteristics_invariant():
    with pytest.raises(BadGeometry):
        FatCharacteristics(0.9, 1.0)
    with pytest.raises(BadGeometry):
        Domain(Ball((0.0, 0.0), 1.0), (2.0, 0.0))


def test_polygon_union_distance():
    square = ((-1, -1), (1, -1), (1, 1), (-1, 1))
    tri = ((1, -1), (2, 0), (1, 1))
    dom = Domain(PolygonUnion((square, tri)), (0.0, 0.0), FatCharacteristics(0.25, 0.25))
    assert dom.dist([0.0, 0.0]) == pytest.approx(1.0)
    assert dom.dist([1.2, 0.0]) > 0  # inside the triangle, across the shared edge
    assert dom.dist([3.0, 0.0]) == 0.0
