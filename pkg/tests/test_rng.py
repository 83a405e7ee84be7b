import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stablelab.rng import (CHUNK_SIZE, MCEstimate, Moments, RngState, chunk_sizes, estimate_from_chunks,
                           map_chunks, pairwise_reduce)


def test_same_seed_same_stream():
    a = RngState(11).generator().random(5)
    b = RngState(11).generator().random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, RngState(12).generator().random(5))


def test_substreams_distinct():
    base = RngState(3)
    draws = [base.substream(i).generator().random(4) for i in range(20)]
    assert len({tuple(d) for d in draws}) == 20
    assert base.substream(0) != base and base.substream(0).substream(0) != base.substream(1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60), st.integers(1, 59))
def test_moment_merge_matches_direct(values, cut):
    values = np.array(values)
    cut = min(cut, len(values) - 1)
    merged = Moments.of(values[:cut]).merge(Moments.of(values[cut:]))
    direct = Moments.of(values)
    assert merged.n == direct.n
    assert merged.mean == pytest.approx(direct.mean, abs=1e-9)
    assert merged.m2 == pytest.approx(direct.m2, rel=1e-8, abs=1e-6)


def test_empty_moments_are_identity():
    m = Moments.of([1.0, 2.0, 4.0])
    assert Moments.of([]).merge(m) == m and m.merge(Moments.of([])) == m


def test_pairwise_reduce_order():
    assert pairwise_reduce(list("abcde"), lambda x, y: f"({x}{y})") == "(((ab)(cd))e)"
    with pytest.raises(ValueError):
        pairwise_reduce([], max)


def test_chunk_sizes():
    assert chunk_sizes(10, 4) == [4, 4, 2]
    assert sum(chunk_sizes(100_001)) == 100_001
    assert chunk_sizes(CHUNK_SIZE) == [CHUNK_SIZE]


def test_map_chunks_thread_independent():
    fn = lambda g, size: g.standard_normal(size)
    one = map_chunks(fn, 20_000, RngState(5), threads=1)
    many = map_chunks(fn, 20_000, RngState(5), threads=4)
    for a, b in zip(one, many):
        np.testing.assert_array_equal(a, b)
    e1, e4 = estimate_from_chunks(one), estimate_from_chunks(many)
    assert e1 == e4
    assert abs(e1.z_score(0.0)) < 4
    assert e1.stderr == pytest.approx(1 / math.sqrt(20_000), rel=0.05)


def test_estimate_validation():
    with pytest.raises(ValueError):
        MCEstimate(0.0, -1.0, 3)
    with pytest.raises(ValueError):
        MCEstimate(0.0, 1.0, 0)
    assert MCEstimate(1.0, 0.0, 1).z_score(1.0) == 0.0
    assert MCEstimate(1.0, 0.5, 10).z_score(0.0) == 2.0
    assert MCEstimate(1.0, 0.5, 10).as_dict()["n_samples"] == 10
