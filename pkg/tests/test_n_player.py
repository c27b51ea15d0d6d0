import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfgstop import mean_field as mf
from mfgstop import n_player as npl
from mfgstop.errors import NotFound, OrderViolation
from mfgstop.monte_carlo import uniforms
from mfgstop.signal_models import GameParams, preset

from oracles import brute_double_fixed_point, brute_K, brute_K_star

RC1 = GameParams(1.0, 1.0)


def sample(values, params=RC1):
    return npl.SignalSample(np.asarray(values, dtype=float), params)


def test_count_G_examples():
    s = sample([0.5, 0.5, 2, 2])
    assert npl.count_G(s, 0) == 2
    assert npl.count_G(s, 2) == 4
    assert npl.count_G(s, -1) == npl.count_G(s, 0)
    nonneg = sample([0.0, 0.3, 0.9], GameParams(0.5, 1.0))
    assert npl.count_G(nonneg, 3) == 3


def test_enumerate_examples():
    eq = npl.enumerate_equilibria(sample([0.5, 0.5, 2, 2]))
    assert eq.K == (4,)
    eq = npl.enumerate_equilibria(sample([0.5, 0.5, 0.5, 2]))
    assert eq.K == (1, 4)
    eq = npl.enumerate_equilibria(sample([-3.0, -2.0, -0.5]))
    assert eq.K == (0,)


def test_minimal_maximal_examples():
    a = sample([0.5, 0.5, 2, 2])
    b = sample([0.5, 0.5, 0.5, 2])
    assert npl.minimal_from(a, 0) == 4
    assert npl.minimal_from(b, 0) == 1
    assert npl.minimal_from(b, 2) == 4
    assert npl.maximal_from(b, 0) == 4
    assert npl.maximal_from(sample([-3.0, -2.0]), 0) == 0
    m, p = preset("example-5.8")
    s = npl.make_sample(m, p.with_n(500), 0.3, uniforms(1, 0, 500))
    assert npl.maximal_from(s, 0) == 500


def test_double_fixed_point_examples():
    assert npl.double_fixed_point(lambda j: 7, 3, 10) == 7
    h = 9
    assert npl.double_fixed_point(lambda j: j + 1 if j < h else h, 4, h) == h
    with pytest.raises(NotFound):
        npl.double_fixed_point(lambda j: 0, 3, 10)
    with pytest.raises(NotFound):
        npl.double_fixed_point(lambda j: 20, 3, 10)


def random_monotone_map(rng, lo, hi, into=True):
    """Nondecreasing map on lo-1..hi, into lo..hi when ``into``."""
    size = hi - lo + 2
    a, b = (lo, hi) if into else (lo - 3, hi + 3)
    vals = np.sort(rng.integers(a, b + 1, size))
    table = {lo - 1 + i: int(v) for i, v in enumerate(vals)}
    return table.__getitem__


def test_double_fixed_point_random():
    rng = np.random.default_rng(5)
    for trial in range(2000):
        lo = int(rng.integers(0, 20))
        hi = lo + int(rng.integers(0, 15))
        into = trial % 3 != 0
        f = random_monotone_map(rng, lo, hi, into)
        maps_into = f(lo - 1) >= lo and f(hi) <= hi
        expected = brute_double_fixed_point(f, lo, hi)
        if maps_into:
            k = npl.double_fixed_point(f, lo, hi)
            assert k == expected
        else:
            with pytest.raises(NotFound):
                npl.double_fixed_point(f, lo, hi)


def test_find_near_examples():
    s = sample([0.2, 0.7, 1.1, 1.9], GameParams(1.5, 1.0))
    assert npl.find_near(s, 0.5, 0.5) == 1
    # nobody ever wants to stop: the bracket fails
    none = sample(np.full(100, -5.0))
    assert npl.find_near(none, 0.5, 0.1) is None
    # delta >= 1: nearest element of K
    assert npl.find_near(sample([0.5, 0.5, 0.5, 2]), 0.4, 1.0) == 1
    with pytest.raises(ValueError):
        npl.find_near(s, 0.5, 0.0)


def test_find_near_tent_mostly_fails():
    m, p = preset("tent")
    n = 10_000
    fails = sum(npl.find_near(npl.make_sample(m, p.with_n(n), 0.0, uniforms(7, s, n)),
                              0.5, 0.02) is None for s in range(1000))
    assert fails >= 800


@st.composite
def small_samples(draw):
    n = draw(st.integers(1, 40))
    r = draw(st.sampled_from([0.5, 1.0, 1.5]))
    c = draw(st.sampled_from([0.5, 1.0, 2.0]))
    # dyadic atoms create exact ties; generic values stay clear of every
    # threshold, where float and exact comparisons could disagree
    thresholds = r - c * np.arange(n + 1) / n
    generic = st.floats(-1.0, 2.5).filter(
        lambda v: np.min(np.abs(thresholds - v)) >= 1e-9)
    vals = draw(st.lists(st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0])
                         | generic, min_size=n, max_size=n))
    return sample(vals, GameParams(r, c))


@given(small_samples())
@settings(max_examples=300, deadline=None)
def test_sets_and_extremes(s):
    eq = npl.enumerate_equilibria(s)
    r, c = s.params.r, s.params.c
    assert list(eq.K) == brute_K(s.values, r, c, exact=True)
    assert list(eq.K_star) == brute_K_star(s.values, r, c, exact=True)
    assert set(eq.K) <= set(eq.K_star)
    assert eq.K
    lo, hi = npl.minimal_from(s, 0), npl.maximal_from(s, 0)
    assert lo == min(eq.K) and hi == max(eq.K)
    G = npl.G_table(s)
    assert np.all(np.diff(G) >= 0)
    assert [npl.count_G(s, k) for k in range(s.n + 1)] == G.tolist()
    for k0 in range(s.n + 1):
        assert npl.least_fixed_point_from(G, k0) == npl.minimal_from(s, k0)


@given(small_samples(), st.floats(0.0, 1.0), st.floats(0.01, 1.5))
@settings(max_examples=300, deadline=None)
def test_find_near_guarantee(s, u, delta):
    k = npl.find_near(s, u, delta)
    if k is not None:
        assert k in npl.enumerate_equilibria(s).K
        assert abs(u - k / s.n) <= delta


def test_paths_example_5_1():
    m, p = preset("example-5.1")
    n = 64
    for seed in range(20):
        u = uniforms(seed, 0, n)
        path = npl.minimal_path(m, p.with_n(n), [0.0, 1.0], u)
        high = int(np.sum(u >= 0.5))
        first = n if high >= n // 2 else high
        assert path.counts == (first, n)
        assert npl.maximal_path(m, p.with_n(n), [0.0], u).counts == (n,)


def test_paths_example_5_8():
    m, p = preset("example-5.8")
    u = uniforms(3, 0, 200)
    assert npl.minimal_path(m, p.with_n(200), [0.0, 1.0], u).counts == (0, 200)
    assert npl.maximal_path(m, p.with_n(200), [0.0], u).counts == (200,)


def test_single_time_path():
    m, p = preset("uniform02")
    u = uniforms(4, 0, 50)
    s = npl.make_sample(m, p.with_n(50), 0.2, u)
    assert npl.minimal_path(m, p.with_n(50), [0.2], u).counts == (npl.minimal_from(s, 0),)


def test_all_below_path():
    # signals that never reach r - c before the horizon
    from mfgstop.signal_models import SignalModel, uniform_interval
    m = SignalModel.with_horizon(uniform_interval(0.0, 0.5), 1.0, 2.0)
    p = GameParams(2.0, 1.0, 30)
    path = npl.minimal_path(m, p, [0.0, 0.5, 0.9, 1.0], uniforms(0, 0, 30))
    assert path.counts == (0, 0, 0, 30)


PRESET_GRID = [0.0, 0.3, 0.6, 1.0]


@given(st.sampled_from(["example-5.1", "example-5.6", "example-5.7", "tent",
                        "uniform02"]),
       st.integers(1, 60), st.integers(0, 2 ** 32))
@settings(max_examples=120, deadline=None)
def test_paths_valid(name, n, seed):
    m, p = preset(name)
    p = p.with_n(n)
    u = uniforms(seed, 0, n)
    for path in (npl.minimal_path(m, p, PRESET_GRID, u),
                 npl.maximal_path(m, p, PRESET_GRID, u)):
        assert all(b >= a for a, b in zip(path.counts, path.counts[1:]))
        assert npl.validate_path(path, m, p, u)
    lo = npl.minimal_path(m, p, PRESET_GRID, u)
    hi = npl.maximal_path(m, p, PRESET_GRID, u)
    assert all(a <= b for a, b in zip(lo.counts, hi.counts))


def test_splice_examples():
    m, p = preset("example-5.6")
    n = 40
    p = p.with_n(n)
    grid = [0.0, 0.25, 0.5, 1.0]
    u = uniforms(9, 0, n)
    lo = npl.minimal_path(m, p, grid, u)
    hi = npl.maximal_path(m, p, grid, u)
    same = npl.splice(lo, lo, 0.25, 0.5, m, p, u)
    assert same.counts == lo.counts
    mixed = npl.splice(lo, hi, 0.25, 0.25, m, p, u)
    assert mixed.counts == lo.counts[:1] + hi.counts[1:]
    assert npl.validate_path(mixed, m, p, u)
    if hi.counts[0] > lo.counts[1]:
        with pytest.raises(OrderViolation):
            npl.splice(hi, lo, 0.0, 0.25, m, p, u)
    high = npl.EquilibriumPath(tuple(grid), (n, n, n, n), "maximal")
    low = npl.EquilibriumPath(tuple(grid), (0, 0, 0, n), "minimal")
    with pytest.raises(OrderViolation):
        npl.splice(high, low, 0.0, 0.25, m, p, u)


def test_track_flow_uniform():
    m, p = preset("uniform02")
    n = 10_000
    p = p.with_n(n)
    grid = [0.0, 0.25, 0.5, 0.75]
    fl = mf.MfFlow(tuple(grid), (0.5,) * 4)
    ok = 0
    for s in range(40):
        u = uniforms(21, s, n)
        path = npl.track_flow(m, p, fl, grid, 0.02, u)
        assert all(b >= a for a, b in zip(path.counts, path.counts[1:]))
        ok += path.complete
    assert ok >= 30


def test_track_flow_tent_fails_often():
    m, p = preset("tent")
    n = 10_000
    fl = mf.MfFlow((0.0, 0.5), (0.5, 0.5))
    done = sum(npl.track_flow(m, p.with_n(n), fl, fl.grid, 0.02,
                              uniforms(22, s, n)).complete for s in range(100))
    assert done <= 50


def test_track_flow_wide_delta():
    m, p = preset("tent")
    n = 200
    fl = mf.MfFlow((0.0, 0.5, 1.0), (0.0, 0.0, 1.0))
    path = npl.track_flow(m, p.with_n(n), fl, fl.grid, 1.0, uniforms(1, 0, n))
    assert path.complete and path.counts == (0, 0, n)


@given(st.integers(0, 2 ** 32), st.floats(0.3, 0.7))
@settings(max_examples=40, deadline=None)
def test_track_flow_equal_values_nondecreasing(seed, level):
    m, p = preset("uniform02")
    n = 400
    fl = mf.MfFlow((0.1, 0.2), (level, level))
    path = npl.track_flow(m, p.with_n(n), fl, fl.grid, 0.1, uniforms(seed, 0, n))
    assert path.counts[0] <= path.counts[1]
    assert npl.validate_path(path, m, p.with_n(n), uniforms(seed, 0, n))
