import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from mfgstop.errors import ConfigError
from mfgstop.signal_models import (Atoms, GameParams, PiecewiseLinearCdf,
                                   PRESETS, SignalModel, Tent, cdf_at,
                                   density_at, from_config, piecewise_density,
                                   preset, quantile_at, sample_signals,
                                   uniform_interval)

TWO_ATOM = SignalModel(Atoms((0.5, 2.0), (0.5, 0.5)))
TENT = SignalModel(Tent())


def test_cdf_examples():
    assert cdf_at(TENT, 0.0, 0.25) == pytest.approx(0.125, abs=1e-15)
    assert cdf_at(TENT, 0.0, -1.0) == 0.0
    assert cdf_at(TWO_ATOM, 0.0, 1.0) == 0.5


def test_density_examples():
    assert density_at(TENT, 0.0, 0.5) == pytest.approx(2.0)
    assert density_at(TENT, 0.0, 1.5) == 0.0
    m56, _ = preset("example-5.6")
    assert density_at(m56, 0.0, 0.4) == pytest.approx(4.0)
    assert density_at(TWO_ATOM, 0.0, 0.5) is None


def test_quantile_examples():
    assert quantile_at(TWO_ATOM, 0.0, 0.3) == 0.5
    assert quantile_at(TENT, 0.0, 0.5) == pytest.approx(0.5)
    for name in PRESETS:
        m, _ = preset(name)
        assert quantile_at(m, 0.0, 0.0) == pytest.approx(m.law.support()[0])


def test_sample_signals_examples():
    out = sample_signals(TWO_ATOM, 0.0, [0.1, 0.6, 0.4, 0.9])
    assert out.tolist() == [0.5, 2.0, 0.5, 2.0]
    assert sample_signals(TENT, 0.0, []).size == 0
    assert sample_signals(TENT, 0.0, [0.5]).tolist() == pytest.approx([0.5])


def _all_models():
    models = [preset(name)[0] for name in PRESETS]
    models.append(SignalModel(PiecewiseLinearCdf((0.0, 1.0, 2.0, 3.0),
                                                 (0.0, 0.3, 0.3, 1.0))))
    return models


@pytest.mark.parametrize("model", _all_models())
def test_generalized_inverse(model):
    rng = np.random.default_rng(11)
    p = rng.random(10_000)
    for t in (0.0, 0.5):
        assert np.all(model.cdf(t, model.quantile(t, p)) >= p - 1e-15)


@pytest.mark.parametrize("model", _all_models())
def test_kolmogorov_distance(model):
    rng = np.random.default_rng(12)
    y = np.sort(sample_signals(model, 0.0, rng.random(100_000)))
    m = y.size
    # sup |ECDF - F| is attained at a sample point or just left of one
    right = np.searchsorted(y, y, side="right") / m
    left = np.searchsorted(y, y, side="left") / m
    d = max(np.max(np.abs(right - model.cdf(0.0, y))),
            np.max(np.abs(left - model.cdf(0.0, y - 1e-12))))
    assert d < 0.01


@given(st.floats(0.0, 0.5), st.floats(-1.0, 3.0))
def test_shift_identity(eps, y):
    for model in (TENT, TWO_ATOM, preset("example-5.7")[0]):
        shifted = model.shifted(eps)
        assert shifted.cdf(0.0, y) == model.cdf(0.0, y - eps)


def test_post_horizon_cdf():
    for name in PRESETS:
        m, params = preset(name)
        post = m.post_value
        assert post > params.r
        for t in (m.horizon, m.horizon + 3.0):
            ys = np.array([post - 1e-9, post, post + 1.0, -5.0])
            assert m.cdf(t, ys).tolist() == [0.0, 1.0, 1.0, 0.0]
            assert m.quantile(t, 0.3) == post


@pytest.mark.parametrize("name", ["example-5.6", "example-5.7", "example-5.8",
                                  "example-6.2", "uniform02"])
def test_density_integrates_to_one(name):
    m, _ = preset(name)
    lo, hi = m.law.support()
    edges = sorted({lo, hi, 0.5 * (lo + hi),
                    *(b for b in m.breakpoints(0.0) if lo < b < hi)})
    # the density is smooth between consecutive edges
    total = math.fsum(quad(lambda y: float(m.pdf(0.0, y)), a, b)[0]
                      for a, b in zip(edges, edges[1:]))
    assert abs(total - 1.0) <= 1e-12


@given(st.lists(st.floats(0.05, 3.0), min_size=1, max_size=5),
       st.floats(-2.0, 2.0))
@settings(max_examples=60)
def test_random_piecewise_density_is_a_cdf(widths, start):
    breaks = np.cumsum([start] + widths)
    raw = [1.0 + i % 2 for i in range(len(widths))]
    mass = math.fsum(w * v for w, v in zip(widths, raw))
    levels = [v / mass for v in raw]
    law = piecewise_density(breaks, levels)
    ys = np.linspace(breaks[0] - 1, breaks[-1] + 1, 301)
    F = law.cdf(ys)
    assert np.all(np.diff(F) >= -1e-15)
    assert F[0] == 0.0 and F[-1] == pytest.approx(1.0, abs=1e-12)


@given(st.floats(0.0, 1.0))
def test_quantile_nondecreasing_in_time(p):
    for name in PRESETS:
        m, _ = preset(name)
        assert m.quantile(0.0, p) <= m.quantile(0.5, p) <= m.quantile(m.horizon, p)


def test_game_params_validation():
    with pytest.raises(ConfigError):
        GameParams(1.0, 0.0)
    with pytest.raises(ConfigError):
        GameParams(1.0, 1.0, 0)
    assert GameParams(1.0, 1.0).with_n(5).n == 5


def test_presets_and_config():
    with pytest.raises(ConfigError):
        preset("example-9.9")
    m, p = from_config({"model": {"preset": "uniform02"}, "params": {"n": 7}})
    assert (p.r, p.c, p.n) == (1.5, 1.0, 7)
    m2, p2 = from_config({"model": {"kind": "uniform_interval", "a": 0, "b": 2,
                                    "horizon": 1.0},
                          "params": {"r": 1.5, "c": 1.0}})
    assert m2.cdf(0.0, 0.5) == m.cdf(0.0, 0.5)
    with pytest.raises(ConfigError):
        from_config({"model": {"kind": "nope"}, "params": {"r": 1, "c": 1}})
    with pytest.raises(ConfigError):
        from_config({"model": {"kind": "tent"}})


def test_config_round_trip():
    for name in PRESETS:
        m, p = preset(name)
        m2, _ = from_config({"model": m.to_config(), "params": {"r": p.r, "c": p.c}})
        ys = np.linspace(-1, 5, 97)
        assert np.array_equal(m.cdf(0.0, ys), m2.cdf(0.0, ys))
        assert np.array_equal(m.cdf(1.0, ys), m2.cdf(1.0, ys))


def test_uniform_interval_values():
    law = uniform_interval(0.0, 2.0)
    assert law.cdf(1.0) == 0.5
    assert law.quantile(0.25) == 0.5
    assert math.isclose(law.pdf(1.0), 0.5)
