"""
Laws of the i.i.d. signal processes driving the stopping game.

Every agent carries one uniform ``U`` and observes ``Y_t = quantile(t, U)``.
Before the horizon the law does not depend on time; from the horizon on all
signals jump to ``post_value`` so that every agent stops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

import numpy as np

from .errors import ConfigError

__all__ = [
    "Atoms",
    "PiecewiseLinearCdf",
    "Tent",
    "SignalModel",
    "GameParams",
    "PRESETS",
    "PRESET_SEEDS",
    "piecewise_density",
    "uniform_interval",
    "preset",
    "from_config",
    "cdf_at",
    "density_at",
    "quantile_at",
    "sample_signals",
]


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _ret(arr: np.ndarray, scalar: bool):
    return float(arr) if scalar else arr


class Law:
    """Time-free distribution of a single signal value."""

    kind: str = ""
    has_density: bool = True

    def cdf(self, y):
        raise NotImplementedError

    def pdf(self, y, side: str = "right"):
        raise NotImplementedError

    def quantile(self, p):
        raise NotImplementedError

    def breakpoints(self) -> tuple[float, ...]:
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        bps = self.breakpoints()
        return bps[0], bps[-1]

    def to_config(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class Atoms(Law):
    """Finitely many atoms; ``two_atom`` in configuration files."""

    locations: tuple[float, ...]
    weights: tuple[float, ...]
    kind: str = field(default="two_atom", init=False)
    has_density: bool = field(default=False, init=False)

    def __post_init__(self):
        locs = np.asarray(self.locations, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if locs.ndim != 1 or locs.size == 0 or locs.shape != w.shape:
            raise ConfigError("atoms need matching non-empty locations and weights")
        if np.any(np.diff(locs) <= 0):
            raise ConfigError("atom locations must be strictly increasing")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError("atom weights must be positive and sum to 1")
        cum = np.cumsum(w)
        cum[-1] = 1.0
        object.__setattr__(self, "_locs", locs)
        object.__setattr__(self, "_cum", cum)

    def cdf(self, y):
        y, scalar = _as_array(y)
        idx = np.searchsorted(self._locs, y, side="right")
        out = np.where(idx > 0, self._cum[np.maximum(idx - 1, 0)], 0.0)
        return _ret(out, scalar)

    def pdf(self, y, side: str = "right"):
        return None

    def quantile(self, p):
        p, scalar = _as_array(p)
        idx = np.searchsorted(self._cum, p, side="left")
        out = self._locs[np.minimum(idx, self._locs.size - 1)]
        return _ret(out, scalar)

    def breakpoints(self) -> tuple[float, ...]:
        return tuple(float(v) for v in self._locs)

    def to_config(self) -> dict[str, Any]:
        return {"kind": self.kind, "locations": list(self.locations),
                "weights": list(self.weights)}


@dataclass(frozen=True)
class PiecewiseLinearCdf(Law):
    """
    Continuous c.d.f. interpolating ``(knots_y[i], knots_F[i])`` linearly.

    ``knots_F`` must start at 0 and end at 1. The density is piecewise
    constant and taken right-continuous (``side="left"`` gives left limits).
    """

    knots_y: tuple[float, ...]
    knots_F: tuple[float, ...]
    kind: str = "custom_cdf"

    def __post_init__(self):
        ys = np.asarray(self.knots_y, dtype=float)
        fs = np.asarray(self.knots_F, dtype=float)
        if ys.ndim != 1 or ys.size < 2 or ys.shape != fs.shape:
            raise ConfigError("need at least two matching c.d.f. knots")
        if np.any(np.diff(ys) <= 0):
            raise ConfigError("c.d.f. knots must be strictly increasing in y")
        if np.any(np.diff(fs) < 0):
            raise ConfigError("c.d.f. values must be nondecreasing")
        if abs(fs[0]) > 1e-12 or abs(fs[-1] - 1.0) > 1e-12:
            raise ConfigError("c.d.f. knots must run from 0 to 1")
        fs = fs.copy()
        fs[0], fs[-1] = 0.0, 1.0
        slopes = np.diff(fs) / np.diff(ys)
        object.__setattr__(self, "_ys", ys)
        object.__setattr__(self, "_fs", fs)
        object.__setattr__(self, "_slopes", slopes)

    def cdf(self, y):
        y, scalar = _as_array(y)
        return _ret(np.interp(y, self._ys, self._fs), scalar)

    def pdf(self, y, side: str = "right"):
        y, scalar = _as_array(y)
        ys, slopes = self._ys, self._slopes
        if side == "right":
            idx = np.searchsorted(ys, y, side="right") - 1
            inside = (idx >= 0) & (idx < slopes.size)
        else:
            idx = np.searchsorted(ys, y, side="left") - 1
            inside = (idx >= 0) & (idx < slopes.size)
        out = np.where(inside, slopes[np.clip(idx, 0, slopes.size - 1)], 0.0)
        return _ret(out, scalar)

    def quantile(self, p):
        p, scalar = _as_array(p)
        ys, fs = self._ys, self._fs
        # first knot with F >= p; the segment before it has positive slope
        idx = np.clip(np.searchsorted(fs, p, side="left"), 0, ys.size - 1)
        lo = np.maximum(idx - 1, 0)
        df = fs[idx] - fs[lo]
        frac = np.divide(p - fs[lo], df, out=np.zeros_like(p), where=df > 0)
        out = np.where(idx == 0, ys[0], ys[lo] + frac * (ys[idx] - ys[lo]))
        return _ret(out, scalar)

    def breakpoints(self) -> tuple[float, ...]:
        return tuple(float(v) for v in self._ys)

    def to_config(self) -> dict[str, Any]:
        return {"kind": "custom_cdf", "knots_y": list(self.knots_y),
                "knots_F": list(self.knots_F)}


@dataclass(frozen=True)
class DensityLaw(PiecewiseLinearCdf):
    """Piecewise constant density, kept around for its original parametrization."""

    breaks: tuple[float, ...] = ()
    levels: tuple[float, ...] = ()
    kind: str = "piecewise_density"

    def to_config(self) -> dict[str, Any]:
        if self.kind == "uniform_interval":
            return {"kind": self.kind, "a": self.breaks[0], "b": self.breaks[-1]}
        return {"kind": self.kind, "breakpoints": list(self.breaks),
                "levels": list(self.levels)}


def piecewise_density(breakpoints: Sequence[float], levels: Sequence[float],
                      kind: str = "piecewise_density") -> DensityLaw:
    """Density ``levels[i]`` on ``[breakpoints[i], breakpoints[i+1])``."""
    b = np.asarray(breakpoints, dtype=float)
    lv = np.asarray(levels, dtype=float)
    if b.ndim != 1 or b.size != lv.size + 1 or lv.size == 0:
        raise ConfigError("need len(breakpoints) == len(levels) + 1")
    if np.any(lv < 0):
        raise ConfigError("density levels must be nonnegative")
    if np.any(np.diff(b) <= 0):
        raise ConfigError("breakpoints must be strictly increasing")
    mass = np.concatenate([[0.0], np.cumsum(lv * np.diff(b))])
    if abs(mass[-1] - 1.0) > 1e-12:
        raise ConfigError(f"density integrates to {mass[-1]!r}, not 1")
    return DensityLaw(tuple(b.tolist()), tuple(mass.tolist()), kind=kind,
                      breaks=tuple(b.tolist()), levels=tuple(lv.tolist()))


def uniform_interval(a: float, b: float) -> DensityLaw:
    if not b > a:
        raise ConfigError("uniform interval needs a < b")
    return piecewise_density([a, b], [1.0 / (b - a)], kind="uniform_interval")


@dataclass(frozen=True)
class Tent(Law):
    """Density ``2 - 4|y - 1/2|`` on ``[0, 1]``."""

    kind: str = field(default="tent", init=False)

    def cdf(self, y):
        y, scalar = _as_array(y)
        left = 2.0 * y * y
        right = 1.0 - 2.0 * (1.0 - y) ** 2
        out = np.where(y <= 0.0, 0.0,
                       np.where(y <= 0.5, left, np.where(y < 1.0, right, 1.0)))
        return _ret(out, scalar)

    def pdf(self, y, side: str = "right"):
        y, scalar = _as_array(y)
        out = np.where((y >= 0.0) & (y <= 1.0), 2.0 - 4.0 * np.abs(y - 0.5), 0.0)
        return _ret(out, scalar)

    def quantile(self, p):
        p, scalar = _as_array(p)
        p = np.clip(p, 0.0, 1.0)
        out = np.where(p <= 0.5, np.sqrt(p / 2.0), 1.0 - np.sqrt((1.0 - p) / 2.0))
        return _ret(out, scalar)

    def breakpoints(self) -> tuple[float, ...]:
        return (0.0, 0.5, 1.0)

    def to_config(self) -> dict[str, Any]:
        return {"kind": "tent"}


@dataclass(frozen=True)
class GameParams:
    r: float
    c: float
    n: Optional[int] = None

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigError("interaction constant c must be positive")
        if self.n is not None and int(self.n) < 1:
            raise ConfigError("player count n must be at least 1")

    def with_n(self, n: int) -> "GameParams":
        return replace(self, n=int(n))


@dataclass(frozen=True)
class SignalModel:
    """
    Time-indexed signal law.

    :param law: distribution of ``Y_t`` for ``t < horizon``
    :param horizon: time ``T`` at which all signals jump, or None
    :param post_value: signal level used for ``t >= T``
    :param shift: nonnegative offset added to every signal value
    """

    law: Law
    horizon: Optional[float] = None
    post_value: Optional[float] = None
    shift: float = 0.0

    def __post_init__(self):
        if self.shift < 0:
            raise ConfigError("shift must be nonnegative")
        if self.horizon is not None:
            if self.horizon < 0:
                raise ConfigError("horizon must be nonnegative")
            if self.post_value is None:
                raise ConfigError("a horizon needs a post_value")
            # paths must increase through the jump
            if self.post_value < self.law.support()[1]:
                raise ConfigError("post_value must not lie below the support")

    @classmethod
    def with_horizon(cls, law: Law, horizon: float, r: float,
                     post_value: Optional[float] = None,
                     shift: float = 0.0) -> "SignalModel":
        """Default ``post_value`` is ``r + 1 + sup(support)``."""
        if post_value is None:
            post_value = r + 1.0 + law.support()[1]
        if post_value <= r:
            raise ConfigError("post_value must lie strictly above r")
        return cls(law, horizon, post_value, shift)

    def shifted(self, eps: float) -> "SignalModel":
        return replace(self, shift=self.shift + eps)

    def after_horizon(self, t: float) -> bool:
        return self.horizon is not None and t >= self.horizon

    def has_density(self, t: float) -> bool:
        return not self.after_horizon(t) and self.law.has_density

    def cdf(self, t: float, y):
        if self.after_horizon(t):
            y, scalar = _as_array(y)
            return _ret((y >= self.post_value + self.shift).astype(float), scalar)
        return self.law.cdf(np.asarray(y, dtype=float) - self.shift)

    def pdf(self, t: float, y, side: str = "right"):
        """Density at ``y``; None when the law at ``t`` has atoms."""
        if not self.has_density(t):
            return None
        return self.law.pdf(np.asarray(y, dtype=float) - self.shift, side=side)

    def quantile(self, t: float, p):
        if self.after_horizon(t):
            p, scalar = _as_array(p)
            return _ret(np.full_like(p, self.post_value + self.shift), scalar)
        return self.law.quantile(p) + self.shift

    def breakpoints(self, t: float) -> tuple[float, ...]:
        if self.after_horizon(t):
            return (self.post_value + self.shift,)
        return tuple(b + self.shift for b in self.law.breakpoints())

    def to_config(self) -> dict[str, Any]:
        cfg = self.law.to_config()
        cfg.update(horizon=self.horizon, post_value=self.post_value,
                   shift=self.shift)
        return cfg


def cdf_at(model: SignalModel, t: float, y):
    return model.cdf(t, y)


def density_at(model: SignalModel, t: float, y):
    """``f_t(y)``, or None ("no density") for atomic laws."""
    return model.pdf(t, y)


def quantile_at(model: SignalModel, t: float, p):
    return model.quantile(t, p)


def sample_signals(model: SignalModel, t: float, uniforms) -> np.ndarray:
    """Inverse-transform a sequence of uniforms into signal values."""
    u = np.asarray(uniforms, dtype=float).reshape(-1)
    return np.asarray(model.quantile(t, u), dtype=float).reshape(-1)


# -- presets -----------------------------------------------------------------

HORIZON = 1.0


def _p51():
    r = 1.0
    law = Atoms((0.5, 2.0), (0.5, 0.5))
    return SignalModel.with_horizon(law, HORIZON, r), GameParams(r, 1.0)


def _p56():
    r = 1.0
    law = piecewise_density([0.375, 0.5, 1.5, 2.0], [4.0, 0.0, 1.0])
    return SignalModel.with_horizon(law, HORIZON, r), GameParams(r, 1.0)


def _p57():
    r = 1.0
    law = piecewise_density([0.0, 0.5, 1.5, 2.0], [1.0, 0.0, 1.0])
    return SignalModel.with_horizon(law, HORIZON, r), GameParams(r, 1.0)


def _p58():
    r = 1.0
    law = piecewise_density([0.5, 1.0], [2.0])
    return SignalModel.with_horizon(law, HORIZON, r), GameParams(r, 1.0)


def _p62():
    r = 1.0
    return SignalModel.with_horizon(Tent(), HORIZON, r), GameParams(r, 1.0)


def _uniform02():
    r = 1.5
    law = uniform_interval(0.0, 2.0)
    return SignalModel.with_horizon(law, HORIZON, r), GameParams(r, 1.0)


PRESETS = {
    "example-5.1": _p51,
    "example-5.6": _p56,
    "example-5.7": _p57,
    "example-5.8": _p58,
    "example-6.2": _p62,
    "tent": _p62,
    "uniform02": _uniform02,
}

PRESET_SEEDS = {
    "example-5.1": 51,
    "example-5.6": 56,
    "example-5.7": 57,
    "example-5.8": 58,
    "example-6.2": 62,
    "tent": 62,
    "uniform02": 2,
}


def preset(name: str) -> tuple[SignalModel, GameParams]:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; "
                          f"choose from {sorted(PRESETS)}") from None


def _law_from_config(cfg: dict[str, Any]) -> Law:
    kind = cfg.get("kind")
    try:
        if kind == "two_atom":
            return Atoms(tuple(cfg["locations"]), tuple(cfg["weights"]))
        if kind == "piecewise_density":
            return piecewise_density(cfg["breakpoints"], cfg["levels"])
        if kind == "tent":
            return Tent()
        if kind == "uniform_interval":
            return uniform_interval(float(cfg["a"]), float(cfg["b"]))
        if kind == "custom_cdf":
            return PiecewiseLinearCdf(tuple(cfg["knots_y"]), tuple(cfg["knots_F"]))
    except KeyError as exc:
        raise ConfigError(f"model of kind {kind!r} is missing key {exc}") from None
    raise ConfigError(f"unknown model kind {kind!r}")


def from_config(cfg: dict[str, Any]) -> tuple[SignalModel, GameParams]:
    """
    Build a model and game parameters from a parsed configuration.

    Schema (JSON)::

        {
          "model": {"preset": "tent"}                      # or
          "model": {"kind": "piecewise_density",
                    "breakpoints": [...], "levels": [...],
                    "horizon": 1.0, "post_value": null, "shift": 0.0},
          "params": {"r": 1.0, "c": 1.0, "n": 100}
        }

    Keys under ``params`` override the preset's values.
    """
    mcfg = dict(cfg.get("model", {}))
    pcfg = dict(cfg.get("params", {}))
    if "preset" in mcfg:
        model, params = preset(mcfg["preset"])
        if mcfg.get("shift"):
            model = model.shifted(float(mcfg["shift"]))
    else:
        if "r" not in pcfg or "c" not in pcfg:
            raise ConfigError("custom models need params.r and params.c")
        law = _law_from_config(mcfg)
        r = float(pcfg["r"])
        horizon = mcfg.get("horizon")
        shift = float(mcfg.get("shift") or 0.0)
        if horizon is None:
            model = SignalModel(law, shift=shift)
        else:
            model = SignalModel.with_horizon(law, float(horizon), r,
                                             mcfg.get("post_value"), shift)
        params = GameParams(r, float(pcfg["c"]))
    params = GameParams(float(pcfg.get("r", params.r)),
                        float(pcfg.get("c", params.c)),
                        None if pcfg.get("n") is None else int(pcfg["n"]))
    if not math.isfinite(params.r):
        raise ConfigError("r must be finite")
    return model, params
