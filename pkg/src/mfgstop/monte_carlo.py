"""
Seeded sampling experiments on the n-player game.

Every sample ``s`` draws its agents' uniforms from a Philox stream keyed by
the seed with the sample index in the counter, so the uniform of agent
``i`` in sample ``s`` depends on ``(seed, s, i)`` only. Signals are
comonotone across time (``Y_t = quantile(t, U)``), which keeps paths
monotone. Samples run in any order on any number of threads; results are
reduced in sample order with compensated sums, so reports are bit-identical
whatever the worker count.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, Optional, Sequence

import numpy as np

from . import __version__
from . import asymptotics as asy
from .errors import ConfigError, DomainError
from .mean_field import (MfFlow, SolverConfig, alpha_at, find_solutions, flow,
                         root_set_distance)
from .n_player import (G_table, greedy_group_from, least_fixed_point_from,
                       make_sample, sets_from_table, track_flow)
from .signal_models import GameParams, SignalModel, from_config

EXPERIMENTS = ("histogram", "near", "extremal", "fatou", "scaling", "track")
Z95 = 1.959963984540054
EXACT_BIN_LIMIT = 10_000
UNIFORM_BINS = 1000
SEED_LIMIT = 2 ** 64


# -- random streams ----------------------------------------------------------

def uniforms(seed: int, sample: int, n: int) -> np.ndarray:
    """
    Uniforms of agents ``0..n-1`` in sample ``sample``.

    Philox is counter based: the key is the seed and the third counter word
    is the sample index, so every sample owns a disjoint stream and a longer
    draw extends a shorter one.
    """
    if not 0 <= seed < SEED_LIMIT:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    bitgen = np.random.Philox(key=seed, counter=[0, 0, sample, 0])
    return np.random.Generator(bitgen).random(n)


# -- statistics --------------------------------------------------------------

@dataclass(frozen=True)
class Estimate:
    estimate: float
    se: float
    ci95: tuple[float, float]
    samples: int

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "se": self.se,
                "ci95": list(self.ci95), "samples": self.samples}


def proportion(successes: int, total: int) -> Estimate:
    """Binomial proportion with a Wilson 95% interval."""
    if total < 1:
        raise ValueError("need at least one trial")
    p = successes / total
    se = math.sqrt(p * (1.0 - p) / total)
    z2 = Z95 * Z95
    denom = 1.0 + z2 / total
    centre = (p + z2 / (2 * total)) / denom
    half = Z95 * math.sqrt(p * (1 - p) / total + z2 / (4 * total * total)) / denom
    # rounding can push an endpoint past p when p is 0 or 1
    lo = min(max(centre - half, 0.0), p)
    hi = max(min(centre + half, 1.0), p)
    return Estimate(p, se, (lo, hi), total)


def mean_estimate(values: Sequence[float]) -> Estimate:
    """Sample mean with ``1.96 sd / sqrt(N)`` bounds, using compensated sums."""
    vals = [float(v) for v in values]
    N = len(vals)
    if N < 1:
        raise ValueError("need at least one value")
    mean = math.fsum(vals) / N
    var = math.fsum((v - mean) ** 2 for v in vals) / (N - 1) if N > 1 else 0.0
    se = math.sqrt(var / N)
    return Estimate(mean, se, (mean - Z95 * se, mean + Z95 * se), N)


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything that determines an experiment's report.

    :param experiment: one of ``EXPERIMENTS``
    :param model: model section of a configuration, e.g. ``{"preset": "tent"}``
    :param r: overrides the model's reward level when set
    :param c: overrides the model's coupling strength when set
    :param t: time of the cross-section (histogram, near, extremal, scaling)
    :param grid: time grid (fatou, track)
    :param eps: window half-width; neighbourhood radius for root masses
    :param x: centre of the window (near, scaling)
    :param set_selector: ``K`` (equilibria) or ``K_star`` (fixed points)
    :param delta: tracking tolerance
    :param mode: ``all``, ``minimal`` or ``maximal`` (histogram)
    :param tol: exceedance threshold (fatou)
    :param n_ladder: population sizes (fatou); defaults to ``(n,)``
    :param betas: window scale factors (scaling)
    :param flow_kind: ``minimal`` or ``maximal`` mean field flow
    """

    experiment: str
    model: dict
    n: int
    seed: int
    samples: int = 1000
    r: Optional[float] = None
    c: Optional[float] = None
    t: float = 0.0
    grid: Optional[tuple[float, ...]] = None
    eps: Optional[float] = None
    x: Optional[float] = None
    set_selector: str = "K"
    delta: Optional[float] = None
    mode: str = "all"
    tol: float = 0.05
    n_ladder: tuple[int, ...] = ()
    betas: tuple[float, ...] = ()
    flow_kind: str = "minimal"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if int(self.samples) < 1:
            raise ConfigError("samples must be at least 1")
        if int(self.n) < 1:
            raise ConfigError("n must be at least 1")
        if not 0 <= int(self.seed) < SEED_LIMIT:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.eps is not None and not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.delta is not None and not self.delta > 0:
            raise ConfigError("delta must be positive")
        if self.set_selector not in ("K", "K_star"):
            raise ConfigError("set_selector must be K or K_star")
        if self.mode not in ("all", "minimal", "maximal"):
            raise ConfigError("mode must be all, minimal or maximal")
        if self.flow_kind not in ("minimal", "maximal"):
            raise ConfigError("flow_kind must be minimal or maximal")
        if not self.tol >= 0:
            raise ConfigError("tol must be nonnegative")
        if any(int(m) < 1 for m in self.n_ladder):
            raise ConfigError("n_ladder entries must be at least 1")
        if any(not b >= 0 for b in self.betas):
            raise ConfigError("betas must be nonnegative")
        # normalize sequences so that equal configs compare and echo equally
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "samples", int(self.samples))
        object.__setattr__(self, "n_ladder", tuple(int(m) for m in self.n_ladder))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if self.grid is not None:
            grid = tuple(float(t) for t in self.grid)
            if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError("grid must be nonempty and strictly increasing")
            object.__setattr__(self, "grid", grid)

    def resolve(self) -> tuple[SignalModel, GameParams]:
        pcfg: dict[str, Any] = {"n": self.n}
        if self.r is not None:
            pcfg["r"] = self.r
        if self.c is not None:
            pcfg["c"] = self.c
        return from_config({"model": self.model, "params": pcfg})

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("grid", "n_ladder", "betas"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown experiment keys {sorted(unknown)}")
        d = dict(d)
        for key in ("grid", "n_ladder", "betas"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    seed: int
    stats: dict[str, Estimate] = field(default_factory=dict)
    references: dict[str, Optional[float]] = field(default_factory=dict)
    histograms: dict[str, dict] = field(default_factory=dict)
    table: list[dict] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)
    version: str = __version__

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "version": self.version,
            "seed": self.seed,
            "config": self.config,
            "stats": {k: v.to_dict() for k, v in self.stats.items()},
            "references": self.references,
            "histograms": self.histograms,
            "table": self.table,
            "summary": self.summary,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# -- parallel driver ---------------------------------------------------------

def default_threads() -> int:
    return os.cpu_count() or 1


def map_samples(fn: Callable[[int], Any], count: int,
                threads: Optional[int] = None) -> list:
    """``[fn(0), ..., fn(count - 1)]``, computed on a thread pool."""
    threads = default_threads() if threads is None else max(int(threads), 1)
    if threads == 1 or count < 2:
        return [fn(s) for s in range(count)]
    blocks = min(count, threads * 8)
    bounds = np.linspace(0, count, blocks + 1).astype(int)

    def run(b):
        return [fn(s) for s in range(bounds[b], bounds[b + 1])]

    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(run, range(blocks)))
    return [item for part in parts for item in part]


# -- helpers -----------------------------------------------------------------

def _table(model, params, t, seed, s, n) -> np.ndarray:
    sample = make_sample(model, params.with_n(n), t, uniforms(seed, s, n))
    return G_table(sample)


def _selected(G: np.ndarray, selector: str) -> np.ndarray:
    full, star = sets_from_table(G)
    return full if selector == "K" else star


def _bin_rows(counts_by_k: np.ndarray, n: int) -> dict:
    """Sparse histogram rows from occurrence counts indexed by ``k``."""
    if n <= EXACT_BIN_LIMIT:
        ks = np.flatnonzero(counts_by_k)
        rows = [{"k_over_n": int(k) / n, "count": int(counts_by_k[k])} for k in ks]
        return {"bins": "exact", "n": n, "rows": rows,
                "total": int(counts_by_k.sum())}
    idx = np.minimum((np.arange(n + 1) * UNIFORM_BINS) // n, UNIFORM_BINS - 1)
    binned = np.bincount(idx, weights=counts_by_k,
                         minlength=UNIFORM_BINS).astype(np.int64)
    rows = [{"k_over_n": (int(b) + 0.5) / UNIFORM_BINS, "count": int(binned[b])}
            for b in np.flatnonzero(binned)]
    return {"bins": f"uniform-{UNIFORM_BINS}", "n": n, "rows": rows,
            "total": int(binned.sum())}


def _solution_label(sol) -> str:
    if sol.segment:
        return f"[{sol.lo:.6g},{sol.hi:.6g}]"
    return f"{sol.u:.6g}"


def _roots(model, params, t):
    return find_solutions(model, params, t, SolverConfig())


def _alpha_refs(model, params, t, x) -> dict:
    if x is None or not 0 <= x <= 1:
        return {"alpha": None}
    a = alpha_at(model, params, t, x)
    refs: dict[str, Optional[float]] = {"alpha": a}
    if a is None or a == 1:
        return refs
    if a <= 0:
        refs["expected_count_limit"] = asy.expected_count_limit(0.0)
        return refs
    st = asy.alpha_stats(a)
    refs.update(expected_count_limit=st.expected_count_limit,
                kstar_crossing_limit=st.kstar_crossing_limit,
                lower_bound_L=st.lower_bound_L, theta=st.theta)
    return refs


def _window_mask(n: int, x: float, eps: float) -> np.ndarray:
    return asy.in_window(np.arange(n + 1), n, x, eps)


# -- experiments -------------------------------------------------------------

def run_histogram(cfg: ExperimentConfig,
                  threads: Optional[int] = None) -> ExperimentReport:
    """
    Histogram over ``k/n`` of the selected set (``mode=all``) or of its
    minimum or maximum, one cross-section per sample.
    """
    model, params = cfg.resolve()
    n = cfg.n

    def one(s):
        sel = _selected(_table(model, params, cfg.t, cfg.seed, s, n),
                        cfg.set_selector)
        ks = np.flatnonzero(sel)
        if cfg.mode == "minimal":
            return ks[:1]
        if cfg.mode == "maximal":
            return ks[-1:]
        return ks

    per_sample = map_samples(one, cfg.samples, threads)
    occ = np.zeros(n + 1, dtype=np.int64)
    sizes, mins, maxs = [], [], []
    for ks in per_sample:
        occ[ks] += 1
        sizes.append(ks.size)
        mins.append(ks[0] / n)
        maxs.append(ks[-1] / n)
    rep = ExperimentReport("histogram", cfg.to_dict(), cfg.seed)
    rep.histograms["main"] = _bin_rows(occ, n)
    rep.stats["set_size"] = mean_estimate(sizes)
    rep.stats["min_over_n"] = mean_estimate(mins)
    rep.stats["max_over_n"] = mean_estimate(maxs)
    if cfg.eps is not None and cfg.mode != "all":
        picks = mins if cfg.mode == "minimal" else maxs
        for sol in _roots(model, params, cfg.t):
            near = sum(1 for v in picks if root_set_distance([sol], v) < cfg.eps)
            rep.stats[f"mass_near[{_solution_label(sol)}]"] = proportion(
                near, cfg.samples)
    rep.summary["occupied_bins"] = len(rep.histograms["main"]["rows"])
    return rep


def estimate_near(cfg: ExperimentConfig,
                  threads: Optional[int] = None) -> ExperimentReport:
    """
    Probability that the window ``|x - k/n| < eps`` holds a member of the
    selected set, and the mean number of members in it.
    """
    if cfg.x is None or cfg.eps is None:
        raise ConfigError("near needs x and eps")
    model, params = cfg.resolve()
    n = cfg.n
    window = _window_mask(n, cfg.x, cfg.eps)

    def one(s):
        if not window.any():
            return 0
        sel = _selected(_table(model, params, cfg.t, cfg.seed, s, n),
                        cfg.set_selector)
        return int(np.count_nonzero(sel & window))

    counts = map_samples(one, cfg.samples, threads)
    rep = ExperimentReport("near", cfg.to_dict(), cfg.seed)
    rep.stats["p_nonempty"] = proportion(sum(1 for k in counts if k > 0),
                                         cfg.samples)
    rep.stats["mean_count"] = mean_estimate(counts)
    rep.references.update(_alpha_refs(model, params, cfg.t, cfg.x))
    exact = None
    if cfg.set_selector == "K" and model.has_density(cfg.t):
        exact = asy.exact_expected_count(model, params, cfg.t, n, cfg.x, cfg.eps)
    rep.references["exact_expected_count"] = exact
    a = rep.references.get("alpha")
    if a is not None and a != 1 and 0 < cfg.x < 1:
        rep.references["window_expected_count"] = asy.window_expected_count(
            a, cfg.x, cfg.eps * math.sqrt(n))
    if exact is not None:
        mc = rep.stats["mean_count"]
        gap = abs(mc.estimate - exact)
        rep.summary["exact_gap_in_se"] = gap / mc.se if mc.se > 0 else (
            0.0 if gap == 0 else math.inf)
        rep.summary["consistent_with_exact"] = gap <= 3 * mc.se or gap <= 1e-12
    return rep


def extremal_law(cfg: ExperimentConfig,
                 threads: Optional[int] = None) -> ExperimentReport:
    """Laws of ``min(K)/n`` and ``max(K)/n`` and their mass away from the roots."""
    model, params = cfg.resolve()
    n = cfg.n
    radius = 0.05 if cfg.eps is None else cfg.eps

    def one(s):
        ks = np.flatnonzero(_selected(
            _table(model, params, cfg.t, cfg.seed, s, n), cfg.set_selector))
        return int(ks[0]), int(ks[-1])

    pairs = map_samples(one, cfg.samples, threads)
    lows = np.array([p[0] for p in pairs])
    highs = np.array([p[1] for p in pairs])
    sols = _roots(model, params, cfg.t)
    rep = ExperimentReport("extremal", cfg.to_dict(), cfg.seed)
    rep.histograms["min"] = _bin_rows(np.bincount(lows, minlength=n + 1), n)
    rep.histograms["max"] = _bin_rows(np.bincount(highs, minlength=n + 1), n)
    rep.stats["min_over_n"] = mean_estimate((lows / n).tolist())
    rep.stats["max_over_n"] = mean_estimate((highs / n).tolist())
    for name, arr in (("min", lows), ("max", highs)):
        far = sum(1 for k in arr if root_set_distance(sols, k / n) >= radius)
        rep.stats[f"{name}_outside_roots"] = proportion(far, cfg.samples)
        rep.stats[f"{name}_is_0"] = proportion(int(np.sum(arr == 0)), cfg.samples)
        rep.stats[f"{name}_is_n"] = proportion(int(np.sum(arr == n)), cfg.samples)
    rep.summary["roots"] = [s.to_dict() for s in sols]
    rep.summary["neighbourhood_radius"] = radius
    return rep


def fatou_diagnostic(cfg: ExperimentConfig, mf_flow: Optional[MfFlow] = None,
                     threads: Optional[int] = None) -> ExperimentReport:
    """
    Per grid time and population size, the probability that the minimal and
    the maximal n-player path sit more than ``tol`` away from the flow.
    """
    if cfg.grid is None:
        raise ConfigError("fatou needs a grid")
    model, params = cfg.resolve()
    if mf_flow is None:
        mf_flow = flow(model, params, cfg.flow_kind, cfg.grid)
    if tuple(mf_flow.grid) != cfg.grid:
        raise ConfigError("flow and config live on different grids")
    ladder = cfg.n_ladder or (cfg.n,)
    target = np.asarray(mf_flow.values)

    def paths(n):
        def one(s):
            u = uniforms(cfg.seed, s, n)
            lo = hi = 0
            out_lo, out_hi = [], []
            for t in cfg.grid:
                G = G_table(make_sample(model, params.with_n(n), t, u))
                lo = least_fixed_point_from(G, lo)
                hi = greedy_group_from(G, hi)
                out_lo.append(lo)
                out_hi.append(hi)
            return np.array(out_lo) / n, np.array(out_hi) / n
        return one

    rep = ExperimentReport("fatou", cfg.to_dict(), cfg.seed)
    trend: dict[str, dict[str, list]] = {}
    for n in ladder:
        res = map_samples(paths(n), cfg.samples, threads)
        lows = np.array([r[0] for r in res])
        highs = np.array([r[1] for r in res])
        for j, t in enumerate(cfg.grid):
            row = {"n": n, "t": t, "flow": float(target[j])}
            for name, arr in (("minimal", lows), ("maximal", highs)):
                hits = int(np.sum(np.abs(arr[:, j] - target[j]) > cfg.tol))
                est = proportion(hits, cfg.samples)
                rep.stats[f"exceed_{name}[n={n},t={t:g}]"] = est
                row[f"exceed_{name}"] = est.estimate
                trend.setdefault(f"{t:g}", {}).setdefault(name, []).append(
                    est.estimate)
            rep.table.append(row)
    rep.summary["flow"] = {"kind": mf_flow.kind, "grid": list(mf_flow.grid),
                           "values": list(mf_flow.values)}
    rep.summary["trend"] = {
        t: {name: {"exceedance": seq,
                   "nonincreasing": all(b <= a for a, b in zip(seq, seq[1:]))}
            for name, seq in d.items()}
        for t, d in trend.items()}
    return rep


def scaling_experiment(cfg: ExperimentConfig,
                       betas: Optional[Sequence[float]] = None,
                       threads: Optional[int] = None) -> ExperimentReport:
    """Mean counts in windows of half-width ``beta / sqrt(n)`` around ``x``."""
    if cfg.x is None:
        raise ConfigError("scaling needs x")
    betas = tuple(float(b) for b in (cfg.betas if betas is None else betas))
    if not betas:
        raise ConfigError("scaling needs at least one beta")
    if any(not b >= 0 for b in betas):
        raise ConfigError("betas must be nonnegative")
    model, params = cfg.resolve()
    n = cfg.n
    masks = [_window_mask(n, cfg.x, b / math.sqrt(n)) for b in betas]

    def one(s):
        sel = _selected(_table(model, params, cfg.t, cfg.seed, s, n),
                        cfg.set_selector)
        return [int(np.count_nonzero(sel & m)) for m in masks]

    counts = map_samples(one, cfg.samples, threads)
    rep = ExperimentReport("scaling", cfg.to_dict(), cfg.seed)
    rep.references.update(_alpha_refs(model, params, cfg.t, cfg.x))
    a = rep.references.get("alpha")
    exact_ok = cfg.set_selector == "K" and model.has_density(cfg.t)
    for j, b in enumerate(betas):
        est = mean_estimate([c[j] for c in counts])
        rep.stats[f"mean_count[beta={b:g}]"] = est
        limit = None
        if a is not None and a != 1 and 0 < cfg.x < 1:
            limit = asy.window_expected_count(a, cfg.x, b)
        exact = None
        if exact_ok:
            exact = 0.0 if b == 0 else asy.exact_expected_count(
                model, params, cfg.t, n, cfg.x, b / math.sqrt(n))
        rep.table.append({"beta": b, "eps": b / math.sqrt(n),
                          "mean_count": est.estimate, "se": est.se,
                          "exact_expected_count": exact,
                          "window_expected_count": limit})
    return rep


def tracking_experiment(cfg: ExperimentConfig, mf_flow: Optional[MfFlow] = None,
                        threads: Optional[int] = None) -> ExperimentReport:
    """How often ``track_flow`` finds an equilibrium near the flow at every time."""
    if cfg.grid is None or cfg.delta is None:
        raise ConfigError("track needs a grid and delta")
    model, params = cfg.resolve()
    if mf_flow is None:
        mf_flow = flow(model, params, cfg.flow_kind, cfg.grid)
    n = cfg.n

    def one(s):
        u = uniforms(cfg.seed, s, n)
        path = track_flow(model, params.with_n(n), mf_flow, cfg.grid,
                          cfg.delta, u)
        near = True
        for t, k, ok in zip(path.grid, path.counts, path.success):
            if not ok:
                continue
            G = G_table(make_sample(model, params.with_n(n), t, u))
            full, _ = sets_from_table(G)
            near &= bool(full[k]) and abs(k / n - mf_flow.at(t)) <= cfg.delta
        return path.complete, near, sum(path.success)

    runs = map_samples(one, cfg.samples, threads)
    rep = ExperimentReport("track", cfg.to_dict(), cfg.seed)
    rep.stats["all_times_success"] = proportion(sum(1 for r in runs if r[0]),
                                                cfg.samples)
    rep.stats["successes_valid"] = proportion(sum(1 for r in runs if r[1]),
                                              cfg.samples)
    rep.stats["successful_times"] = mean_estimate([r[2] for r in runs])
    rep.summary["flow"] = {"kind": mf_flow.kind, "grid": list(mf_flow.grid),
                           "values": list(mf_flow.values)}
    return rep


def run(cfg: ExperimentConfig, threads: Optional[int] = None) -> ExperimentReport:
    """Dispatch on ``cfg.experiment``."""
    try:
        if cfg.experiment == "histogram":
            return run_histogram(cfg, threads)
        if cfg.experiment == "near":
            return estimate_near(cfg, threads)
        if cfg.experiment == "extremal":
            return extremal_law(cfg, threads)
        if cfg.experiment == "fatou":
            return fatou_diagnostic(cfg, threads=threads)
        if cfg.experiment == "scaling":
            return scaling_experiment(cfg, threads=threads)
        return tracking_experiment(cfg, threads=threads)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
