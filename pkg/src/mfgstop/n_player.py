"""
Exact equilibria of the n-player stopping game at the level of counts.

With ``k`` agents stopped, agent ``i`` wants to stop iff
``Y_i + c k / n >= r``. The counting map

    G(k) = #{i : Y_i >= r - c k / n}

is nondecreasing, and ``k`` stopped agents form an equilibrium iff
``G(k - 1) = G(k) = k`` (for ``k = 0``: ``G(0) = 0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NotFound, OrderViolation
from .mean_field import MfFlow
from .signal_models import GameParams, SignalModel

__all__ = [
    "SignalSample",
    "EquilibriumSet",
    "EquilibriumPath",
    "make_sample",
    "count_G",
    "G_table",
    "sets_from_table",
    "least_fixed_point_from",
    "greedy_group_from",
    "enumerate_equilibria",
    "conditional_equilibria",
    "minimal_from",
    "maximal_from",
    "double_fixed_point",
    "find_near",
    "find_near_window",
    "minimal_path",
    "maximal_path",
    "splice",
    "track_flow",
    "validate_path",
]


@dataclass(frozen=True)
class SignalSample:
    values: np.ndarray
    params: GameParams
    t: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("a sample needs at least one signal value")
        if np.any(np.diff(v) < 0):
            v = np.sort(v)
        object.__setattr__(self, "values", v)
        if self.params.n is None or self.params.n != v.size:
            object.__setattr__(self, "params", self.params.with_n(v.size))

    @property
    def n(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class EquilibriumSet:
    K: tuple[int, ...]
    K_star: tuple[int, ...]
    n: int

    def to_dict(self) -> dict:
        return {"n": self.n, "K": list(self.K), "K_star": list(self.K_star),
                "min": min(self.K), "max": max(self.K)}


@dataclass
class EquilibriumPath:
    grid: tuple[float, ...]
    counts: tuple[int, ...]
    provenance: str
    success: Optional[tuple[bool, ...]] = None
    log: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return self.success is None or all(self.success)

    def count_at(self, t: float) -> int:
        return self.counts[self.grid.index(t)]


def make_sample(model: SignalModel, params: GameParams, t: float,
                uniforms) -> SignalSample:
    """Comonotone cross-section: ``Y_i = quantile(t, U_i)``."""
    u = np.sort(np.asarray(uniforms, dtype=float).reshape(-1))
    return SignalSample(np.asarray(model.quantile(t, u), dtype=float), params, t)


def _threshold(params: GameParams, k, n: int):
    return params.r - params.c * k / n


def count_G(sample: SignalSample, k: int) -> int:
    """``#{i : Y_i >= r - c k / n}``; ``k = -1`` is read as ``k = 0``."""
    n = sample.n
    k = max(int(k), 0)
    thr = _threshold(sample.params, k, n)
    return n - int(np.searchsorted(sample.values, thr, side="left"))


def G_table(sample: SignalSample) -> np.ndarray:
    """``G(k)`` for ``k = 0..n`` in one vectorized pass."""
    n = sample.n
    thr = _threshold(sample.params, np.arange(n + 1), n)
    return n - np.searchsorted(sample.values, thr, side="left")


def sets_from_table(G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks of K and K* over ``k = 0..n`` from a table of ``G``."""
    ks = np.arange(G.size)
    star = G == ks
    full = star.copy()
    full[1:] &= G[:-1] == ks[1:]
    return full, star


def enumerate_equilibria(sample: SignalSample) -> EquilibriumSet:
    """The sets K (full condition) and K* (``G(k) = k`` only)."""
    full, star = sets_from_table(G_table(sample))
    return EquilibriumSet(tuple(np.flatnonzero(full).tolist()),
                          tuple(np.flatnonzero(star).tolist()), sample.n)


def conditional_equilibria(sample: SignalSample, k_prev: int) -> tuple[int, ...]:
    """
    Counts that are equilibria at ``sample.t`` when ``k_prev`` agents have
    already stopped: ``k_prev`` itself if ``G(k_prev) = k_prev``, and any
    ``k > k_prev`` with ``G(k - 1) = G(k) = k``.
    """
    G = G_table(sample)
    full, star = sets_from_table(G)
    out = [k_prev] if star[k_prev] else []
    out.extend(int(k) for k in np.flatnonzero(full) if k > k_prev)
    return tuple(out)


def minimal_from(sample: SignalSample, k0: int) -> int:
    """Least fixed point above ``k0`` of ``k -> max(k0, G(k))``."""
    if not 0 <= k0 <= sample.n:
        raise ValueError("k0 out of range")
    k = k0
    for _ in range(sample.n + 1):
        nxt = max(k0, count_G(sample, k))
        if nxt == k:
            return k
        k = nxt
    return k


def maximal_from(sample: SignalSample, k0: int) -> int:
    """Greedy group coordination: repeatedly stop the largest feasible group.

    A group of ``l`` further agents can stop together when
    ``G(k + l - 1) >= k + l``.
    """
    if not 0 <= k0 <= sample.n:
        raise ValueError("k0 out of range")
    return greedy_group_from(G_table(sample), k0)


def least_fixed_point_from(G: np.ndarray, k0: int) -> int:
    """
    Table form of ``minimal_from``: the first ``k >= k0`` with ``G(k) <= k``.

    Below that index ``G(j) > j``, so the iteration from ``k0`` climbs to it
    and stops there, where ``G(k) = k`` (or ``k = k0``).
    """
    ks = np.arange(k0, G.size)
    return k0 + int(np.argmax(G[k0:] <= ks))


def greedy_group_from(G: np.ndarray, k0: int) -> int:
    """Table form of ``maximal_from``."""
    n = G.size - 1
    k = k0
    while k < n:
        ls = np.arange(1, n - k + 1)
        ok = np.flatnonzero(G[k + ls - 1] >= k + ls)
        if ok.size == 0:
            break
        k += int(ls[ok[-1]])
    return k


def double_fixed_point(f: Callable[[int], int], lo: int, hi: int) -> int:
    """
    Minimal ``k`` in ``lo..hi`` with ``f(k - 1) = f(k) = k``.

    ``f`` must be nondecreasing on ``lo - 1..hi``. When ``f`` maps that range
    into ``lo..hi``, the least fixed point, reached by iterating from
    ``lo - 1``, has the double property.

    :raises NotFound: if ``f`` does not map the window into itself
    """
    if hi < lo:
        raise NotFound("empty window")
    if f(lo - 1) < lo or f(hi) > hi:
        raise NotFound(f"map does not send {lo - 1}..{hi} into {lo}..{hi}")
    k = f(lo - 1)
    for _ in range(hi - lo + 2):
        nxt = f(k)
        if nxt == k:
            return k
        k = nxt
    raise NotFound("iteration did not settle; is f monotone?")


# window half-widths tried by find_near, as fractions of delta; the first
# is the canonical choice, the rest widen the bracket at finite n
WINDOW_FRACTIONS = (0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


def _edges(u: float, delta: float, n: int) -> tuple[list[int], list[int]]:
    lows, highs = [], []
    for frac in WINDOW_FRACTIONS:
        lo = max(int(math.floor(n * (u - frac * delta))), 0)
        hi = min(int(math.floor(n * (u + frac * delta))), n)
        if lo not in lows:
            lows.append(lo)
        if hi not in highs:
            highs.append(hi)
    return lows, highs


def find_near_window(sample: SignalSample, u: float, delta: float,
                     prefer: Optional[tuple[int, int]] = None
                     ) -> Optional[tuple[int, tuple[int, int]]]:
    """
    Like ``find_near`` but also returns the window ``(lo, hi)`` used.

    The counting map sends ``lo - 1..hi`` into ``lo..hi`` iff
    ``G(lo - 1) >= lo`` and ``G(hi) <= hi``. The two conditions are checked
    separately over candidate edges, starting with ``prefer`` when given.
    """
    n = sample.n
    lows, highs = _edges(u, delta, n)
    if prefer is not None:
        lows.insert(0, prefer[0])
        highs.insert(0, prefer[1])
    lo = next((a for a in lows if count_G(sample, a - 1) >= a), None)
    hi = next((b for b in highs if count_G(sample, b) <= b), None)
    if lo is None or hi is None or hi < lo:
        return None
    try:
        k = double_fixed_point(lambda j: count_G(sample, j), lo, hi)
    except NotFound:
        return None
    if abs(u - k / n) > delta:
        return None
    return k, (lo, hi)


def find_near(sample: SignalSample, u: float, delta: float) -> Optional[int]:
    """
    An equilibrium count ``k`` with ``|u - k/n| <= delta``, or None.

    Looks for a window of counts around ``n u`` that the counting map sends
    into itself, first ``u +- 0.4 delta`` and then wider ones up to
    ``u +- 0.9 delta``, and returns the least double fixed point in it. For
    ``delta >= 1`` every count is admissible and the element of K nearest
    to ``u`` is returned.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if delta >= 1:
        n = sample.n
        K = enumerate_equilibria(sample).K
        return min(K, key=lambda k: (abs(u - k / n), k))
    found = find_near_window(sample, u, delta)
    return None if found is None else found[0]


# -- dynamic paths -----------------------------------------------------------

def _samples(model, params, grid, uniforms) -> list[SignalSample]:
    u = np.sort(np.asarray(uniforms, dtype=float).reshape(-1))
    return [SignalSample(np.asarray(model.quantile(t, u), dtype=float), params, t)
            for t in grid]


def _check_grid(grid) -> tuple[float, ...]:
    grid = tuple(float(t) for t in grid)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly increasing")
    return grid


def minimal_path(model: SignalModel, params: GameParams, grid: Sequence[float],
                 uniforms) -> EquilibriumPath:
    grid = _check_grid(grid)
    k, counts = 0, []
    for s in _samples(model, params, grid, uniforms):
        k = minimal_from(s, k)
        counts.append(k)
    return EquilibriumPath(grid, tuple(counts), "minimal")


def maximal_path(model: SignalModel, params: GameParams, grid: Sequence[float],
                 uniforms) -> EquilibriumPath:
    grid = _check_grid(grid)
    k, counts = 0, []
    for s in _samples(model, params, grid, uniforms):
        k = maximal_from(s, k)
        counts.append(k)
    return EquilibriumPath(grid, tuple(counts), "maximal")


def splice(path_a: EquilibriumPath, path_b: EquilibriumPath, t0: float,
           t1: float, model: SignalModel, params: GameParams,
           uniforms) -> EquilibriumPath:
    """
    Follow ``path_a`` before ``t0``, extend minimally on ``[t0, t1)`` and
    follow ``path_b`` from ``t1`` on.

    :raises OrderViolation: if ``path_a(t0) > path_b(t1)``
    """
    if path_a.grid != path_b.grid:
        raise ValueError("paths live on different grids")
    grid = path_a.grid
    if t0 not in grid or t1 not in grid or t1 < t0:
        raise ValueError("t0 <= t1 must be grid points")
    i0, i1 = grid.index(t0), grid.index(t1)
    a0, b1 = path_a.counts[i0], path_b.counts[i1]
    if a0 > b1:
        raise OrderViolation(f"path A has {a0} stopped at t0 but path B only "
                             f"{b1} at t1")
    samples = _samples(model, params, grid, uniforms)
    counts = list(path_a.counts[:i0])
    if i0 < i1:
        k = a0
        counts.append(k)
        for j in range(i0 + 1, i1):
            k = minimal_from(samples[j], k)
            counts.append(k)
        if k > b1:
            raise OrderViolation(f"minimal extension reaches {k} > {b1} at t1")
    counts.extend(path_b.counts[i1:])
    return EquilibriumPath(grid, tuple(counts), "spliced",
                           log=[f"splice {path_a.provenance}@{t0} -> "
                                f"{path_b.provenance}@{t1}"])


def track_flow(model: SignalModel, params: GameParams, flow: MfFlow,
               grid: Sequence[float], delta: float, uniforms) -> EquilibriumPath:
    """
    Follow a mean field flow with n-player equilibria.

    At each grid time the equilibrium near ``flow(t)`` from ``find_near`` is
    spliced onto the path built so far. Where none exists, or it would make
    the count decrease, the path continues by minimal extension and the
    time is flagged as a failure.
    """
    grid = _check_grid(grid)
    samples = _samples(model, params, grid, uniforms)
    k_prev, counts, success, log = 0, [], [], []
    last_u, last_window = None, None
    for t, s in zip(grid, samples):
        u = flow.at(t)
        if delta >= 1:
            target = find_near(s, u, delta)
        else:
            # equal flow values reuse the window, so counts cannot drop
            prefer = last_window if u == last_u else None
            found = find_near_window(s, u, delta, prefer)
            target = None if found is None else found[0]
            last_u, last_window = u, (None if found is None else found[1])
        if target is not None and target >= k_prev:
            # Remark-3.3 splice: the minimal extension never overshoots a
            # fixed point above k_prev, so jumping to target is consistent
            k, ok = target, True
        else:
            k, ok = minimal_from(s, k_prev), False
            log.append(f"t={t}: " + ("no equilibrium near flow" if target is None
                                     else f"target {target} < {k_prev}"))
        counts.append(k)
        success.append(ok)
        k_prev = k
    return EquilibriumPath(grid, tuple(counts), "tracked", tuple(success), log)


def validate_path(path: EquilibriumPath, model: SignalModel, params: GameParams,
                  uniforms) -> bool:
    """Re-enumerate: each count is a conditional equilibrium given the last."""
    samples = _samples(model, params, path.grid, uniforms)
    k_prev = 0
    for k, s in zip(path.counts, samples):
        if k < k_prev or k not in conditional_equilibria(s, k_prev):
            return False
        k_prev = k
    return True
