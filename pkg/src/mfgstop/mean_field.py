"""
Roots of the mean field master equation ``u + F_t(r - c u) = 1``.

The residual ``g_t(u) = u + F_t(r - c u) - 1`` is scanned on ``[0, 1]``,
sign changes are refined by bisection, near-zero runs are merged into flat
segments, and every root is classified by probing ``g`` on both sides. The
probes use the natural extension of ``F`` outside ``[0, 1]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import NotARoot, ScanTooCoarse
from .signal_models import GameParams, SignalModel

_LOG = logging.getLogger(__name__)

INCREASING = "increasing_transversal"
DECREASING = "decreasing_transversal"
TANGENTIAL_ABOVE = "tangential_above"
TANGENTIAL_BELOW = "tangential_below"
FLAT = "flat_segment"

PROBE_OFFSETS = tuple(10.0 ** -k for k in range(3, 10))
# |g| below this at a probe counts as "no sign"; guards against rounding in
# flat stretches where u + F(r - cu) - 1 cancels to a few ulps
PROBE_FLOOR = 1e-13
# zero runs shorter than this are a single root, not a flat segment
MIN_SEGMENT = 1e-6


@dataclass(frozen=True)
class MfSolution:
    u: float
    left_transversal: bool
    right_transversal: bool
    clazz: str
    alpha: Optional[float] = None
    segment: Optional[tuple[float, float]] = None
    left_decreasing: bool = False
    right_decreasing: bool = False

    @property
    def lo(self) -> float:
        return self.segment[0] if self.segment else self.u

    @property
    def hi(self) -> float:
        return self.segment[1] if self.segment else self.u

    def to_dict(self) -> dict:
        return {
            "u": self.u,
            "class": self.clazz,
            "left_transversal": self.left_transversal,
            "right_transversal": self.right_transversal,
            "alpha": self.alpha,
            "segment": list(self.segment) if self.segment else None,
        }


@dataclass(frozen=True)
class MfQuartet:
    u_m: float
    u_mrt: float
    u_Mlt: float
    u_M: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.u_m, self.u_mrt, self.u_Mlt, self.u_M)

    def to_dict(self) -> dict:
        return {"u_m": self.u_m, "u_mrt": self.u_mrt,
                "u_Mlt": self.u_Mlt, "u_M": self.u_M}


@dataclass(frozen=True)
class MfFlow:
    grid: tuple[float, ...]
    values: tuple[float, ...]
    kind: str = "custom"

    def __post_init__(self):
        if len(self.grid) != len(self.values):
            raise ValueError("grid and values differ in length")

    def at(self, t: float) -> float:
        """Value on the last grid point not after ``t``."""
        i = int(np.searchsorted(self.grid, t, side="right")) - 1
        return self.values[max(i, 0)]


@dataclass(frozen=True)
class SolverConfig:
    scan_points: int = 4096
    tol: float = 1e-9


@dataclass
class FlowReport:
    max_residual: float
    monotone: bool
    tol: float
    residuals: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.monotone and self.max_residual <= self.tol


def residual(model: SignalModel, params: GameParams, t: float, u):
    """``g_t(u) = u + F_t(r - c u) - 1`` for scalar or array ``u``."""
    u_arr = np.asarray(u, dtype=float)
    out = u_arr + np.asarray(model.cdf(t, params.r - params.c * u_arr)) - 1.0
    return float(out) if out.ndim == 0 else out


def alpha_at(model: SignalModel, params: GameParams, t: float,
             u: float) -> Optional[float]:
    """``c f_t(r - c u)``, or None where the density is absent or jumps."""
    if not model.has_density(t):
        return None
    y = params.r - params.c * u
    right = float(model.pdf(t, y, side="right"))
    left = float(model.pdf(t, y, side="left"))
    if abs(right - left) > 1e-12:
        # density jumps at r - cu: the slope of g is undefined there
        return None
    return params.c * right


def _side_flags(model, params, t, u, direction: int) -> tuple[bool, bool]:
    """(any probe with g < 0, any probe with g > 0) on one side of ``u``."""
    probes = u + direction * np.asarray(PROBE_OFFSETS)
    g = residual(model, params, t, probes)
    return bool(np.any(g < -PROBE_FLOOR)), bool(np.any(g > PROBE_FLOOR))


def _class_from_flags(left_inc, right_inc, left_dec, right_dec) -> str:
    if left_inc and right_inc:
        return INCREASING
    if left_dec and right_dec:
        return DECREASING
    if left_dec and right_inc:
        return TANGENTIAL_ABOVE
    if left_inc and right_dec:
        return TANGENTIAL_BELOW
    return FLAT


def classify(model: SignalModel, params: GameParams, t: float, u: float,
             tol: float = 1e-9) -> MfSolution:
    """
    Classify a root by probing ``g`` at ``u -/+ 10**-k``, ``k = 3..9``.

    Left-transversal means some left probe has ``g < 0``, right-transversal
    some right probe has ``g > 0``; the decreasing flags are the reversed
    inequalities.

    :raises NotARoot: if ``|g(u)| > tol``
    """
    g0 = residual(model, params, t, u)
    if abs(g0) > tol:
        raise NotARoot(f"g({u!r}) = {g0!r} exceeds tolerance {tol!r}")
    left_inc, left_dec = _side_flags(model, params, t, u, -1)
    right_dec, right_inc = _side_flags(model, params, t, u, +1)
    clazz = _class_from_flags(left_inc, right_inc, left_dec, right_dec)
    return MfSolution(float(u), left_inc, right_inc, clazz,
                      alpha=alpha_at(model, params, t, u),
                      left_decreasing=left_dec, right_decreasing=right_dec)


def _segment_solution(model, params, t, lo, hi) -> MfSolution:
    left_inc, left_dec = _side_flags(model, params, t, lo, -1)
    right_dec, right_inc = _side_flags(model, params, t, hi, +1)
    return MfSolution(float(lo), left_inc, right_inc, FLAT,
                      alpha=None, segment=(float(lo), float(hi)),
                      left_decreasing=left_dec, right_decreasing=right_dec)


def scan_grid(model: SignalModel, params: GameParams, t: float,
              scan_points: int) -> np.ndarray:
    """Uniform grid on [0, 1] plus every breakpoint mapped to ``(r - y)/c``."""
    grid = np.linspace(0.0, 1.0, scan_points)
    mapped = (params.r - np.asarray(model.breakpoints(t))) / params.c
    mapped = mapped[(mapped >= 0.0) & (mapped <= 1.0)]
    pts = np.unique(np.concatenate([grid, mapped]))
    # drop near-duplicates so that a transversal root is not mistaken for a
    # two-point flat run
    keep = np.concatenate([[True], np.diff(pts) > 1e-12])
    return pts[keep]


def _bisect(model, params, t, a, b, ga) -> tuple[float, float]:
    """Shrink a sign-change bracket to float resolution; returns (u, g(u))."""
    best_u, best_g = a, ga
    for _ in range(200):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        gm = residual(model, params, t, m)
        if abs(gm) < abs(best_g):
            best_u, best_g = m, gm
        if gm == 0.0:
            break
        if (gm < 0) == (ga < 0):
            a, ga = m, gm
        else:
            b = m
    gb = residual(model, params, t, b)
    if abs(gb) < abs(best_g):
        best_u, best_g = b, gb
    return best_u, best_g


def find_solutions(model: SignalModel, params: GameParams, t: float,
                   cfg: SolverConfig = SolverConfig()) -> list[MfSolution]:
    """
    All solutions of the master equation in ``[0, 1]``, sorted by location.

    :raises ScanTooCoarse: if some scan cell has matching endpoint signs but
        the opposite sign at its midpoint (two hidden roots)
    """
    if cfg.scan_points < 2 or not cfg.tol > 0:
        raise ValueError("need scan_points >= 2 and tol > 0")
    tol = cfg.tol
    pts = scan_grid(model, params, t, cfg.scan_points)
    g = residual(model, params, t, pts)
    zero = np.abs(g) <= tol

    mids = 0.5 * (pts[:-1] + pts[1:])
    gm = residual(model, params, t, mids)
    same = (~zero[:-1]) & (~zero[1:]) & (np.sign(g[:-1]) == np.sign(g[1:]))
    hidden = same & (np.abs(gm) > tol) & (np.sign(gm) != np.sign(g[:-1]))
    if np.any(hidden):
        i = int(np.argmax(hidden))
        raise ScanTooCoarse(
            f"two sign changes inside scan cell [{pts[i]!r}, {pts[i + 1]!r}]")

    out: list[MfSolution] = []
    i, npts = 0, pts.size
    while i < npts:
        if zero[i]:
            j = i
            while j + 1 < npts and zero[j + 1]:
                j += 1
            if pts[j] - pts[i] > MIN_SEGMENT:
                out.append(_segment_solution(model, params, t, pts[i], pts[j]))
            else:
                k = i + int(np.argmin(np.abs(g[i:j + 1])))
                out.append(classify(model, params, t, pts[k], tol))
            i = j + 1
            continue
        if i + 1 < npts and not zero[i + 1] and np.sign(g[i]) != np.sign(g[i + 1]):
            u, gu = _bisect(model, params, t, pts[i], pts[i + 1], g[i])
            if abs(gu) <= tol:
                out.append(classify(model, params, t, u, tol))
            else:
                # g jumps over zero where F has an atom: not a solution
                _LOG.debug("discarding jump crossing near u=%r (g=%r)", u, gu)
        i += 1
    return out


def _candidates(solutions: Sequence[MfSolution]):
    """(u, left_transversal, right_transversal) per root point.

    A flat segment contributes its two endpoints; interior points of a flat
    stretch are neither left- nor right-transversal.
    """
    for s in solutions:
        if s.segment is None:
            yield s.u, s.left_transversal, s.right_transversal
        else:
            yield s.segment[0], s.left_transversal, False
            yield s.segment[1], False, s.right_transversal


def quartet_of(solutions: Sequence[MfSolution]) -> MfQuartet:
    cands = list(_candidates(solutions))
    if not cands:
        raise ValueError("no solutions to build a quartet from")
    us = [c[0] for c in cands]
    u_m, u_M = min(us), max(us)
    rt = [u for u, _, right in cands if right]
    lt = [u for u, left, _ in cands if left]
    u_mrt = min(rt) if rt else u_M
    u_Mlt = max(lt) if lt else u_m
    return MfQuartet(u_m, u_mrt, u_Mlt, u_M)


def quartet(model: SignalModel, params: GameParams, t: float,
            cfg: SolverConfig = SolverConfig()) -> MfQuartet:
    """Minimal, minimal right-transversal, maximal left-transversal, maximal root."""
    return quartet_of(find_solutions(model, params, t, cfg))


def flow(model: SignalModel, params: GameParams, kind: str,
         grid: Sequence[float], cfg: SolverConfig = SolverConfig()) -> MfFlow:
    """
    Minimal (right-regularized ``u_m``) or maximal (``u_M``) equilibrium flow.

    The right limit of the minimal root at ``t_j`` is read off at
    ``t_j + h`` with ``h`` a tiny fraction of the gap to the next grid point.
    """
    grid = [float(t) for t in grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly increasing")
    values = []
    for j, t in enumerate(grid):
        if kind == "maximal":
            values.append(quartet(model, params, t, cfg).u_M)
        elif kind == "minimal":
            gap = grid[j + 1] - t if j + 1 < len(grid) else 1.0
            h = min(1e-9, gap * 1e-3)
            values.append(quartet(model, params, t + h, cfg).u_m)
        else:
            raise ValueError(f"unknown flow kind {kind!r}")
    if any(b < a for a, b in zip(values, values[1:])):
        raise AssertionError(f"{kind} flow is not monotone: {values}")
    return MfFlow(tuple(grid), tuple(values), kind)


def verify_flow(model: SignalModel, params: GameParams, flow: MfFlow,
                tol: float = 1e-9) -> FlowReport:
    res = [abs(residual(model, params, t, v))
           for t, v in zip(flow.grid, flow.values)]
    monotone = all(b >= a for a, b in zip(flow.values, flow.values[1:]))
    return FlowReport(max(res, default=0.0), monotone, tol, res)


def root_set_distance(solutions: Sequence[MfSolution], x: float) -> float:
    """Distance from ``x`` to the solution set (flat segments included)."""
    best = np.inf
    for s in solutions:
        lo, hi = s.lo, s.hi
        d = 0.0 if lo <= x <= hi else min(abs(x - lo), abs(x - hi))
        best = min(best, d)
    return float(best)
