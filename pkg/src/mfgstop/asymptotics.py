"""
Closed-form limit statistics near a root ``x`` with slope parameter
``alpha = c f_t(r - c x)``, and exact finite-n membership probabilities.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .errors import DomainError
from .signal_models import GameParams, SignalModel

BISECT_ITERS = 200
THETA_UPPER = 1.0 - 1e-15


def normal_cdf(z: float) -> float:
    """
    Standard normal c.d.f. as ``erfc(-z / sqrt 2) / 2``.

    ``math.erfc`` is accurate to a few ulps, and going through the
    complement keeps the lower tail free of cancellation.
    """
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _require_above_one(alpha: float):
    if not alpha > 1:
        raise DomainError(f"alpha must exceed 1, got {alpha!r}")


def theta_of(alpha: float) -> float:
    """The root in (0, 1) of ``theta exp(-theta) = alpha exp(-alpha)``."""
    _require_above_one(alpha)
    target = alpha * math.exp(-alpha)
    lo, hi = 0.0, THETA_UPPER
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if mid * math.exp(-mid) < target:
            lo = mid
        else:
            hi = mid
    # pick the endpoint with the smaller residual
    if abs(lo * math.exp(-lo) - target) <= abs(hi * math.exp(-hi) - target):
        return lo
    return hi


def kstar_crossing_limit(alpha: float) -> float:
    """Limit probability of a relaxed equilibrium near a strongly decreasing root."""
    _require_above_one(alpha)
    return (1.0 - theta_of(alpha)) / (alpha - 1.0)


def expected_count_limit(alpha: float) -> float:
    """Limiting expected number of equilibria near the root."""
    if alpha < 0:
        raise DomainError("alpha must be nonnegative")
    if alpha == 1:
        raise DomainError("alpha = 1 (tangential) has no finite limit")
    return math.exp(-alpha) / abs(1.0 - alpha)


def lower_bound_L(alpha: float) -> float:
    _require_above_one(alpha)
    a0 = 1.0 - alpha + math.log(alpha)
    a = abs(a0)
    tail = 1.0 - normal_cdf(math.sqrt(2.0 * a))
    return math.exp(-alpha) / ((alpha - 1.0) * (1.0 + 2.0 * math.sqrt(2.0 / a) * tail))


def window_expected_count(alpha: float, x: float, beta: float) -> float:
    """Expected count in a window of half-width ``beta / sqrt(n)``, n -> inf."""
    if not 0 < x < 1:
        raise DomainError("x must lie in (0, 1)")
    if beta < 0:
        raise DomainError("beta must be nonnegative")
    base = expected_count_limit(alpha)
    if math.isinf(beta):
        return base
    q = abs(alpha - 1.0) * beta / math.sqrt(x * (1.0 - x))
    return base * (normal_cdf(q) - normal_cdf(-q))


@dataclass(frozen=True)
class AlphaStats:
    alpha: float
    theta: Optional[float]
    kstar_crossing_limit: Optional[float]
    expected_count_limit: Optional[float]
    lower_bound_L: Optional[float]
    a0: float
    window_expected_count: Optional[float] = None
    x: Optional[float] = None
    beta: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def alpha_stats(alpha: float, x: Optional[float] = None,
                beta: Optional[float] = None) -> AlphaStats:
    """
    Every closed form defined at ``alpha``; entries that only exist for
    ``alpha > 1`` are None below that.

    :raises DomainError: for ``alpha <= 0`` or the tangential ``alpha = 1``
    """
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    if alpha == 1:
        raise DomainError("alpha = 1 (tangential) has no closed forms")
    strong = alpha > 1
    return AlphaStats(
        alpha=alpha,
        theta=theta_of(alpha) if strong else None,
        kstar_crossing_limit=kstar_crossing_limit(alpha) if strong else None,
        expected_count_limit=expected_count_limit(alpha),
        lower_bound_L=lower_bound_L(alpha) if strong else None,
        a0=1.0 - alpha + math.log(alpha),
        window_expected_count=(window_expected_count(alpha, x, beta)
                               if x is not None and beta is not None else None),
        x=x,
        beta=beta,
    )


def bound_curve(lo: float, hi: float, step: float) -> list[dict]:
    """Rows (alpha, theta, kstar_limit, expected_count, lower_L) for alpha > 1."""
    rows = []
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    for i in range(count):
        a = lo + i * step
        if a <= 1:
            continue
        rows.append({
            "alpha": a,
            "theta": theta_of(a),
            "kstar_limit": kstar_crossing_limit(a),
            "expected_count": expected_count_limit(a),
            "lower_L": lower_bound_L(a),
        })
    return rows


# -- exact finite-n formula --------------------------------------------------

def _log_prob_k_in_K(n: int, k, F_k, F_km1):
    """log P(k in K) = log C(n,k) + (n-k) log F_k + k log(1 - F_{k-1})."""
    k = np.asarray(k, dtype=float)
    logc = gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
    return logc + xlogy(n - k, F_k) + xlog1py(k, -F_km1)


def prob_k_in_K(model: SignalModel, params: GameParams, t: float, ks) -> np.ndarray:
    """Vectorized ``P(k in K)`` over an array of counts."""
    n = params.n
    if n is None:
        raise ValueError("params.n is required")
    ks = np.asarray(ks, dtype=int)
    r, c = params.r, params.c
    F_k = np.asarray(model.cdf(t, r - c * ks / n), dtype=float)
    F_km1 = np.asarray(model.cdf(t, r - c * (ks - 1) / n), dtype=float)
    with np.errstate(divide="ignore"):
        logp = _log_prob_k_in_K(n, ks, F_k, F_km1)
    p = np.exp(logp)
    # k = 0 only needs nobody at or above r
    zero = ks == 0
    if np.any(zero):
        p = np.where(zero, float(model.cdf(t, r)) ** n, p)
    return np.clip(p, 0.0, 1.0)


def exact_prob_k_in_K(model: SignalModel, params: GameParams, t: float,
                      k: int) -> float:
    """
    ``C(n,k) F_k^(n-k) (1 - F_{k-1})^k`` with ``F_k = F_t(r - c k / n)``.

    Exact for continuous laws; for laws with atoms it ignores ties.
    """
    n = params.n
    if n is None or not 0 <= k <= n:
        raise ValueError("need 0 <= k <= params.n")
    return float(prob_k_in_K(model, params, t, [k])[0])


WINDOW_SLACK = 1e-9


def in_window(ks, n: int, x: float, eps: float) -> np.ndarray:
    """
    Mask of counts with ``|x - k/n| < eps``, compared on the count scale.

    A count within ``WINDOW_SLACK`` of an edge is treated as on the edge, so
    ``k/n = 0.4`` is outside ``|0.5 - k/n| < 0.1`` despite float rounding.
    """
    ks = np.asarray(ks, dtype=float)
    return np.abs(x * n - ks) < eps * n - WINDOW_SLACK


def window_counts(n: int, x: float, eps: float) -> np.ndarray:
    """All ``k`` in ``0..n`` with ``|x - k/n| < eps``."""
    lo = max(int(math.floor((x - eps) * n)) - 1, 0)
    hi = min(int(math.ceil((x + eps) * n)) + 1, n)
    ks = np.arange(lo, hi + 1)
    return ks[in_window(ks, n, x, eps)]


def exact_expected_count(model: SignalModel, params: GameParams, t: float,
                         n: int, x: float, eps: float) -> float:
    """``E #{k in K : |x - k/n| < eps}`` as a sum of exact probabilities."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    ks = window_counts(n, x, eps)
    if ks.size == 0:
        return 0.0
    p = prob_k_in_K(model, params.with_n(n), t, ks)
    return math.fsum(p.tolist())
