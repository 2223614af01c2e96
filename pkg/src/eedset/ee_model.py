"""Energy-efficiency utilities and the continuous-decision optimum.

Powers are in mW, gains are dimensionless and ``sigma2`` is in mW, so
``p * g / sigma2`` is dimensionless. The Case I benefit uses the natural
logarithm (nats/s/Hz); Case II returns a packet-success throughput in bits/s.

All numeric functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .linalg_channel import dominant_right_pair, dominant_right_pairs

BISECT_RTOL = 1e-12
BISECT_MAX_ITER = 400


class UtilityCase(str, enum.Enum):
    CASE_I = "I"
    CASE_II = "II"

    @classmethod
    def parse(cls, value) -> "UtilityCase":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().removeprefix("CASE").strip(" _")
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown utility case {value!r}")


@dataclass(frozen=True)
class EeConstants:
    sigma2: float = 1.0
    p0: float = 0.5
    pmax: float = 1.0
    c: float = 0.1
    r0_raw: float = 1e6

    def __post_init__(self):
        for name in ("sigma2", "p0", "pmax", "c", "r0_raw"):
            value = getattr(self, name)
            if not value > 0 or math.isnan(value):
                raise DomainError(f"{name} must be > 0, got {value!r}")


@dataclass(frozen=True)
class ContinuousOptimum:
    p_star: float
    v_star: np.ndarray
    u_star: float
    gain: float
    degenerate: bool = False


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def benefit(case: UtilityCase, p, g, k: EeConstants):
    """Transmission benefit; both cases return 0 when ``p * g == 0``."""
    pg = np.asarray(p, dtype=float) * np.asarray(g, dtype=float)
    if case is UtilityCase.CASE_I:
        return _out(np.log1p(pg / k.sigma2))
    # p g = 0 gives exp(-inf) = 0
    with np.errstate(divide="ignore"):
        return _out(k.r0_raw * np.exp(-(k.c * k.sigma2) / pg))


def utility(case: UtilityCase, p, g, k: EeConstants):
    """Energy efficiency ``benefit / (p + P0)``."""
    return _out(np.asarray(benefit(case, p, g, k)) / (np.asarray(p, dtype=float) + k.p0))


def case1_stationarity(p, lam, k: EeConstants):
    """Numerator of ``du/dp`` for Case I at gain ``lam``.

    ``(p + P0) / (p + sigma2/lam) - ln(1 + lam p / sigma2)``. It is positive
    below the optimal power and negative above it.
    """
    p = np.asarray(p, dtype=float)
    lam = np.asarray(lam, dtype=float)
    return _out((p + k.p0) / (p + k.sigma2 / lam) - np.log1p(lam * p / k.sigma2))


def _check_gain(lam: np.ndarray) -> None:
    if np.any(~(lam > 0)) or np.any(~np.isfinite(lam)):
        raise DomainError("optimal power needs a finite gain > 0")


def _case1_root(lam: np.ndarray, k: EeConstants) -> np.ndarray:
    lo = np.maximum(0.0, k.p0 - k.sigma2 / lam)
    # that bound can overshoot the root at large gains; f(0) = lam P0 / sigma2 > 0 always
    lo = np.where(case1_stationarity(lo, lam, k) > 0, lo, 0.0)
    hi = np.ones_like(lam)
    grow = case1_stationarity(hi, lam, k) >= 0
    while np.any(grow):
        hi = np.where(grow, 2.0 * hi, hi)
        grow = grow & (case1_stationarity(hi, lam, k) >= 0)
    # the stationarity function is positive on [lo, root) by construction
    lo = np.minimum(lo, hi)
    for _ in range(BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        open_ = (hi - lo) >= BISECT_RTOL * (1.0 + mid)
        if not np.any(open_):
            break
        right = case1_stationarity(mid, lam, k) > 0
        lo = np.where(open_ & right, mid, lo)
        hi = np.where(open_ & ~right, mid, hi)
    return 0.5 * (lo + hi)


def optimal_power_case1(lam, k: EeConstants):
    """Energy-efficient power for Case I: the root of the stationarity
    equation found by bracketing bisection, clamped to ``pmax``."""
    lam_a = np.asarray(lam, dtype=float)
    _check_gain(lam_a)
    return _out(np.minimum(_case1_root(np.atleast_1d(lam_a), k).reshape(lam_a.shape), k.pmax))


def optimal_power_case2(lam, k: EeConstants):
    """Closed-form energy-efficient power for Case II, clamped to ``pmax``."""
    lam_a = np.asarray(lam, dtype=float)
    _check_gain(lam_a)
    cs = k.c * k.sigma2
    p = cs / (2.0 * lam_a) * (1.0 + np.sqrt(1.0 + 4.0 * lam_a * k.p0 / cs))
    return _out(np.minimum(p, k.pmax))


def optimal_power(case: UtilityCase, lam, k: EeConstants):
    if case is UtilityCase.CASE_I:
        return optimal_power_case1(lam, k)
    return optimal_power_case2(lam, k)


def continuous_optimum(case: UtilityCase, h, k: EeConstants) -> ContinuousOptimum:
    """Best (power, beam) pair with perfect channel knowledge."""
    lam, v, degenerate = dominant_right_pair(h)
    if degenerate or lam <= 0:
        return ContinuousOptimum(0.0, v, 0.0, 0.0, True)
    p = optimal_power(case, lam, k)
    return ContinuousOptimum(p, v, utility(case, p, lam, k), lam)


def continuous_optima(case: UtilityCase, hs: np.ndarray, k: EeConstants):
    """Vectorized :func:`continuous_optimum` over a channel batch.

    Returns ``(p_star, u_star, lam_max)`` arrays; degenerate channels get
    zero power and zero utility.
    """
    lam, _, degenerate = dominant_right_pairs(hs)
    ok = ~degenerate & (lam > 0)
    p = np.zeros_like(lam)
    if np.any(ok):
        p[ok] = optimal_power(case, lam[ok], k)
    u = np.where(ok, utility(case, p, lam, k), 0.0)
    return p, u, lam
