"""Binomial probabilities evaluated in log space."""
from __future__ import annotations

import math

import numpy as np

EXACT_COMB_LIMIT = 64


def log_comb(m: int, k: int) -> float:
    if m <= EXACT_COMB_LIMIT:
        return math.log(math.comb(m, k))
    return math.lgamma(m + 1) - math.lgamma(k + 1) - math.lgamma(m - k + 1)


def binom_pmf(m: int, p: float) -> np.ndarray:
    """``Pr{K = k}`` for ``K ~ Binomial(m, p)``, k = 0..m."""
    if m < 0 or not 0.0 <= p <= 1.0:
        raise ValueError("need m >= 0 and p in [0, 1]")
    pmf = np.zeros(m + 1)
    if p == 0.0:
        pmf[0] = 1.0
        return pmf
    if p == 1.0:
        pmf[m] = 1.0
        return pmf
    lp, lq = math.log(p), math.log1p(-p)
    for k in range(m + 1):
        pmf[k] = math.exp(log_comb(m, k) + k * lp + (m - k) * lq)
    return pmf


def mean_below_above(m: int, p: float, theta: float) -> tuple[float, float]:
    """``(Pr{K/m < theta}, Pr{K/m > theta})`` for ``K ~ Binomial(m, p)``."""
    pmf = binom_pmf(m, p)
    frac = np.arange(m + 1) / m
    below = math.fsum(pmf[frac < theta])
    above = math.fsum(pmf[frac > theta])
    return below, above


def tail_split(m: int, p: float, theta: float) -> tuple[float, float, float]:
    """``(Pr{K/m < theta}, Pr{K/m = theta}, Pr{K/m > theta})``, each summed directly."""
    pmf = binom_pmf(m, p)
    frac = np.arange(m + 1) / m
    return (math.fsum(pmf[frac < theta]), math.fsum(pmf[frac == theta]),
            math.fsum(pmf[frac > theta]))


def median_interval(m: int, p: float) -> tuple[int, int]:
    """Smallest and largest ``k`` minimising ``E|K - k|`` (the median set).

    A non-unique median occurs when ``Pr{K <= k} = 1/2`` exactly; then every
    value in ``[k, k + 1]`` is a median.
    """
    pmf = binom_pmf(m, p)
    cum = np.cumsum(pmf)
    lo = int(np.searchsorted(cum, 0.5, side="left"))
    hi = lo + 1 if math.isclose(cum[lo], 0.5, rel_tol=0.0, abs_tol=1e-15) else lo
    return lo, min(hi, m)
