"""Bias of the sample Wasserstein gradient for Bernoulli targets.

With ``P = B(theta_star)`` and ``Q_theta = B(theta)`` every ``w_p^p`` equals
``|theta_star - theta|``, the true gradient is ``sgn(theta - theta_star)``
and the sample gradient is ``sgn(theta - theta_hat)`` with
``m * theta_hat ~ Binomial(m, theta_star)``.  Everything below follows from
exact binomial probabilities.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from ._binomial import binom_pmf, median_interval, tail_split
from .gradients import bernoulli_expected_sample_grad

MINIMAX_FLOOR = 2.0 * math.exp(-2.0)
HALF_POINT_FLOOR = 1.0 / 6.0
TIE_NUDGE = 1e-9


def _sgn(x: float) -> float:
    return float((x > 0) - (x < 0))


def _off_grid(theta: float, m: int) -> float:
    """Nudge ``theta`` by 1e-9 if it coincides with an attainable ``k/m``."""
    k = round(theta * m)
    if 0 <= k <= m and k / m == theta:
        return theta + TIE_NUDGE
    return theta


@dataclass(frozen=True)
class BiasRow:
    m: int
    theta_star: float
    theta: float
    true_grad: float
    exp_sample_grad: float
    bias: float


BIAS_HEADER = ("m", "theta_star", "theta", "true_grad", "exp_sample_grad", "bias")


def bias_row(m: int, theta_star: float, theta: float) -> BiasRow:
    g = _sgn(theta - theta_star)
    below, tie, above = tail_split(m, theta_star, theta)
    eg = below - above
    # E g_hat - g from the tail masses directly, so a tiny bias is not lost
    # to cancellation against g = +-1
    if g > 0:
        bias = -(tie + 2.0 * above)
    elif g < 0:
        bias = tie + 2.0 * below
    else:
        bias = eg
    return BiasRow(m, theta_star, theta, g, eg, bias)


@dataclass(frozen=True)
class BiasCurve:
    rows: tuple[BiasRow, ...]

    def abs_bias(self) -> np.ndarray:
        return np.array([abs(r.bias) for r in self.rows])

    def write_csv(self, fh: TextIO) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BIAS_HEADER)
        for r in self.rows:
            w.writerow([r.m, repr(r.theta_star), repr(r.theta), repr(r.true_grad),
                        repr(r.exp_sample_grad), repr(r.bias)])


@dataclass(frozen=True)
class MinimaxWitness:
    m: int
    theta_star: float
    theta: float
    bias: float


def minimax_bias(m: int) -> MinimaxWitness:
    """A Bernoulli pair whose gradient gap ``g - E g_hat`` is at least ``2e^-2``.

    For m >= 2 the pair is ``theta_star = (m-1)/m`` and ``theta`` halfway to 1,
    where the gap is ``2(1 - 1/m)^m``.  That construction degenerates at m = 1
    (``theta_star = 0`` gives a zero gap), so m = 1 uses ``theta_star = 1/2``,
    ``theta = 3/4`` whose gap is ``2 theta_star = 1``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    theta_star = (m - 1) / m if m >= 2 else 0.5
    theta = 0.5 * (theta_star + 1.0)
    row = bias_row(m, theta_star, theta)
    gap = row.true_grad - row.exp_sample_grad
    if m >= 2:
        closed = 2.0 * (1.0 - 1.0 / m) ** m
        if abs(gap - closed) > 1e-12:
            raise AssertionError(f"m={m}: gap {gap!r} != 2(1-1/m)^m = {closed!r}")
    if gap < MINIMAX_FLOOR:
        raise AssertionError(f"m={m}: gap {gap!r} below 2e^-2")
    return MinimaxWitness(m, theta_star, theta, gap)


def half_point_bias(m: int) -> float:
    """Gap ``2 Pr{theta_hat >= theta}`` at ``theta_star = 1/2``, ``theta = 1/2 + 1/(2 sqrt(8m))``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    theta = 0.5 + 1.0 / (2.0 * math.sqrt(8.0 * m))
    pmf = binom_pmf(m, 0.5)
    gap = 2.0 * math.fsum(pmf[np.arange(m + 1) / m >= theta])
    if gap < HALF_POINT_FLOOR:
        raise AssertionError(f"m={m}: half-point gap {gap!r} below 1/6")
    return gap


def expected_sample_loss(m: int, theta_star: float, theta) -> np.ndarray:
    """``E|theta_hat - theta|`` for each entry of ``theta``."""
    pmf = binom_pmf(m, theta_star)
    frac = np.arange(m + 1) / m
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    return np.abs(frac[None, :] - theta[:, None]) @ pmf


@dataclass(frozen=True)
class LossCurve:
    m: int
    theta_star: float
    theta: np.ndarray
    true_loss: np.ndarray
    expected_sample_loss: np.ndarray
    true_argmin: float
    sample_argmin: float
    median: tuple[float, float]

    def write_csv(self, fh: TextIO) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("theta", "true_loss", "expected_sample_loss"))
        for t, a, b in zip(self.theta, self.true_loss, self.expected_sample_loss):
            w.writerow([repr(float(t)), repr(float(a)), repr(float(b))])


def loss_curve(m: int, theta_star: float, grid_step: float = 1e-4) -> LossCurve:
    """True vs expected sample Wasserstein loss over ``[0, 1]``.

    The grid contains every kink ``k/m`` and ``theta_star`` exactly.  The
    sample-loss argmin is a binomial median over m.
    """
    if grid_step > 1e-3 or grid_step <= 0:
        raise ValueError("grid_step must lie in (0, 1e-3]")
    n = int(round(1.0 / grid_step))
    grid = np.union1d(np.linspace(0.0, 1.0, n + 1),
                      np.append(np.arange(m + 1) / m, theta_star))
    true = np.abs(theta_star - grid)
    esl = expected_sample_loss(m, theta_star, grid)
    lo, hi = median_interval(m, theta_star)
    return LossCurve(m, theta_star, grid, true, esl,
                     float(grid[np.argmin(true)]), float(grid[np.argmin(esl)]),
                     (lo / m, hi / m))


@dataclass(frozen=True)
class DeterministicCheck:
    m: int
    threshold: float
    theta_star: float
    max_expected_grad: float
    sample_argmin: float


def deterministic_threshold(m: int) -> float:
    return 0.5 ** (1.0 / m)


def deterministic_regime(m: int, theta_star: float | None = None,
                         n_grid: int = 1000) -> DeterministicCheck:
    """Check that ``E g_hat < 0`` on a grid of (0, 1) once ``theta_star > (1/2)^(1/m)``.

    A negative expected gradient everywhere drives descent to ``theta = 1``,
    a zero-entropy model for a target with positive entropy.
    """
    threshold = deterministic_threshold(m)
    if theta_star is None:
        theta_star = 0.5 * (threshold + 1.0)
    if not threshold < theta_star < 1.0:
        raise ValueError(f"theta_star must lie in ({threshold}, 1)")
    grid = np.linspace(0.0, 1.0, n_grid + 2)[1:-1]
    eg = np.array([bernoulli_expected_sample_grad(theta_star, t, m) for t in grid])
    worst = float(eg.max())
    closed = 1.0 - 2.0 * theta_star ** m
    if worst >= 0 or worst > closed + 1e-12:
        raise AssertionError(f"expected sample gradient reaches {worst!r}")
    curve = loss_curve(m, theta_star)
    return DeterministicCheck(m, threshold, theta_star, worst, curve.sample_argmin)


def consistency_sweep(theta_star: float, theta: float, m_list: Iterable[int]) -> BiasCurve:
    """``|bias(m)|`` of the sample Wasserstein gradient for each m."""
    if theta == theta_star or not (0 < theta < 1 and 0 < theta_star < 1):
        raise ValueError("need distinct theta, theta_star in (0, 1)")
    return BiasCurve(tuple(bias_row(m, theta_star, _off_grid(theta, m)) for m in m_list))


def is_nonincreasing(values: Sequence[float], tol: float = 0.0) -> bool:
    return all(b <= a + tol for a, b in zip(values, values[1:]))
