"""Analytic gradients of ``theta -> d(P, Q_theta)`` and their oracles.

Two independent checks back every analytic gradient here:

* :func:`finite_diff` differentiates the loss value numerically;
* :func:`expected_sample_grad` enumerates every multiset of ``m`` draws
  from the target and averages the sample gradients exactly, which is what
  the unbiasedness property is about.

Ties (``F_Q = F_P`` on a segment, or a quantile level of Q landing on one
of P) use the subgradient ``sgn(0) = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from . import _binomial
from .distributions import (
    BERNOULLI,
    DiscreteDist,
    ParametricFamily,
    cdf,
    empirical,
    sample,
)
from .divergences import Divergence

ENUMERATION_BUDGET = 10**7


class InfiniteLossError(ArithmeticError):
    """The loss is +inf at this parameter, so it has no gradient."""


class EnumerationBudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class LossSpec:
    """The loss ``theta -> divergence(target, family at theta)``."""

    divergence: Divergence
    family: ParametricFamily
    target: DiscreteDist

    def model(self, theta) -> ParametricFamily:
        return self.family.with_theta(theta)

    def loss(self, theta) -> float:
        return self.divergence(self.target, self.model(theta).dist())

    def with_target(self, target: DiscreteDist) -> "LossSpec":
        return LossSpec(self.divergence, self.family, target)


@dataclass(frozen=True)
class GradReport:
    true_grad: np.ndarray
    expected_sample_grad: np.ndarray
    bias: np.ndarray
    m: int


def _lp_grad(P: DiscreteDist, f: ParametricFamily, p: float) -> np.ndarray:
    # d/dtheta of sum_i |F_Q(z_i) - F_P(z_i)|^p (z_{i+1} - z_i)
    z = np.union1d(P.support, f.support)
    if z.size < 2:
        return np.zeros(f.n_params)
    left = z[:-1]
    diff = np.atleast_1d(cdf(f.dist(), left) - cdf(P, left))
    if p == 1.0:
        w = np.sign(diff)
    else:
        w = p * np.abs(diff) ** (p - 1.0) * np.sign(diff)
    return (w * np.diff(z)) @ f.grad_cdf(left)


def _wasserstein_grad(P: DiscreteDist, f: ParametricFamily, p: float) -> np.ndarray:
    # Each cumulative level c_j of Q is a boundary between the quantile
    # values x_j and x_{j+1}; moving it trades cost |a - x_{j+1}|^p for |a - x_j|^p.
    x = f.support
    if x.size < 2:
        return np.zeros(f.n_params)
    c = np.cumsum(f.probs)[:-1]
    dc = np.cumsum(f.probs_jacobian, axis=0)[:-1]
    n = P.support.size - 1
    a = P.support[np.minimum(np.searchsorted(P.cumulative, c, side="left"), n)]
    b = P.support[np.minimum(np.searchsorted(P.cumulative, c, side="right"), n)]
    lo, hi = x[:-1], x[1:]
    d = 0.5 * ((np.abs(a - lo) ** p - np.abs(a - hi) ** p)
               + (np.abs(b - lo) ** p - np.abs(b - hi) ** p))
    return d @ dc


def _kl_grad(P: DiscreteDist, f: ParametricFamily) -> np.ndarray:
    mask = P.probs > 0
    xs, ps = P.support[mask], P.probs[mask]
    idx = np.searchsorted(f.support, xs)
    idx_c = np.minimum(idx, f.support.size - 1)
    q = f.probs[idx_c]
    if np.any(idx >= f.support.size) or np.any(f.support[idx_c] != xs) or np.any(q == 0):
        raise InfiniteLossError("target puts mass where the model has none")
    return -(ps / q) @ f.probs_jacobian[idx_c]


def _energy_grad(P: DiscreteDist, f: ParametricFamily) -> np.ndarray:
    # grad of 2E|X - Y| - E|Y - Y'| with Y ~ Q_theta on a fixed support
    y = f.support
    to_target = np.abs(y[:, None] - P.support[None, :]) @ P.probs
    to_model = np.abs(y[:, None] - y[None, :]) @ f.probs
    return 2.0 * (to_target - to_model) @ f.probs_jacobian


def gradient(divergence: Divergence, P: DiscreteDist, f: ParametricFamily) -> np.ndarray:
    """Gradient of ``theta -> divergence(P, Q_theta)`` at ``f.theta``."""
    name = divergence.name
    if name == "kl":
        return _kl_grad(P, f)
    if name == "wasserstein_pp":
        return _wasserstein_grad(P, f, divergence.p)
    if name == "lp_pp":
        return _lp_grad(P, f, divergence.p)
    if name == "cramer":
        return _lp_grad(P, f, 2.0)
    return _energy_grad(P, f)


def grad_true(spec: LossSpec, theta) -> np.ndarray:
    return gradient(spec.divergence, spec.target, spec.model(theta))


def grad_sample(spec: LossSpec, theta, samples) -> np.ndarray:
    """Gradient of the sample loss ``d(P_hat_m, Q_theta)``."""
    return gradient(spec.divergence, empirical(samples), spec.model(theta))


def multisets(P: DiscreteDist, m: int, budget: int = ENUMERATION_BUDGET):
    """Yield ``(weight, empirical distribution)`` for every multiset of m draws from P."""
    mask = P.probs > 0
    xs, ps = P.support[mask], P.probs[mask]
    k = xs.size
    count = math.comb(m + k - 1, k - 1)
    if count > budget:
        raise EnumerationBudgetError(
            f"{count} multisets of size {m} over {k} atoms exceeds budget {budget}")
    log_m_fact = math.lgamma(m + 1)
    log_p = np.log(ps)
    for combo in combinations_with_replacement(range(k), m):
        counts = np.bincount(combo, minlength=k)
        nz = counts > 0
        log_w = log_m_fact + float(np.sum(counts * log_p
                                          - np.array([math.lgamma(c + 1) for c in counts])))
        yield math.exp(log_w), DiscreteDist(xs[nz], counts[nz] / m)


def bernoulli_expected_sample_grad(theta_star: float, theta: float, m: int) -> float:
    """``E sgn(theta - theta_hat)`` for ``theta_hat = Binomial(m, theta_star)/m``.

    Away from ties this is ``2 Pr{theta_hat < theta} - 1``.
    """
    below, above = _binomial.mean_below_above(m, theta_star, theta)
    return below - above


def expected_sample_grad(spec: LossSpec, theta, m: int,
                         budget: int = ENUMERATION_BUDGET) -> GradReport:
    """Exact expectation of the sample gradient over all m-sample outcomes."""
    if m < 1:
        raise ValueError("m must be >= 1")
    f = spec.model(theta)
    true = gradient(spec.divergence, spec.target, f)
    terms = [w * gradient(spec.divergence, emp, f) for w, emp in multisets(spec.target, m, budget)]
    expected = np.array([math.fsum(col) for col in np.array(terms).T])
    if (f.kind == BERNOULLI and spec.divergence.name == "wasserstein_pp"
            and set(spec.target.support.tolist()) <= {0.0, 1.0}):
        closed = bernoulli_expected_sample_grad(spec.target.prob_of(1.0), f.theta[0], m)
        if abs(closed - expected[0]) > 1e-12:
            raise RuntimeError(f"closed form {closed!r} disagrees with enumeration {expected[0]!r}")
    return GradReport(true, expected, expected - true, m)


def monte_carlo_sample_grad(spec: LossSpec, theta, m: int, n_draws: int,
                            rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo estimate of the expected sample gradient: ``(mean, standard error)``."""
    f = spec.model(theta)
    draws = np.array([gradient(spec.divergence, empirical(sample(spec.target, rng, m)), f)
                      for _ in range(n_draws)])
    return draws.mean(axis=0), draws.std(axis=0, ddof=1) / math.sqrt(n_draws)


def finite_diff(spec: LossSpec, theta, h: float = 1e-5) -> np.ndarray:
    """Central differences of the true loss, one coordinate at a time."""
    if not h > 0:
        raise ValueError("step must be positive")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    out = np.empty(theta.size)
    for i in range(theta.size):
        step = np.zeros_like(theta)
        step[i] = h
        hi, lo = theta + step, theta - step
        if not (spec.family.in_domain(hi) and spec.family.in_domain(lo)):
            raise ValueError(f"theta +/- h leaves the family's domain in coordinate {i}")
        f_hi, f_lo = spec.loss(hi), spec.loss(lo)
        if not (math.isfinite(f_hi) and math.isfinite(f_lo)):
            raise InfiniteLossError("loss is infinite near theta")
        out[i] = (f_hi - f_lo) / (2.0 * h)
    return out
