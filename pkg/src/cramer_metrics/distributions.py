"""Finite discrete distributions, point clouds and parametric families.

Every computation in this package runs on distributions with a finite,
sorted support.  :class:`DiscreteDist` is the carrier for targets, models
and empirical distributions alike; :class:`ParametricFamily` maps a
parameter vector to a :class:`DiscreteDist` and knows the analytic
Jacobian of its probabilities.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

PROB_TOL = 1e-12

BERNOULLI = "bernoulli"
SOFTMAX = "softmax"
THREE_POINT = "three_point"
FAMILY_KINDS = (BERNOULLI, SOFTMAX, THREE_POINT)

BERNOULLI_MIN = 1e-6
BERNOULLI_MAX = 1.0 - 1e-6
THREE_POINT_SUPPORT = (0.0, 1.0, 10.0)
LOG2 = math.log(2.0)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteDist:
    """Probability distribution on finitely many real atoms.

    Parameters
    ----------
    support : array-like, shape (n,)
        Strictly increasing outcome values.
    probs : array-like, shape (n,)
        Non-negative masses summing to one (within ``1e-12``).
    """

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        support = np.atleast_1d(_frozen(self.support))
        probs = np.atleast_1d(_frozen(self.probs))
        if support.ndim != 1 or support.shape != probs.shape:
            raise ValueError("support and probs must be 1-d arrays of equal length")
        if support.size == 0:
            raise ValueError("a distribution needs at least one atom")
        if not (np.all(np.isfinite(support)) and np.all(np.isfinite(probs))):
            raise ValueError("support and probs must be finite")
        if np.any(np.diff(support) <= 0):
            raise ValueError("support must be strictly increasing")
        if np.any(probs < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(math.fsum(probs) - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {math.fsum(probs)!r}, not 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @cached_property
    def cumulative(self) -> np.ndarray:
        """F evaluated at each support point; the last entry is exactly 1."""
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        c.setflags(write=False)
        return c

    def __len__(self) -> int:
        return self.support.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteDist):
            return NotImplemented
        return (np.array_equal(self.support, other.support)
                and np.array_equal(self.probs, other.probs))

    def __hash__(self):
        return hash((self.support.tobytes(), self.probs.tobytes()))

    def __repr__(self) -> str:
        return f"DiscreteDist(support={self.support.tolist()}, probs={self.probs.tolist()})"

    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    def prob_of(self, x: float) -> float:
        """Mass at ``x`` (zero off the support)."""
        i = np.searchsorted(self.support, x)
        if i < self.support.size and self.support[i] == x:
            return float(self.probs[i])
        return 0.0

    def to_dict(self) -> dict:
        return {"support": self.support.tolist(), "probs": self.probs.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> "DiscreteDist":
        try:
            return cls(obj["support"], obj["probs"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"expected {{'support': [...], 'probs': [...]}}, got {obj!r}") from exc

    @classmethod
    def from_json(cls, text: str) -> "DiscreteDist":
        return cls.from_dict(json.loads(text))


def dirac(x: float) -> DiscreteDist:
    return DiscreteDist([x], [1.0])


def bernoulli_dist(theta: float) -> DiscreteDist:
    """Bernoulli law on {0, 1} with ``P(1) = theta`` (no clamping)."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"Bernoulli parameter {theta} outside [0, 1]")
    return DiscreteDist([0.0, 1.0], [1.0 - theta, theta])


def from_atoms(values: Iterable[float], weights: Iterable[float]) -> DiscreteDist:
    """Build a distribution from unsorted atoms, merging exactly equal values."""
    acc: dict[float, float] = {}
    for v, w in zip(values, weights):
        acc[float(v)] = acc.get(float(v), 0.0) + float(w)
    keys = sorted(acc)
    probs = np.array([acc[k] for k in keys])
    return DiscreteDist(keys, probs / probs.sum())


def cdf(d: DiscreteDist, x):
    """Right-continuous distribution function ``F(x) = P(X <= x)``.

    Accepts a scalar or an array of evaluation points.
    """
    idx = np.searchsorted(d.support, x, side="right")
    c = np.concatenate(([0.0], d.cumulative))
    out = c[idx]
    return float(out) if np.ndim(out) == 0 else out


def quantile(d: DiscreteDist, u):
    """Generalized inverse ``inf{x : F(x) >= u}`` for ``u`` in (0, 1].

    The result is always a support point.
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(~(u_arr > 0.0)) or np.any(u_arr > 1.0):
        raise ValueError("quantile levels must lie in (0, 1]")
    idx = np.searchsorted(d.cumulative, u_arr, side="left")
    out = d.support[np.minimum(idx, d.support.size - 1)]
    return float(out) if out.ndim == 0 else out


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator: numpy's PCG64 bit generator.

    The same seed yields the same stream on every platform numpy supports.
    """
    return np.random.Generator(np.random.PCG64(seed))


def sample(d: DiscreteDist, rng: np.random.Generator, m: int) -> np.ndarray:
    """Draw ``m`` i.i.d. outcomes by inverse-CDF sampling with U on (0, 1]."""
    if m < 1:
        raise ValueError("sample count must be >= 1")
    u = 1.0 - rng.random(m)
    return np.asarray(quantile(d, u), dtype=float).reshape(m)


def empirical(samples: Sequence[float]) -> DiscreteDist:
    """Empirical distribution of ``samples``; duplicate values are merged."""
    values = [float(s) for s in np.ravel(samples)]
    if not values:
        raise ValueError("empirical distribution of an empty sample")
    counts = Counter(values)
    keys = sorted(counts)
    m = len(values)
    probs = np.array([counts[k] for k in keys], dtype=float) / m
    return DiscreteDist(keys, probs)


def scale(d: DiscreteDist, c: float) -> DiscreteDist:
    """Law of ``c * X`` for ``c > 0``."""
    if not c > 0:
        raise ValueError("scale factor must be positive")
    return DiscreteDist(c * d.support, d.probs)


def shift(d: DiscreteDist, a: float) -> DiscreteDist:
    return DiscreteDist(d.support + a, d.probs)


def convolve(a: DiscreteDist, b: DiscreteDist) -> DiscreteDist:
    """Law of ``A + B`` for independent ``A`` and ``B``."""
    sums = np.add.outer(a.support, b.support).ravel()
    weights = np.multiply.outer(a.probs, b.probs).ravel()
    return from_atoms(sums, weights)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Weighted atoms in R^d (duplicates allowed).

    Parameters
    ----------
    points : array-like, shape (n, d)
    weights : array-like, shape (n,), optional
        Defaults to uniform weights.
    """

    points: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise ValueError("points must be a non-empty (n, d) array with d >= 1")
        if self.weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.array(self.weights, dtype=float).ravel()
        if w.shape != (pts.shape[0],):
            raise ValueError("one weight per point is required")
        if np.any(w < 0) or abs(math.fsum(w) - 1.0) > PROB_TOL:
            raise ValueError("weights must be non-negative and sum to 1")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    @classmethod
    def from_dist(cls, d: DiscreteDist) -> "PointCloud":
        return cls(d.support[:, None], d.probs)


def probs_and_jacobian(kind: str, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Probabilities and their Jacobian for a batch of parameters.

    ``theta`` has shape (S, n_params); returns ``q`` of shape (S, K) and
    ``J`` of shape (S, K, n_params) with ``J[s, k, i] = d q[s, k] / d theta[s, i]``.
    Bernoulli parameters are assumed already clamped.
    """
    theta = np.asarray(theta, dtype=float)
    n = theta.shape[0]
    if kind == BERNOULLI:
        t = theta[:, 0]
        q = np.stack([1.0 - t, t], axis=1)
        jac = np.broadcast_to(np.array([[-1.0], [1.0]]), (n, 2, 1)).copy()
    elif kind == THREE_POINT:
        t = theta[:, 0] + LOG2
        q0 = expit(-t)
        q1 = 0.5 * expit(t)
        q = np.stack([q0, q1, q1], axis=1)
        d0 = -2.0 * q0 * q1
        jac = np.stack([d0, -0.5 * d0, -0.5 * d0], axis=1)[:, :, None]
    elif kind == SOFTMAX:
        z = np.exp(theta - theta.max(axis=1, keepdims=True))
        q = z / z.sum(axis=1, keepdims=True)
        jac = q[:, :, None] * np.eye(q.shape[1])[None] - q[:, :, None] * q[:, None, :]
    else:
        raise ValueError(f"unknown family kind {kind!r}")
    return q, jac


@dataclass(frozen=True, eq=False)
class ParametricFamily:
    """A member ``Q_theta`` of a parametric family on a fixed support.

    Use the constructors :func:`bernoulli`, :func:`softmax_categorical` and
    :func:`three_point_toy` rather than building this directly.
    """

    kind: str
    theta: np.ndarray
    support: np.ndarray

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")
        theta = np.atleast_1d(np.array(self.theta, dtype=float))
        support = np.atleast_1d(np.array(self.support, dtype=float))
        if not np.all(np.isfinite(theta)):
            raise ValueError("parameters must be finite")
        if self.kind == BERNOULLI:
            if theta.size != 1 or not np.array_equal(support, [0.0, 1.0]):
                raise ValueError("Bernoulli takes one parameter on support {0, 1}")
            theta = np.clip(theta, BERNOULLI_MIN, BERNOULLI_MAX)
        elif self.kind == THREE_POINT:
            if theta.size != 1 or not np.array_equal(support, THREE_POINT_SUPPORT):
                raise ValueError("the three-point toy takes one parameter on {0, 1, 10}")
        else:
            if theta.shape != support.shape:
                raise ValueError("softmax needs one logit per support point")
            if np.any(np.diff(support) <= 0):
                raise ValueError("support must be strictly increasing")
        theta.setflags(write=False)
        support.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "support", support)

    @property
    def n_params(self) -> int:
        return self.theta.size

    def with_theta(self, theta) -> "ParametricFamily":
        """Same family at a new parameter (constraints re-applied)."""
        return ParametricFamily(self.kind, theta, self.support)

    def in_domain(self, theta) -> bool:
        """Whether ``theta`` is inside the region where no clamping happens."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if self.kind == BERNOULLI:
            return bool(BERNOULLI_MIN <= theta[0] <= BERNOULLI_MAX)
        return bool(np.all(np.isfinite(theta)))

    @cached_property
    def _probs_and_jacobian(self):
        q, jac = probs_and_jacobian(self.kind, self.theta[None, :])
        q, jac = q[0], jac[0]
        q.setflags(write=False)
        jac.setflags(write=False)
        return q, jac

    @property
    def probs(self) -> np.ndarray:
        return self._probs_and_jacobian[0]

    @property
    def probs_jacobian(self) -> np.ndarray:
        """``J[k, i] = d probs[k] / d theta[i]``, shape (support size, n_params)."""
        return self._probs_and_jacobian[1]

    def dist(self) -> DiscreteDist:
        return DiscreteDist(self.support, self.probs)

    def grad_cdf(self, x) -> np.ndarray:
        """Gradient of ``theta -> F_{Q_theta}(x)``.

        Scalar ``x`` gives shape (n_params,); an array of n points gives (n, n_params).
        """
        cum_jac = np.vstack([np.zeros(self.n_params), np.cumsum(self.probs_jacobian, axis=0)])
        # the total mass is constant, so the last row is identically zero
        cum_jac[-1] = 0.0
        idx = np.searchsorted(self.support, x, side="right")
        return cum_jac[idx]


def bernoulli(theta: float) -> ParametricFamily:
    """Bernoulli family, parameter clamped to ``[1e-6, 1 - 1e-6]``."""
    return ParametricFamily(BERNOULLI, [theta], [0.0, 1.0])


def softmax_categorical(theta, support) -> ParametricFamily:
    return ParametricFamily(SOFTMAX, theta, support)


def three_point_toy(theta: float) -> ParametricFamily:
    """``Q(0) = 1/(1 + 2e^theta)``, ``Q(1) = Q(10) = e^theta/(1 + 2e^theta)``."""
    return ParametricFamily(THREE_POINT, [theta], THREE_POINT_SUPPORT)


def family_dist(f: ParametricFamily) -> DiscreteDist:
    return f.dist()


def family_grad_cdf(f: ParametricFamily, x) -> np.ndarray:
    return f.grad_cdf(x)


def family_from_dict(obj: dict) -> ParametricFamily:
    """Parse ``{"kind": ..., "theta": ..., "support": ...}`` (support optional)."""
    kind = obj["kind"]
    if kind == BERNOULLI:
        return bernoulli(float(np.ravel(obj["theta"])[0]))
    if kind == THREE_POINT:
        return three_point_toy(float(np.ravel(obj["theta"])[0]))
    return softmax_categorical(obj["theta"], obj["support"])
