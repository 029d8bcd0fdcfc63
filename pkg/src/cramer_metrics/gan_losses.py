"""Cramér GAN loss computations on explicit transforms.

A critic here is ``f(x) = ||h(x) - h(x_g')|| - ||h(x)||`` for a transform
``h``.  Transforms carry a hand-written vector-Jacobian product, which is
all the gradient penalty needs.  Nothing in this module trains anything.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .distributions import DiscreteDist, from_atoms
from .gradients import ENUMERATION_BUDGET, EnumerationBudgetError

NORM_EPS = 1e-12
DEFAULT_LAMBDA = 10.0


def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


class Transform(Protocol):
    def forward(self, x: np.ndarray) -> np.ndarray: ...

    def vjp(self, x: np.ndarray, u: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class Identity:
    def forward(self, x):
        return _vec(x).copy()

    def vjp(self, x, u):
        return _vec(u).copy()


@dataclass(frozen=True, eq=False)
class Affine:
    """``h(x) = A x + b``; ``A = 0`` gives the zero transform."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = _vec(self.b)
        if b.shape != (A.shape[0],):
            raise ValueError("bias length must equal the output dimension")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def zero(cls, d: int, k: int = 1) -> "Affine":
        return cls(np.zeros((k, d)), np.zeros(k))

    def forward(self, x):
        return self.A @ _vec(x) + self.b

    def vjp(self, x, u):
        return self.A.T @ _vec(u)


@dataclass(frozen=True, eq=False)
class TanhMLP:
    """``h(x) = W2 tanh(W1 x + b1) + b2``."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        for name in ("W1", "W2"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        for name in ("b1", "b2"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        if (self.b1.shape != (self.W1.shape[0],) or self.W2.shape[1] != self.W1.shape[0]
                or self.b2.shape != (self.W2.shape[0],)):
            raise ValueError("inconsistent layer shapes")

    @classmethod
    def random(cls, d: int, hidden: int, k: int, rng: np.random.Generator) -> "TanhMLP":
        return cls(rng.standard_normal((hidden, d)) / math.sqrt(d), rng.standard_normal(hidden),
                   rng.standard_normal((k, hidden)) / math.sqrt(hidden), rng.standard_normal(k))

    def forward(self, x):
        return self.W2 @ np.tanh(self.W1 @ _vec(x) + self.b1) + self.b2

    def vjp(self, x, u):
        a = np.tanh(self.W1 @ _vec(x) + self.b1)
        return self.W1.T @ ((1.0 - a * a) * (self.W2.T @ _vec(u)))


def transform_from_dict(obj: dict) -> Transform:
    kind = obj.get("kind")
    if kind == "identity":
        return Identity()
    if kind == "affine":
        return Affine(obj["A"], obj["b"])
    if kind == "tanh_mlp":
        return TanhMLP(obj["W1"], obj["b1"], obj["W2"], obj["b2"])
    raise ValueError(f"unknown transform kind {kind!r}")


@dataclass(frozen=True, eq=False)
class GanBatch:
    x_r: np.ndarray
    x_g: np.ndarray
    x_g_prime: np.ndarray
    eps: float
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        vs = [_vec(v) for v in (self.x_r, self.x_g, self.x_g_prime)]
        if len({v.shape for v in vs}) != 1 or vs[0].ndim != 1:
            raise ValueError("x_r, x_g and x_g_prime must be vectors of one dimension")
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("eps must lie in [0, 1]")
        if not self.lam >= 0:
            raise ValueError("lambda must be >= 0")
        object.__setattr__(self, "x_r", vs[0])
        object.__setattr__(self, "x_g", vs[1])
        object.__setattr__(self, "x_g_prime", vs[2])

    @property
    def x_hat(self) -> np.ndarray:
        return self.eps * self.x_r + (1.0 - self.eps) * self.x_g


def _norm(v: np.ndarray) -> float:
    return float(np.linalg.norm(v))


def _unit(v: np.ndarray) -> np.ndarray:
    # smoothed normalisation; a zero vector maps to zero
    return v / math.sqrt(float(v @ v) + NORM_EPS ** 2)


def critic_f(x, x_g_prime, h: Transform) -> float:
    hx = h.forward(x)
    return _norm(hx - h.forward(x_g_prime)) - _norm(hx)


def critic_grad(x, x_g_prime, h: Transform) -> np.ndarray:
    """``grad_x f(x)`` from one vjp per norm term."""
    hx = h.forward(x)
    u1 = _unit(hx - h.forward(x_g_prime))
    u2 = _unit(hx)
    return h.vjp(x, u1) - h.vjp(x, u2)


def generator_loss(batch: GanBatch, h: Transform) -> float:
    hr, hg, hgp = (h.forward(v) for v in (batch.x_r, batch.x_g, batch.x_g_prime))
    return _norm(hr - hg) + _norm(hr - hgp) - _norm(hg - hgp)


def surrogate_loss(batch: GanBatch, h: Transform) -> float:
    return critic_f(batch.x_r, batch.x_g_prime, h) - critic_f(batch.x_g, batch.x_g_prime, h)


def gradient_penalty(batch: GanBatch, h: Transform) -> float:
    g = critic_grad(batch.x_hat, batch.x_g_prime, h)
    return batch.lam * (_norm(g) - 1.0) ** 2


def critic_loss(batch: GanBatch, h: Transform) -> float:
    return -surrogate_loss(batch, h) + gradient_penalty(batch, h)


def all_losses(batch: GanBatch, h: Transform) -> dict[str, float]:
    sur = surrogate_loss(batch, h)
    gp = gradient_penalty(batch, h)
    return {"generator": generator_loss(batch, h), "surrogate": sur,
            "gradient_penalty": gp, "critic": -sur + gp}


# Reparametrised generator G(z) = theta0 + theta1 z on the line.

def _check_theta(theta) -> np.ndarray:
    theta = _vec(theta)
    if theta.shape != (2,):
        raise ValueError("generator parameters are (theta0, theta1)")
    return theta


def reparam_sample_grad(x: float, z: float, z_prime: float, theta) -> np.ndarray:
    """Gradient of ``2|x - G(z)| - |G(z) - G(z')|`` with ``sgn(0) = 0``."""
    t0, t1 = _check_theta(theta)
    g = t0 + t1 * z
    s1 = np.sign(x - g)
    s2 = np.sign(t1 * (z - z_prime))
    return np.array([-2.0 * s1, -2.0 * s1 * z - s2 * (z - z_prime)])


def reparam_generator_grad(noise: DiscreteDist, theta, target: DiscreteDist,
                           budget: int = ENUMERATION_BUDGET) -> np.ndarray:
    """Exact gradient of the energy distance between ``target`` and ``G_theta(Z)``.

    Sums over every (target atom, noise atom) and (noise atom, noise atom) pair.
    """
    t0, t1 = _check_theta(theta)
    nx, nz = target.support.size, noise.support.size
    if nx * nz + nz * nz > budget:
        raise EnumerationBudgetError(f"{nx * nz + nz * nz} pairs exceed budget {budget}")
    z, pz = noise.support, noise.probs
    x, px = target.support, target.probs
    g = t0 + t1 * z
    s1 = np.sign(x[:, None] - g[None, :])          # (nx, nz)
    w1 = px[:, None] * pz[None, :] * s1
    dz = z[:, None] - z[None, :]
    w2 = pz[:, None] * pz[None, :] * np.sign(t1 * dz) * dz
    d0 = -2.0 * math.fsum(w1.ravel())
    d1 = -2.0 * math.fsum((w1 * z[None, :]).ravel()) - math.fsum(w2.ravel())
    return np.array([d0, d1])


def pushforward(noise: DiscreteDist, theta) -> DiscreteDist:
    """Law of ``theta0 + theta1 Z``; coincident images are merged."""
    t0, t1 = _check_theta(theta)
    return from_atoms(t0 + t1 * noise.support, noise.probs)
