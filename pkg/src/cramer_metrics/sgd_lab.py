"""Fixed-step gradient descent on true and sample losses.

Seeds advance in lockstep through a batched gradient kernel; each seed
still owns its generator, so a seed's trajectory does not depend on which
other seeds run beside it.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np
from scipy.optimize import minimize_scalar

from .distributions import (
    BERNOULLI,
    BERNOULLI_MAX,
    BERNOULLI_MIN,
    DiscreteDist,
    ParametricFamily,
    dirac,
    make_rng,
    probs_and_jacobian,
    three_point_toy,
)
from .divergences import Divergence, wasserstein_pp
from .gradients import InfiniteLossError, LossSpec, gradient

TRUE = "true"
SAMPLE = "sample"
DEFAULT_TOY_TARGET = (0.5, 0.1, 0.4)
W1 = Divergence.wasserstein_pp(1.0)
_BLOCK = 4096


class DivergenceAbort(RuntimeError):
    """Raised when a descent run meets a non-finite gradient."""


@dataclass(frozen=True)
class SgdConfig:
    """One descent experiment.

    ``theta0=None`` draws each seed's start uniformly from [-1, 1] (per
    coordinate) using that seed's generator.
    """

    loss: LossSpec
    mode: str = TRUE
    m: int = 1
    alpha: float = 1e-3
    steps: int = 100_000
    seeds: tuple[int, ...] = tuple(range(10))
    theta0: tuple[float, ...] | None = None
    eval_metric: Divergence = W1
    eval_every: int = 100

    def __post_init__(self):
        if self.mode not in (TRUE, SAMPLE):
            raise ValueError(f"mode must be {TRUE!r} or {SAMPLE!r}")
        if not self.alpha >= 0:
            raise ValueError("step size must be non-negative")
        if self.steps < 1 or self.m < 1 or self.eval_every < 1:
            raise ValueError("steps, m and eval_every must be >= 1")
        if not self.seeds:
            raise ValueError("at least one seed is required")

    @property
    def label(self) -> str:
        return f"{self.loss.divergence.label}-{self.mode}" + (f"({self.m})" if self.mode == SAMPLE else "")


@dataclass
class Trajectory:
    config: SgdConfig
    thetas: np.ndarray       # (n_seeds, steps + 1, n_params)
    eval_steps: np.ndarray   # (n_eval,)
    evals: np.ndarray        # (n_seeds, n_eval)

    @property
    def mean(self) -> np.ndarray:
        return self.evals.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.evals.std(axis=0)

    @property
    def final_evals(self) -> np.ndarray:
        return self.evals[:, -1]

    def write_csv(self, fh: TextIO, header: bool = True) -> None:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(("loss", "mode", "m", "seed", "step", "theta", "eval_w1"))
        cfg = self.config
        m = cfg.m if cfg.mode == SAMPLE else ""
        for s, seed in enumerate(cfg.seeds):
            for j, step in enumerate(self.eval_steps):
                theta = ";".join(repr(float(t)) for t in self.thetas[s, step])
                w.writerow([cfg.loss.divergence.label, cfg.mode, m, seed, int(step),
                            theta, repr(float(self.evals[s, j]))])


def _project(kind: str, theta: np.ndarray) -> np.ndarray:
    if kind == BERNOULLI:
        return np.clip(theta, BERNOULLI_MIN, BERNOULLI_MAX)
    return theta


def batch_gradient(divergence: Divergence, x: np.ndarray, q: np.ndarray,
                   jac: np.ndarray, pp: np.ndarray) -> np.ndarray:
    """Gradients for S models at once, with every target embedded on the model support.

    ``q`` and ``pp`` are (S, K) model and target probabilities on the common
    support ``x``; ``jac`` is (S, K, n_params).  Agrees with
    :func:`cramer_metrics.gradients.gradient`.
    """
    name = divergence.name
    if name == "kl":
        pos = pp > 0
        if np.any(pos & (q == 0)):
            raise InfiniteLossError("target puts mass where the model has none")
        ratio = np.where(pos, pp / np.where(pos, q, 1.0), 0.0)
        return -np.einsum("sk,skp->sp", ratio, jac)
    if name == "energy":
        dist = np.abs(x[:, None] - x[None, :])
        return 2.0 * np.einsum("sk,skp->sp", (pp - q) @ dist, jac)
    cum_q = np.cumsum(q, axis=1)[:, :-1]
    dcum = np.cumsum(jac, axis=1)[:, :-1, :]
    if name == "wasserstein_pp":
        p = divergence.p
        cum_p = np.cumsum(pp, axis=1)
        cum_p[:, -1] = 1.0
        last = x.size - 1
        a = x[np.minimum((cum_p[:, None, :] < cum_q[:, :, None]).sum(axis=2), last)]
        b = x[np.minimum((cum_p[:, None, :] <= cum_q[:, :, None]).sum(axis=2), last)]
        lo, hi = x[:-1], x[1:]
        w = 0.5 * ((np.abs(a - lo) ** p - np.abs(a - hi) ** p)
                   + (np.abs(b - lo) ** p - np.abs(b - hi) ** p))
    else:
        p = 2.0 if name == "cramer" else divergence.p
        diff = cum_q - np.cumsum(pp, axis=1)[:, :-1]
        w = np.sign(diff) if p == 1.0 else p * np.abs(diff) ** (p - 1.0) * np.sign(diff)
        w = w * np.diff(x)
    return np.einsum("sk,skp->sp", w, dcum)


def _embedding(target: DiscreteDist, support: np.ndarray) -> np.ndarray | None:
    """Index of each positive-mass target atom in ``support``, or None if one is missing."""
    atoms = target.support[target.probs > 0]
    idx = np.searchsorted(support, atoms)
    if np.any(idx >= support.size) or np.any(support[np.minimum(idx, support.size - 1)] != atoms):
        return None
    return idx


def _initial_thetas(cfg: SgdConfig, rngs) -> np.ndarray:
    n_params = cfg.loss.family.n_params
    if cfg.theta0 is not None:
        theta0 = np.asarray(cfg.theta0, dtype=float).reshape(n_params)
        return np.tile(theta0, (len(rngs), 1))
    return np.stack([rng.uniform(-1.0, 1.0, size=n_params) for rng in rngs])


def run_sgd(cfg: SgdConfig) -> Trajectory:
    """``theta <- theta - alpha * g`` with true or fresh-sample gradients, for every seed."""
    spec = cfg.loss
    fam = spec.family
    x = fam.support
    K, S = x.size, len(cfg.seeds)
    rngs = [make_rng(seed) for seed in cfg.seeds]
    theta = _project(fam.kind, _initial_thetas(cfg, rngs))

    target = spec.target
    pos = target.probs > 0
    atoms, atom_probs = target.support[pos], target.probs[pos]
    atom_cum = np.cumsum(atom_probs)
    atom_cum[-1] = 1.0
    embed = _embedding(target, x)

    thetas = np.empty((S, cfg.steps + 1, fam.n_params))
    thetas[:, 0] = theta
    eval_steps = np.unique(np.append(np.arange(0, cfg.steps + 1, cfg.eval_every), cfg.steps))
    evals = np.empty((S, eval_steps.size))
    next_eval = 0

    if embed is not None:
        fixed_pp = np.zeros(K)
        fixed_pp[embed] = atom_probs
        fixed_pp = np.tile(fixed_pp, (S, 1))
    uniforms = None

    for t in range(cfg.steps + 1):
        q, jac = probs_and_jacobian(fam.kind, theta)
        if next_eval < eval_steps.size and t == eval_steps[next_eval]:
            for s in range(S):
                evals[s, next_eval] = cfg.eval_metric(target, DiscreteDist(x, q[s]))
            next_eval += 1
        if t == cfg.steps:
            break
        if cfg.mode == SAMPLE:
            if t % _BLOCK == 0:
                block = min(_BLOCK, cfg.steps - t)
                uniforms = np.stack([1.0 - rng.random((block, cfg.m)) for rng in rngs])
            draws = np.minimum(np.searchsorted(atom_cum, uniforms[:, t % _BLOCK]), atoms.size - 1)
        if embed is None:
            grads = []
            for s in range(S):
                model = fam.with_theta(theta[s])
                if cfg.mode == SAMPLE:
                    vals, counts = np.unique(atoms[draws[s]], return_counts=True)
                    P = DiscreteDist(vals, counts / cfg.m)
                else:
                    P = target
                try:
                    grads.append(gradient(spec.divergence, P, model))
                except InfiniteLossError as exc:
                    raise DivergenceAbort(f"seed {cfg.seeds[s]}, step {t}: {exc}") from exc
            g = np.array(grads)
        else:
            if cfg.mode == SAMPLE:
                pp = (embed[draws][:, :, None] == np.arange(K)).sum(axis=1) / cfg.m
            else:
                pp = fixed_pp
            try:
                g = batch_gradient(spec.divergence, x, q, jac, pp)
            except InfiniteLossError as exc:
                raise DivergenceAbort(f"step {t}: {exc}") from exc
        if not np.all(np.isfinite(g)):
            bad = [cfg.seeds[s] for s in np.nonzero(~np.all(np.isfinite(g), axis=1))[0]]
            raise DivergenceAbort(f"non-finite gradient at step {t} for seeds {bad}")
        theta = _project(fam.kind, theta - cfg.alpha * g)
        thetas[:, t + 1] = theta
    return Trajectory(cfg, thetas, eval_steps, evals)


def toy_target(probs: Sequence[float] = DEFAULT_TOY_TARGET) -> DiscreteDist:
    return DiscreteDist([0.0, 1.0, 10.0], probs)


def expected_sample_w1_m1(target: DiscreteDist, model: DiscreteDist) -> float:
    """``E_x w_1(delta_x, Q)`` over target atoms ``x``: the m = 1 expected sample loss."""
    return math.fsum(p * wasserstein_pp(dirac(x), model, 1.0)
                     for x, p in zip(target.support, target.probs) if p > 0)


@dataclass(frozen=True)
class ToyMinimizer:
    name: str
    theta: float
    probs: tuple[float, float, float]
    loss: float


def _argmin_1d(fun, lo: float, hi: float, step: float) -> float:
    grid = np.arange(lo, hi + step / 2, step)
    vals = np.array([fun(t) for t in grid])
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    if a == b:
        return float(grid[i])
    res = minimize_scalar(fun, bounds=(a, b), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.x) if res.fun <= vals[i] else float(grid[i])


def toy_minimizer_table(target: DiscreteDist, theta_range: tuple[float, float] = (-20.0, 20.0),
                        grid_step: float = 0.01) -> dict[str, ToyMinimizer]:
    """Minimisers over the three-point family of KL, w_1, Cramér and the m=1 sample w_1."""
    if not set(target.support.tolist()) <= {0.0, 1.0, 10.0}:
        raise ValueError("target must live on {0, 1, 10}")
    losses = {
        "kl": lambda t: Divergence.kl()(target, three_point_toy(t).dist()),
        "w1": lambda t: wasserstein_pp(target, three_point_toy(t).dist(), 1.0),
        "cramer": lambda t: Divergence.cramer()(target, three_point_toy(t).dist()),
        "w1_sample_m1": lambda t: expected_sample_w1_m1(target, three_point_toy(t).dist()),
    }
    out = {}
    for name, fun in losses.items():
        theta = _argmin_1d(fun, *theta_range, grid_step)
        out[name] = ToyMinimizer(name, theta, tuple(three_point_toy(theta).probs.tolist()), fun(theta))
    return out


@dataclass
class ToyCurves:
    target: DiscreteDist
    trajectories: list[Trajectory] = field(default_factory=list)

    def by_label(self) -> dict[str, Trajectory]:
        return {tr.config.label: tr for tr in self.trajectories}

    def write_csv(self, fh: TextIO) -> None:
        for i, tr in enumerate(self.trajectories):
            tr.write_csv(fh, header=(i == 0))


def toy_learning_curves(target: DiscreteDist, m_list: Sequence[int] = (1,), alpha: float = 1e-3,
                        steps: int = 100_000, seeds: Sequence[int] = tuple(range(10)),
                        eval_every: int = 100) -> ToyCurves:
    """Descent runs on the three-point family, evaluated in true w_1 against ``target``."""
    fam = three_point_toy(0.0)
    runs = [(Divergence.cramer(), TRUE, 1), (W1, TRUE, 1), (Divergence.kl(), TRUE, 1)]
    for m in m_list:
        runs += [(Divergence.cramer(), SAMPLE, m), (W1, SAMPLE, m)]
    curves = ToyCurves(target)
    for div, mode, m in runs:
        cfg = SgdConfig(LossSpec(div, fam, target), mode=mode, m=m, alpha=alpha, steps=steps,
                        seeds=tuple(seeds), eval_every=eval_every)
        curves.trajectories.append(run_sgd(cfg))
    return curves
