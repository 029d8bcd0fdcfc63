"""Ordinal regression with a linear-softmax distributional predictor.

The model maps features to ``Q(.|x) = softmax(W x + b)`` over ordered bin
values and is trained by minibatch SGD on one of three per-example losses
against the observed bin ``y``:

* ``kl``: ``-log Q(y|x)``
* ``cramer``: ``sum_k (F_Q(k) - 1{k >= y})^2 * spacing_k``
* ``wasserstein``: ``sum_k |F_Q(k) - 1{k >= y}| * spacing_k`` (w_1 to a Dirac)
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np
from scipy.special import log_softmax, ndtr, softmax

from .distributions import make_rng

LOSS_KINDS = ("kl", "cramer", "wasserstein")


class OrdinalDataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OrdinalDataset:
    features: np.ndarray    # (n, d)
    targets: np.ndarray     # (n,) bin indices
    bin_values: np.ndarray  # (K,)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.targets)
        bins = np.asarray(self.bin_values, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise OrdinalDataError("features must be a non-empty (n, d) matrix")
        if y.shape != (X.shape[0],) or not np.issubdtype(y.dtype, np.integer):
            raise OrdinalDataError("targets must be n integer bin indices")
        if bins.ndim != 1 or bins.size < 1 or np.any(np.diff(bins) <= 0):
            raise OrdinalDataError("bin_values must be strictly increasing")
        if np.any(y < 0) or np.any(y >= bins.size):
            raise OrdinalDataError("targets outside [0, K-1]")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y.astype(np.int64))
        object.__setattr__(self, "bin_values", bins)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def K(self) -> int:
        return self.bin_values.size

    def subset(self, idx) -> "OrdinalDataset":
        return OrdinalDataset(self.features[idx], self.targets[idx], self.bin_values)

    def split(self, test_fraction: float = 0.2, seed: int = 0):
        """Random train/test split; returns ``(train, test)``."""
        perm = make_rng(seed).permutation(self.n)
        n_test = max(1, int(round(test_fraction * self.n)))
        return self.subset(perm[n_test:]), self.subset(perm[:n_test])


@dataclass
class OrdinalModel:
    W: np.ndarray  # (K, d)
    b: np.ndarray  # (K,)

    @classmethod
    def init(cls, K: int, d: int, seed: int = 0, scale: float = 0.01) -> "OrdinalModel":
        rng = make_rng(seed)
        return cls(scale * rng.standard_normal((K, d)), np.zeros(K))

    def logits(self, X: np.ndarray) -> np.ndarray:
        return np.atleast_2d(X) @ self.W.T + self.b

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Predicted distributions, shape (n, K)."""
        z = self.logits(X)
        if not np.all(np.isfinite(z)):
            raise FloatingPointError("non-finite logits")
        return softmax(z, axis=1)


def _spacing(bin_values: np.ndarray) -> np.ndarray:
    return np.diff(bin_values)


def batch_losses(logits: np.ndarray, y: np.ndarray, bin_values: np.ndarray, kind: str):
    """Per-example losses and their gradients with respect to the logits.

    Returns ``(values, dlogits)`` with shapes (n,) and (n, K).
    """
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss {kind!r}")
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits")
    n, K = logits.shape
    rows = np.arange(n)
    if kind == "kl":
        logq = log_softmax(logits, axis=1)
        q = np.exp(logq)
        grad = q.copy()
        grad[rows, y] -= 1.0
        return -logq[rows, y], grad
    q = softmax(logits, axis=1)
    F = np.cumsum(q, axis=1)[:, :-1]
    H = (np.arange(K - 1)[None, :] >= y[:, None]).astype(float)
    diff = F - H
    spacing = _spacing(bin_values)
    if kind == "cramer":
        values = (diff ** 2) @ spacing
        g = 2.0 * diff * spacing
    else:
        values = np.abs(diff) @ spacing
        g = np.sign(diff) * spacing
    # dF_k/dz_j = q_j (1{j <= k} - F_k)
    g_full = np.concatenate([g, np.zeros((n, 1))], axis=1)
    tail = np.cumsum(g_full[:, ::-1], axis=1)[:, ::-1]
    grad = q * (tail - np.sum(g * F, axis=1, keepdims=True))
    return values, grad


def per_example_loss(model: OrdinalModel, x: np.ndarray, y: int, bin_values: np.ndarray,
                     kind: str):
    """Loss of one example and its gradient as ``(value, dW, db)``."""
    x = np.asarray(x, dtype=float).ravel()
    vals, dz = batch_losses(model.logits(x), np.array([y]), bin_values, kind)
    return float(vals[0]), np.outer(dz[0], x), dz[0].copy()


def evaluate(model: OrdinalModel, data: OrdinalDataset) -> dict[str, float]:
    """Test metrics: RMSE of the predictive mean, mean w_1 to the target, mean NLL."""
    z = model.logits(data.features)
    q = softmax(z, axis=1)
    pred = q @ data.bin_values
    rmse = math.sqrt(float(np.mean((pred - data.bin_values[data.targets]) ** 2)))
    w1, _ = batch_losses(z, data.targets, data.bin_values, "wasserstein")
    nll, _ = batch_losses(z, data.targets, data.bin_values, "kl")
    return {"rmse": rmse, "w1": float(w1.mean()), "nll": float(nll.mean())}


CURVE_HEADER = ("loss", "batch", "seed", "epoch", "rmse", "w1", "nll")


@dataclass
class LearningCurve:
    loss: str
    batch_size: int
    seed: int = 0
    rows: list[dict] = field(default_factory=list)

    @property
    def final(self) -> dict:
        return self.rows[-1]

    def write_csv(self, fh: TextIO, header: bool = True) -> None:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(CURVE_HEADER)
        for r in self.rows:
            w.writerow([self.loss, self.batch_size, self.seed, r["epoch"],
                        repr(r["rmse"]), repr(r["w1"]), repr(r["nll"])])


def train(data: OrdinalDataset, loss_kind: str, batch_size: int, alpha: float, epochs: int,
          seed: int, test: OrdinalDataset | None = None) -> tuple[OrdinalModel, LearningCurve]:
    """Minibatch SGD on the mean per-example loss.

    Metrics are recorded on ``test`` (the training set if omitted) before the
    first epoch and after every epoch.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss {loss_kind!r}")
    test = data if test is None else test
    model = OrdinalModel.init(data.K, data.d, seed)
    rng = make_rng(seed + 1)
    curve = LearningCurve(loss_kind, batch_size, seed)
    curve.rows.append({"epoch": 0, **evaluate(model, test)})
    X, y, bins = data.features, data.targets, data.bin_values
    for epoch in range(1, epochs + 1):
        perm = rng.permutation(data.n)
        for start in range(0, data.n, batch_size):
            idx = perm[start:start + batch_size]
            xb = X[idx]
            try:
                vals, dz = batch_losses(xb @ model.W.T + model.b, y[idx], bins, loss_kind)
            except FloatingPointError as exc:
                raise FloatingPointError(f"{exc} in epoch {epoch}") from exc
            if not np.all(np.isfinite(vals)):
                raise FloatingPointError(f"non-finite loss in epoch {epoch}")
            dz /= idx.size
            model.W -= alpha * (dz.T @ xb)
            model.b -= alpha * dz.sum(axis=0)
        metrics = evaluate(model, test)
        if not all(math.isfinite(v) for v in metrics.values()):
            raise FloatingPointError(f"training diverged in epoch {epoch}: {metrics}")
        curve.rows.append({"epoch": epoch, **metrics})
    return model, curve


def synth_data(seed: int, n: int, d: int, K: int, noise: float = 1.0,
               bin_values: Sequence[float] | None = None) -> OrdinalDataset:
    """Synthetic ordinal data.

    ``x ~ N(0, I_d)``, a fixed random direction ``w ~ N(0, I_d / d)``, latent
    ``t = w.x + noise * e`` with ``e ~ N(0, 1)``, and ``y = floor(K * Phi(t / sd(t)))``
    clamped to ``[0, K-1]`` (equal-mass bins of the latent law).  Bin values
    default to consecutive years starting at 1922.
    """
    if min(n, d, K) < 1:
        raise ValueError("n, d and K must be >= 1")
    rng = make_rng(seed)
    w = rng.standard_normal(d) / math.sqrt(d)
    X = rng.standard_normal((n, d))
    eps = rng.standard_normal(n)
    t = X @ w + noise * eps
    sd = math.sqrt(float(w @ w) + noise ** 2)
    y = np.clip(np.floor(K * ndtr(t / sd)), 0, K - 1).astype(np.int64)
    bins = 1922.0 + np.arange(K) if bin_values is None else np.asarray(bin_values, dtype=float)
    if bins.size != K:
        raise ValueError("need K bin values")
    return OrdinalDataset(X, y, bins)


def load_csv(path: str | Path, bin_values: Sequence[float]) -> OrdinalDataset:
    """Read rows ``target,feat_1,...,feat_d`` (optional header).

    Targets are bin values and are mapped to bin indices; a value that is not
    one of ``bin_values`` is an error.
    """
    bins = np.asarray(bin_values, dtype=float)
    lookup = {float(v): i for i, v in enumerate(bins)}
    feats, targets = [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                if lineno == 1 and not feats:
                    continue  # header
                raise OrdinalDataError(f"row {lineno}: non-numeric cell") from None
            if len(vals) < 2:
                raise OrdinalDataError(f"row {lineno}: need a target and at least one feature")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise OrdinalDataError(f"row {lineno}: expected {width} columns, got {len(vals)}")
            if vals[0] not in lookup:
                raise OrdinalDataError(f"row {lineno}: target {vals[0]!r} is not a bin value")
            targets.append(lookup[vals[0]])
            feats.append(vals[1:])
    if not feats:
        raise OrdinalDataError(f"{path}: no data rows")
    return OrdinalDataset(np.array(feats), np.array(targets, dtype=np.int64), bins)


@dataclass(frozen=True)
class OrdinalProtocol:
    """Train every loss at every batch size and seed on one synthetic task.

    Each seed draws its own dataset and train/test split.  One step size is
    shared by all losses and batch sizes.
    """

    n: int = 5000
    d: int = 20
    K: int = 30
    noise: float = 1.0
    test_fraction: float = 0.2
    losses: tuple[str, ...] = LOSS_KINDS
    batch_sizes: tuple[int, ...] = (1, 16, 128)
    seeds: tuple[int, ...] = (0, 1, 2)
    alpha: float = 0.01
    epochs: int = 40

    def __post_init__(self):
        if min(self.n, self.d, self.K) < 1:
            raise ValueError("n, d and K must be >= 1")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")
        if any(k not in LOSS_KINDS for k in self.losses):
            raise ValueError(f"losses must be drawn from {LOSS_KINDS}")
        if not self.batch_sizes or min(self.batch_sizes) < 1:
            raise ValueError("batch sizes must be >= 1")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if not self.alpha > 0 or self.epochs < 1:
            raise ValueError("need alpha > 0 and epochs >= 1")


def run_protocol(proto: OrdinalProtocol, data: OrdinalDataset | None = None) -> list[LearningCurve]:
    """Learning curves ordered by seed, batch size, then loss.

    ``data`` replaces the synthetic task (it is re-split for each seed).
    """
    curves = []
    for seed in proto.seeds:
        full = data if data is not None else synth_data(seed, proto.n, proto.d, proto.K, proto.noise)
        tr, te = full.split(proto.test_fraction, seed)
        for bs in proto.batch_sizes:
            for kind in proto.losses:
                curves.append(train(tr, kind, bs, proto.alpha, proto.epochs, seed, test=te)[1])
    return curves


def write_curves(curves: Sequence[LearningCurve], fh: TextIO) -> None:
    for i, c in enumerate(curves):
        c.write_csv(fh, header=i == 0)
