"""Command-line entry point: ``cramer-metrics <subcommand> ...``.

Exit codes: 0 success, 1 a built-in check failed, 2 bad usage or config.
Config files are JSON with a top-level ``"version": 1``.  Every run is a
pure function of its inputs and ``--seed``.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from . import bias_lab, gan_losses, ordinal, sgd_lab
from .distributions import DiscreteDist, make_rng
from .divergences import Divergence

THREADS_ENV = "CRAMER_METRICS_THREADS"

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


_num = {"type": "number"}
_num_list = {"type": "array", "items": _num, "minItems": 1}
_version = {"const": 1}

DIST_SCHEMA = {
    "type": "object",
    "required": ["support", "probs"],
    "properties": {"support": _num_list, "probs": _num_list},
    "additionalProperties": False,
}

TOY_SCHEMA = {
    "type": "object",
    "required": ["version"],
    "properties": {
        "version": _version,
        "target": {"type": "array", "items": {"type": "number", "minimum": 0},
                   "minItems": 3, "maxItems": 3},
        "m_list": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "alpha": {"type": "number", "minimum": 0},
        "steps": {"type": "integer", "minimum": 1},
        "n_seeds": {"type": "integer", "minimum": 1},
        "eval_every": {"type": "integer", "minimum": 1},
        "theta_range": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
        "grid_step": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}

ORDINAL_SCHEMA = {
    "type": "object",
    "required": ["version"],
    "properties": {
        "version": _version,
        "n": {"type": "integer", "minimum": 1},
        "d": {"type": "integer", "minimum": 1},
        "K": {"type": "integer", "minimum": 1},
        "noise": {"type": "number", "minimum": 0},
        "test_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "losses": {"type": "array", "items": {"enum": list(ordinal.LOSS_KINDS)}, "minItems": 1},
        "batch_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "n_seeds": {"type": "integer", "minimum": 1},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "epochs": {"type": "integer", "minimum": 1},
        "bin_values": _num_list,
    },
    "additionalProperties": False,
}

_matrix = {"type": "array", "items": _num_list, "minItems": 1}
TRANSFORM_SCHEMA = {
    "oneOf": [
        {"type": "object", "required": ["kind"], "additionalProperties": False,
         "properties": {"kind": {"const": "identity"}}},
        {"type": "object", "required": ["kind", "A", "b"], "additionalProperties": False,
         "properties": {"kind": {"const": "affine"}, "A": _matrix, "b": _num_list}},
        {"type": "object", "required": ["kind", "W1", "b1", "W2", "b2"], "additionalProperties": False,
         "properties": {"kind": {"const": "tanh_mlp"}, "W1": _matrix, "b1": _num_list,
                        "W2": _matrix, "b2": _num_list}},
    ]
}

BATCH_SCHEMA = {
    "type": "object",
    "required": ["version", "x_r", "x_g", "x_g_prime"],
    "properties": {
        "version": _version,
        "x_r": _num_list,
        "x_g": _num_list,
        "x_g_prime": _num_list,
        "eps": {"type": "number", "minimum": 0, "maximum": 1},
        "lam": {"type": "number", "minimum": 0},
        "transform": TRANSFORM_SCHEMA,
    },
    "additionalProperties": False,
}


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def load_json(path: str, schema: dict):
    """Read and validate a JSON file; failures raise :class:`UsageError`."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(obj),
                    key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise UsageError(f"{path}: {_pointer(e.absolute_path)}: {e.message}")
    return obj


def _dist(path: str) -> DiscreteDist:
    try:
        return DiscreteDist.from_dict(load_json(path, DIST_SCHEMA))
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _json_number(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return x


def _emit_json(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _emit_csv(write, out: str | None) -> None:
    buf = io.StringIO()
    write(buf)
    if out is None:
        sys.stdout.write(buf.getvalue())
    else:
        Path(out).write_text(buf.getvalue())


def threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


# divergence

DIVERGENCE_KINDS = ("kl", "cramer", "energy", "wasserstein", "lp", "w1", "l1")


def cmd_divergence(args) -> int:
    P, Q = _dist(args.dist_a), _dist(args.dist_b)
    kind = args.kind
    if kind in ("wasserstein", "lp") and args.p is None:
        raise UsageError(f"--kind {kind} needs --p")
    if kind == "kl":
        div = Divergence.kl()
    elif kind == "cramer":
        div = Divergence.cramer()
    elif kind == "energy":
        div = Divergence.energy()
    elif kind in ("wasserstein", "w1"):
        div = Divergence.wasserstein_pp(1.0 if kind == "w1" else args.p)
    else:
        div = Divergence.lp_pp(1.0 if kind == "l1" else args.p)
    try:
        value = div(P, Q)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _emit_json({"kind": kind, "p": div.p, "value": _json_number(value)})
    return EXIT_OK


# bias

def cmd_bias(args) -> int:
    exp = args.experiment
    if exp == "minimax":
        ms = args.m or list(range(1, 33))
        rows = []
        for m in ms:
            w = bias_lab.minimax_bias(m)
            rows.append(bias_lab.bias_row(m, w.theta_star, w.theta))
        _emit_csv(bias_lab.BiasCurve(tuple(rows)).write_csv, args.out)
    elif exp == "curve":
        m = _single_m(args, 6)
        theta_star = 0.6 if args.theta_star is None else args.theta_star
        curve = bias_lab.loss_curve(m, theta_star)
        _emit_csv(curve.write_csv, args.out)
        if args.out is not None:
            _emit_json({"m": m, "theta_star": theta_star, "true_argmin": curve.true_argmin,
                        "sample_argmin": curve.sample_argmin, "median": list(curve.median)})
    elif exp == "deterministic":
        m = _single_m(args, 5)
        check = bias_lab.deterministic_regime(m, args.theta_star)
        grid = np.linspace(0.0, 1.0, 1002)[1:-1]
        rows = tuple(bias_lab.bias_row(m, check.theta_star, float(t)) for t in grid)
        _emit_csv(bias_lab.BiasCurve(rows).write_csv, args.out)
        if check.sample_argmin != 1.0:
            raise AssertionError(f"sample-loss argmin {check.sample_argmin} is not 1")
    elif exp == "consistency":
        ms = args.m or [2 ** k for k in range(1, 11)]
        theta_star = 0.3 if args.theta_star is None else args.theta_star
        sweep = bias_lab.consistency_sweep(theta_star, args.theta, ms)
        _emit_csv(sweep.write_csv, args.out)
        if sorted(ms) == list(ms) and not bias_lab.is_nonincreasing(list(sweep.abs_bias())):
            raise AssertionError("|bias| is not nonincreasing in m")
    else:
        ms = args.m or list(range(1, 101))
        gaps = [bias_lab.half_point_bias(m) for m in ms]

        def write(fh):
            fh.write("m,theta_star,theta,gap\n")
            for m, gap in zip(ms, gaps):
                theta = 0.5 + 1.0 / (2.0 * math.sqrt(8.0 * m))
                fh.write(f"{m},0.5,{theta!r},{gap!r}\n")

        _emit_csv(write, args.out)
    return EXIT_OK


def _single_m(args, default: int) -> int:
    if not args.m:
        return default
    if len(args.m) != 1:
        raise UsageError(f"--experiment {args.experiment} takes a single --m")
    return args.m[0]


# toy

def cmd_toy(args) -> int:
    cfg = load_json(args.config, TOY_SCHEMA)
    try:
        target = sgd_lab.toy_target(cfg.get("target", sgd_lab.DEFAULT_TOY_TARGET))
    except ValueError as exc:
        raise UsageError(f"{args.config}: /target: {exc}") from None
    lo, hi = cfg.get("theta_range", (-20.0, 20.0))
    table = sgd_lab.toy_minimizer_table(target, (lo, hi), cfg.get("grid_step", 0.01))
    n_seeds = cfg.get("n_seeds", 10)
    curves = sgd_lab.toy_learning_curves(
        target, m_list=cfg.get("m_list", [1]), alpha=cfg.get("alpha", 1e-3),
        steps=cfg.get("steps", 100_000), seeds=range(args.seed, args.seed + n_seeds),
        eval_every=cfg.get("eval_every", 100))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write("loss,theta,q0,q1,q10,loss_value\n")
    for name, row in table.items():
        q = ",".join(repr(float(v)) for v in row.probs)
        buf.write(f"{name},{row.theta!r},{q},{row.loss!r}\n")
    (out / "toy_minimizers.csv").write_text(buf.getvalue())
    buf = io.StringIO()
    curves.write_csv(buf)
    (out / "toy_curves.csv").write_text(buf.getvalue())
    summary = {label: {"final_w1_mean": float(tr.final_evals.mean()),
                       "final_w1_std": float(tr.final_evals.std())}
               for label, tr in curves.by_label().items()}
    _emit_json({"minimizers": {k: v.theta for k, v in table.items()}, "curves": summary})
    return EXIT_OK


# ordinal

def _train_cell(job):
    tr, te, kind, bs, alpha, epochs, seed = job
    return ordinal.train(tr, kind, bs, alpha, epochs, seed, test=te)[1]


def cmd_ordinal(args) -> int:
    cfg = load_json(args.config, ORDINAL_SCHEMA)
    n_seeds = cfg.get("n_seeds", 3)
    proto = ordinal.OrdinalProtocol(
        n=cfg.get("n", 5000), d=cfg.get("d", 20), K=cfg.get("K", 30),
        noise=cfg.get("noise", 1.0), test_fraction=cfg.get("test_fraction", 0.2),
        losses=tuple(cfg.get("losses", ordinal.LOSS_KINDS)),
        batch_sizes=tuple(cfg.get("batch_sizes", (1, 16, 128))),
        seeds=tuple(range(args.seed, args.seed + n_seeds)),
        alpha=cfg.get("alpha", 0.01), epochs=cfg.get("epochs", 40))
    data = None
    if args.data.startswith("csv:"):
        if "bin_values" not in cfg:
            raise UsageError(f"{args.config}: /bin_values: required with --data csv:PATH")
        try:
            data = ordinal.load_csv(args.data[4:], cfg["bin_values"])
        except OSError as exc:
            raise UsageError(f"{args.data[4:]}: {exc.strerror}") from None
        except ordinal.OrdinalDataError as exc:
            raise UsageError(f"{args.data[4:]}: {exc}") from None
    elif args.data != "synth":
        raise UsageError("--data must be 'synth' or 'csv:PATH'")
    jobs = []
    for seed in proto.seeds:
        full = data if data is not None else ordinal.synth_data(
            seed, proto.n, proto.d, proto.K, proto.noise, cfg.get("bin_values"))
        tr, te = full.split(proto.test_fraction, seed)
        jobs += [(tr, te, kind, bs, proto.alpha, proto.epochs, seed)
                 for bs in proto.batch_sizes for kind in proto.losses]
    n_workers = min(threads(), len(jobs))
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            curves = list(pool.map(_train_cell, jobs))
    else:
        curves = [_train_cell(j) for j in jobs]
    _emit_csv(lambda fh: ordinal.write_curves(curves, fh), args.out)
    return EXIT_OK


# gan-losses

def cmd_gan_losses(args) -> int:
    obj = load_json(args.batch, BATCH_SCHEMA)
    eps = obj["eps"] if "eps" in obj else float(make_rng(args.seed).random())
    try:
        h = gan_losses.transform_from_dict(obj.get("transform", {"kind": "identity"}))
        batch = gan_losses.GanBatch(obj["x_r"], obj["x_g"], obj["x_g_prime"], eps,
                                    obj.get("lam", gan_losses.DEFAULT_LAMBDA))
        losses = gan_losses.all_losses(batch, h)
    except ValueError as exc:
        raise UsageError(f"{args.batch}: {exc}") from None
    _emit_json({"eps": eps, **{k: _json_number(v) for k, v in losses.items()}})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cramer-metrics",
        description="Divergences between discrete distributions and the bias of their sample gradients.")
    parser.add_argument("--seed", type=int, default=0,
                        help="base seed for every random draw (default: 0)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("divergence", help="divergence between two distributions given as JSON")
    p.add_argument("--kind", required=True, choices=DIVERGENCE_KINDS,
                   help="wasserstein and lp report the p-th power w_p^p and l_p^p; "
                        "w1 and l1 fix p = 1; cramer is l_2^2")
    p.add_argument("--p", type=float, help="exponent p >= 1 for wasserstein and lp")
    p.add_argument("--dist-a", required=True, metavar="FILE",
                   help='JSON {"support": [...], "probs": [...]}, the first argument P')
    p.add_argument("--dist-b", required=True, metavar="FILE", help="JSON distribution Q")
    p.set_defaults(func=cmd_divergence)

    p = sub.add_parser("bias", help="Bernoulli sample-gradient bias experiments (CSV)")
    p.add_argument("--experiment", required=True,
                   choices=("minimax", "curve", "deterministic", "consistency", "halfpoint"))
    p.add_argument("--m", type=int, nargs="+",
                   help="sample size(s); defaults: minimax 1..32, curve 6, deterministic 5, "
                        "consistency 2..1024 (powers of 2), halfpoint 1..100")
    p.add_argument("--theta-star", type=float,
                   help="target parameter (curve: 0.6, consistency: 0.3, deterministic: "
                        "midway between (1/2)^(1/m) and 1)")
    p.add_argument("--theta", type=float, default=0.6,
                   help="model parameter for consistency (default: 0.6)")
    p.add_argument("--out", metavar="FILE", help="CSV destination (default: stdout)")
    p.set_defaults(func=cmd_bias)

    p = sub.add_parser("toy", help="three-point toy experiment: minimizers and descent curves")
    p.add_argument("--config", required=True, metavar="FILE", help="JSON config with version 1")
    p.add_argument("--out-dir", default=".", metavar="DIR",
                   help="directory for toy_minimizers.csv and toy_curves.csv (default: .)")
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("ordinal", help="ordinal regression learning curves (CSV)")
    p.add_argument("--config", required=True, metavar="FILE", help="JSON config with version 1")
    p.add_argument("--data", default="synth", metavar="{synth|csv:PATH}",
                   help="synthetic data or a CSV of target,feat_1,...,feat_d rows")
    p.add_argument("--out", metavar="FILE", help="CSV destination (default: stdout)")
    p.set_defaults(func=cmd_ordinal)

    p = sub.add_parser("gan-losses", help="generator, surrogate, penalty and critic losses (JSON)")
    p.add_argument("--batch", required=True, metavar="FILE",
                   help="JSON batch: version, x_r, x_g, x_g_prime, optional eps, lam, transform")
    p.set_defaults(func=cmd_gan_losses)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads()
        return args.func(args)
    except UsageError as exc:
        print(f"cramer-metrics: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AssertionError as exc:
        print(f"cramer-metrics: check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except ValueError as exc:
        print(f"cramer-metrics: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        # reader closed early (e.g. piped into head); keep exit quiet
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
