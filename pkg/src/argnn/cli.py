"""Command-line interface: ``argnn <subcommand> ...``.

Subcommands: train, eval, hyperparams, gradcheck, analyze, make-fixture.
Exit status 0 on success, 1 on a failed check or training error, 2 on bad
input (missing files, invalid options, mismatched checkpoints).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .diagnostics import gradcheck_model
from .fixtures import GENERATORS
from .geometry import curvature_field, geodesic_rewire, nrmd
from .graph import DatasetError, Graph, edge_split, homophily_ratio, load_dataset, save_dataset, \
    stratified_split, write_edges
from .losses import HyperparamInputs, theory_hyperparams
from .metric import MetricFloorError
from .model import config_hash, load_checkpoint, model_forward, save_checkpoint
from .trainer import (TrainConfig, TrainingError, evaluate_params, message_passing_graph,
                      resolve_loss_weights, train)

log = logging.getLogger("argnn")


class UsageError(Exception):
    """Bad user input; reported with exit status 2."""


# config resolution --------------------------------------------------------------

def parse_seeds(text: str) -> list[int]:
    """``"0..4"`` (inclusive), ``"1,3,5"`` or a single integer."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = (int(t) for t in text.split("..", 1))
            if hi < lo:
                raise UsageError(f"empty seed range {text!r}")
            return list(range(lo, hi + 1))
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"cannot parse seeds {text!r}") from None


def _coerce(key: str, raw):
    default = TrainConfig.__dataclass_fields__[key].default
    if isinstance(raw, str):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError:
            return raw
    if isinstance(default, float) and isinstance(raw, int) and not isinstance(raw, bool):
        return float(raw)
    if key == "mode" and isinstance(raw, (int, float)):
        raise UsageError("mode must be 'adaptive' or 'fixed:<c>'")
    return raw


def parse_override(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise UsageError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    if key not in TrainConfig.keys():
        raise UsageError(f"unknown config key {key!r}")
    return key, _coerce(key, raw.strip())


def resolve_config(config_path=None, overrides=(), **extra) -> TrainConfig:
    """Defaults, then the JSON config file, then ``--override`` pairs."""
    values: dict = {}
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        loaded = json.loads(path.read_text(encoding="utf-8"))
        for key, raw in loaded.items():
            if key not in TrainConfig.keys():
                raise UsageError(f"unknown config key {key!r} in {path}")
            values[key] = _coerce(key, raw)
    for item in overrides:
        key, val = parse_override(item)
        values[key] = val
    values.update(extra)
    try:
        return TrainConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from None


def config_epilog() -> str:
    lines = ["config keys (JSON file or --override key=value):"]
    for f in dataclasses.fields(TrainConfig):
        lines.append(f"  {f.name:<22} default {f.default!r}")
    return "\n".join(lines)


def load_graph(path, cfg: TrainConfig | None = None, split_seed: int = 0) -> Graph:
    """Load a dataset directory, generating seeded splits when the file has none."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"dataset not found: {path}")
    try:
        g = load_dataset(path)
    except DatasetError as exc:
        raise UsageError(f"{path}: {exc}") from None
    task = cfg.task if cfg else "node"
    if task == "node" and not all(k in g.splits for k in ("train", "val", "test")):
        g = g.with_splits(stratified_split(g.labels, split_seed))
    if task == "edge" and "train_pos" not in g.splits:
        g = g.with_splits(edge_split(g.edges, split_seed))
    return g


def worker_count() -> int:
    raw = os.environ.get("ARGNN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"ARGNN_THREADS must be an integer, got {raw!r}") from None


# train / eval --------------------------------------------------------------------

def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_jsonable) + "\n", encoding="utf-8")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o)}")


def checkpoint_meta(cfg: TrainConfig, g: Graph, dataset: str) -> dict:
    return {"config": cfg.to_dict(), "config_hash": config_hash(cfg.to_dict()),
            "num_features": g.num_features, "num_classes": g.num_classes,
            "num_nodes": g.num_nodes, "dataset": dataset, "version": __version__}


def run_seed(cfg: TrainConfig, g: Graph, dataset: str, out: Path) -> dict:
    """Train one seed and write its artifacts under ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    report = train(cfg, g)
    weights, H = resolve_loss_weights(cfg, g)
    manifest = {
        "config": cfg.to_dict(), "config_hash": config_hash(cfg.to_dict()),
        "dataset": dataset, "num_nodes": g.num_nodes, "num_edges": g.num_edges,
        "homophily": homophily_ratio(g) if g.num_edges else None,
        "loss_weights": {"source": weights.source, "alpha": weights.alpha, "beta": weights.beta,
                         "homophily_used": H},
        "eps": cfg.eps, "version": __version__,
    }
    _write_json(out / "manifest.json", manifest)
    _write_json(out / "report.json", report.to_dict())
    save_checkpoint(out / "checkpoint.bin", report.params, checkpoint_meta(cfg, g, dataset))
    with (out / "history.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "train_task_loss", "val_loss", "epoch_time"])
        for e in range(report.epochs_run):
            w.writerow([e, report.train_loss[e], report.train_task_loss[e], report.val_loss[e],
                        report.epoch_time[e]])
    with (out / "metrics.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["split", "accuracy", "macro_f1", "auroc", "auprc"])
        for split, m in (("train", report.train_metrics), ("val", report.val_metrics),
                         ("test", report.test_metrics)):
            w.writerow([split] + [m[k] if m[k] is not None else "" for k in
                                  ("accuracy", "macro_f1", "auroc", "auprc")])
    for l, mf in enumerate(report.metric_fields):
        mf.to_csv(out / f"metric_layer{l}.csv")
    return report.to_dict()


def _run_seed_job(args):
    cfg, g, dataset, out = args
    return run_seed(cfg, g, dataset, out)


def confidence_interval(values) -> dict:
    """Mean and Student-t 95% half-width over seeds."""
    x = np.asarray([v for v in values if v is not None], dtype=np.float64)
    if x.size == 0:
        return {"mean": None, "ci95": None, "n": 0}
    if x.size == 1:
        return {"mean": float(x[0]), "ci95": None, "n": 1}
    half = stats.t.ppf(0.975, x.size - 1) * x.std(ddof=1) / np.sqrt(x.size)
    return {"mean": float(x.mean()), "ci95": float(half), "n": int(x.size)}


def aggregate(reports: list[dict]) -> dict:
    out = {"seeds": [r["config"]["seed"] for r in reports]}
    for split in ("val_metrics", "test_metrics"):
        keys = reports[0][split].keys()
        out[split] = {k: confidence_interval([r[split][k] for r in reports]) for k in keys}
    for k in ("final_train_loss", "best_val_loss", "epochs_run"):
        out[k] = confidence_interval([r[k] for r in reports])
    return out


def cmd_train(args) -> int:
    seeds = parse_seeds(args.seeds)
    base = resolve_config(args.config, args.override)
    g = load_graph(args.dataset, base, args.split_seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(base.replace(seed=s), g, str(args.dataset), out / f"seed_{s}") for s in seeds]
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            reports = list(pool.map(_run_seed_job, jobs))
    else:
        reports = [_run_seed_job(j) for j in jobs]
    agg = aggregate(reports)
    _write_json(out / "aggregate.json", agg)
    test = agg["test_metrics"]["accuracy"]
    ci = f" ± {test['ci95']:.4f}" if test["ci95"] is not None else ""
    print(f"{len(seeds)} seed(s): test accuracy {test['mean']:.4f}{ci}  -> {out}")
    return 0


def _load_checkpoint_for(path, g: Graph) -> tuple:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"checkpoint not found: {path}")
    try:
        params, meta = load_checkpoint(path)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if meta.get("num_features") != g.num_features or meta.get("num_classes") != g.num_classes:
        raise UsageError(
            f"checkpoint/config mismatch: checkpoint expects {meta.get('num_features')} features and "
            f"{meta.get('num_classes')} classes, dataset has {g.num_features} and {g.num_classes}")
    cfg = TrainConfig(**meta["config"])
    return params, cfg, meta


def cmd_eval(args) -> int:
    g = load_graph(args.dataset, split_seed=args.split_seed)
    params, cfg, _ = _load_checkpoint_for(args.checkpoint, g)
    if cfg.task == "edge":
        g = load_graph(args.dataset, cfg, args.split_seed)
    try:
        result = evaluate_params(cfg, g, params)
    except KeyError as exc:
        raise UsageError(f"checkpoint/config mismatch: missing parameter {exc}") from None
    text = json.dumps(result, indent=2)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "eval.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


# hyperparams / gradcheck ----------------------------------------------------------

def cmd_hyperparams(args) -> int:
    try:
        hp = theory_hyperparams(HyperparamInputs(args.H, args.L, args.d, args.V, args.E,
                                                 args.c1, args.c2))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(json.dumps(hp.as_dict()))
    return 0


def cmd_gradcheck(args) -> int:
    try:
        res = gradcheck_model(args.n, args.m, args.d, args.L, args.seed, args.alpha, args.beta,
                              mode=args.mode, step=args.step, tol=args.tol,
                              break_gradient=args.break_gradient)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(json.dumps(res.to_dict()))
    print("PASS" if res.passed else "FAIL", f"max_rel_error={res.max_rel_error:.3e}")
    return 0 if res.passed else 1


# analyze ---------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    g = load_graph(args.dataset, split_seed=args.split_seed)
    params, cfg, meta = _load_checkpoint_for(args.checkpoint, g)
    g = load_graph(args.dataset, cfg, args.split_seed)
    mp = message_passing_graph(cfg, g)
    try:
        art = model_forward(g.features, mp, params, cfg.model_config(g))
    except KeyError as exc:
        raise UsageError(f"checkpoint/config mismatch: missing parameter {exc}") from None
    fields = art.metric_fields(cfg.eps)
    layer = args.layer if args.layer >= 0 else len(fields) + args.layer
    if not 0 <= layer < len(fields):
        raise UsageError(f"layer {args.layer} out of range for {len(fields)} layers")
    mf = fields[layer]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    curv = curvature_field(mf, mp)
    with (out / "curvature.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "kappa"] + [f"ric_{k}" for k in range(mf.dim)])
        for i in range(mp.num_nodes):
            w.writerow([i, repr(float(curv.kappa[i]))] + [repr(float(v)) for v in curv.ricci[i]])
    mf.to_csv(out / "metric.csv")
    value = nrmd(mf, mp) if mp.num_edges else float("nan")
    (out / "nrmd.txt").write_text(f"{value!r}\n", encoding="utf-8")
    rewired = geodesic_rewire(mp, art.states[layer].data, mf)
    write_edges(rewired.edges, out / "rewired_edges.tsv")
    summary = {"dataset": str(args.dataset), "layer": layer, "kappa_mean": curv.kappa_mean,
               "nrmd": value, "homophily": homophily_ratio(g) if g.num_edges else None,
               "rewired_homophily": homophily_ratio(rewired) if rewired.num_edges else None,
               "checkpoint_config_hash": meta.get("config_hash")}
    _write_json(out / "summary.json", summary)
    print(json.dumps(summary))
    return 0


# make-fixture ----------------------------------------------------------------------

def cmd_make_fixture(args) -> int:
    kw = {"seed": args.seed}
    if args.num_features is not None:
        kw["num_features"] = args.num_features
    if args.signal is not None:
        kw["signal"] = args.signal
    if args.kind == "two-cliques":
        kw["k"] = args.k if args.k is not None else 6
    elif args.kind == "tree-plus-clique":
        kw["depth"] = args.depth
        kw["k"] = args.k if args.k is not None else 16
    elif args.kind == "random":
        kw.update(n=args.n or 20, p=args.p)
    elif args.kind == "heterophilic":
        if args.n:
            kw["n"] = args.n
    try:
        g = GENERATORS[args.kind](**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_dataset(g, args.out)
    print(json.dumps({"fixture": args.kind, "num_nodes": g.num_nodes, "num_edges": g.num_edges,
                      "out": str(args.out)}))
    return 0


# parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="argnn", description=__doc__.splitlines()[0],
                                     epilog=config_epilog(), formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"argnn {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, func):
        p = sub.add_parser(name, help=help_, description=help_, epilog=config_epilog(),
                           formatter_class=fmt)
        p.set_defaults(func=func)
        return p

    p = add("train", "train over one or more seeds and aggregate the results", cmd_train)
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--config", help="JSON file with flat TrainConfig keys")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seeds", default="0", help="'0..4', '0,2,5' or a single seed (default 0)")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. mode=fixed:1.0 (repeatable)")
    p.add_argument("--split-seed", type=int, default=0,
                   help="seed for generated splits when the dataset has none")

    p = add("eval", "evaluate a checkpoint on every split of a dataset", cmd_eval)
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="optional directory for eval.json")
    p.add_argument("--split-seed", type=int, default=0)

    p = add("hyperparams", "theory-guided regulariser weights as JSON", cmd_hyperparams)
    p.add_argument("--H", type=float, required=True, help="homophily ratio in (0, 1]")
    p.add_argument("--L", type=int, required=True, help="number of layers")
    p.add_argument("--d", type=int, required=True, help="hidden width")
    p.add_argument("--V", type=int, required=True, help="number of nodes")
    p.add_argument("--E", type=int, required=True, help="number of undirected edges")
    p.add_argument("--c1", type=float, help="override the curvature constant")
    p.add_argument("--c2", type=float, help="override the smoothness constant")

    p = add("gradcheck", "finite-difference check of the full model gradient", cmd_gradcheck)
    p.add_argument("--n", type=int, default=12, help="nodes (default 12)")
    p.add_argument("--m", type=int, default=24, help="edges (default 24)")
    p.add_argument("--d", type=int, default=5, help="feature and hidden width (default 5)")
    p.add_argument("--L", type=int, default=2, help="layers (default 2)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--mode", default="adaptive")
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--break-gradient", choices=("tau", "alpha"),
                   help="test hook: corrupt one backward rule (the check must then fail)")

    p = add("analyze", "export curvature, NRMD and geodesic rewiring from a checkpoint",
            cmd_analyze)
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--layer", type=int, default=-1, help="layer index (default last)")
    p.add_argument("--split-seed", type=int, default=0)

    p = add("make-fixture", "write a synthetic dataset directory", cmd_make_fixture)
    p.add_argument("kind", choices=sorted(GENERATORS))
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, help="clique size (two-cliques: 6, tree-plus-clique: 16)")
    p.add_argument("--depth", type=int, default=4, help="tree depth (tree-plus-clique)")
    p.add_argument("--n", type=int, help="node count (random, heterophilic)")
    p.add_argument("--p", type=float, default=0.2, help="edge probability (random)")
    p.add_argument("--num-features", type=int)
    p.add_argument("--signal", type=float, help="class signal strength in the features")
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"argnn {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (TrainingError, MetricFloorError, FloatingPointError) as exc:
        print(f"argnn {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
