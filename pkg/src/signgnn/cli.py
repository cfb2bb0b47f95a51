"""Command-line entry point: ``signgnn <command> --config run.cfg``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import sgnm
from .analysis import histogram, triangle_row_std
from .config import ConfigError, RunConfig
from .datagen import read_labels, read_splits, sbm_generate, write_dataset
from .graph import Graph, load_edge_list, symmetrize
from .nn import MULTICLASS, Adam, init_model, load_checkpoint, predict, save_checkpoint
from .precompute import load_bundle, precompute_features, save_bundle, slice_rows
from .training import benchmark, evaluate, train

log = logging.getLogger("signgnn")


def _graph(cfg: RunConfig) -> Graph:
    return load_edge_list(cfg.path("edges", must_exist=True),
                          directed=cfg.get_bool("directed"),
                          num_nodes=cfg.get_int("num_nodes"),
                          self_loops=cfg.get_str("self_loops", "retain"))


def _num_classes(labels: np.ndarray, task: str) -> int:
    if task == MULTICLASS:
        if labels.ndim != 1:
            raise ConfigError("task = multiclass but the labels file holds label vectors")
        return int(labels.max()) + 1
    if labels.ndim != 2:
        raise ConfigError("task = multilabel but the labels file holds class indices")
    return labels.shape[1]


def _write_text(path: Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        sgnm.write_atomic(path, text.encode("utf-8"))


def cmd_precompute(cfg: RunConfig, args) -> int:
    features_path = cfg.path("features", must_exist=True)
    bundle_dir = cfg.path("bundle_dir")
    g = _graph(cfg)
    x = sgnm.load(features_path)
    specs = cfg.operator_specs()
    t0 = time.perf_counter()
    bundle = precompute_features(g, x, specs, symmetrize_directed=cfg.get_bool("symmetrize"),
                                 threads=args.threads or cfg.get_int("threads"))
    elapsed = time.perf_counter() - t0
    manifest = save_bundle(bundle, bundle_dir)
    print(f"precompute: nodes={g.num_nodes} entries={g.num_edges} operators={len(specs)} "
          f"feature_dim={bundle.feature_dim} seconds={elapsed:.4f} manifest={manifest}")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    labels_path = cfg.path("labels", must_exist=True)
    splits_path = cfg.path("splits", must_exist=True)
    bundle_dir = cfg.path("bundle_dir", must_exist=True)
    ckpt_dir = cfg.path("checkpoint_dir")
    report = cfg.path("report", required=False)
    tcfg = cfg.train_config()
    labels = read_labels(labels_path)
    splits = read_splits(splits_path)
    bundle = load_bundle(bundle_dir)
    mcfg = cfg.model_config(_num_classes(labels, tcfg.task))

    model = init_model(mcfg, bundle.num_operators, bundle.feature_dim, tcfg.seed)
    opt = Adam(tcfg.learning_rate)
    model, history = train(model, bundle, labels, splits, tcfg, optimizer=opt)
    save_checkpoint(model, ckpt_dir, opt)

    extra = {"best_epoch": history.best_epoch}
    if len(splits.test):
        m = evaluate(model, bundle, labels, splits.test, tcfg.task)
        extra.update(test_accuracy=f"{m.accuracy:.6f}", test_micro_f1=f"{m.micro_f1:.6f}",
                     test_loss=f"{m.loss:.6f}")
    for k, v in extra.items():
        print(f"{k} = {v}")
    if report is not None:
        _write_text(report, history.to_text({"command": "train", **extra}))
    return 0


def _parse_rows(text: str | None, n: int) -> np.ndarray:
    if text is None:
        return np.arange(n)
    try:
        rows = np.array([int(v) for v in text.replace(",", " ").split()], dtype=np.int64)
    except ValueError:
        raise ConfigError(f"--rows: expected comma-separated indices, got {text!r}") from None
    if rows.size and (rows.min() < 0 or rows.max() >= n):
        raise ConfigError(f"--rows: index out of range for {n} nodes")
    return rows


def _load_for_inference(cfg: RunConfig):
    # deliberately never looks at the 'edges' key
    bundle = load_bundle(cfg.path("bundle_dir", must_exist=True))
    model, _ = load_checkpoint(cfg.path("checkpoint_dir", must_exist=True))
    if model.num_inputs != bundle.num_operators + 1 or model.in_dim != bundle.feature_dim:
        raise ConfigError(f"checkpoint expects {model.num_inputs} matrices of width "
                          f"{model.in_dim}, bundle has {bundle.num_operators + 1} of width "
                          f"{bundle.feature_dim}")
    return bundle, model


def cmd_infer(cfg: RunConfig, args) -> int:
    out = cfg.path("predictions", required=False)
    bundle, model = _load_for_inference(cfg)
    rows = _parse_rows(args.rows, bundle.num_nodes)
    pred = predict(model, slice_rows(bundle, rows), batch_size=4096)
    lines = []
    for row, p in zip(rows, pred):
        label = ",".join(str(int(v)) for v in p) if np.ndim(p) else str(int(p))
        lines.append(f"{row} {label}\n")
    _write_text(out, "".join(lines))
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    labels = read_labels(cfg.path("labels", must_exist=True))
    splits = read_splits(cfg.path("splits", must_exist=True))
    bundle, model = _load_for_inference(cfg)
    which = cfg.get_str("eval_split", "test")
    if which not in ("train", "val", "test"):
        raise ConfigError(f"eval_split must be train, val or test, got {which!r}")
    m = evaluate(model, bundle, labels, getattr(splits, which))
    text = (f"split = {which}\naccuracy = {m.accuracy:.6f}\nmicro_f1 = {m.micro_f1:.6f}\n"
            f"loss = {m.loss:.6f}\n")
    sys.stdout.write(text)
    report = cfg.path("report", required=False)
    if report is not None:
        _write_text(report, text)
    return 0


def cmd_bench(cfg: RunConfig, args) -> int:
    x = sgnm.load(cfg.path("features", must_exist=True))
    labels = read_labels(cfg.path("labels", must_exist=True))
    splits = read_splits(cfg.path("splits", must_exist=True))
    g = _graph(cfg)
    tcfg = cfg.train_config()
    mcfg = cfg.model_config(_num_classes(labels, tcfg.task))
    report = benchmark(g, x, cfg.operator_specs(), mcfg, tcfg, labels, splits,
                       runs=cfg.get_int("runs", 10),
                       symmetrize_directed=cfg.get_bool("symmetrize"))
    text = report.to_text()
    sys.stdout.write(text)
    path = cfg.path("report", required=False)
    if path is not None:
        _write_text(path, text)
    return 0


def cmd_gen_sbm(cfg: RunConfig, args) -> int:
    out = cfg.path("dataset_dir")
    ds = sbm_generate(cfg.sbm_spec())
    paths = write_dataset(ds, out)
    print(f"gen-sbm: nodes={ds.graph.num_nodes} edges={ds.graph.num_edges // 2} -> {paths['edges'].parent}")
    return 0


def cmd_analyze_triangles(cfg: RunConfig, args) -> int:
    g = _graph(cfg)
    if g.directed:
        if not cfg.get_bool("symmetrize"):
            raise ConfigError("triangle operator requires undirected graph (set symmetrize = true)")
        g = symmetrize(g)
    stds = triangle_row_std(g)
    if args.nonzero_only or cfg.get_bool("nonzero_only"):
        stds = stds[stds != 0]
    hist = histogram(stds, cfg.get_int("num_bins", 50))
    _write_text(cfg.path("histogram", required=False), hist.to_csv())
    return 0


COMMANDS = {
    "precompute": cmd_precompute,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "gen-sbm": cmd_gen_sbm,
    "analyze-triangles": cmd_analyze_triangles,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="signgnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--threads", type=int, default=None,
                       help="parallelism hint; outputs do not depend on it")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "infer":
            p.add_argument("--rows", help="comma-separated node indices to predict")
        if name == "analyze-triangles":
            p.add_argument("--nonzero-only", action="store_true",
                           help="drop nodes whose std is exactly zero")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg.values["seed"] = str(args.seed)
        return COMMANDS[args.command](cfg, args)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
