"""Minibatch training with early stopping, evaluation metrics and timing."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .nn import (MULTICLASS, TASKS, Adam, ModelConfig, SignModel, check_labels, data_loss,
                 decide, init_model, loss_and_grad, predict_logits)
from .precompute import FeatureBundle, precompute_features, slice_rows

log = logging.getLogger(__name__)

PATIENCE = 15


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    dropout: float = 0.0
    weight_decay: float = 0.0
    max_epochs: int = 100
    patience: int = PATIENCE
    seed: int = 0
    task: str = MULTICLASS

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")


@dataclass(frozen=True)
class Splits:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))

    def validate(self, n: int) -> None:
        if not len(self.train):
            raise ValueError("train split is empty")
        parts = [self.train, self.val, self.test]
        allidx = np.concatenate(parts)
        if allidx.size and (allidx.min() < 0 or allidx.max() >= n):
            raise ValueError(f"split index out of range for {n} nodes")
        if len(np.unique(allidx)) != len(allidx):
            raise ValueError("splits overlap or contain duplicates")


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    micro_f1: float
    loss: float


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    val_f1: float
    seconds: float


@dataclass
class History:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    stopped_early: bool = False

    def to_text(self, extra: dict | None = None) -> str:
        lines = [f"{k} = {v}" for k, v in (extra or {}).items()]
        lines += [f"epochs_run = {len(self.epochs)}",
                  f"best_epoch = {self.best_epoch}",
                  f"best_val_loss = {self.best_val_loss!r}",
                  f"stopped_early = {str(self.stopped_early).lower()}",
                  "",
                  "epoch,train_loss,val_loss,val_acc,val_f1,seconds"]
        lines += [f"{e.epoch},{e.train_loss!r},{e.val_loss!r},{e.val_acc!r},{e.val_f1!r},"
                  f"{e.seconds:.6f}" for e in self.epochs]
        return "\n".join(lines) + "\n"


class EarlyStopping:
    """Track the best validation loss; ``update`` returns True when training should stop.

    Stops once the loss has failed to strictly improve for ``patience``
    consecutive epochs.
    """

    def __init__(self, patience: int = PATIENCE):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, loss: float) -> bool:
        if loss < self.best:
            self.best, self.best_epoch, self.bad_epochs = loss, epoch, 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience

    @property
    def improved(self) -> bool:
        return self.bad_epochs == 0


def micro_f1(pred, truth) -> float:
    """F1 from TP/FP/FN pooled over every (row, class) cell; 0 when undefined."""
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def one_hot(idx: np.ndarray, c: int) -> np.ndarray:
    out = np.zeros((len(idx), c), dtype=bool)
    out[np.arange(len(idx)), idx] = True
    return out


def _metrics_from_logits(logits, labels, task, num_classes) -> Metrics:
    loss, _ = data_loss(logits, labels, task)
    pred = decide(logits, task)
    if task == MULTICLASS:
        acc = float(np.mean(pred == labels))
        f1 = micro_f1(one_hot(pred, num_classes), one_hot(labels, num_classes))
    else:
        acc = float(np.mean(np.all(pred == labels, axis=1)))
        f1 = micro_f1(pred, labels)
    return Metrics(acc, f1, loss)


def evaluate(model: SignModel, bundle: FeatureBundle, labels, rows, task: str | None = None,
             batch_size: int | None = 4096) -> Metrics:
    """Eval-mode accuracy, micro-F1 and mean data loss over ``rows``.

    Multilabel accuracy is exact-match over the whole label vector.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if not len(rows):
        raise ValueError("cannot evaluate on an empty row set")
    task = task or model.config.task
    y = check_labels(np.asarray(labels)[rows], task, model.config.num_classes)
    logits = predict_logits(model, slice_rows(bundle, rows), batch_size)
    return _metrics_from_logits(logits, y, task, model.config.num_classes)


def _validation(model, bundle, labels, rows, task) -> Metrics:
    return evaluate(model, bundle, labels, rows, task)


def train(model: SignModel, bundle: FeatureBundle, labels, splits: Splits, cfg: TrainConfig,
          on_epoch=None, optimizer: Adam | None = None) -> tuple[SignModel, History]:
    """Train ``model`` in place and restore the best-validation-loss parameters.

    Early stopping watches validation loss; with an empty validation split it
    falls back to the training loss. ``on_epoch(record)`` is called after each
    epoch.
    """
    cfg.validate()
    splits.validate(bundle.num_nodes)
    labels = np.asarray(labels)
    if len(labels) != bundle.num_nodes:
        raise TrainingError(f"{len(labels)} labels for {bundle.num_nodes} nodes")
    check_labels(labels[splits.train], cfg.task, model.config.num_classes)
    if model.config.task != cfg.task:
        raise TrainingError(f"model task {model.config.task!r} != training task {cfg.task!r}")
    model.set_dropout(cfg.dropout)

    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    order_rng = np.random.default_rng(seeds[0])
    dropout_rng = np.random.default_rng(seeds[1])
    opt = optimizer if optimizer is not None else Adam(cfg.learning_rate)
    params = model.parameters()
    stopper = EarlyStopping(cfg.patience)
    history = History()
    best_state = model.state()

    for epoch in range(1, cfg.max_epochs + 1):
        start = time.perf_counter()
        perm = splits.train[order_rng.permutation(len(splits.train))]
        total = 0.0
        for i in range(0, len(perm), cfg.batch_size):
            idx = perm[i:i + cfg.batch_size]
            loss, grads = loss_and_grad(model, slice_rows(bundle, idx), labels[idx], cfg.task,
                                        cfg.weight_decay, dropout_rng)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch}, batch {i // cfg.batch_size}")
            opt.step(params, grads)
            total += loss * len(idx)
        train_loss = total / len(perm)
        if len(splits.val):
            vm = _validation(model, bundle, labels, splits.val, cfg.task)
        else:
            vm = Metrics(float("nan"), float("nan"), train_loss)
        if not np.isfinite(vm.loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        record = EpochRecord(epoch, train_loss, vm.loss, vm.accuracy, vm.micro_f1,
                             time.perf_counter() - start)
        history.epochs.append(record)
        stop = stopper.update(epoch, vm.loss)
        if stopper.improved:
            best_state = model.state()
        log.info("epoch %d train_loss=%.5f val_loss=%.5f val_acc=%.4f", epoch, train_loss,
                 vm.loss, vm.accuracy)
        if on_epoch is not None:
            on_epoch(record)
        if stop:
            history.stopped_early = True
            break

    model.load_state(best_state)
    history.best_epoch = stopper.best_epoch
    history.best_val_loss = stopper.best
    return model, history


# -- timing -------------------------------------------------------------------

@dataclass
class Timing:
    mean: float
    std: float
    runs: list[float]

    @classmethod
    def of(cls, runs: list[float]) -> "Timing":
        arr = np.asarray(runs, dtype=float)
        return cls(float(arr.mean()), float(arr.std()), list(runs))


@dataclass
class BenchReport:
    num_nodes: int
    num_edges: int
    num_operators: int
    feature_dim: int
    runs: int
    precompute: Timing
    train_epoch: Timing
    inference: Timing

    def to_text(self) -> str:
        rows = [("num_nodes", self.num_nodes), ("num_edges", self.num_edges),
                ("num_operators", self.num_operators), ("feature_dim", self.feature_dim),
                ("runs", self.runs)]
        for name in ("precompute", "train_epoch", "inference"):
            t = getattr(self, name)
            rows += [(f"{name}.mean_seconds", f"{t.mean:.6f}"), (f"{name}.std_seconds", f"{t.std:.6f}")]
        return "".join(f"{k} = {v}\n" for k, v in rows)


def time_inference(model: SignModel, bundle: FeatureBundle, runs: int = 10,
                   batch_size: int | None = 4096, warmup: bool = True) -> Timing:
    """Full eval-mode forward over every bundle row; the bundle is the only input."""
    if warmup:
        predict_logits(model, bundle, batch_size)
    out = []
    for _ in range(runs):
        t0 = time.perf_counter()
        predict_logits(model, bundle, batch_size)
        out.append(time.perf_counter() - t0)
    return Timing.of(out)


def time_precompute(g, x, specs, runs: int = 10, warmup: bool = True, **kwargs) -> Timing:
    if warmup:
        precompute_features(g, x, specs, **kwargs)
    out = []
    for _ in range(runs):
        t0 = time.perf_counter()
        precompute_features(g, x, specs, **kwargs)
        out.append(time.perf_counter() - t0)
    return Timing.of(out)


def benchmark(g, x, specs, model_cfg: ModelConfig, cfg: TrainConfig, labels, splits: Splits,
              runs: int = 10, symmetrize_directed: bool = False) -> BenchReport:
    """Mean and std over ``runs`` of precompute, one training epoch and full inference."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    pre = time_precompute(g, x, specs, runs, symmetrize_directed=symmetrize_directed)
    bundle = precompute_features(g, x, specs, symmetrize_directed=symmetrize_directed)

    epoch_cfg = TrainConfig(**{**cfg.__dict__, "max_epochs": 1})
    epoch_times = []
    for k in range(runs + 1):
        model = init_model(ModelConfig(**model_cfg.__dict__), len(specs), bundle.feature_dim, cfg.seed)
        t0 = time.perf_counter()
        train(model, bundle, labels, splits, epoch_cfg)
        if k:  # first run is warm-up
            epoch_times.append(time.perf_counter() - t0)

    inf = time_inference(model, bundle, runs)
    return BenchReport(g.num_nodes, g.num_edges, len(specs), bundle.feature_dim, runs,
                       pre, Timing.of(epoch_times), inf)
