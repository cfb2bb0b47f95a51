"""Seeded stochastic block model datasets with block-dependent Gaussian features."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import sgnm
from .graph import Graph, save_edge_list
from .training import Splits


@dataclass(frozen=True)
class SbmSpec:
    num_nodes: int
    num_blocks: int = 2
    p_in: float = 0.1
    p_out: float = 0.01
    feature_dim: int = 16
    feature_noise: float = 1.0
    seed: int = 0
    split_fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)

    def validate(self) -> None:
        if self.num_nodes < 1 or self.num_blocks < 1:
            raise ValueError("num_nodes and num_blocks must be positive")
        if self.num_blocks > self.num_nodes:
            raise ValueError("more blocks than nodes")
        if self.feature_dim < self.num_blocks:
            raise ValueError("feature_dim must be at least num_blocks")
        if not 0 <= self.p_out <= self.p_in <= 1:
            raise ValueError(f"need 0 <= p_out <= p_in <= 1, got p_out={self.p_out}, p_in={self.p_in}")
        if self.feature_noise < 0:
            raise ValueError("feature_noise must be >= 0")
        fr = self.split_fractions
        if len(fr) != 3 or min(fr) < 0 or abs(sum(fr) - 1) > 1e-9:
            raise ValueError(f"split fractions must be 3 nonnegative values summing to 1, got {fr}")


@dataclass(frozen=True)
class SbmDataset:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    splits: Splits


def block_assignment(num_nodes: int, num_blocks: int) -> np.ndarray:
    """Contiguous, even blocks; the remainder goes to the earliest blocks."""
    sizes = np.full(num_blocks, num_nodes // num_blocks)
    sizes[: num_nodes % num_blocks] += 1
    return np.repeat(np.arange(num_blocks), sizes)


def sbm_generate(spec: SbmSpec) -> SbmDataset:
    """Sample edges, features and splits from one generator seeded by ``spec.seed``.

    Pair ``(i, j)`` with ``i < j`` is an edge with probability ``p_in`` inside a
    block and ``p_out`` across blocks. Node features are the one-hot block
    indicator (first ``num_blocks`` dims) plus Gaussian noise.
    """
    spec.validate()
    n = spec.num_nodes
    rng = np.random.default_rng(spec.seed)
    blocks = block_assignment(n, spec.num_blocks)

    src, dst = [], []
    for i in range(n - 1):
        j = np.arange(i + 1, n)
        p = np.where(blocks[j] == blocks[i], spec.p_in, spec.p_out)
        hit = j[rng.random(n - i - 1) < p]
        src.append(np.full(len(hit), i))
        dst.append(hit)
    src = np.concatenate(src) if src else np.zeros(0, np.int64)
    dst = np.concatenate(dst) if dst else np.zeros(0, np.int64)
    graph = Graph.from_edges(src, dst, num_nodes=n)

    means = np.zeros((n, spec.feature_dim))
    means[np.arange(n), blocks] = 1.0
    features = means + spec.feature_noise * rng.standard_normal((n, spec.feature_dim))

    perm = rng.permutation(n)
    n_train = int(round(spec.split_fractions[0] * n))
    n_val = int(round(spec.split_fractions[1] * n))
    n_val = min(n_val, n - n_train)
    splits = Splits(np.sort(perm[:n_train]), np.sort(perm[n_train:n_train + n_val]),
                    np.sort(perm[n_train + n_val:]))
    return SbmDataset(graph, features, blocks.astype(np.int64), splits)


def write_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    with open(path, "w", encoding="utf-8") as fh:
        if labels.ndim == 1:
            fh.writelines(f"{int(v)}\n" for v in labels)
        else:
            fh.writelines(",".join(str(int(v)) for v in row) + "\n" for row in labels)


def read_labels(path) -> np.ndarray:
    """One line per node: a class index, or a comma-separated 0/1 vector."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            try:
                rows.append([int(v) for v in s.split(",")] if "," in s else int(s))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed label {s!r}") from None
    if rows and isinstance(rows[0], list):
        widths = {len(r) if isinstance(r, list) else 1 for r in rows}
        if len(widths) != 1:
            raise ValueError(f"{path}: multilabel rows have differing widths {sorted(widths)}")
    return np.asarray(rows, dtype=np.int64)


def write_splits(path, splits: Splits) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name in ("train", "val", "test"):
            idx = getattr(splits, name)
            fh.write(f"{name}: {' '.join(map(str, idx)) if len(idx) else '-'}\n")


def read_splits(path) -> Splits:
    parts: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            name, sep, rest = s.partition(":")
            name = name.strip()
            if not sep or name not in ("train", "val", "test") or name in parts:
                raise ValueError(f"{path}:{lineno}: expected 'train:', 'val:' or 'test:' line")
            rest = rest.strip()
            try:
                parts[name] = (np.zeros(0, np.int64) if rest in ("", "-")
                               else np.array([int(v) for v in rest.split()], dtype=np.int64))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed index list") from None
    missing = {"train", "val", "test"} - set(parts)
    if missing:
        raise ValueError(f"{path}: missing split lines {sorted(missing)}")
    return Splits(parts["train"], parts["val"], parts["test"])


def write_dataset(ds: SbmDataset, directory) -> dict[str, Path]:
    """Write ``edges.txt``, ``features.sgnm``, ``labels.txt`` and ``splits.txt``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {"edges": directory / "edges.txt", "features": directory / "features.sgnm",
             "labels": directory / "labels.txt", "splits": directory / "splits.txt"}
    save_edge_list(ds.graph, paths["edges"])
    sgnm.save(paths["features"], ds.features)
    write_labels(paths["labels"], ds.labels)
    write_splits(paths["splits"], ds.splits)
    return paths
