"""Immutable sparse graphs, edge-list ingestion and the sparse-dense product.

Sparse matrices are ``scipy.sparse.csr_matrix`` objects in canonical form
(sorted column indices, no duplicates, no stored zeros, float64 values) with
read-only buffers. Dense matrices are C-contiguous float64 ``numpy`` arrays.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .sgnm import fnv1a_64


class GraphError(ValueError):
    """Invalid graph input or an operation applied to the wrong kind of graph."""


def canonical(m) -> sp.csr_matrix:
    """Return a frozen canonical CSR copy of ``m``."""
    m = sp.csr_matrix(m, dtype=np.float64, copy=True)
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    m.indptr = m.indptr.astype(np.int64)
    m.indices = m.indices.astype(np.int64)
    for arr in (m.data, m.indices, m.indptr):
        arr.flags.writeable = False
    return m


def check_canonical(m: sp.csr_matrix) -> None:
    """Walk the CSR arrays and raise ``AssertionError`` on any broken invariant."""
    n_rows, n_cols = m.shape
    ptr, idx, val = m.indptr, m.indices, m.data
    assert len(ptr) == n_rows + 1
    assert ptr[0] == 0 and ptr[-1] == len(idx) == len(val)
    assert np.all(np.diff(ptr) >= 0), "row_offsets decreasing"
    assert np.all(val != 0), "explicit zero stored"
    if len(idx):
        assert idx.min() >= 0 and idx.max() < n_cols, "column index out of range"
    for i in range(n_rows):
        row = idx[ptr[i]:ptr[i + 1]]
        assert np.all(np.diff(row) > 0), f"row {i} not strictly increasing"


@dataclass(frozen=True)
class Graph:
    num_nodes: int
    adjacency: sp.csr_matrix
    directed: bool = False

    def __post_init__(self):
        adj = self.adjacency
        if adj.shape != (self.num_nodes, self.num_nodes):
            raise GraphError(f"adjacency shape {adj.shape} does not match {self.num_nodes} nodes")
        if not sp.isspmatrix_csr(adj) or adj.data.flags.writeable:
            object.__setattr__(self, "adjacency", canonical(adj))
            adj = self.adjacency
        if adj.nnz and not np.all(adj.data > 0):
            raise GraphError("edge weights must be positive")
        if not self.directed and (adj != adj.T).nnz:
            raise GraphError("undirected graph must have a symmetric adjacency")

    @property
    def num_edges(self) -> int:
        """Stored adjacency entries (each undirected edge counts twice)."""
        return self.adjacency.nnz

    @classmethod
    def from_dense(cls, w, directed: bool = False) -> "Graph":
        w = np.asarray(w, dtype=np.float64)
        return cls(w.shape[0], canonical(sp.csr_matrix(w)), directed)

    @classmethod
    def from_edges(cls, src, dst, weights=None, num_nodes=None, directed=False) -> "Graph":
        """Build from edge arrays; duplicates sum and undirected edges are mirrored."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        w = np.ones(len(src)) if weights is None else np.asarray(weights, dtype=np.float64)
        if num_nodes is None:
            num_nodes = int(max(src.max(initial=-1), dst.max(initial=-1))) + 1
        if len(w) and not np.all(w > 0):
            raise GraphError("edge weights must be positive")
        if not directed:
            # a self-loop is a single edge; mirror only off-diagonal entries
            off = src != dst
            src, dst, w = (np.concatenate([src, dst[off]]),
                           np.concatenate([dst, src[off]]),
                           np.concatenate([w, w[off]]))
        adj = sp.coo_matrix((w, (src, dst)), shape=(num_nodes, num_nodes))
        return cls(num_nodes, canonical(adj), directed)

    def fingerprint(self) -> int:
        """64-bit FNV-1a over the canonical CSR arrays."""
        a = self.adjacency
        head = np.array([self.num_nodes, int(self.directed)], dtype="<i8").tobytes()
        return fnv1a_64(head
                        + a.indptr.astype("<i8").tobytes()
                        + a.indices.astype("<i8").tobytes()
                        + a.data.astype("<f8").tobytes())


def load_edge_list(path, directed: bool = False, num_nodes: int | None = None,
                   self_loops: str = "retain") -> Graph:
    """Read a whitespace-separated ``src dst [weight]`` edge list.

    Lines starting with ``#`` and blank lines are skipped. ``self_loops`` is
    ``"retain"`` (keep loops present in the file) or ``"strip"``.
    """
    if self_loops not in ("retain", "strip"):
        raise ValueError(f"self_loops must be 'retain' or 'strip', not {self_loops!r}")
    src, dst, wts = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) not in (2, 3):
                raise GraphError(f"{path}:{lineno}: expected 'src dst [weight]', got {s!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise GraphError(f"{path}:{lineno}: malformed edge {s!r}") from None
            if u < 0 or v < 0:
                raise GraphError(f"{path}:{lineno}: negative node id")
            if num_nodes is not None and max(u, v) >= num_nodes:
                raise GraphError(f"{path}:{lineno}: node id {max(u, v)} >= num_nodes {num_nodes}")
            if not w > 0 or not np.isfinite(w):
                raise GraphError(f"{path}:{lineno}: edge weight must be positive, got {w}")
            if self_loops == "strip" and u == v:
                continue
            src.append(u)
            dst.append(v)
            wts.append(w)
    return Graph.from_edges(src, dst, wts, num_nodes=num_nodes, directed=directed)


def save_edge_list(g: Graph, path) -> None:
    """Write each stored entry once (upper triangle for undirected graphs)."""
    coo = g.adjacency.tocoo()
    keep = np.ones(coo.nnz, bool) if g.directed else coo.row <= coo.col
    with open(path, "w", encoding="utf-8") as fh:
        for u, v, w in zip(coo.row[keep], coo.col[keep], coo.data[keep]):
            fh.write(f"{u} {v}\n" if w == 1.0 else f"{u} {v} {float(w)!r}\n")


def symmetrize(g: Graph) -> Graph:
    """Undirected counterpart ``(W_d + W_d^T) / 2``."""
    if not g.directed:
        raise GraphError("symmetrize expects a directed graph")
    w = g.adjacency
    return Graph(g.num_nodes, canonical(0.5 * (w + w.T)), directed=False)


def add_self_loops(g: Graph) -> Graph:
    """``I + W``; existing loop weights are incremented by one."""
    eye = sp.identity(g.num_nodes, format="csr")
    return Graph(g.num_nodes, canonical(g.adjacency + eye), g.directed)


def remove_self_loops(g: Graph) -> Graph:
    a = g.adjacency.tocoo()
    keep = a.row != a.col
    adj = sp.coo_matrix((a.data[keep], (a.row[keep], a.col[keep])), shape=a.shape)
    return Graph(g.num_nodes, canonical(adj), g.directed)


def degrees(g: Graph) -> np.ndarray:
    return row_sums(g.adjacency)


def row_sums(m: sp.csr_matrix) -> np.ndarray:
    return np.asarray(m.sum(axis=1), dtype=np.float64).ravel()


def spmm(a: sp.csr_matrix, x: np.ndarray, threads: int | None = None) -> np.ndarray:
    """Sparse-times-dense product ``a @ x``.

    Each output row accumulates its stored entries in column order, so the
    result does not depend on ``threads``: rows are only partitioned across
    workers, never split.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    if a.shape[1] != x.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape} @ {x.shape}")
    threads = threads or 1
    if threads <= 1 or a.shape[0] < 2 * threads:
        out = np.asarray(a @ x)
    else:
        bounds = np.linspace(0, a.shape[0], threads + 1).astype(int)
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda ij: np.asarray(a[ij[0]:ij[1]] @ x),
                                  zip(bounds[:-1], bounds[1:])))
        out = np.vstack(parts)
    out = np.ascontiguousarray(out, dtype=np.float64)
    return out[:, 0] if squeeze else out
