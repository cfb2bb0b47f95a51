"""How unevenly the triangle operator weighs each node's original neighbors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, GraphError
from .operators import triangle_operator


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    normalized_counts: np.ndarray
    num_samples: int

    def to_csv(self) -> str:
        lines = ["bin_left,bin_right,frequency"]
        lines += [f"{float(lo)!r},{float(hi)!r},{float(f)!r}" for lo, hi, f in
                  zip(self.bin_edges[:-1], self.bin_edges[1:], self.normalized_counts)]
        return "\n".join(lines) + "\n"


def triangle_row_std(g: Graph) -> np.ndarray:
    """Population std of triangle-operator weights over each node's neighbors.

    Neighbors are the off-diagonal entries of the original adjacency; a
    neighbor whose edge closes no triangle contributes a weight of 0.
    Isolated nodes get 0.
    """
    if g.directed:
        raise GraphError("triangle analysis requires undirected graph")
    t = triangle_operator(g)
    adj = g.adjacency
    out = np.zeros(g.num_nodes)
    for i in range(g.num_nodes):
        nbrs = adj.indices[adj.indptr[i]:adj.indptr[i + 1]]
        nbrs = nbrs[nbrs != i]
        if not len(nbrs):
            continue
        cols = t.indices[t.indptr[i]:t.indptr[i + 1]]
        vals = t.data[t.indptr[i]:t.indptr[i + 1]]
        weights = np.zeros(len(nbrs))
        # triangle support is a subset of the neighborhood, both sorted
        weights[np.searchsorted(nbrs, cols)] = vals
        out[i] = np.std(weights)
    return out


def histogram(values, num_bins: int = 50) -> Histogram:
    """Uniform bins over ``[min, max]``, last bin closed; frequencies sum to one."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    if not values.size:
        raise ValueError("cannot build a histogram of an empty input")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return Histogram(np.array([lo, hi]), np.array([1.0]), values.size)
    counts, edges = np.histogram(values, bins=num_bins, range=(lo, hi))
    return Histogram(edges, counts / values.size, values.size)
