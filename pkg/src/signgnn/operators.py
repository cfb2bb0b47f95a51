"""Diffusion operators: normalized adjacencies, Laplacian, PPR and triangles."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import Graph, GraphError, add_self_loops, canonical, row_sums, spmm

DENSE_LIMIT = 2000
DEFAULT_PPR_ALPHA = 0.05
DEFAULT_PPR_ITERATIONS = 50


class OperatorKind(enum.Enum):
    SIMPLE_GCN_ADJ = "gcn"
    SYM_NORM_ADJ = "sym"
    ROW_NORM_ADJ = "row"
    NORM_LAPLACIAN = "laplacian"
    PPR = "ppr"
    TRIANGLE = "triangle"
    DIRECTED_OUT = "directed_out"
    DIRECTED_IN_TRANSPOSE = "directed_in"

    @property
    def needs_directed(self) -> bool:
        return self in (OperatorKind.DIRECTED_OUT, OperatorKind.DIRECTED_IN_TRANSPOSE)


@dataclass(frozen=True)
class OperatorSpec:
    """One diffusion operator ``kind`` applied ``power`` times.

    ``alpha``, ``iterations`` and ``row_normalize`` only matter for PPR.
    """

    kind: OperatorKind
    power: int = 1
    alpha: float = DEFAULT_PPR_ALPHA
    iterations: int = DEFAULT_PPR_ITERATIONS
    row_normalize: bool = False

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", OperatorKind(self.kind))
        if self.power < 1:
            raise ValueError(f"operator power must be >= 1, got {self.power}")
        if self.kind is OperatorKind.PPR:
            if not 0 < self.alpha <= 1:
                raise ValueError(f"PPR alpha must lie in (0, 1], got {self.alpha}")
            if self.iterations < 1:
                raise ValueError(f"PPR iterations must be >= 1, got {self.iterations}")

    @property
    def base(self) -> tuple:
        """Key shared by specs that differ only in power."""
        if self.kind is OperatorKind.PPR:
            return (self.kind, self.alpha, self.iterations, self.row_normalize)
        return (self.kind,)

    def with_power(self, power: int) -> "OperatorSpec":
        return OperatorSpec(self.kind, power, self.alpha, self.iterations, self.row_normalize)

    def to_dict(self) -> dict[str, str]:
        d = {"kind": self.kind.value, "power": str(self.power)}
        if self.kind is OperatorKind.PPR:
            d["alpha"] = repr(float(self.alpha))
            d["iterations"] = str(self.iterations)
            if self.row_normalize:
                d["row_normalize"] = "true"
        return d

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "OperatorSpec":
        unknown = set(d) - {"kind", "power", "alpha", "iterations", "row_normalize"}
        if unknown:
            raise ValueError(f"unknown operator keys: {sorted(unknown)}")
        if "kind" not in d:
            raise ValueError("operator entry without a kind")
        try:
            kind = OperatorKind(d["kind"])
        except ValueError:
            names = ", ".join(k.value for k in OperatorKind)
            raise ValueError(f"unknown operator kind {d['kind']!r} (expected one of {names})") from None
        return cls(kind,
                   power=int(d.get("power", 1)),
                   alpha=float(d.get("alpha", DEFAULT_PPR_ALPHA)),
                   iterations=int(d.get("iterations", DEFAULT_PPR_ITERATIONS)),
                   row_normalize=d.get("row_normalize", "false").lower() in ("1", "true", "yes"))


def sign_specs(p: int, s: int, t: int, *, alpha: float = DEFAULT_PPR_ALPHA,
               iterations: int = DEFAULT_PPR_ITERATIONS) -> list[OperatorSpec]:
    """Specs for SIGN(p, s, t): powers 1..p of GCN, 1..s of PPR, 1..t of triangle."""
    specs = [OperatorSpec(OperatorKind.SIMPLE_GCN_ADJ, k) for k in range(1, p + 1)]
    specs += [OperatorSpec(OperatorKind.PPR, k, alpha, iterations) for k in range(1, s + 1)]
    specs += [OperatorSpec(OperatorKind.TRIANGLE, k) for k in range(1, t + 1)]
    return specs


def _require_undirected(g: Graph, what: str) -> None:
    if g.directed:
        raise GraphError(f"{what} requires undirected graph")


def _inv_sqrt(d: np.ndarray) -> np.ndarray:
    out = np.zeros_like(d)
    nz = d > 0
    out[nz] = 1.0 / np.sqrt(d[nz])
    return out


def _scale(m: sp.csr_matrix, left: np.ndarray, right: np.ndarray | None = None) -> sp.csr_matrix:
    """``diag(left) @ m @ diag(right)`` computed entry-wise on the CSR arrays."""
    rows = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
    data = m.data * left[rows]
    if right is not None:
        data = data * right[m.indices]
    return canonical(sp.csr_matrix((data, m.indices, m.indptr), shape=m.shape))


def gcn_normalized(g: Graph) -> sp.csr_matrix:
    """``D~^-1/2 (I + W) D~^-1/2``."""
    _require_undirected(g, "GCN normalization")
    w = add_self_loops(g).adjacency
    s = _inv_sqrt(row_sums(w))
    return _scale(w, s, s)


def sym_normalized(g: Graph) -> sp.csr_matrix:
    """``D^-1/2 W D^-1/2``; zero-degree nodes give zero rows and columns."""
    _require_undirected(g, "symmetric normalization")
    s = _inv_sqrt(row_sums(g.adjacency))
    return _scale(g.adjacency, s, s)


def row_normalized(m: sp.csr_matrix) -> sp.csr_matrix:
    """Scale every nonzero row to sum to one."""
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"row normalization expects a square matrix, got {m.shape}")
    m = canonical(m)
    if m.nnz and m.data.min() < 0:
        raise ValueError("row normalization requires nonnegative entries")
    sums = row_sums(m)
    rows = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
    data = m.data / sums[rows]
    return canonical(sp.csr_matrix((data, m.indices, m.indptr), shape=m.shape))


def norm_laplacian(g: Graph) -> sp.csr_matrix:
    """``I - D^-1/2 W D^-1/2``."""
    a = sym_normalized(g)
    return canonical(sp.identity(g.num_nodes, format="csr") - a)


def ppr_diffuse(g: Graph, x: np.ndarray, alpha: float, iterations: int = DEFAULT_PPR_ITERATIONS,
                *, row_normalize: bool = False, threads: int | None = None,
                transition: sp.csr_matrix | None = None) -> np.ndarray:
    """Approximate ``alpha (I - (1 - alpha) A)^-1 X`` by ``iterations`` fixed-point steps.

    ``Z_{k+1} = (1 - alpha) A Z_k + alpha X`` starting from ``Z_0 = X``, with
    ``A`` the symmetrically normalized adjacency. With ``row_normalize`` the
    diffusion matrix is additionally rescaled so each nonzero row sums to one;
    the row sums are obtained by diffusing a ones column alongside ``X``.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape[0] != g.num_nodes:
        raise ValueError(f"feature rows {x.shape[0]} != num_nodes {g.num_nodes}")
    a = sym_normalized(g) if transition is None else transition
    if row_normalize:
        x = np.hstack([x, np.ones((x.shape[0], 1))])
    z = x.copy()
    if alpha < 1:
        restart = alpha * x
        for _ in range(iterations):
            z = (1 - alpha) * spmm(a, z, threads) + restart
    if row_normalize:
        mass = z[:, -1:]
        z = np.divide(z[:, :-1], mass, out=np.zeros_like(z[:, :-1]), where=mass > 0)
    return z


def ppr_matrix_dense(g: Graph, alpha: float, dense_limit: int = DENSE_LIMIT) -> np.ndarray:
    """Exact dense PPR matrix; only for graphs small enough to invert."""
    if g.num_nodes > dense_limit:
        raise GraphError(f"graph with {g.num_nodes} nodes exceeds dense limit {dense_limit}")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    a = sym_normalized(g).toarray()
    eye = np.eye(g.num_nodes)
    return alpha * np.linalg.solve(eye - (1 - alpha) * a, eye)


def triangle_counts(g: Graph) -> sp.csr_matrix:
    """Number of triangles through each edge, ignoring weights and self-loops."""
    _require_undirected(g, "triangle operator")
    a = g.adjacency.tocoo()
    off = a.row != a.col
    s = sp.csr_matrix((np.ones(off.sum()), (a.row[off], a.col[off])), shape=a.shape)
    return canonical((s @ s).multiply(s))


def triangle_operator(g: Graph) -> sp.csr_matrix:
    return row_normalized(triangle_counts(g))


def directed_normalized(g: Graph, transpose: bool = False) -> sp.csr_matrix:
    """Row-normalized ``W_d`` (out-neighbors) or ``W_d^T`` (in-neighbors)."""
    if not g.directed:
        raise GraphError("directed normalization requires a directed graph")
    w = g.adjacency.T.tocsr() if transpose else g.adjacency
    return row_normalized(w)


class Operator:
    """A diffusion operator ready to be applied ``power`` times to features."""

    def __init__(self, spec: OperatorSpec, matrix: sp.csr_matrix | None = None,
                 graph: Graph | None = None, transition: sp.csr_matrix | None = None):
        self.spec = spec
        self.matrix = matrix
        self._graph = graph
        self._transition = transition

    def step(self, x: np.ndarray, threads: int | None = None) -> np.ndarray:
        """One application of the base operator."""
        if self.spec.kind is OperatorKind.PPR:
            return ppr_diffuse(self._graph, x, self.spec.alpha, self.spec.iterations,
                               row_normalize=self.spec.row_normalize, threads=threads,
                               transition=self._transition)
        return spmm(self.matrix, x, threads)

    def __call__(self, x: np.ndarray, threads: int | None = None) -> np.ndarray:
        for _ in range(self.spec.power):
            x = self.step(x, threads)
        return x


def build_operator(spec: OperatorSpec, g: Graph) -> Operator:
    kind = spec.kind
    if kind.needs_directed and not g.directed:
        raise GraphError(f"{kind.value} operator requires directed graph")
    if not kind.needs_directed and g.directed:
        raise GraphError(f"{kind.value} operator requires undirected graph")
    if kind is OperatorKind.PPR:
        return Operator(spec, graph=g, transition=sym_normalized(g))
    builders = {
        OperatorKind.SIMPLE_GCN_ADJ: gcn_normalized,
        OperatorKind.SYM_NORM_ADJ: sym_normalized,
        OperatorKind.ROW_NORM_ADJ: lambda h: row_normalized(h.adjacency),
        OperatorKind.NORM_LAPLACIAN: norm_laplacian,
        OperatorKind.TRIANGLE: triangle_operator,
        OperatorKind.DIRECTED_OUT: lambda h: directed_normalized(h, False),
        OperatorKind.DIRECTED_IN_TRANSPOSE: lambda h: directed_normalized(h, True),
    }
    return Operator(spec, matrix=builders[kind](g))
