"""One-time feature diffusion and the on-disk feature bundle.

Everything downstream of :func:`precompute_features` works on a
:class:`FeatureBundle` only; no graph is needed to train or predict.
"""

from __future__ import annotations

import warnings
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kv, sgnm
from .graph import Graph, symmetrize
from .operators import OperatorSpec, build_operator

MANIFEST = "manifest.txt"
BUNDLE_VERSION = 1


class BundleError(RuntimeError):
    """Missing, corrupt or incompatible bundle on disk."""


class FingerprintMismatch(UserWarning):
    """The bundle was computed from a different graph than expected."""


@dataclass(frozen=True, eq=False)
class FeatureBundle:
    base: np.ndarray
    diffused: tuple[np.ndarray, ...] = ()
    specs: tuple[OperatorSpec, ...] = ()
    graph_fingerprint: int = 0

    def __post_init__(self):
        object.__setattr__(self, "diffused", tuple(self.diffused))
        object.__setattr__(self, "specs", tuple(self.specs))
        if len(self.diffused) != len(self.specs):
            raise ValueError(f"{len(self.diffused)} diffused matrices for {len(self.specs)} specs")
        for m in self.diffused:
            if m.shape != self.base.shape:
                raise ValueError(f"diffused shape {m.shape} != base shape {self.base.shape}")

    @property
    def matrices(self) -> list[np.ndarray]:
        """``[X, A_1 X, ..., A_r X]``."""
        return [self.base, *self.diffused]

    @property
    def num_nodes(self) -> int:
        return self.base.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.base.shape[1]

    @property
    def num_operators(self) -> int:
        return len(self.specs)

    def equals(self, other: "FeatureBundle") -> bool:
        """Bitwise equality of every matrix plus matching specs and fingerprint."""
        return (self.specs == other.specs
                and self.graph_fingerprint == other.graph_fingerprint
                and len(self.matrices) == len(other.matrices)
                and all(a.shape == b.shape and a.tobytes() == b.tobytes()
                        for a, b in zip(self.matrices, other.matrices)))


def precompute_features(g: Graph, x: np.ndarray, specs, *, symmetrize_directed: bool = False,
                        threads: int | None = None) -> FeatureBundle:
    """Diffuse ``x`` with every operator in ``specs``.

    Specs sharing a base operator are served from one incremental sweep
    ``Y_j = B Y_{j-1}`` up to the largest requested power. For a directed
    ``g``, undirected operator kinds use ``(W_d + W_d^T)/2`` when
    ``symmetrize_directed`` is set and are rejected otherwise.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != g.num_nodes:
        raise ValueError(f"features of shape {x.shape} do not match {g.num_nodes} nodes")
    specs = list(specs)
    undirected = symmetrize(g) if g.directed and symmetrize_directed else None

    groups: dict[tuple, list[int]] = defaultdict(list)
    for i, spec in enumerate(specs):
        groups[spec.base].append(i)

    out: list[np.ndarray | None] = [None] * len(specs)
    for members in groups.values():
        first = specs[members[0]]
        target = undirected if (undirected is not None and not first.kind.needs_directed) else g
        op = build_operator(first.with_power(1), target)
        wanted = defaultdict(list)
        for i in members:
            wanted[specs[i].power].append(i)
        y = x
        for power in range(1, max(wanted) + 1):
            y = op.step(y, threads)
            for i in wanted.get(power, ()):
                out[i] = y
    return FeatureBundle(x, tuple(out), tuple(specs), g.fingerprint())


def _manifest_items(b: FeatureBundle, files: list[str], checksums: list[int]) -> dict[str, object]:
    items: dict[str, object] = {
        "version": BUNDLE_VERSION,
        "num_nodes": b.num_nodes,
        "feature_dim": b.feature_dim,
        "graph_fingerprint": f"{b.graph_fingerprint:016x}",
        "num_operators": b.num_operators,
    }
    for n, spec in enumerate(b.specs, 1):
        for k, v in spec.to_dict().items():
            items[f"operator.{n}.{k}"] = v
    for n, (name, digest) in enumerate(zip(files, checksums)):
        items[f"file.{n}"] = name
        items[f"checksum.{n}"] = f"{digest:016x}"
    return items


def save_bundle(b: FeatureBundle, directory) -> Path:
    """Write one SGNM file per matrix and then the manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files, checksums = [], []
    for n, m in enumerate(b.matrices):
        name = f"features_{n}.sgnm"
        checksums.append(sgnm.fnv1a_64(sgnm.save(directory / name, m)))
        files.append(name)
    path = directory / MANIFEST
    text = kv.dumps(_manifest_items(b, files, checksums))
    sgnm.write_atomic(path, text.encode("utf-8"))
    return path


def _int(m: dict, key: str) -> int:
    try:
        return int(m[key])
    except KeyError:
        raise BundleError(f"manifest key {key!r} missing") from None
    except ValueError:
        raise BundleError(f"manifest key {key!r} is not an integer: {m[key]!r}") from None


def load_bundle(directory, expected_fingerprint: int | None = None) -> FeatureBundle:
    """Load and verify a bundle written by :func:`save_bundle`.

    A fingerprint differing from ``expected_fingerprint`` issues a
    :class:`FingerprintMismatch` warning; the bundle is still returned.
    """
    directory = Path(directory)
    path = directory / MANIFEST
    if not path.is_file():
        raise BundleError(f"manifest missing in {directory}")
    try:
        m = kv.read(path)
    except (kv.KvError, UnicodeDecodeError) as exc:
        raise BundleError(f"unreadable manifest: {exc}") from None
    if _int(m, "version") != BUNDLE_VERSION:
        raise BundleError(f"bundle version {m['version']} unsupported (expected {BUNDLE_VERSION})")
    r = _int(m, "num_operators")
    n, d = _int(m, "num_nodes"), _int(m, "feature_dim")

    specs = []
    for k in range(1, r + 1):
        prefix = f"operator.{k}."
        entry = {key[len(prefix):]: v for key, v in m.items() if key.startswith(prefix)}
        try:
            specs.append(OperatorSpec.from_dict(entry))
        except ValueError as exc:
            raise BundleError(f"operator {k}: {exc}") from None

    mats = []
    for k in range(r + 1):
        name = m.get(f"file.{k}")
        if name is None or f"checksum.{k}" not in m:
            raise BundleError(f"manifest lacks file.{k}/checksum.{k}")
        fpath = directory / name
        if not fpath.is_file():
            raise BundleError(f"missing bundle file {fpath}")
        data = fpath.read_bytes()
        if f"{sgnm.fnv1a_64(data):016x}" != m[f"checksum.{k}"]:
            raise BundleError(f"checksum mismatch for {fpath}")
        try:
            mat = sgnm.decode(data)
        except sgnm.FormatError as exc:
            raise BundleError(f"{fpath}: {exc}") from None
        if mat.shape != (n, d):
            raise BundleError(f"{fpath}: shape {mat.shape} != manifest ({n}, {d})")
        mats.append(mat)

    fingerprint = int(m.get("graph_fingerprint", "0"), 16)
    if expected_fingerprint is not None and expected_fingerprint != fingerprint:
        warnings.warn(f"bundle graph fingerprint {fingerprint:016x} != expected "
                      f"{expected_fingerprint:016x}; the cache may be stale",
                      FingerprintMismatch, stacklevel=2)
    return FeatureBundle(mats[0], tuple(mats[1:]), tuple(specs), fingerprint)


def slice_rows(b: FeatureBundle, rows) -> FeatureBundle:
    """Row-gathered copy of every matrix, in bundle order."""
    rows = np.asarray(rows, dtype=np.int64).reshape(-1)
    if rows.size and (rows.min() < 0 or rows.max() >= b.num_nodes):
        raise IndexError(f"row index out of range for bundle with {b.num_nodes} rows")
    return FeatureBundle(b.base[rows], tuple(m[rows] for m in b.diffused), b.specs,
                         b.graph_fingerprint)
