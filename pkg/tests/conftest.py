import itertools

import numpy as np
import pytest

from signgnn.graph import Graph


def path_graph(n):
    return Graph.from_edges(np.arange(n - 1), np.arange(1, n), num_nodes=n)


def complete_graph(n):
    src, dst = zip(*itertools.combinations(range(n), 2))
    return Graph.from_edges(src, dst, num_nodes=n)


def star_graph(leaves):
    return Graph.from_edges(np.zeros(leaves, int), np.arange(1, leaves + 1), num_nodes=leaves + 1)


def random_graph(n, p, seed, weighted=False):
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p
    w = rng.uniform(0.5, 2.0, keep.sum()) if weighted else None
    return Graph.from_edges(iu[0][keep], iu[1][keep], w, num_nodes=n)


def dense_sym_norm(w):
    """Oracle: D^-1/2 W D^-1/2 with zero-degree rows left at zero."""
    d = w.sum(axis=1)
    s = np.where(d > 0, 1 / np.sqrt(np.where(d > 0, d, 1)), 0.0)
    return s[:, None] * w * s[None, :]


def dense_gcn(w):
    wt = np.eye(len(w)) + w
    s = 1 / np.sqrt(wt.sum(axis=1))
    return s[:, None] * wt * s[None, :]


def brute_force_triangles(w):
    """O(n^3) triple enumeration over the simple graph (loops ignored)."""
    n = len(w)
    adj = (w != 0) & ~np.eye(n, dtype=bool)
    counts = np.zeros((n, n))
    for i, j, k in itertools.combinations(range(n), 3):
        if adj[i, j] and adj[j, k] and adj[i, k]:
            for a, b in ((i, j), (j, k), (i, k)):
                counts[a, b] += 1
                counts[b, a] += 1
    return counts


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ------------------------------------------------------

_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    results = item.config.stash[_CRITERIA]
    num, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    passed = call.excinfo is None
    prev = results.get(num)
    if prev is not None:
        passed = passed and prev[1]
        detail = "; ".join(d for d in (prev[2], detail) if d)
    results[num] = (title, passed, detail)


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_CRITERIA, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        title, passed, detail = results[num]
        line = f"{'PASS' if passed else 'FAIL'}  criterion {num:2d}: {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
