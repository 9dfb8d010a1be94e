"""Independent reference implementations used as test oracles.

These deliberately avoid the package's numba kernels and index structures:
plain Python union-find, brute-force enumeration and direct heat-bath
probabilities from measure ratios.
"""

import itertools
from fractions import Fraction

import numpy as np
import pytest

from rcdynamics.stream import EventBlock


def ref_components(n_vertices, eu, ev, cfg):
    parent = list(range(n_vertices))

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    count = n_vertices
    for e, bit in enumerate(cfg):
        if bit:
            a, b = find(int(eu[e])), find(int(ev[e]))
            if a != b:
                parent[a] = b
                count -= 1
    return count


def ref_weight(g, cfg, p, q):
    k = int(np.sum(cfg))
    return p ** k * (1 - p) ** (g.n_edges - k) * q ** ref_components(g.n_vertices, g.eu, g.ev, cfg)


def ref_measure(g, p, q):
    """Measure indexed by bitmask state (bit ``e`` = edge ``e`` open)."""
    w = []
    for s in range(1 << g.n_edges):
        cfg = [(s >> e) & 1 for e in range(g.n_edges)]
        w.append(ref_weight(g, cfg, p, q))
    w = np.array(w)
    return w / w.sum()


def ref_cut_edge(g, cfg, e):
    on = list(cfg)
    off = list(cfg)
    on[e], off[e] = 1, 0
    return ref_components(g.n_vertices, g.eu, g.ev, on) != ref_components(g.n_vertices, g.eu, g.ev, off)


def ref_open_probability(g, cfg, e, p, q):
    """Conditional probability that ``e`` is open given the rest, from the
    ratio of measure weights."""
    on = list(cfg)
    off = list(cfg)
    on[e], off[e] = 1, 0
    a, b = ref_weight(g, on, p, q), ref_weight(g, off, p, q)
    return a / (a + b)


def ref_vertex_distances(g, sources):
    """Breadth-first search from a list of vertices, dict adjacency."""
    adj = {v: [] for v in range(g.n_vertices)}
    for a, b in zip(g.eu, g.ev):
        adj[int(a)].append(int(b))
        adj[int(b)].append(int(a))
    dist = {int(s): 0 for s in sources}
    frontier = list(dist)
    while frontier:
        nxt = []
        for v in frontier:
            for w in adj[v]:
                if w not in dist:
                    dist[w] = dist[v] + 1
                    nxt.append(w)
        frontier = nxt
    return np.array([dist.get(v, np.inf) for v in range(g.n_vertices)])


def exact_p_bar(p, q):
    p, q = Fraction(p), Fraction(q)
    p_star = p / (q * (1 - p) + p)
    return p_star / (1 - p + p_star)


class ListStream:
    """Minimal stream over a hand-written event list ``[(edge, time, mark)]``."""

    def __init__(self, n_edges, horizon, events):
        events = sorted(events, key=lambda r: r[1])
        self.n_edges = n_edges
        self.materialized = True
        self.horizon = float(horizon)
        self._edges = np.array([r[0] for r in events], dtype=np.int64)
        self._times = np.array([r[1] for r in events], dtype=np.float64)
        self._marks = np.array([r[2] for r in events], dtype=np.float64)

    def events(self, t1, t2):
        sel = (self._times > t1) & (self._times <= t2)
        return EventBlock(self._edges[sel], self._times[sel], self._marks[sel])

    def chunks(self, t1, t2):
        yield self.events(t1, t2)


def all_configs(n_edges):
    return [np.array(c, dtype=np.uint8) for c in itertools.product((0, 1), repeat=n_edges)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
