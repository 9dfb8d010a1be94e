"""Graphs, periodic lattices and connectivity primitives.

Configurations and edge sets are plain ``numpy`` arrays with one entry per edge
(``uint8`` for configurations, ``bool`` for sets); the graph they belong to is
always passed alongside. The partial order on configurations is the
coordinatewise one, so ``np.all(x <= y)`` is ``x <= y``.
"""

from functools import cached_property
from itertools import product

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from . import _kernels as K


class Graph:
    """Finite multigraph given by its edge list.

    Edge ``e`` joins ``eu[e]`` and ``ev[e]``. Used directly for the small
    free-boundary graphs of the exact engine and as the base of
    :class:`TorusGeometry`.
    """

    def __init__(self, n_vertices, eu, ev, name="graph"):
        self.n_vertices = int(n_vertices)
        self.eu = np.ascontiguousarray(eu, dtype=np.int64)
        self.ev = np.ascontiguousarray(ev, dtype=np.int64)
        if self.eu.shape != self.ev.shape or self.eu.ndim != 1:
            raise ValueError("endpoint arrays must be 1-d and of equal length")
        if self.eu.size and (min(self.eu.min(), self.ev.min()) < 0
                             or max(self.eu.max(), self.ev.max()) >= self.n_vertices):
            raise ValueError("edge endpoint out of range")
        if np.any(self.eu == self.ev):
            raise ValueError("self-loops are not supported")
        self.name = name
        self.n_edges = int(self.eu.size)
        deg = np.bincount(np.concatenate([self.eu, self.ev]), minlength=self.n_vertices)
        self.inc_ptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
        np.cumsum(deg, out=self.inc_ptr[1:])
        order = np.argsort(np.concatenate([self.eu, self.ev]), kind="stable")
        self.inc_edge = np.concatenate([np.arange(self.n_edges)] * 2)[order].astype(np.int64)

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, V={self.n_vertices}, E={self.n_edges})"

    # -- constructors for micro-graphs -------------------------------------
    @classmethod
    def from_edges(cls, n_vertices, edges, name="graph"):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        return cls(n_vertices, edges[:, 0], edges[:, 1], name=name)

    @classmethod
    def single_edge(cls):
        return cls.from_edges(2, [(0, 1)], name="single-edge")

    @classmethod
    def path(cls, n_edges):
        return cls.from_edges(n_edges + 1, [(i, i + 1) for i in range(n_edges)], name=f"path-{n_edges}")

    @classmethod
    def cycle(cls, n_edges):
        if n_edges < 3:
            raise ValueError("a simple cycle needs at least 3 edges")
        return cls.from_edges(n_edges, [(i, (i + 1) % n_edges) for i in range(n_edges)],
                              name=f"cycle-{n_edges}")

    @classmethod
    def grid(cls, rows, cols):
        """Free-boundary ``rows x cols`` vertex grid (2x2 is the 4-cycle)."""
        idx = lambda r, c: r * cols + c
        edges = []
        for r in range(rows):
            for c in range(cols):
                if c + 1 < cols:
                    edges.append((idx(r, c), idx(r, c + 1)))
                if r + 1 < rows:
                    edges.append((idx(r, c), idx(r + 1, c)))
        return cls.from_edges(rows * cols, edges, name=f"grid-{rows}x{cols}")

    def disjoint_copies(self, k):
        """``k`` disjoint copies; copy ``j`` owns edges ``j*E .. (j+1)*E - 1``.

        FK-dynamics on a disjoint union runs independent chains on the copies,
        which turns a replica ensemble into one simulation.
        """
        shift = (np.arange(k, dtype=np.int64) * self.n_vertices)[:, None]
        eu = (self.eu[None, :] + shift).ravel()
        ev = (self.ev[None, :] + shift).ravel()
        return Graph(self.n_vertices * k, eu, ev, name=f"{self.name}x{k}")

    # -- kernel plumbing -----------------------------------------------------
    @property
    def arrays(self):
        return self.eu, self.ev, self.inc_ptr, self.inc_edge

    def scratch(self):
        """Fresh per-call search buffers ``(seen, queue_a, queue_b, stamp)``."""
        nv = max(self.n_vertices, 1)
        return (np.zeros(nv, dtype=np.int64), np.empty(nv, dtype=np.int64),
                np.empty(nv, dtype=np.int64), np.zeros(1, dtype=np.int64))

    @cached_property
    def adjacency(self):
        data = np.ones(2 * self.n_edges, dtype=np.int8)
        rows = np.concatenate([self.eu, self.ev])
        cols = np.concatenate([self.ev, self.eu])
        m = sp.csr_matrix((data, (rows, cols)), shape=(self.n_vertices, self.n_vertices))
        m.data[:] = 1
        return m

    def empty(self):
        return np.zeros(self.n_edges, dtype=np.uint8)

    def full(self):
        return np.ones(self.n_edges, dtype=np.uint8)

    def edge_set(self, edges=()):
        s = np.zeros(self.n_edges, dtype=bool)
        s[np.asarray(list(edges), dtype=np.int64)] = True
        return s

    def incident_edges(self, vertex):
        return self.inc_edge[self.inc_ptr[vertex]:self.inc_ptr[vertex + 1]]

    def adjacent_edges(self, e):
        """Edges other than ``e`` sharing an endpoint with ``e``."""
        nb = np.union1d(self.incident_edges(self.eu[e]), self.incident_edges(self.ev[e]))
        return nb[nb != e]

    def vertex_distances(self, sources):
        """Hop distance from the nearest source vertex to every vertex."""
        sources = np.unique(np.asarray(sources, dtype=np.int64))
        d = dijkstra(self.adjacency, unweighted=True, indices=sources, min_only=True)
        return d


class TorusGeometry(Graph):
    """The torus ``Z_n^d``.

    Vertex ``x = (x_0, ..., x_{d-1})`` has index ``sum x_k n^k``; edge
    ``vertex * d + axis`` joins ``x`` and ``x + e_axis`` (mod n).
    """

    def __init__(self, d, n):
        if d < 1:
            raise ValueError("dimension must be >= 1")
        if n < 3:
            raise ValueError("side length must be >= 3 (Z_2 creates parallel edges)")
        self.d = int(d)
        self.n = int(n)
        nv = self.n ** self.d
        coords = self._coords(np.arange(nv))
        eu = np.repeat(np.arange(nv), self.d)
        axes = np.tile(np.arange(self.d), nv)
        shifted = coords[eu].copy()
        shifted[np.arange(eu.size), axes] = (shifted[np.arange(eu.size), axes] + 1) % self.n
        ev = self.vertex_index(shifted)
        super().__init__(nv, eu, ev, name=f"Z_{n}^{d}")
        self.vertex_coords = coords
        self.edge_axis = axes.astype(np.int64)

    def _coords(self, v):
        v = np.asarray(v, dtype=np.int64)
        return np.stack([(v // self.n ** k) % self.n for k in range(self.d)], axis=-1)

    def vertex_index(self, coords):
        coords = np.asarray(coords, dtype=np.int64) % self.n
        weights = self.n ** np.arange(self.d, dtype=np.int64)
        return coords @ weights

    def edge_id(self, vertex, axis):
        if not 0 <= axis < self.d:
            raise ValueError("axis out of range")
        if np.ndim(vertex) > 0:
            vertex = self.vertex_index(vertex)
        return int(vertex) * self.d + int(axis)

    def edge_vertex_axis(self, e):
        return divmod(int(e), self.d)

    def torus_l1(self, x, y):
        diff = np.abs(self._coords(x) - self._coords(y))
        return np.minimum(diff, self.n - diff).sum(axis=-1)

    def translate(self, cfg, shift):
        """Configuration translated by the vertex vector ``shift``."""
        src = self.vertex_index(self.vertex_coords - np.asarray(shift))
        out = np.empty_like(cfg)
        ids = np.arange(self.n_edges)
        v, ax = ids // self.d, ids % self.d
        out[ids] = cfg[src[v] * self.d + ax]
        return out


def torus(d, n):
    return TorusGeometry(d, n)


# -- connectivity -------------------------------------------------------------

def component_count(g, cfg):
    """Number of connected components of ``(V, {e : cfg[e] = 1})``, isolated
    vertices included."""
    cfg = _as_cfg(g, cfg)
    return int(K.component_labels(cfg, g.eu, g.ev, g.n_vertices)[1])


def is_cut_edge(g, cfg, e):
    """Whether ``c(S - {e}) != c(S + {e})``; the current bit of ``e`` is
    irrelevant."""
    cfg = _as_cfg(g, cfg)
    seen, qa, qb, stamp = g.scratch()
    return not K.endpoints_connected(cfg, int(e), g.eu, g.ev, g.inc_ptr, g.inc_edge, seen, qa, qb, stamp)


def vertex_labels(g, cfg):
    labels, _ = K.component_labels(_as_cfg(g, cfg), g.eu, g.ev, g.n_vertices)
    return labels


class ClusterIndex:
    """Open clusters of one configuration and their closures.

    The closure of an open cluster (cluster plus edge boundary) is exactly the
    set of edges touching one of the cluster's vertices, which is how it is
    computed here.
    """

    def __init__(self, g, cfg):
        self.g = g
        self.cfg = _as_cfg(g, cfg)
        self.labels = vertex_labels(g, self.cfg)
        root = self.labels[g.eu]
        self.root_of_edge = np.where(self.cfg == 1, root, -1)
        self._cluster = {}
        self._closure = {}

    def root(self, e):
        return int(self.root_of_edge[e])

    def cluster_edges(self, root):
        if root not in self._cluster:
            self._cluster[root] = np.flatnonzero(self.root_of_edge == root)
        return self._cluster[root]

    def closure_edges(self, root):
        if root not in self._closure:
            lab = self.labels
            self._closure[root] = np.flatnonzero((lab[self.g.eu] == root) | (lab[self.g.ev] == root))
        return self._closure[root]

    def closure_of(self, edges):
        """Union of closures over the open members of ``edges`` (bool mask)."""
        out = np.zeros(self.g.n_edges, dtype=bool)
        roots = np.unique(self.root_of_edge[np.asarray(edges)])
        roots = roots[roots >= 0]
        if roots.size == 0:
            return out
        lab = self.labels
        out |= np.isin(lab[self.g.eu], roots) | np.isin(lab[self.g.ev], roots)
        return out


def open_cluster(g, cfg, e):
    """``(cluster, closure)`` of edge ``e`` as boolean masks; both empty when
    ``e`` is closed."""
    idx = ClusterIndex(g, cfg)
    cluster = np.zeros(g.n_edges, dtype=bool)
    closure = np.zeros(g.n_edges, dtype=bool)
    r = idx.root(e)
    if r >= 0:
        cluster[idx.cluster_edges(r)] = True
        closure[idx.closure_edges(r)] = True
    return cluster, closure


def closure_union(g, cfg, seeds):
    """Union of closures of the clusters of every edge in ``seeds``."""
    return ClusterIndex(g, cfg).closure_of(_as_mask(g, seeds))


def inner_boundary(g, s):
    """Edges of ``s`` adjacent to at least one edge outside ``s``."""
    s = _as_mask(g, s)
    outside = ~s
    touches = np.zeros(g.n_vertices, dtype=bool)
    touches[g.eu[outside]] = True
    touches[g.ev[outside]] = True
    return s & (touches[g.eu] | touches[g.ev])


# -- distances and boxes ------------------------------------------------------

def edge_distance(g, a, b):
    """Minimum graph distance between an endpoint of ``a`` and one of ``b``.

    On a torus this is the torus L1 distance; edges sharing a vertex are at
    distance 0.
    """
    a = _as_mask(g, a)
    b = _as_mask(g, b)
    if not a.any() or not b.any():
        raise ValueError("empty set")
    dist = g.vertex_distances(np.concatenate([g.eu[a], g.ev[a]]))
    return int(min(dist[g.eu[b]].min(), dist[g.ev[b]].min()))


def enlarge(g, a, radius):
    """``{e : edge_distance({e}, a) <= radius}``."""
    a = _as_mask(g, a)
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if not a.any():
        return a.copy()
    dist = g.vertex_distances(np.concatenate([g.eu[a], g.ev[a]]))
    return np.minimum(dist[g.eu], dist[g.ev]) <= radius


def vertex_box(geom, corner, side):
    offsets = np.array(list(product(range(side), repeat=geom.d)), dtype=np.int64)
    return geom.vertex_index(np.asarray(corner, dtype=np.int64) + offsets)


def edge_box(geom, corner, side):
    """Edges ``(u, u + e_j)`` with ``u`` in the vertex box ``corner + [0, side)^d``
    (mod n). Holds exactly ``d * side^d`` edges when ``side <= n``."""
    if side > geom.n:
        raise ValueError("box side exceeds torus side")
    verts = vertex_box(geom, corner, side)
    mask = np.zeros(geom.n_edges, dtype=bool)
    ids = (verts[:, None] * geom.d + np.arange(geom.d)[None, :]).ravel()
    mask[ids] = True
    return mask


def box_corners(geom, side):
    if geom.n % side:
        raise ValueError("box side must divide the torus side")
    ticks = range(0, geom.n, side)
    return [np.array(c, dtype=np.int64) for c in product(ticks, repeat=geom.d)]


def box_partition(geom, side):
    """``[(corner, edge mask)]`` for the grid of edge boxes of the given side;
    the masks partition the edge set."""
    return [(c, edge_box(geom, c, side)) for c in box_corners(geom, side)]


def _as_cfg(g, cfg):
    cfg = np.ascontiguousarray(cfg, dtype=np.uint8)
    if cfg.shape != (g.n_edges,):
        raise ValueError(f"configuration has shape {cfg.shape}, expected ({g.n_edges},)")
    return cfg


def _as_mask(g, s):
    s = np.asarray(s)
    if s.dtype != bool:
        if s.shape == (g.n_edges,) and s.dtype == np.uint8:
            return s.astype(bool)
        return g.edge_set(s.ravel())
    if s.shape != (g.n_edges,):
        raise ValueError("edge set does not match geometry")
    return s
