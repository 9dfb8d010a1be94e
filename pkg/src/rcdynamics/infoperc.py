"""Backward history diagrams on the slab ``E x [tau_1, tau_m]``.

For a seed edge ``e`` the history starts as ``W_m = {e}``. Going down through
window ``i = m-1, ..., 1`` every edge ``w`` of ``W_{i+1}`` is treated by its
events in ``(tau_i, tau_{i+1}]``:

* no event: ``w`` is carried down to ``W_i``;
* last mark ``< 1 - p + p*`` (oblivious): ``w`` is dropped;
* otherwise the closure (cluster plus edge boundary) of ``w`` in
  ``omega_i = env_{i-1} | env_i`` is added to both ``H(tau_{i+1/2})`` and
  ``W_i``.

``H(tau_{i+1/2})`` also contains all of ``W_{i+1}``. Two histories merge when
they share an edge at the same level; vertex contact does not merge them.
A cluster is red if its history reaches ``tau_1``, otherwise blue when it is a
single edge and green when larger.
"""

from dataclasses import dataclass, field

import numpy as np

from ._io import write_json
from .dynamics import evolve
from .lattice import ClusterIndex, inner_boundary
from .percolations import NO_UPDATE, NON_OBLIVIOUS, OBLIVIOUS, WindowCache, summarize_block
from .stats import log_linear_fit, wilson_interval
from .stream import generate, replica_seeds, window_block

RED, BLUE, GREEN = "red", "blue", "green"


class _Level:
    """Per-window lookup tables in plain Python containers for the set walk."""

    def __init__(self, cache, i):
        self.cls = cache.events(i).last_class.tolist()
        self.index = cache.clusters(i)
        self.root = self.index.root_of_edge.tolist()
        self._closure = {}

    def closure(self, w):
        r = self.root[w]
        if r < 0:
            return frozenset()
        c = self._closure.get(r)
        if c is None:
            c = frozenset(self.index.closure_edges(r).tolist())
            self._closure[r] = c
        return c


def _step_down(level, upper):
    """``(W_i, H(tau_{i+1/2}))`` from ``W_{i+1}``."""
    carried = set()
    grown = set()
    for w in upper:
        c = level.cls[w]
        if c == NO_UPDATE:
            carried.add(w)
        elif c == NON_OBLIVIOUS:
            grown |= level.closure(w)
    lower = frozenset(carried | grown)
    half = frozenset(set(upper) | grown)
    return lower, half


@dataclass
class HistoryDiagram:
    """Histories of every seed edge.

    ``levels[e][j]`` is ``W_j`` of seed ``e`` for ``j = 1..m`` (index 0 is
    unused) and ``half[e][i]`` is ``H_e(tau_{i+1/2})`` for ``i = 1..m-1``.
    """

    m: int
    n_edges: int
    seeds: list
    levels: dict
    half: dict
    cache: WindowCache = field(repr=False, default=None)

    def level(self, j, seeds=None):
        mask = np.zeros(self.n_edges, dtype=bool)
        for e in self.seeds if seeds is None else seeds:
            s = self.levels[e][j]
            if s:
                mask[list(s)] = True
        return mask

    def half_level(self, i, seeds=None):
        mask = np.zeros(self.n_edges, dtype=bool)
        for e in self.seeds if seeds is None else seeds:
            s = self.half[e][i]
            if s:
                mask[list(s)] = True
        return mask

    def is_red(self, e):
        return bool(self.levels[e][1])


def build_history(g, seeds, stream, params, m, cache=None):
    """History diagram of the given seed edges (iterable of ids or a mask)."""
    if m < 2:
        raise ValueError("m must be >= 2")
    if stream.horizon + 1e-9 < params.tau(m):
        raise ValueError("stream horizon is shorter than tau_m")
    seeds = np.asarray(seeds)
    seeds = np.flatnonzero(seeds).tolist() if seeds.dtype == bool else [int(e) for e in seeds.ravel()]
    cache = cache or WindowCache(g, stream, params)
    views = {i: _Level(cache, i) for i in range(1, m)}
    levels = {}
    half = {}
    for e in seeds:
        lv = [frozenset()] * (m + 1)
        hf = [frozenset()] * m
        lv[m] = frozenset([e])
        for i in range(m - 1, 0, -1):
            if not lv[i + 1]:
                break
            lv[i], hf[i] = _step_down(views[i], lv[i + 1])
        levels[e] = lv
        half[e] = hf
    return HistoryDiagram(m, g.n_edges, seeds, levels, half, cache)


# -- clusters -------------------------------------------------------------------

class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


@dataclass
class ClusterPartition:
    clusters: list          # sorted edge-id arrays
    colors: list            # color per cluster
    label: np.ndarray       # cluster index per edge

    def mask(self, color):
        out = np.zeros(self.label.size, dtype=bool)
        for c, col in zip(self.clusters, self.colors):
            if col == color:
                out[c] = True
        return out

    def counts(self):
        return {col: int(self.mask(col).sum()) for col in (RED, BLUE, GREEN)}


def assemble_clusters(diagram):
    """Partition the seeds into information percolation clusters and colour
    them. The diagram must hold every edge as a seed."""
    if sorted(diagram.seeds) != list(range(diagram.n_edges)):
        raise ValueError("cluster assembly needs the diagram of all edges")
    uf = _UnionFind(diagram.seeds)
    m = diagram.m
    for key in [("half", i) for i in range(1, m)] + [("level", j) for j in range(1, m + 1)]:
        owner = {}
        for e in diagram.seeds:
            sets = diagram.half[e] if key[0] == "half" else diagram.levels[e]
            for w in sets[key[1]]:
                o = owner.setdefault(w, e)
                if o != e:
                    uf.union(o, e)
    groups = {}
    for e in diagram.seeds:
        groups.setdefault(uf.find(e), []).append(e)
    clusters, colors = [], []
    label = np.empty(diagram.n_edges, dtype=np.int64)
    for k, members in enumerate(sorted(groups.values(), key=min)):
        arr = np.array(sorted(members), dtype=np.int64)
        red = any(diagram.levels[e][1] for e in members)
        colors.append(RED if red else (BLUE if arr.size == 1 else GREEN))
        clusters.append(arr)
        label[arr] = k
    return ClusterPartition(clusters, colors, label)


# -- window classification and deterministic checks -----------------------------

@dataclass
class WindowClassification:
    """Masks indexed by level ``j``: ``W``, ``NU``/``Ob``/``NOb`` for
    ``j = 1..m`` (using window ``j-1``) and ``C``/``N`` for ``j = 1..m-1``."""

    m: int
    W: dict
    NU: dict
    Ob: dict
    NOb: dict
    C: dict
    N: dict


def classify_windows(diagram, seeds=None):
    cache = diagram.cache
    m = diagram.m
    W = {j: diagram.level(j, seeds) for j in range(1, m + 1)}
    NU, Ob, NOb, C, N = {}, {}, {}, {}, {}
    for j in range(1, m + 1):
        cls = cache.events(j - 1).last_class
        NU[j] = W[j] & (cls == NO_UPDATE)
        Ob[j] = W[j] & (cls == OBLIVIOUS)
        NOb[j] = W[j] & (cls == NON_OBLIVIOUS)
    for j in range(1, m):
        C[j] = cache.clusters(j).closure_of(NOb[j + 1])
        N[j] = W[j] & ~C[j]
    return WindowClassification(m, W, NU, Ob, NOb, C, N)


def _C(wc, j):
    return wc.C[j] if j in wc.C else np.zeros_like(wc.W[1])


def xi_theta(cache, wc, i):
    """The two comparison environments around window ``i`` (``1 <= i <= m-2``):
    ``xi`` is ``env_i`` on ``C_{i+2}`` and ``env_i | env_{i+1}`` off it;
    ``theta`` is ``omega_i`` on ``C_{i+2}`` and ``omega_i | env_{i+1}`` off
    it. ``C_m`` is taken to be empty."""
    c = _C(wc, i + 2)
    env_i, env_next = cache.env(i), cache.env(i + 1)
    xi = np.where(c, env_i, env_i | env_next).astype(np.uint8)
    omega = cache.omega(i)
    theta = np.where(c, omega, omega | env_next).astype(np.uint8)
    return xi, theta


def sandwich_Z(diagram, i, seeds=None, wc=None):
    """Whether ``W_i`` lies inside the union of closures, in ``theta_i``, of
    the edges of ``W_{i+2}``."""
    if not 1 <= i <= diagram.m - 2:
        raise ValueError("i must lie in 1..m-2")
    wc = wc or classify_windows(diagram, seeds)
    _, theta = xi_theta(diagram.cache, wc, i)
    z = ClusterIndex(diagram.cache.g, theta).closure_of(wc.W[i + 2])
    return not np.any(wc.W[i] & ~z)


def check_diagram(diagram, seeds=None):
    """Violation counts of every deterministic property for seed set
    ``seeds`` (all seeds by default).

    ``consistent``: half levels are the union of the neighbouring integer levels.
    ``partition``: every live cell is exactly one of no-update, oblivious, non-oblivious.
    ``alive_split``: live cells are the grown cells plus the carried cells.
    ``class_membership``: non-oblivious cells lie in the grown set; carried cells had no update.
    ``closed_boundary``: grown sets have no open edge of the window percolation on their inner boundary.
    ``reach_below`` / ``reach_via_xi``: live cells connect to the level below through open clusters.
    ``sandwich_Z`` / ``xi_le_theta``: the two-window domination of live cells.
    """
    cache = diagram.cache
    g = cache.g
    m = diagram.m
    wc = classify_windows(diagram, seeds)
    out = dict.fromkeys(["consistent", "partition", "alive_split", "class_membership", "closed_boundary", "reach_below", "reach_via_xi",
                         "sandwich_Z", "xi_le_theta"], 0)
    for e in diagram.seeds if seeds is None else seeds:
        lv, hf = diagram.levels[e], diagram.half[e]
        for i in range(1, m):
            if hf[i] != (lv[i + 1] | lv[i]):
                out["consistent"] += 1
    for j in range(1, m + 1):
        parts = wc.NU[j].astype(int) + wc.Ob[j] + wc.NOb[j]
        out["partition"] += int(np.count_nonzero(parts != wc.W[j]))
    for j in range(1, m):
        omega = cache.omega(j)
        out["alive_split"] += int(np.count_nonzero(wc.W[j] != (wc.C[j] | wc.NU[j + 1])))
        out["class_membership"] += int(np.count_nonzero(wc.NOb[j + 1] & ~wc.C[j]))
        out["class_membership"] += int(np.count_nonzero(wc.N[j] & ~wc.NU[j + 1]))
        out["closed_boundary"] += int(np.count_nonzero(inner_boundary(g, wc.C[j]) & (omega == 1)))
        reach = cache.clusters(j).closure_of(wc.W[j + 1])
        out["reach_below"] += int(np.count_nonzero(wc.W[j] & ~reach))
    for i in range(1, m - 1):
        xi, theta = xi_theta(cache, wc, i)
        out["xi_le_theta"] += int(np.count_nonzero(xi > theta))
        reach_xi = ClusterIndex(g, xi).closure_of(wc.W[i + 2])
        out["reach_via_xi"] += int(np.count_nonzero(wc.W[i + 1] & ~wc.W[i + 2] & ~reach_xi))
        z = ClusterIndex(g, theta).closure_of(wc.W[i + 2])
        out["sandwich_Z"] += int(np.count_nonzero(wc.W[i] & ~z))
    return out


# -- reconstruction ---------------------------------------------------------------

def reconstruction_check(g, partition, stream, params, m, x0_a, x0_b):
    """Evolve two starts at ``tau_1`` with the same events up to ``tau_m``.

    Returns ``(agree_off_red, red_disagreement)``: whether the finals agree on
    every blue and green cluster, and whether they differ somewhere on a red
    cluster.
    """
    t1, tm = params.tau(1), params.tau(m)
    xa = evolve(g, x0_a, params, stream, t1, tm)
    xb = evolve(g, x0_b, params, stream, t1, tm)
    diff = xa != xb
    red = partition.mask(RED)
    return (not np.any(diff & ~red)), bool(np.any(diff & red))


# -- branching statistics -----------------------------------------------------------

def branching_stats(diagram, seeds=None):
    """``(a, sigma)`` with ``a[j] = |W_j|`` for ``j = 1..m`` (index 0 unused)
    and ``sigma`` the largest ``j < m`` with ``a[j] == 1`` (0 if none)."""
    m = diagram.m
    a = np.zeros(m + 1, dtype=np.int64)
    for j in range(1, m + 1):
        a[j] = int(diagram.level(j, seeds).sum())
    ones = [j for j in range(1, m) if a[j] == 1]
    return a, (max(ones) if ones else 0)


def mean_closure_size(g, density, samples, seed=0, edge=0):
    """Monte Carlo mean of ``|closure(edge)|`` under ``Perc(density)``."""
    rng = np.random.default_rng(seed)
    total = 0
    for _ in range(samples):
        x = (rng.random(g.n_edges) < density).astype(np.uint8)
        idx = ClusterIndex(g, x)
        r = idx.root(edge)
        if r >= 0:
            total += idx.closure_edges(r).size
    return total / samples


# -- red probability ------------------------------------------------------------------

@dataclass
class RedCurve:
    m: np.ndarray
    tau_m: np.ndarray
    probability: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    method: str
    slope: float = float("nan")
    intercept: float = float("nan")
    r2: float = float("nan")

    def rows(self):
        return [{"m": int(a), "tau_m": float(b), "probability": float(c), "ci_lo": float(d), "ci_hi": float(e)}
                for a, b, c, d, e in zip(self.m, self.tau_m, self.probability, self.ci_lo, self.ci_hi)]


def _fit_curve(curve):
    try:
        fit = log_linear_fit(curve.tau_m, curve.probability)
        curve.slope, curve.intercept, curve.r2 = fit.slope, fit.intercept, fit.r2
    except ValueError:
        pass
    return curve


def red_probability_direct(g, params, seed_edge, m_list, replicas, seed=0):
    """Plain Monte Carlo frequency of ``H_e(tau_1) != {}`` with 3-sigma
    Wilson intervals. Each replica reuses one stream for every ``m``."""
    m_list = np.asarray(sorted(m_list), dtype=np.int64)
    hits = np.zeros(m_list.size, dtype=np.int64)
    for s in replica_seeds(seed, replicas):
        stream = generate(g, params.tau(int(m_list[-1])), s)
        cache = WindowCache(g, stream, params)
        for k, m in enumerate(m_list):
            d = build_history(g, [seed_edge], stream, params, int(m), cache)
            hits[k] += d.is_red(seed_edge)
    prob = hits / replicas
    ci = np.array([wilson_interval(h, replicas) for h in hits])
    return _fit_curve(RedCurve(m_list, params.tau(m_list), prob, ci[:, 0], ci[:, 1], "direct"))


def red_probability_splitting(g, params, seed_edge, m_list, particles, seed=0):
    """Fixed-effort splitting estimate of ``P(H_e(tau_1) != {})``.

    Windows are independent, so the history of one seed is a Markov chain
    going down in time whose state is ``W_j`` together with the events of
    window ``j-1``. ``particles`` copies are stepped together; after each step
    the survivors are resampled back to ``particles`` copies and the survival
    fractions multiply to the survival probability. Depth ``m`` needs ``m-1``
    steps, so one pass yields every ``m``. The interval uses the delta-method
    variance ``sum (1 - f_k) / (N f_k)`` of the log estimate.
    """
    m_list = np.asarray(sorted(m_list), dtype=np.int64)
    steps = int(m_list[-1]) - 1
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    n_edges = g.n_edges

    def fresh_window(k, j):
        s = int(np.random.SeedSequence([seed, k, j]).generate_state(1, np.uint64)[0] >> np.uint64(1))
        return summarize_block(n_edges, window_block(n_edges, params.delta, s), params)

    states = [(frozenset([seed_edge]), fresh_window(0, j)) for j in range(particles)]
    log_p = np.zeros(steps + 1)
    var = np.zeros(steps + 1)
    alive = True
    for k in range(1, steps + 1):
        survivors = []
        if alive:
            for j, (w, above) in enumerate(states):
                below = fresh_window(k, j)
                omega = above.env | below.env
                idx = ClusterIndex(g, omega)
                carried = [e for e in w if above.last_class[e] == NO_UPDATE]
                nob = [e for e in w if above.last_class[e] == NON_OBLIVIOUS]
                grown = set()
                if nob:
                    grown = set(np.flatnonzero(idx.closure_of(np.array(nob, dtype=np.int64))).tolist())
                lower = frozenset(set(carried) | grown)
                if lower:
                    survivors.append((lower, below))
        f = len(survivors) / particles
        if f == 0:
            alive = False
            # zero survivors: rule-of-three upper bound on the step factor
            hi_dead = log_p[k - 1] + 3.0 * np.sqrt(var[k - 1]) + np.log(min(1.0, 3.0 / particles))
            log_p[k:] = -np.inf
            var[k:] = 0.0
            break
        log_p[k] = log_p[k - 1] + np.log(f)
        var[k] = var[k - 1] + (1 - f) / (particles * f)
        pick = rng.integers(0, len(survivors), size=particles)
        states = [survivors[t] for t in pick]
    idx = m_list - 1
    prob = np.exp(log_p[idx])
    half = 3.0 * np.sqrt(var[idx])
    lo = np.exp(log_p[idx] - half)
    hi = np.minimum(1.0, np.exp(log_p[idx] + half))
    if not alive:
        dead = ~np.isfinite(log_p[idx])
        hi[dead] = min(1.0, np.exp(hi_dead))
    return _fit_curve(RedCurve(m_list, params.tau(m_list), prob, lo, hi, "splitting"))


def red_probability_curve(g, params, seed_edge, m_list, replicas, seed=0, method="splitting"):
    """Probability that the history of ``seed_edge`` reaches ``tau_1`` as a
    function of ``tau_m``, with a log-linear fit. ``replicas`` is the particle
    count for ``method='splitting'`` and the run count for ``'direct'``."""
    if method == "splitting":
        return red_probability_splitting(g, params, seed_edge, m_list, replicas, seed)
    if method == "direct":
        return red_probability_direct(g, params, seed_edge, m_list, replicas, seed)
    raise ValueError("method must be 'splitting' or 'direct'")


# -- serialization ------------------------------------------------------------------

def diagram_record(diagram, partition=None, seeds=None):
    """JSON-ready record: per-level sorted edge lists of ``W``, its three-way
    split, ``C`` and ``N``, plus the cluster list with colours."""
    wc = classify_windows(diagram, seeds)
    as_list = lambda mask: np.flatnonzero(mask).tolist()
    rec = {"m": diagram.m, "levels": []}
    for j in range(1, diagram.m + 1):
        row = {"j": j, "W": as_list(wc.W[j]), "NU": as_list(wc.NU[j]), "Ob": as_list(wc.Ob[j]),
               "NOb": as_list(wc.NOb[j])}
        if j < diagram.m:
            row["C"] = as_list(wc.C[j])
            row["N"] = as_list(wc.N[j])
        rec["levels"].append(row)
    if partition is not None:
        rec["clusters"] = [{"edges": c.tolist(), "color": col}
                           for c, col in zip(partition.clusters, partition.colors)]
    return rec


def dump_diagram(path, diagram, partition=None, seeds=None):
    write_json(path, diagram_record(diagram, partition, seeds))
