"""Compiled inner loops.

Everything here works on flat arrays: a graph is ``(eu, ev, inc_ptr, inc_edge)``
(edge endpoints plus a CSR vertex -> incident-edge table) and a configuration is
a ``uint8`` array with one entry per edge. Event streams are passed as parallel
``edges`` / ``marks`` arrays already sorted by time.

Heat-bath thresholds are ``a = 1 - p`` and ``b = 1 - p + p*``:
``U < a`` closes, ``a <= U < b`` opens, ``U >= b`` consults the cut-edge test.
"""

import numpy as np
from numba import njit

_CACHE = True


@njit(cache=_CACHE, nogil=True)
def endpoints_connected(cfg, e, eu, ev, inc_ptr, inc_edge, seen, queue_a, queue_b, stamp):
    """True iff the endpoints of ``e`` are joined by an open path avoiding ``e``.

    Bidirectional search that always grows the side with fewer discovered
    vertices, so a bridge costs about twice the smaller side. ``seen`` holds
    ``2 * stamp + side`` marks; ``stamp[0]`` is bumped on every call so the
    scratch array never needs clearing.
    """
    u = eu[e]
    v = ev[e]
    if u == v:
        return True
    stamp[0] += 1
    s = stamp[0]
    ma = 2 * s
    mb = 2 * s + 1
    seen[u] = ma
    seen[v] = mb
    queue_a[0] = u
    queue_b[0] = v
    ha = 0
    ta = 1
    hb = 0
    tb = 1
    while ha < ta and hb < tb:
        if ta <= tb:
            x = queue_a[ha]
            ha += 1
            for k in range(inc_ptr[x], inc_ptr[x + 1]):
                f = inc_edge[k]
                if f == e or cfg[f] == 0:
                    continue
                y = eu[f] if ev[f] == x else ev[f]
                if seen[y] == mb:
                    return True
                if seen[y] != ma:
                    seen[y] = ma
                    queue_a[ta] = y
                    ta += 1
        else:
            x = queue_b[hb]
            hb += 1
            for k in range(inc_ptr[x], inc_ptr[x + 1]):
                f = inc_edge[k]
                if f == e or cfg[f] == 0:
                    continue
                y = eu[f] if ev[f] == x else ev[f]
                if seen[y] == ma:
                    return True
                if seen[y] != mb:
                    seen[y] = mb
                    queue_b[tb] = y
                    tb += 1
    return False


@njit(cache=_CACHE, nogil=True)
def heat_bath_value(cfg, e, u, a, b, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp):
    if u < a:
        return 0
    if u < b:
        return 1
    if endpoints_connected(cfg, e, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp):
        return 1
    return 0


@njit(cache=_CACHE, nogil=True)
def apply_fk(cfg, edges, marks, active, a, b, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp):
    """Apply events in order, skipping edges with ``active[e] == 0``."""
    for k in range(edges.shape[0]):
        e = edges[k]
        if active[e] == 0:
            continue
        cfg[e] = heat_bath_value(cfg, e, marks[k], a, b, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp)


@njit(cache=_CACHE, nogil=True)
def apply_fk_log(cfg, edges, marks, active, a, b, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp, out):
    """Like ``apply_fk`` but stores the post-update bit of event k in ``out[k]``
    (-1 for skipped events)."""
    for k in range(edges.shape[0]):
        e = edges[k]
        if active[e] == 0:
            out[k] = -1
            continue
        val = heat_bath_value(cfg, e, marks[k], a, b, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp)
        cfg[e] = val
        out[k] = val


@njit(cache=_CACHE, nogil=True)
def apply_fk_record(cfg, edges, times, marks, a, b, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp,
                    sample_times, out_counts):
    """Evolve and record the open-edge count at each (sorted) sample time."""
    count = 0
    for i in range(cfg.shape[0]):
        count += cfg[i]
    j = 0
    ns = sample_times.shape[0]
    for k in range(edges.shape[0]):
        t = times[k]
        while j < ns and sample_times[j] < t:
            out_counts[j] = count
            j += 1
        e = edges[k]
        val = heat_bath_value(cfg, e, marks[k], a, b, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp)
        count += val - cfg[e]
        cfg[e] = val
    while j < ns:
        out_counts[j] = count
        j += 1


@njit(cache=_CACHE, nogil=True)
def apply_pair_ordered(lo, hi, edges, marks, a, b, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp):
    """Evolve two configurations with one event list; count order violations.

    Only the updated edge changes at an event, so checking it after every event
    (given the order held at the start) certifies ``lo <= hi`` at every event
    time.
    """
    viol = 0
    for k in range(edges.shape[0]):
        e = edges[k]
        u = marks[k]
        lo[e] = heat_bath_value(lo, e, u, a, b, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp)
        hi[e] = heat_bath_value(hi, e, u, a, b, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp)
        if lo[e] > hi[e]:
            viol += 1
    return viol


@njit(cache=_CACHE, nogil=True)
def apply_pair_until_equal(top, bot, edges, times, marks, a, b, eu, ev, inc_ptr, inc_edge,
                           seen, qa, qb, stamp, ndiff):
    """Run two coupled chains until they agree everywhere.

    ``ndiff`` is the current number of disagreeing edges. Returns
    ``(time_of_coalescence or -1.0, remaining ndiff)``.
    """
    if ndiff == 0:
        return 0.0, 0
    for k in range(edges.shape[0]):
        e = edges[k]
        u = marks[k]
        before = top[e] != bot[e]
        top[e] = heat_bath_value(top, e, u, a, b, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp)
        bot[e] = heat_bath_value(bot, e, u, a, b, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp)
        after = top[e] != bot[e]
        if before and not after:
            ndiff -= 1
        elif after and not before:
            ndiff += 1
        if ndiff == 0:
            return times[k], 0
    return -1.0, ndiff


@njit(cache=_CACHE, nogil=True)
def apply_pair_watch(top, bot, edges, marks, active, watch, a, b, eu, ev, inc_ptr, inc_edge,
                     seen, qa, qb, stamp, nwatch_diff):
    """Coupled censored pair; returns the first event index at which the two
    copies disagree on a watched edge (or -1)."""
    if nwatch_diff > 0:
        return 0
    for k in range(edges.shape[0]):
        e = edges[k]
        if active[e] == 0:
            continue
        u = marks[k]
        top[e] = heat_bath_value(top, e, u, a, b, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp)
        bot[e] = heat_bath_value(bot, e, u, a, b, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp)
        if watch[e] != 0 and top[e] != bot[e]:
            return k
    return -1


@njit(cache=_CACHE, nogil=True)
def fk_vs_bound(cfg, bound, edges, marks, a, b, bound_thr, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp):
    """Evolve ``cfg`` by the heat-bath rule while ``bound`` follows the
    percolation rule (open iff ``U > bound_thr``); count events where
    ``cfg[e] > bound[e]``."""
    viol = 0
    for k in range(edges.shape[0]):
        e = edges[k]
        u = marks[k]
        cfg[e] = heat_bath_value(cfg, e, u, a, b, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp)
        bound[e] = 1 if u > bound_thr else 0
        if cfg[e] > bound[e]:
            viol += 1
    return viol


@njit(cache=_CACHE, nogil=True)
def fk_vs_fixed(cfg, fixed, edges, marks, a, b, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp):
    """Evolve ``cfg``; count events after which the updated edge exceeds the
    static configuration ``fixed``."""
    viol = 0
    for k in range(edges.shape[0]):
        e = edges[k]
        cfg[e] = heat_bath_value(cfg, e, marks[k], a, b, eu, ev, inc_ptr, inc_edge, seen, qa, qb, stamp)
        if cfg[e] > fixed[e]:
            viol += 1
    return viol


@njit(cache=_CACHE, nogil=True)
def _find(parent, x):
    r = x
    while parent[r] != r:
        r = parent[r]
    while parent[x] != r:
        nxt = parent[x]
        parent[x] = r
        x = nxt
    return r


@njit(cache=_CACHE, nogil=True)
def component_labels(cfg, eu, ev, nv):
    """Vertex component labels (root ids) of the open subgraph and the count."""
    parent = np.arange(nv)
    ncomp = nv
    for f in range(cfg.shape[0]):
        if cfg[f] == 0:
            continue
        ra = _find(parent, eu[f])
        rb = _find(parent, ev[f])
        if ra != rb:
            parent[rb] = ra
            ncomp -= 1
    for x in range(nv):
        parent[x] = _find(parent, x)
    return parent, ncomp


@njit(cache=_CACHE, nogil=True)
def all_component_counts(eu, ev, nv):
    """c(S) for every edge subset S, indexed by bitmask (bit e = edge e)."""
    m = eu.shape[0]
    out = np.empty(1 << m, dtype=np.int64)
    parent = np.empty(nv, dtype=np.int64)
    for mask in range(1 << m):
        for x in range(nv):
            parent[x] = x
        c = nv
        for f in range(m):
            if (mask >> f) & 1:
                ra = _find(parent, eu[f])
                rb = _find(parent, ev[f])
                if ra != rb:
                    parent[rb] = ra
                    c -= 1
        out[mask] = c
    return out
