"""Heat-bath (FK) dynamics driven by an update stream.

At an event ``(e, t, U)`` the new value of ``e`` is
``0`` if ``U < 1 - p``, ``1`` if ``1 - p <= U < 1 - p + p*``, and otherwise
``1`` unless ``e`` is a cut-edge of the pre-update configuration. Given the
cut-edge status this opens ``e`` with probability ``p*`` (cut) or ``p``.

The percolation dynamics (SPD) used as a dominating process sets an updated
edge open iff ``U > 1 - p``.
"""

import csv

import numpy as np

from . import _kernels as K
from .lattice import _as_cfg, _as_mask
from .stream import EventBlock


class DeltaLog:
    """Optional record of ``(time, edge, new bit)`` for every applied event."""

    def __init__(self):
        self._parts = []

    def add(self, block, values):
        keep = values >= 0
        self._parts.append((block.times[keep], block.edges[keep], values[keep].astype(np.uint8)))

    def arrays(self):
        if not self._parts:
            return np.empty(0), np.empty(0, np.int64), np.empty(0, np.uint8)
        return tuple(np.concatenate(x) for x in zip(*self._parts))

    def to_csv(self, path):
        times, edges, bits = self.arrays()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "edge", "bit"])
            for t, e, b in zip(times, edges, bits):
                w.writerow([repr(float(t)), int(e), int(b)])


def _blocks(stream, t_from, t_to):
    if isinstance(stream, EventBlock):
        lo = np.searchsorted(stream.times, t_from, side="right")
        hi = np.searchsorted(stream.times, t_to, side="right")
        yield EventBlock(stream.edges[lo:hi], stream.times[lo:hi], stream.marks[lo:hi])
        return
    if stream.materialized:
        yield stream.events(t_from, t_to)
    else:
        yield from stream.chunks(t_from, t_to)


def _check_stream(g, stream):
    n = stream.n_edges if not isinstance(stream, EventBlock) else None
    if n is not None and n != g.n_edges:
        raise ValueError("stream was generated for a different graph")


def evolve(g, x0, params, stream, t_from, t_to, active=None, log=None):
    """Configuration at ``t_to`` started from ``x0`` at ``t_from``.

    ``active`` (edge mask) restricts which edges are updated; frozen edges keep
    their value in ``x0`` and still count for connectivity. ``log`` may be a
    :class:`DeltaLog` receiving every applied update.
    """
    if t_from > t_to:
        raise ValueError("t_from must not exceed t_to")
    _check_stream(g, stream)
    x = _as_cfg(g, x0).copy()
    act = np.ones(g.n_edges, np.uint8) if active is None else _as_mask(g, active).astype(np.uint8)
    a, b = params.close_below, params.open_below
    scratch = g.scratch()
    for blk in _blocks(stream, t_from, t_to):
        if log is None:
            K.apply_fk(x, blk.edges, blk.marks, act, a, b, *g.arrays, *scratch)
        else:
            out = np.empty(len(blk), np.int8)
            K.apply_fk_log(x, blk.edges, blk.marks, act, a, b, *g.arrays, *scratch, out)
            log.add(blk, out)
    return x


def trajectory_values(g, x0, params, stream, t_from, t_to, active=None):
    """Post-update bit of every event in ``(t_from, t_to]`` (-1 if the edge is
    inactive) and the final configuration."""
    x = _as_cfg(g, x0).copy()
    act = np.ones(g.n_edges, np.uint8) if active is None else _as_mask(g, active).astype(np.uint8)
    scratch = g.scratch()
    outs = []
    for blk in _blocks(stream, t_from, t_to):
        out = np.empty(len(blk), np.int8)
        K.apply_fk_log(x, blk.edges, blk.marks, act, params.close_below, params.open_below,
                       *g.arrays, *scratch, out)
        outs.append(out)
    return (np.concatenate(outs) if outs else np.empty(0, np.int8)), x


def grand_coupling(g, starts, params, stream, t_from, t_to):
    """Evolve every start with the same events.

    Returns ``(finals, violations)`` where ``violations`` counts, over every
    event time and every pair with ``starts[i] <= starts[j]``, the events after
    which ``finals_i <= finals_j`` failed on the updated edge. Only the updated
    edge changes at an event, so this certifies the order at all times.
    """
    starts = [_as_cfg(g, s) for s in starts]
    logs = []
    finals = []
    for s in starts:
        vals, x = trajectory_values(g, s, params, stream, t_from, t_to)
        logs.append(vals)
        finals.append(x)
    violations = 0
    for i, si in enumerate(starts):
        for j, sj in enumerate(starts):
            if i != j and np.all(si <= sj):
                violations += int(np.count_nonzero(logs[i] > logs[j]))
    return finals, violations


def _initial(g, start):
    if isinstance(start, str):
        if start == "full":
            return g.full()
        if start == "empty":
            return g.empty()
        raise ValueError("start must be 'full', 'empty' or a configuration")
    return _as_cfg(g, start).copy()


def spd_evolve(g, start, i, params, stream, t):
    """Percolation dynamics started at ``tau_i`` from ``start`` (``'full'``,
    ``'empty'`` or a configuration), read at time ``t``.

    An edge keeps its start value if it has no event in ``(tau_i, t]``;
    otherwise it is open iff its last mark exceeds ``1 - p``.
    """
    t0 = params.tau(i)
    if t < t0:
        raise ValueError("t precedes the start of the window")
    x = _initial(g, start)
    blk = stream.events(t0, t)
    if len(blk):
        rev = blk.edges[::-1]
        uniq, first = np.unique(rev, return_index=True)
        last = len(blk) - 1 - first
        x[uniq] = (blk.marks[last] > params.close_below).astype(np.uint8)
    return x


def spd_trajectory_values(g, start, params, stream, t_from, t_to):
    """Post-update bits of the percolation dynamics at every event."""
    x = _initial(g, start)
    vals = []
    for blk in _blocks(stream, t_from, t_to):
        v = (blk.marks > params.close_below).astype(np.int8)
        vals.append(v)
        if len(blk):
            rev = blk.edges[::-1]
            uniq, first = np.unique(rev, return_index=True)
            x[uniq] = v[len(blk) - 1 - first]
    return (np.concatenate(vals) if vals else np.empty(0, np.int8)), x


def censored_evolve(g, region, outside, x0_region, params, stream, t_from, t_to, log=None):
    """Dynamics updating only ``region`` with the rest frozen.

    ``outside`` is ``'full'``, ``'empty'`` or a configuration supplying the
    frozen values; ``x0_region`` supplies the initial values on the region
    (a full-length configuration, read on the region only). Returns the
    full-length configuration; edges off the region hold the frozen values.
    """
    region = _as_mask(g, region)
    x = _initial(g, outside)
    x[region] = _as_cfg(g, x0_region)[region]
    return evolve(g, x, params, stream, t_from, t_to, active=region, log=log)


def heat_bath_update(g, x, e, u, params):
    """New value of edge ``e`` for mark ``u`` given configuration ``x``."""
    seen, qa, qb, stamp = g.scratch()
    return int(K.heat_bath_value(_as_cfg(g, x), int(e), float(u), params.close_below, params.open_below,
                                 *g.arrays, seen, qa, qb, stamp))


def discrete_step(g, x, params, rng):
    """One step of the discrete-time chain: a uniformly chosen edge is
    resampled by the heat-bath rule."""
    y = _as_cfg(g, x).copy()
    e = int(rng.integers(g.n_edges))
    y[e] = heat_bath_update(g, y, e, rng.random(), params)
    return y


def discrete_run(g, x, params, rng, steps, record_counts=False):
    """``steps`` discrete updates; optionally the open count after each."""
    y = _as_cfg(g, x).copy()
    edges = rng.integers(0, g.n_edges, size=steps).astype(np.int64)
    marks = rng.random(steps)
    times = np.arange(1, steps + 1, dtype=np.float64)
    if not record_counts:
        K.apply_fk(y, edges, marks, np.ones(g.n_edges, np.uint8), params.close_below, params.open_below,
                   *g.arrays, *g.scratch())
        return y
    counts = np.empty(steps, np.int64)
    K.apply_fk_record(y, edges, times, marks, params.close_below, params.open_below, *g.arrays, *g.scratch(),
                      times, counts)
    return y, counts


def open_count_path(g, x0, params, stream, t_from, sample_times):
    """Open-edge count at each sample time (sorted, ``>= t_from``)."""
    x = _as_cfg(g, x0).copy()
    sample_times = np.asarray(sample_times, dtype=np.float64)
    out = np.empty(sample_times.size, np.int64)
    scratch = g.scratch()
    done = 0
    t_end = float(sample_times[-1]) if sample_times.size else t_from
    for blk in _blocks(stream, t_from, t_end):
        hi = np.searchsorted(sample_times, blk.times[-1], side="left") if len(blk) else done
        seg = sample_times[done:hi]
        tmp = np.empty(seg.size, np.int64)
        K.apply_fk_record(x, blk.edges, blk.times, blk.marks, params.close_below, params.open_below,
                          *g.arrays, *scratch, seg, tmp)
        out[done:hi] = tmp
        done = hi
    out[done:] = int(x.sum())
    return out
