"""Model parameters and the shared update randomness.

Every edge carries an independent rate-1 Poisson clock with i.i.d. uniform
marks. The stream realizes this as one rate-``|E|`` Poisson process with
uniform edge labels, cut into unit-length chunks: chunk ``k`` covers the time
interval ``(k, k + 1]`` and is generated from its own PCG64 generator seeded
with ``SeedSequence([seed, k])``. Any window can therefore be regenerated
without storing the events before it, and two streams with the same seed but
different horizons agree on their common time range.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

PERC_THRESHOLD = {1: 1.0, 2: 0.5, 3: 0.2488}

EVENT_DTYPE = np.dtype([("edge", "<u4"), ("time", "<f8"), ("mark", "<f8")])


@dataclass(frozen=True)
class RCParams:
    """Random-cluster parameters and the quantities derived from them.

    ``delta`` defaults to ``p ** -0.5``; ``p_perc`` defaults to the bond
    percolation threshold of ``Z^d`` from :data:`PERC_THRESHOLD`.
    """

    p: float
    q: float
    d: int = 2
    delta: Optional[float] = None
    p_perc: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie in (0, 1)")
        if self.q < 1.0:
            raise ValueError("q must be >= 1")
        delta = self.p ** -0.5 if self.delta is None else float(self.delta)
        if delta <= 0:
            raise ValueError("delta must be positive")
        if self.p_perc is None:
            if self.d not in PERC_THRESHOLD:
                raise ValueError(f"no percolation threshold tabulated for d={self.d}; pass p_perc")
            p_perc = PERC_THRESHOLD[self.d]
        else:
            p_perc = float(self.p_perc)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "p_perc", p_perc)

    @property
    def p_star(self):
        return self.p / (self.q * (1.0 - self.p) + self.p)

    @property
    def p_bar(self):
        """Open probability of an edge whose last update is oblivious."""
        return self.p_star / (1.0 - self.p + self.p_star)

    def tau(self, i):
        return i * self.delta

    @property
    def p_init(self):
        return 0.5 * (self.p + self.p_perc)

    @property
    def t_init(self):
        """Time at which the full-start percolation marginal
        ``e^{-t} + p (1 - e^{-t})`` drops to ``p_init``."""
        if self.p_init <= self.p:
            raise ValueError("burn-in undefined: p_init <= p")
        return math.log((1.0 - self.p) / (self.p_init - self.p))

    # heat-bath thresholds: U < close_below closes, U < open_below opens,
    # otherwise the cut-edge test decides
    @property
    def close_below(self):
        return 1.0 - self.p

    @property
    def open_below(self):
        return 1.0 - self.p + self.p_star

    def as_dict(self):
        return {"p": self.p, "q": self.q, "d": self.d, "delta": self.delta,
                "p_perc": self.p_perc, "p_star": self.p_star, "p_bar": self.p_bar,
                "p_init": self.p_init}


class UpdateEvent(NamedTuple):
    edge: int
    time: float
    mark: float


class EventBlock(NamedTuple):
    """Time-sorted parallel arrays of events."""

    edges: np.ndarray
    times: np.ndarray
    marks: np.ndarray

    def __len__(self):
        return self.edges.size

    def restrict(self, mask):
        keep = mask[self.edges]
        return EventBlock(self.edges[keep], self.times[keep], self.marks[keep])


def _empty_block():
    return EventBlock(np.empty(0, np.int64), np.empty(0, np.float64), np.empty(0, np.float64))


def concat_blocks(blocks):
    blocks = [b for b in blocks if len(b)]
    if not blocks:
        return _empty_block()
    return EventBlock(*(np.concatenate(parts) for parts in zip(*blocks)))


def generate_chunk(n_edges, seed, k):
    """Events of the unit chunk ``(k, k + 1]``."""
    for attempt in range(16):
        key = [seed, k] if attempt == 0 else [seed, k, attempt]
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))
        count = rng.poisson(n_edges)
        times = k + np.sort(1.0 - rng.random(count))
        edges = rng.integers(0, n_edges, size=count, dtype=np.int64)
        marks = rng.random(count)
        if count < 2 or np.all(np.diff(times) > 0):
            return EventBlock(edges, times, marks)
    raise RuntimeError("could not draw tie-free event times")


class UpdateStream:
    """Seeded update sequence for a graph on ``(0, horizon]``.

    With ``materialize=True`` all events are held in memory together with a
    per-edge index, which backward traversals and per-edge queries need. Lazy
    streams regenerate chunks on demand and suit long runs on large graphs.
    """

    def __init__(self, n_edges, horizon, seed, materialize=True):
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        self.n_edges = int(n_edges)
        self.horizon = float(horizon)
        self.seed = int(seed)
        self.materialized = bool(materialize)
        self._events = None
        self._edge_ptr = None
        self._edge_pos = None
        if materialize:
            self._events = self.events(0.0, self.horizon)
            self._build_index()

    def __repr__(self):
        return f"UpdateStream(E={self.n_edges}, horizon={self.horizon}, seed={self.seed})"

    def _build_index(self):
        ev = self._events
        order = np.lexsort((ev.times, ev.edges))
        counts = np.bincount(ev.edges, minlength=self.n_edges)
        self._edge_ptr = np.zeros(self.n_edges + 1, dtype=np.int64)
        np.cumsum(counts, out=self._edge_ptr[1:])
        self._edge_pos = order

    def chunks(self, t1, t2):
        """Yield the event blocks covering ``(t1, t2]`` in time order."""
        self._check_interval(t1, t2)
        if t2 == t1:
            return
        first = int(math.floor(t1))
        last = int(math.ceil(t2)) - 1
        for k in range(max(first, 0), last + 1):
            blk = generate_chunk(self.n_edges, self.seed, k)
            lo = np.searchsorted(blk.times, t1, side="right")
            hi = np.searchsorted(blk.times, t2, side="right")
            if lo == 0 and hi == len(blk):
                yield blk
            elif hi > lo:
                yield EventBlock(blk.edges[lo:hi], blk.times[lo:hi], blk.marks[lo:hi])

    def events(self, t1, t2):
        """All events with time in ``(t1, t2]``."""
        self._check_interval(t1, t2)
        if self._events is not None:
            ev = self._events
            lo = np.searchsorted(ev.times, t1, side="right")
            hi = np.searchsorted(ev.times, t2, side="right")
            return EventBlock(ev.edges[lo:hi], ev.times[lo:hi], ev.marks[lo:hi])
        return concat_blocks(list(self.chunks(t1, t2)))

    def edge_events(self, e):
        """``(times, marks)`` of every event of edge ``e``, time-sorted."""
        self._need_index()
        pos = self._edge_pos[self._edge_ptr[e]:self._edge_ptr[e + 1]]
        return self._events.times[pos], self._events.marks[pos]

    def slice(self, t1, t2, e):
        """Events of edge ``e`` with time in ``(t1, t2]``."""
        self._check_interval(t1, t2)
        if self._events is None:
            blk = self.events(t1, t2)
            sel = blk.edges == e
            return [UpdateEvent(int(e), float(t), float(u)) for t, u in zip(blk.times[sel], blk.marks[sel])]
        times, marks = self.edge_events(e)
        lo = np.searchsorted(times, t1, side="right")
        hi = np.searchsorted(times, t2, side="right")
        return [UpdateEvent(int(e), float(t), float(u)) for t, u in zip(times[lo:hi], marks[lo:hi])]

    def last_update(self, e, t):
        """Latest event of ``e`` with time ``<= t``, or ``None``."""
        if t > self.horizon:
            raise ValueError("query time beyond horizon")
        times, marks = self.edge_events(e)
        k = np.searchsorted(times, t, side="right") - 1
        if k < 0:
            return None
        return UpdateEvent(int(e), float(times[k]), float(marks[k]))

    def _need_index(self):
        if self._events is None:
            self._events = self.events(0.0, self.horizon)
            self._build_index()
            self.materialized = True

    def _check_interval(self, t1, t2):
        if t1 > t2:
            raise ValueError("inverted interval")
        if t1 < 0 or t2 > self.horizon + 1e-12:
            raise ValueError("interval outside (0, horizon]")

    # -- binary dump ---------------------------------------------------------
    def dump(self, path, t1=0.0, t2=None):
        blk = self.events(t1, self.horizon if t2 is None else t2)
        rec = np.empty(len(blk), dtype=EVENT_DTYPE)
        rec["edge"] = blk.edges
        rec["time"] = blk.times
        rec["mark"] = blk.marks
        rec.tofile(path)


def generate(graph, horizon, seed, materialize=True):
    """Update stream for ``graph`` on ``(0, horizon]``."""
    return UpdateStream(graph.n_edges, horizon, seed, materialize=materialize)


def load_events(path):
    """Read a binary dump back as an :class:`EventBlock`."""
    rec = np.fromfile(path, dtype=EVENT_DTYPE)
    return EventBlock(rec["edge"].astype(np.int64), rec["time"].copy(), rec["mark"].copy())


def replica_seeds(master, count):
    """Independent 63-bit seeds for replicas ``0 .. count-1``."""
    return [int(np.random.SeedSequence([int(master), r]).generate_state(1, np.uint64)[0] >> np.uint64(1))
            for r in range(count)]


def window_block(n_edges, length, seed):
    """Fresh events on ``(0, length]`` for a graph with ``n_edges`` edges,
    without building a stream object."""
    return UpdateStream(n_edges, length, seed, materialize=False).events(0.0, length)
