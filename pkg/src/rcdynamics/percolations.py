"""Window percolations built from the update stream.

Window ``i`` is the time interval ``(tau_i, tau_{i+1}]``. Per edge:

* ``eemp_i`` -- some event in the window has mark ``> 1 - p`` (the edge is
  open at some time in the window for the percolation dynamics started empty
  at ``tau_i``);
* ``nup_i`` -- no event in the window;
* ``env_i = eemp_i | nup_i``;
* ``eful_i`` -- the percolation dynamics started full at ``tau_{i-1}`` is open
  at some time in ``[tau_i, tau_{i+1}]``; for ``i = 0`` it is
  ``x0 | eemp_0``.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from ._io import write_csv
from .dynamics import evolve
from .lattice import ClusterIndex, vertex_labels
from .stats import binomial_sigma, log_linear_fit, wilson_interval
from .stream import generate, replica_seeds


@dataclass
class WindowPercolations:
    i: int
    eemp: np.ndarray
    nup: np.ndarray
    env: np.ndarray
    eful: np.ndarray = None


# last-update classes
NO_UPDATE, OBLIVIOUS, NON_OBLIVIOUS = 0, 1, 2


@dataclass
class WindowEvents:
    """Per-edge summary of the events in one window."""

    nup: np.ndarray        # uint8, no event in the window
    eemp: np.ndarray       # uint8, some mark > 1 - p
    last_mark: np.ndarray  # float, NaN when there is no event
    last_class: np.ndarray  # int8, NO_UPDATE / OBLIVIOUS / NON_OBLIVIOUS

    @property
    def env(self):
        return self.nup | self.eemp


def summarize_block(n_edges, block, params):
    """:class:`WindowEvents` of an event block covering one window."""
    nup = np.ones(n_edges, np.uint8)
    eemp = np.zeros(n_edges, np.uint8)
    last = np.full(n_edges, np.nan)
    if len(block):
        nup[block.edges] = 0
        eemp[block.edges[block.marks > params.close_below]] = 1
        rev = block.edges[::-1]
        uniq, first = np.unique(rev, return_index=True)
        last[uniq] = block.marks[len(block) - 1 - first]
    cls = np.full(n_edges, NO_UPDATE, np.int8)
    has = ~np.isnan(last)
    cls[has] = np.where(last[has] < params.open_below, OBLIVIOUS, NON_OBLIVIOUS)
    return WindowEvents(nup, eemp, last, cls)


class WindowCache:
    """Window percolations of one stream, computed once per window.

    ``x0`` is the configuration at time 0 and is needed only for ``eful_0``.
    """

    def __init__(self, g, stream, params, x0=None):
        self.g = g
        self.stream = stream
        self.params = params
        self.x0 = None if x0 is None else np.asarray(x0, np.uint8)
        self._events = {}
        self._perc = {}
        self._omega = {}
        self._clusters = {}

    def events(self, i):
        if i < 0:
            raise ValueError("window index must be >= 0")
        if i not in self._events:
            t1, t2 = self.params.tau(i), self.params.tau(i + 1)
            if t2 > self.stream.horizon + 1e-9:
                raise ValueError(f"stream horizon {self.stream.horizon} does not cover window {i}")
            blk = self.stream.events(t1, min(t2, self.stream.horizon))
            self._events[i] = summarize_block(self.g.n_edges, blk, self.params)
        return self._events[i]

    def window(self, i, with_eful=True):
        key = (i, with_eful)
        if key in self._perc:
            return self._perc[key]
        ev = self.events(i)
        eful = None
        if with_eful:
            if i == 0:
                if self.x0 is None:
                    raise ValueError("eful for window 0 needs the initial configuration")
                eful = self.x0 | ev.eemp
            else:
                prev = self.events(i - 1)
                full_at_start = (prev.nup == 1) | (prev.last_mark > self.params.close_below)
                eful = (full_at_start | (ev.eemp == 1)).astype(np.uint8)
        wp = WindowPercolations(i, ev.eemp, ev.nup, ev.env, eful)
        self._perc[key] = wp
        return wp

    def env(self, i):
        return self.events(i).env

    def omega(self, i):
        """``env_{i-1} | env_i`` for ``i >= 1``."""
        if i not in self._omega:
            if i < 1:
                raise ValueError("omega needs i >= 1")
            self._omega[i] = self.env(i - 1) | self.env(i)
        return self._omega[i]

    def clusters(self, i):
        """:class:`ClusterIndex` of ``omega(i)``."""
        if i not in self._clusters:
            self._clusters[i] = ClusterIndex(self.g, self.omega(i))
        return self._clusters[i]


def compute_window(g, stream, params, i, x0=None):
    """Window percolations of window ``i``; ``eful`` is omitted for ``i = 0``
    unless ``x0`` is given."""
    cache = WindowCache(g, stream, params, x0)
    return cache.window(i, with_eful=(i > 0 or x0 is not None))


# -- closed forms -------------------------------------------------------------

def expected_frequencies(params):
    """Exact one-edge open probabilities of the window percolations."""
    p, dlt = params.p, params.delta
    eemp = 1.0 - np.exp(-p * dlt)
    nup = np.exp(-dlt)
    return {
        "eemp": eemp,
        "nup": nup,
        "env": eemp + nup,
        "eful": 1.0 - (1.0 - nup) * (1.0 - p) * np.exp(-p * dlt),
    }


def domination_bounds(params):
    s = np.sqrt(params.p)
    return {"eemp": s, "nup": s, "env": 2 * s, "eful": 3 * s}


# -- reports ------------------------------------------------------------------

def sandwich_violations(g, params, stream, x0, windows):
    """Pathwise checks for windows ``1 .. windows``.

    ``upper_env``: events in window ``i`` after which the FK configuration
    exceeds ``env_{i-1} | env_i`` (plus a check at ``tau_i``).
    ``upper_spd``: events in ``(tau_i, tau_{windows+1}]`` after which it
    exceeds the percolation dynamics started full at ``tau_i``.
    """
    cache = WindowCache(g, stream, params)
    a, b = params.close_below, params.open_below
    x = evolve(g, x0, params, stream, 0.0, params.tau(1))
    env_viol = 0
    spd_viol = 0
    end = params.tau(windows + 1)
    for i in range(1, windows + 1):
        omega = cache.omega(i).copy()
        env_viol += int(np.count_nonzero(x > omega))
        blk = stream.events(params.tau(i), params.tau(i + 1))
        y = x.copy()
        env_viol += K.fk_vs_fixed(y, omega, blk.edges, blk.marks, a, b, *g.arrays, *g.scratch())
        z = x.copy()
        bound = np.ones(g.n_edges, np.uint8)
        tail = stream.events(params.tau(i), end)
        spd_viol += K.fk_vs_bound(z, bound, tail.edges, tail.marks, a, b, params.close_below,
                                  *g.arrays, *g.scratch())
        x = y
    return {"upper_env": env_viol, "upper_spd": spd_viol}


def domination_report(g, params, windows, replicas, seed=0, sandwich=True, x0="full"):
    """Pooled open frequencies of the window percolations over
    ``replicas x windows x |E|`` edge-windows (windows ``1 .. windows``).

    Returns ``(rows, sandwich_counts)``. Each row has the model name, the
    frequency with its 3-sigma Wilson interval, the exact value, the
    domination bound and the z-score of the frequency against the bound.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    names = ("eemp", "nup", "env", "eful")
    counts = dict.fromkeys(names, 0)
    trials = 0
    total = {"upper_env": 0, "upper_spd": 0}
    for s in replica_seeds(seed, replicas):
        stream = generate(g, params.tau(windows + 1), s)
        cache = WindowCache(g, stream, params)
        for i in range(1, windows + 1):
            wp = cache.window(i)
            for nm in names:
                counts[nm] += int(getattr(wp, nm).sum())
            trials += g.n_edges
        if sandwich:
            start = g.full() if x0 == "full" else np.asarray(x0, np.uint8)
            for k, v in sandwich_violations(g, params, stream, start, windows).items():
                total[k] += v
    exact = expected_frequencies(params)
    bounds = domination_bounds(params)
    rows = []
    for nm in names:
        f = counts[nm] / trials
        sig = binomial_sigma(f, trials)
        lo, hi = wilson_interval(counts[nm], trials)
        rows.append({"model": nm, "p": params.p, "delta": params.delta, "frequency": f,
                     "ci_lo": lo, "ci_hi": hi, "sigma": sig, "exact": exact[nm],
                     "bound": bounds[nm], "z_score": (f - bounds[nm]) / sig if sig > 0 else 0.0,
                     "trials": trials})
    return rows, total


REPORT_COLUMNS = ["model", "p", "delta", "frequency", "bound", "z_score", "exact", "ci_lo", "ci_hi", "trials"]


def write_domination_csv(path, rows):
    write_csv(path, rows, REPORT_COLUMNS)


@dataclass
class DecayFit:
    distances: np.ndarray
    probabilities: np.ndarray
    samples: int
    slope: float
    intercept: float
    r2: float


def connectivity_decay(geom, params, replicas, distances, seed=0, window=1):
    """Two-point connectivity of ``eful_window`` against vertex distance.

    Pairs ``(u, u + k e_j)`` are pooled over every vertex ``u`` and axis ``j``.
    Window 0 uses an initial configuration drawn from ``Perc(p_init)``.
    Returns the per-distance probabilities and the fit of their logarithm.
    """
    distances = np.asarray(distances, dtype=np.int64)
    hits = np.zeros(distances.size, dtype=np.int64)
    per_replica = geom.n_vertices * geom.d
    coords = geom.vertex_coords
    for s in replica_seeds(seed, replicas):
        stream = generate(geom, params.tau(window + 1), s)
        x0 = None
        if window == 0:
            rng = np.random.default_rng(np.random.SeedSequence([s, 1]))
            x0 = (rng.random(geom.n_edges) < params.p_init).astype(np.uint8)
        wp = WindowCache(geom, stream, params, x0).window(window)
        lab = vertex_labels(geom, wp.eful)
        for j in range(geom.d):
            for idx, k in enumerate(distances):
                shifted = coords.copy()
                shifted[:, j] += k
                hits[idx] += int(np.count_nonzero(lab == lab[geom.vertex_index(shifted)]))
    samples = replicas * per_replica
    probs = hits / samples
    try:
        fit = log_linear_fit(distances, probs)
    except ValueError:
        nan = float("nan")
        return DecayFit(distances, probs, samples, nan, nan, nan)
    return DecayFit(distances, probs, samples, fit.slope, fit.intercept, fit.r2)
