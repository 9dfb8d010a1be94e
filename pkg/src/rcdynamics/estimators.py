"""Mixing experiments at desk scale.

Upper bounds on ``d(t)`` come from the coalescence time of the chains started
full and empty under the shared update stream: every start is sandwiched
between them, so ``d(t) <= P(T > t)``. Lower bounds come from projecting the
law at time ``t`` onto the open-edge count.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.sparse.csgraph import connected_components

from . import _kernels as K
from .dynamics import evolve
from .lattice import box_corners, edge_box, enlarge, torus, _as_mask
from .stats import binomial_sigma, linear_fit, log_linear_fit, wilson_interval
from .stream import UpdateStream, generate, replica_seeds


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# -- coupling upper bound -----------------------------------------------------------

def coalescence_time(g, params, seed, t_cap):
    """First time the full and empty chains agree (``inf`` if later than
    ``t_cap``)."""
    stream = UpdateStream(g.n_edges, t_cap, seed, materialize=False)
    top, bot = g.full(), g.empty()
    ndiff = g.n_edges
    scratch = g.scratch()
    a, b = params.close_below, params.open_below
    for blk in stream.chunks(0.0, t_cap):
        t, ndiff = K.apply_pair_until_equal(top, bot, blk.edges, blk.times, blk.marks, a, b,
                                            *g.arrays, *scratch, ndiff)
        if t >= 0:
            return float(t)
    return math.inf


def coalescence_times(g, params, replicas, seed=0, t_cap=200.0, threads=1):
    seeds = replica_seeds(seed, replicas)
    return np.array(_map(lambda s: coalescence_time(g, params, s, t_cap), seeds, threads))


@dataclass
class CouplingEstimate:
    times: np.ndarray
    upper: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    coalescence: np.ndarray


def survival_curve(T, times):
    """``P(T > t)`` with 3-sigma Wilson intervals."""
    T = np.asarray(T)
    times = np.asarray(times, float)
    n = T.size
    above = np.array([np.count_nonzero(T > t) for t in times])
    ci = np.array([wilson_interval(k, n) for k in above])
    return above / n, ci[:, 0], ci[:, 1]


def coupling_dt(g, params, times, replicas, seed=0, t_cap=None, threads=1):
    """Monte Carlo ``P(X_t^full != X_t^empty)`` at every time in ``times``."""
    if replicas < 30:
        raise ValueError("need at least 30 replicas")
    times = np.asarray(times, float)
    cap = float(times.max()) if t_cap is None else t_cap
    T = coalescence_times(g, params, replicas, seed, max(cap, 1e-9), threads)
    up, lo, hi = survival_curve(T, times)
    return CouplingEstimate(times, up, lo, hi, T)


def independent_coalescence_survival(n_edges, t):
    """``P(T > t)`` for ``q = 1``: the chains meet once every edge has been
    updated, so ``P(T > t) = 1 - (1 - e^{-t})^{|E|}``."""
    t = np.asarray(t, float)
    return 1.0 - (1.0 - np.exp(-t)) ** n_edges


def mixing_time(T, eps, z=3.0):
    """Smallest ``t`` with empirical ``P(T > t) <= eps`` and a distribution-free
    order-statistic interval for it."""
    T = np.sort(np.asarray(T))
    n = T.size
    k = int(math.ceil((1.0 - eps) * n - 1e-12))
    k = min(max(k, 1), n)
    alpha = 2 * stats.norm.sf(z)
    lo_k = int(stats.binom.ppf(alpha / 2, n, 1 - eps))
    hi_k = int(stats.binom.ppf(1 - alpha / 2, n, 1 - eps)) + 1
    lo = T[min(max(lo_k, 1), n) - 1]
    hi = T[min(max(hi_k, 1), n) - 1]
    return float(T[k - 1]), float(lo), float(hi)


# -- statistic lower bound ----------------------------------------------------------

def _batched_snapshots(g, params, x0, times, replicas, seed, batch_edges, reduce):
    times = np.asarray(times, float)
    per = max(1, batch_edges // g.n_edges)
    out = np.empty((times.size, replicas), np.int64)
    x0 = np.asarray(x0, np.uint8)
    done = 0
    bseeds = replica_seeds(seed, (replicas + per - 1) // per)
    for bs in bseeds:
        k = min(per, replicas - done)
        big = g.disjoint_copies(k)
        stream = UpdateStream(big.n_edges, max(times.max(), 1e-9), bs, materialize=False)
        x = np.tile(x0, k)
        last = 0.0
        for j, t in enumerate(times):
            if t > last:
                x = evolve(big, x, params, stream, last, t)
                last = t
            out[j, done:done + k] = reduce(x.reshape(k, g.n_edges))
        done += k
    return out


def count_snapshots(g, params, x0, times, replicas, seed=0, batch_edges=200_000):
    """Open-edge counts at each time for independent replicas started at
    ``x0``; shape ``(len(times), replicas)``. Replicas are simulated in
    batches as disjoint copies of ``g``."""
    return _batched_snapshots(g, params, x0, times, replicas, seed, batch_edges, lambda x: x.sum(axis=1))


def state_snapshots(g, params, x0, times, replicas, seed=0, batch_edges=200_000):
    """Like ``count_snapshots`` but returns the bitmask state index (bit ``e``
    set when edge ``e`` is open) of every replica."""
    if g.n_edges > 62:
        raise ValueError("state indices need at most 62 edges")
    w = np.int64(1) << np.arange(g.n_edges, dtype=np.int64)
    return _batched_snapshots(g, params, x0, times, replicas, seed, batch_edges, lambda x: x.astype(np.int64) @ w)


def stationary_count_sample(g, params, samples, seed=0, burn=30.0):
    """Open-edge counts of ``samples`` replicas run from empty for ``burn``."""
    return count_snapshots(g, params, g.empty(), [burn], samples, seed)[0]


@dataclass
class LowerEstimate:
    times: np.ndarray
    lower: np.ndarray
    ci: np.ndarray


def statistic_lower_dt(g, params, times, replicas, seed=0, reference=None, start="full"):
    """TV distance between the open-count law at ``t`` (from ``start``) and
    the stationary open-count law; each value lower-bounds ``d(t)``.

    ``reference`` is the exact stationary count law (length ``|E| + 1``) or a
    sample of stationary counts. ``ci`` is ``3 * 1/2 * sum sqrt(p(1-p)/N)``
    summed over both empirical histograms.
    """
    times = np.asarray(times, float)
    x0 = g.full() if start == "full" else (g.empty() if start == "empty" else np.asarray(start, np.uint8))
    snaps = count_snapshots(g, params, x0, times, replicas, seed)
    nb = g.n_edges + 1
    if reference is None:
        raise ValueError("a stationary reference law or sample is required")
    reference = np.asarray(reference)
    if reference.dtype.kind == "f" and reference.size == nb and abs(reference.sum() - 1) < 1e-9:
        ref = reference
        ref_noise = 0.0
    else:
        ref = np.bincount(reference.astype(np.int64), minlength=nb) / reference.size
        ref_noise = 0.5 * np.sqrt(ref * (1 - ref) / reference.size).sum()
    lower = np.empty(times.size)
    ci = np.empty(times.size)
    for j in range(times.size):
        h = np.bincount(snaps[j], minlength=nb) / replicas
        lower[j] = 0.5 * np.abs(h - ref).sum()
        ci[j] = 3.0 * (0.5 * np.sqrt(h * (1 - h) / replicas).sum() + ref_noise)
    return LowerEstimate(times, lower, ci)


# -- cutoff profile -------------------------------------------------------------------

@dataclass
class MixingEstimate:
    n: int
    d: int
    p: float
    q: float
    epsilons: list
    t_mix: list
    ci_lo: list
    ci_hi: list
    method: str = "coupling-upper"


@dataclass
class CutoffReport:
    estimates: list
    ratio: list
    window: list
    fit_slope: float
    fit_intercept: float
    fit_r2: float
    lo_eps: float
    hi_eps: float

    def rows(self):
        out = []
        for est in self.estimates:
            for eps, t, lo, hi in zip(est.epsilons, est.t_mix, est.ci_lo, est.ci_hi):
                out.append({"n": est.n, "epsilon": eps, "t_mix": t, "ci_lo": lo, "ci_hi": hi})
        return out


def cutoff_profile(n_list, params, epsilons=(0.25, 0.5, 0.75), replicas=1000, seed=0, d=2,
                   t_cap=200.0, threads=1, lo_eps=0.25, hi_eps=0.75):
    """Mixing-time estimates from coalescence-time quantiles for each side
    length, the ratio ``t(lo_eps) / t(hi_eps)``, the window
    ``t(lo_eps) - t(hi_eps)`` and the fit of ``t(lo_eps)`` against ``log n``."""
    n_list = sorted(n_list)
    epsilons = sorted(set(epsilons) | {lo_eps, hi_eps})
    estimates, ratio, window = [], [], []
    for k, n in enumerate(n_list):
        geom = torus(d, n)
        T = coalescence_times(geom, params, replicas, seed + 7919 * k, t_cap, threads)
        vals = [mixing_time(T, e) for e in epsilons]
        est = MixingEstimate(n, d, params.p, params.q, list(epsilons), [v[0] for v in vals],
                             [v[1] for v in vals], [v[2] for v in vals])
        estimates.append(est)
        t_lo = est.t_mix[epsilons.index(lo_eps)]
        t_hi = est.t_mix[epsilons.index(hi_eps)]
        ratio.append(t_lo / t_hi)
        window.append(t_lo - t_hi)
    y = [e.t_mix[epsilons.index(lo_eps)] for e in estimates]
    fit = linear_fit(np.log(n_list), y)
    return CutoffReport(estimates, ratio, window, fit.slope, fit.intercept, fit.r2, lo_eps, hi_eps)


# -- relaxation rate ---------------------------------------------------------------------

@dataclass
class GapEstimate:
    r: int
    lambda_hat: float
    stderr: float
    method: str
    lags: np.ndarray = field(default=None, repr=False)
    autocorrelation: np.ndarray = field(default=None, repr=False)


def _autocorrelation(paths, max_lag):
    """Autocorrelation of stationary paths (rows) pooled over rows, using the
    pooled mean and variance."""
    mu = paths.mean()
    x = paths - mu
    var = (x * x).mean()
    if var == 0:
        raise ValueError("open count is constant; autocorrelation undefined")
    n = paths.shape[1]
    return np.array([(x[:, :n - k] * x[:, k:]).mean() / var for k in range(max_lag + 1)])


def _tail_rate(lags, rho, rho_hi, rho_lo):
    keep = (rho <= rho_hi) & (rho >= rho_lo) & (lags > 0)
    if keep.sum() < 3:
        keep = (rho > 0) & (lags > 0)
        keep[np.flatnonzero(keep)[3:]] = False
    fit = linear_fit(lags[keep], np.log(rho[keep]))
    return -fit.slope


def lambda_hat(g, params, replicas=16, seed=0, burn=20.0, t_obs=200.0, dt=0.1, max_lag_time=4.0,
               rho_hi=0.6, rho_lo=0.05, r=None, threads=1):
    """Relaxation rate from the exponential tail of the open-count
    autocorrelation at stationarity. The fit uses lags whose pooled
    autocorrelation lies in ``[rho_lo, rho_hi]``; the standard error is the
    jackknife over replicas."""
    times = burn + dt * np.arange(int(round(t_obs / dt)) + 1)
    seeds = replica_seeds(seed, replicas)

    def run(s):
        stream = UpdateStream(g.n_edges, float(times[-1]), s, materialize=False)
        from .dynamics import open_count_path
        return open_count_path(g, g.empty(), params, stream, 0.0, times)

    paths = np.array(_map(run, seeds, threads), dtype=float)
    max_lag = int(round(max_lag_time / dt))
    lags = dt * np.arange(max_lag + 1)
    rho = _autocorrelation(paths, max_lag)
    lam = _tail_rate(lags, rho, rho_hi, rho_lo)
    jack = []
    if replicas > 1:
        for k in range(replicas):
            sub = np.delete(paths, k, axis=0)
            jack.append(_tail_rate(lags, _autocorrelation(sub, max_lag), rho_hi, rho_lo))
        jack = np.array(jack)
        se = float(np.sqrt((replicas - 1) / replicas * ((jack - jack.mean()) ** 2).sum()))
    else:
        se = float("nan")
    return GapEstimate(r if r is not None else -1, float(lam), se, "autocorrelation", lags, rho)


def lambda_from_coupling(g, params, replicas=400, seed=0, t_cap=200.0, p_hi=0.5, p_lo=0.02, r=None,
                         threads=1):
    """Relaxation rate from the log-slope of ``P(T > t)`` where it lies in
    ``[p_lo, p_hi]``."""
    T = np.sort(coalescence_times(g, params, replicas, seed, t_cap, threads))
    T = T[np.isfinite(T)]
    surv = 1.0 - np.arange(1, T.size + 1) / replicas
    keep = (surv <= p_hi) & (surv >= p_lo)
    fit = linear_fit(T[keep], np.log(surv[keep]))
    return GapEstimate(r if r is not None else -1, float(-fit.slope), float(fit.stderr), "tv-slope")


@dataclass
class LambdaReport:
    estimates: list
    spread_top2: float
    extrapolated: float


def lambda_r(r_list, params, replicas=16, seed=0, d=2, method="autocorrelation", threads=1, **kw):
    """``lambda_hat`` on ``Z_r^d`` for each ``r``; reports the relative spread
    between the two largest ``r`` and a linear extrapolation in ``r^{-1/4}``."""
    if min(r_list) < 4:
        raise ValueError("r must be >= 4")
    ests = []
    for k, r in enumerate(sorted(r_list)):
        g = torus(d, r)
        if method == "autocorrelation":
            ests.append(lambda_hat(g, params, replicas, seed + 104729 * k, r=r, threads=threads, **kw))
        elif method == "tv-slope":
            ests.append(lambda_from_coupling(g, params, replicas, seed + 104729 * k, r=r, threads=threads, **kw))
        else:
            raise ValueError("method must be 'autocorrelation' or 'tv-slope'")
    a, b = ests[-2].lambda_hat, ests[-1].lambda_hat
    spread = abs(a - b) / max(a, b)
    if len(ests) >= 2:
        x = np.array([e.r for e in ests], float) ** -0.25
        fit = linear_fit(x, [e.lambda_hat for e in ests])
        extrap = fit.intercept
    else:
        extrap = b
    return LambdaReport(ests, float(spread), float(extrap))


# -- burn-in -------------------------------------------------------------------------------

def burn_in_check(params, n, replicas, seed=0):
    """Open frequency of the FK chain at ``t = 0`` and ``t = T_init`` from the
    full start and at ``T_init`` from the empty start, pooled over edges and
    replicas, compared with ``p_init`` and ``p``."""
    geom = torus(params.d, n)
    t_init = params.t_init
    full_hits = 0
    empty_hits = 0
    for s in replica_seeds(seed, replicas):
        stream = generate(geom, t_init, s, materialize=False)
        full_hits += int(evolve(geom, geom.full(), params, stream, 0.0, t_init).sum())
        empty_hits += int(evolve(geom, geom.empty(), params, stream, 0.0, t_init).sum())
    trials = replicas * geom.n_edges
    f_full = full_hits / trials
    f_empty = empty_hits / trials
    s_full = binomial_sigma(f_full, trials)
    s_empty = binomial_sigma(f_empty, trials)
    spd_marginal = math.exp(-t_init) + params.p * (1 - math.exp(-t_init))
    return {
        "t_init": t_init, "p_init": params.p_init, "trials": trials,
        "freq_t0_full": 1.0, "pre_burn_in_exceeds": 1.0 > params.p_init,
        "freq_full": f_full, "sigma_full": s_full, "full_ok": f_full <= params.p_init + 3 * s_full,
        "freq_empty": f_empty, "sigma_empty": s_empty, "empty_ok": f_empty <= params.p + 3 * s_empty,
        "spd_marginal_at_t_init": spd_marginal,
    }


# -- disagreement propagation -----------------------------------------------------------------

@dataclass
class AgreementEstimate:
    frequency: float
    ci_lo: float
    ci_hi: float
    runs: int
    region_size: int


def disagreement_propagation(geom, region, radius, t_max, params, replicas, seed=0):
    """Fraction of runs in which the two censored chains on the enlargement of
    ``region`` (outside frozen full, resp. empty; common start drawn from
    ``Perc(p_init)`` on the enlargement) agree on ``region`` at every event
    time in ``[0, t_max]``."""
    region = _as_mask(geom, region)
    plus = enlarge(geom, region, radius)
    active = plus.astype(np.uint8)
    watch = region.astype(np.uint8)
    a, b = params.close_below, params.open_below
    agree = 0
    for s in replica_seeds(seed, replicas):
        rng = np.random.default_rng(np.random.SeedSequence([s, 2]))
        z0 = (rng.random(geom.n_edges) < params.p_init).astype(np.uint8)
        top = np.where(plus, z0, 1).astype(np.uint8)
        bot = np.where(plus, z0, 0).astype(np.uint8)
        stream = UpdateStream(geom.n_edges, t_max, s, materialize=False)
        scratch = geom.scratch()
        bad = False
        for blk in stream.chunks(0.0, t_max):
            hit = K.apply_pair_watch(top, bot, blk.edges, blk.marks, active, watch, a, b,
                                     *geom.arrays, *scratch, 0)
            if hit >= 0:
                bad = True
                break
        agree += not bad
    lo, hi = wilson_interval(agree, replicas)
    return AgreementEstimate(agree / replicas, lo, hi, replicas, int(plus.sum()))


# -- barrier dynamics and update support ---------------------------------------------------------

class BarrierSystem:
    """Boxes ``B_v`` of side ``side`` tiling the torus, their enlargements
    ``B_v^+`` (side ``side + 2 radius``) and periodic copies on which
    independent chains run with the updates of the corresponding edges."""

    def __init__(self, geom, side, radius):
        self.geom = geom
        self.side = int(side)
        self.radius = int(radius)
        self.plus_side = self.side + 2 * self.radius
        if geom.n % self.side:
            raise ValueError("box side must divide the torus side")
        if self.plus_side > geom.n:
            raise ValueError("enlarged box does not fit in the torus")
        self.copy = torus(geom.d, self.plus_side)
        self.corners = box_corners(geom, self.side)
        d = geom.d
        local_coords = self.copy.vertex_coords
        self.home = []
        self.plus = []
        self.to_torus = []
        self.to_local = []
        self.home_local = []
        inner = np.all((local_coords >= self.radius) & (local_coords < self.radius + self.side), axis=1)
        home_local = np.repeat(inner, d).astype(np.uint8)
        for c in self.corners:
            verts = geom.vertex_index(local_coords + (c - self.radius))
            ids = (verts[:, None] * d + np.arange(d)[None, :]).ravel()
            lookup = np.full(geom.n_edges, -1, dtype=np.int64)
            lookup[ids] = np.arange(ids.size)
            self.to_torus.append(ids)
            self.to_local.append(lookup)
            self.home.append(edge_box(geom, c, self.side))
            self.plus.append(edge_box(geom, c - self.radius, self.plus_side))
            self.home_local.append(home_local)

    def local_events(self, k, blk):
        loc = self.to_local[k][blk.edges]
        keep = loc >= 0
        return loc[keep], blk.times[keep], blk.marks[keep], np.flatnonzero(keep)

    def disagreeing_boxes(self, params, blk):
        """Indices of boxes whose full and empty copy chains differ on the
        home box after the events in ``blk``."""
        a, b = params.close_below, params.open_below
        g = self.copy
        act = np.ones(g.n_edges, np.uint8)
        out = []
        for k in range(len(self.corners)):
            edges, _, marks, _ = self.local_events(k, blk)
            top, bot = g.full(), g.empty()
            K.apply_fk(top, edges, marks, act, a, b, *g.arrays, *g.scratch())
            K.apply_fk(bot, edges, marks, act, a, b, *g.arrays, *g.scratch())
            if np.any((top != bot) & (self.home_local[k] == 1)):
                out.append(k)
        return out

    def coupled_with_torus(self, params, x0, blk):
        """Whether the torus chain and the barrier chains agree on every home
        box at every event of ``blk`` (both started from ``x0``)."""
        a, b = params.close_below, params.open_below
        geom, g = self.geom, self.copy
        x = np.asarray(x0, np.uint8).copy()
        vals = np.empty(len(blk), np.int8)
        K.apply_fk_log(x, blk.edges, blk.marks, np.ones(geom.n_edges, np.uint8), a, b,
                       *geom.arrays, *geom.scratch(), vals)
        act = np.ones(g.n_edges, np.uint8)
        for k in range(len(self.corners)):
            edges, _, marks, pos = self.local_events(k, blk)
            y = x0[self.to_torus[k]].astype(np.uint8)
            loc_vals = np.empty(edges.size, np.int8)
            K.apply_fk_log(y, edges, marks, act, a, b, *g.arrays, *g.scratch(), loc_vals)
            mine = self.home_local[k][edges] == 1
            if np.any(loc_vals[mine] != vals[pos[mine]]):
                return False
        return True


@dataclass
class SparsityReport:
    components: int
    diameters: list
    min_separation: float
    is_sparse: bool
    separation: int
    max_diameter: int
    max_components: int


def sparsity(geom, support, separation, max_diameter, max_components):
    """Group the support by single linkage at vertex distance ``< separation``
    and test the three sparse-set conditions: groups are not joined by the
    set, each has diameter ``<= max_diameter``, groups are at distance
    ``>= separation``, and there are at most ``max_components`` groups."""
    support = _as_mask(geom, support)
    verts = np.unique(np.concatenate([geom.eu[support], geom.ev[support]]))
    if verts.size == 0:
        return SparsityReport(0, [], math.inf, True, separation, max_diameter, max_components)
    dist = geom.torus_l1(verts[:, None], verts[None, :])
    ncomp, lab = connected_components(dist < separation, directed=False)
    diams = [int(dist[np.ix_(lab == c, lab == c)].max()) for c in range(ncomp)]
    sep = math.inf
    for c in range(ncomp):
        other = lab != c
        if other.any():
            sep = min(sep, float(dist[np.ix_(lab == c, other)].min()))
    ok = ncomp <= max_components and max(diams) <= max_diameter and sep >= separation
    return SparsityReport(int(ncomp), diams, sep, bool(ok), separation, max_diameter, max_components)


def barrier_support(geom, params, s, stream, side=8, radius=4, t_start=0.0, t_max=None,
                    separation=None, max_diameter=None, max_components=None):
    """Certified superset of the update support of the barrier dynamics over
    ``(t_start, t_start + s]``: the union of ``B_v^+`` over boxes whose full
    and empty copy chains disagree on ``B_v``. Returns the support mask and its
    :class:`SparsityReport`."""
    if t_max is not None and s > t_max:
        raise ValueError("s exceeds t_max")
    sysm = BarrierSystem(geom, side, radius)
    blk = stream.events(t_start, t_start + s) if s > 0 else stream.events(t_start, t_start)
    support = np.zeros(geom.n_edges, dtype=bool)
    for k in sysm.disagreeing_boxes(params, blk):
        support |= sysm.plus[k]
    separation = 4 * radius if separation is None else separation
    max_diameter = geom.d * geom.n // 2 - 1 if max_diameter is None else max_diameter
    max_components = max(1, len(sysm.corners) // 4) if max_components is None else max_components
    return support, sparsity(geom, support, separation, max_diameter, max_components)


def barrier_coupling_frequency(geom, params, t_max, replicas, seed=0, side=8, radius=4):
    """Fraction of runs (start drawn from ``Perc(p_init)``) where the torus
    chain equals the barrier dynamics on ``[0, t_max]``."""
    sysm = BarrierSystem(geom, side, radius)
    ok = 0
    for s in replica_seeds(seed, replicas):
        rng = np.random.default_rng(np.random.SeedSequence([s, 3]))
        x0 = (rng.random(geom.n_edges) < params.p_init).astype(np.uint8)
        stream = generate(geom, t_max, s)
        ok += sysm.coupled_with_torus(params, x0, stream.events(0.0, t_max))
    lo, hi = wilson_interval(ok, replicas)
    return AgreementEstimate(ok / replicas, lo, hi, replicas, geom.n_edges)
