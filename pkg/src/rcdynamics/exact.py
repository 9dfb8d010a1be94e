"""Exact computations on graphs small enough to enumerate.

States are edge subsets encoded as bitmasks (bit ``e`` set = edge ``e``
open). The continuous-time chain resamples each edge at rate 1: open with
probability ``p*`` when it is a cut-edge of the rest of the configuration and
``p`` otherwise.
"""

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels as K
from ._io import write_json

ENUM_CAP = 20
MATRIX_CAP = 14
DENSE_STATES = 4096


class CapExceeded(ValueError):
    """Raised when a graph is too large for exact treatment."""


def _check_cap(g, cap):
    if g.n_edges > cap:
        raise CapExceeded(f"{g.n_edges} edges exceeds the cap of {cap}")


def states_to_configs(n_edges):
    """``(2^E, E)`` array whose row ``s`` is the configuration of bitmask ``s``."""
    s = np.arange(1 << n_edges, dtype=np.int64)
    return ((s[:, None] >> np.arange(n_edges)) & 1).astype(np.uint8)


def open_counts(n_edges):
    """Number of open edges of every bitmask state."""
    s = np.arange(1 << n_edges, dtype=np.int64)
    out = np.zeros(s.size, dtype=np.int64)
    for e in range(n_edges):
        out += (s >> e) & 1
    return out


def config_to_state(cfg):
    cfg = np.asarray(cfg, dtype=np.int64)
    return int((cfg << np.arange(cfg.size)).sum())


def component_counts(g):
    _check_cap(g, ENUM_CAP)
    return K.all_component_counts(g.eu, g.ev, g.n_vertices)


@dataclass
class ExactMeasure:
    probs: np.ndarray
    log_partition: float
    n_edges: int

    @property
    def partition_function(self):
        return float(np.exp(self.log_partition))

    def marginal(self, e):
        s = np.arange(self.probs.size)
        return float(self.probs[(s >> e) & 1 == 1].sum())

    def open_count_law(self):
        """Law of the number of open edges."""
        return np.bincount(open_counts(self.n_edges), weights=self.probs, minlength=self.n_edges + 1)

    def to_json(self, path):
        width = max(1, (self.n_edges + 3) // 4)
        write_json(path, {"n_edges": self.n_edges, "log_partition": self.log_partition,
                          "probs": {format(s, f"0{width}x"): float(v) for s, v in enumerate(self.probs)}})


def exact_measure(g, p, q, cap=ENUM_CAP):
    """Random-cluster measure ``p^|S| (1-p)^|E-S| q^c(S) / Z`` on every subset."""
    _check_cap(g, cap)
    cc = K.all_component_counts(g.eu, g.ev, g.n_vertices)
    size = open_counts(g.n_edges)
    logw = size * np.log(p) + (g.n_edges - size) * np.log1p(-p) + cc * np.log(q)
    mx = logw.max()
    w = np.exp(logw - mx)
    z = w.sum()
    return ExactMeasure(w / z, float(mx + np.log(z)), g.n_edges)


def partition_function_dc(g, p, q):
    """Partition function by deletion-contraction:
    ``Z(G) = (1-p) Z(G - e) + p Z(G / e)``, a loop contributes a factor 1 and an
    edgeless graph on ``k`` vertices gives ``q^k``."""
    edges = tuple((int(a), int(b)) for a, b in zip(g.eu, g.ev))

    @lru_cache(maxsize=None)
    def z(nv, es):
        if not es:
            return q ** nv
        (a, b), rest = es[0], es[1:]
        if a == b:
            return z(nv, rest)
        deleted = z(nv, rest)
        lo, hi = min(a, b), max(a, b)
        relabel = lambda x: lo if x == hi else (x - 1 if x > hi else x)
        merged = tuple(sorted((min(relabel(u), relabel(v)), max(relabel(u), relabel(v))) for u, v in rest))
        return (1 - p) * deleted + p * z(nv - 1, merged)

    return z(g.n_vertices, tuple(sorted((min(a, b), max(a, b)) for a, b in edges)))


# -- distances ------------------------------------------------------------------

def tv_distance(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.shape != b.shape:
        raise ValueError("distributions must share a support")
    return 0.5 * float(np.abs(a - b).sum())


def l2_distance(a, b):
    """``sum_x (a(x)/b(x) - 1)^2 b(x)``: the squared L2(b) distance of the
    density ``a/b`` from 1."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.shape != b.shape:
        raise ValueError("distributions must share a support")
    zero = b <= 0
    if np.any(a[zero] > 0):
        raise ValueError("absolute continuity violated")
    nz = ~zero
    return float((((a[nz] / b[nz]) - 1.0) ** 2 * b[nz]).sum())


def l2_norm(a, b):
    """Square root of :func:`l2_distance`."""
    return float(np.sqrt(l2_distance(a, b)))


# -- generator ---------------------------------------------------------------------

def open_probabilities(g, p, q):
    """``(2^E, E)`` array: heat-bath open probability of edge ``e`` in state ``s``."""
    cc = K.all_component_counts(g.eu, g.ev, g.n_vertices)
    s = np.arange(1 << g.n_edges, dtype=np.int64)
    p_star = p / (q * (1 - p) + p)
    out = np.empty((s.size, g.n_edges))
    for e in range(g.n_edges):
        bit = 1 << e
        cut = cc[s & ~bit] != cc[s | bit]
        out[:, e] = np.where(cut, p_star, p)
    return out


def generator(g, p, q, cap=MATRIX_CAP, dense=None):
    """Rate matrix ``Q`` of the continuous-time heat-bath chain (sparse CSR
    unless ``dense`` or the state space is small)."""
    _check_cap(g, cap)
    n = 1 << g.n_edges
    s = np.arange(n, dtype=np.int64)
    pr = open_probabilities(g, p, q)
    rows, cols, vals = [], [], []
    for e in range(g.n_edges):
        is_open = (s >> e) & 1 == 1
        rate = np.where(is_open, 1.0 - pr[:, e], pr[:, e])
        rows.append(s)
        cols.append(s ^ (1 << e))
        vals.append(rate)
    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    keep = vals > 0
    off = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n))
    diag = -np.asarray(off.sum(axis=1)).ravel()
    Q = (off + sp.diags(diag)).tocsr()
    if dense or (dense is None and n <= DENSE_STATES):
        return Q.toarray()
    return Q


def _dense(Q):
    return Q.toarray() if sp.issparse(Q) else np.asarray(Q)


def stationarity_residual(Q, mu):
    return float(np.abs(Q.T @ mu).max()) if sp.issparse(Q) else float(np.abs(mu @ Q).max())


def reversibility_residual(Q, mu):
    """``max |mu(x) Q(x,y) - mu(y) Q(y,x)|``."""
    if sp.issparse(Q):
        F = sp.diags(mu) @ Q
        return float(abs(F - F.T).max()) if F.nnz else 0.0
    F = mu[:, None] * Q
    return float(np.abs(F - F.T).max())


def _symmetrized(Q, mu):
    r = np.sqrt(mu)
    if sp.issparse(Q):
        S = sp.diags(r) @ Q @ sp.diags(1.0 / r)
        return 0.5 * (S + S.T)
    S = r[:, None] * Q / r[None, :]
    return 0.5 * (S + S.T)


def spectral_gap(Q, mu, tol=1e-9):
    """Smallest non-zero eigenvalue of ``-Q`` computed on the symmetrized
    generator ``D^{1/2} Q D^{-1/2}``."""
    if reversibility_residual(Q, mu) > tol:
        raise ValueError("generator is not reversible with respect to mu")
    S = _symmetrized(Q, mu)
    if sp.issparse(S) and S.shape[0] > DENSE_STATES:
        vals = spla.eigsh(S, k=2, which="LA", return_eigenvectors=False, tol=1e-12)
        vals = np.sort(vals)[::-1]
        return float(-vals[1])
    vals = np.sort(sla.eigvalsh(_dense(S)))[::-1]
    return float(-vals[1])


def gap_eigenvector(Q, mu):
    """Right eigenfunction ``f`` of ``Q`` for the spectral gap, normalized in
    ``L^2(mu)``."""
    S = _dense(_symmetrized(Q, mu))
    vals, vecs = sla.eigh(S)
    order = np.argsort(vals)[::-1]
    v = vecs[:, order[1]]
    f = v / np.sqrt(mu)
    return float(-vals[order[1]]), f / np.sqrt((f * f * mu).sum())


def evolve_distribution(Q, init, times):
    """Distribution at each time in ``times`` (sorted, ``>= 0``) from the
    initial law ``init``."""
    times = np.asarray(times, float)
    out = np.empty((times.size, len(init)))
    cur = np.asarray(init, float).copy()
    last = 0.0
    QT = Q.T.tocsr() if sp.issparse(Q) else np.asarray(Q).T
    small = not sp.issparse(Q)
    for k, t in enumerate(times):
        dt = t - last
        if dt < 0:
            raise ValueError("times must be sorted")
        if dt > 0:
            cur = sla.expm(QT * dt) @ cur if small else spla.expm_multiply(QT * dt, cur)
            cur = np.clip(cur, 0.0, None)
            cur /= cur.sum()
        out[k] = cur
        last = t
    return out


def point_mass(n_states, state):
    v = np.zeros(n_states)
    v[state] = 1.0
    return v


def exact_dt(Q, mu, times, starts="extremes"):
    """Worst-case TV distance ``max_x ||P_x(X_t = .) - mu||`` over ``starts``:
    ``'extremes'`` (full and empty), ``'all'`` or a list of bitmasks.

    Returns ``(dt, l2)`` where ``l2`` is the printed squared L2 quantity for
    the same maximizing family.
    """
    n = len(mu)
    if starts == "extremes":
        starts = [0, n - 1]
    elif starts == "all":
        starts = range(n)
    times = np.asarray(times, float)
    dt = np.zeros(times.size)
    l2 = np.zeros(times.size)
    for x in starts:
        dist = evolve_distribution(Q, point_mass(n, x), times)
        for k in range(times.size):
            dt[k] = max(dt[k], tv_distance(dist[k], mu))
            l2[k] = max(l2[k], l2_distance(dist[k], mu))
    return dt, l2


def exact_dt_all_starts(Q, mu, times):
    """``d(t)`` maximized over every start, via the full transition matrices."""
    times = np.asarray(times, float)
    Qd = _dense(Q)
    out = np.empty(times.size)
    for k, t in enumerate(times):
        P = sla.expm(Qd * t)
        out[k] = 0.5 * np.abs(P - mu[None, :]).sum(axis=1).max()
    return out


def l2_contraction_check(Q, mu, init, s, t, gap=None, rtol=1e-9):
    """Whether ``||P_t - mu||_2 <= exp(-gap (t - s)) ||P_s - mu||_2`` for the
    chain started from ``init`` (a bitmask or a distribution), using the
    square-root norm. Returns ``(holds, lhs, rhs)``."""
    if s > t:
        raise ValueError("s must not exceed t")
    n = len(mu)
    init = point_mass(n, init) if np.isscalar(init) else np.asarray(init, float)
    gap = spectral_gap(Q, mu) if gap is None else gap
    ds, dt = evolve_distribution(Q, init, [s, t])
    lhs = l2_norm(dt, mu)
    rhs = np.exp(-gap * (t - s)) * l2_norm(ds, mu)
    return lhs <= rhs * (1 + rtol) + 1e-14, lhs, rhs


# -- discrete-time chain ------------------------------------------------------------

def discrete_kernel(g, p, q, cap=MATRIX_CAP):
    """Transition matrix of the discrete chain, built from the mark bands: a
    uniform edge is chosen, a mark below ``1-p`` closes it, a mark below
    ``1-p+p*`` opens it, and a higher mark opens it unless it is a cut-edge."""
    _check_cap(g, cap)
    n = 1 << g.n_edges
    cc = K.all_component_counts(g.eu, g.ev, g.n_vertices)
    p_star = p / (q * (1 - p) + p)
    close_band = 1 - p
    open_band = p_star
    top_band = p - p_star
    s = np.arange(n, dtype=np.int64)
    P = np.zeros((n, n))
    for e in range(g.n_edges):
        bit = 1 << e
        cut = cc[s & ~bit] != cc[s | bit]
        p_open = open_band + np.where(cut, 0.0, top_band)
        p_close = close_band + np.where(cut, top_band, 0.0)
        np.add.at(P, (s, s | bit), p_open / g.n_edges)
        np.add.at(P, (s, s & ~bit), p_close / g.n_edges)
    return P


def discrete_dt(P, mu, steps):
    """Worst-case TV distance of the discrete chain after each step count."""
    steps = np.asarray(steps, dtype=np.int64)
    out = np.empty(steps.size)
    cur = np.eye(P.shape[0])
    done = 0
    for k, t in enumerate(steps):
        cur = cur @ np.linalg.matrix_power(P, int(t - done))
        done = int(t)
        out[k] = 0.5 * np.abs(cur - mu[None, :]).sum(axis=1).max()
    return out


def discrete_gap(P, mu):
    S = np.sqrt(mu)[:, None] * P / np.sqrt(mu)[None, :]
    vals = np.sort(sla.eigvalsh(0.5 * (S + S.T)))[::-1]
    return float(1.0 - vals[1])


def write_curve_csv(path, times, dt, l2):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "dt", "l2"])
        for row in zip(times, dt, l2):
            w.writerow([repr(float(v)) for v in row])
