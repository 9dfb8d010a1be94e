import math

import numpy as np
import pytest
from scipy import stats

from conftest import ListStream
from rcdynamics.dynamics import evolve
from rcdynamics.infoperc import (BLUE, GREEN, RED, assemble_clusters, branching_stats, build_history,
                                 check_diagram, classify_windows, diagram_record, dump_diagram,
                                 mean_closure_size, reconstruction_check, red_probability_curve,
                                 sandwich_Z, xi_theta)
from rcdynamics.lattice import Graph, torus
from rcdynamics.stream import RCParams, generate, replica_seeds

PRM = RCParams(0.5, 2.0, delta=1.0)   # bands: close < 0.5 <= open < 5/6 <= cut-test


def path_scenario():
    """Path of five edges, three unit windows.

    Edge 0 never updates; edge 1 dies by an oblivious top-window update;
    edges 3 and 4 open with non-oblivious marks so their histories grow onto
    edge 2 and then die in the middle window.
    """
    g = Graph.path(5)
    events = [(1, 2.5, 0.2), (2, 2.4, 0.3), (3, 2.6, 0.9), (4, 2.7, 0.95)]
    events += [(e, 1.5, 0.1) for e in (1, 2, 3, 4)]
    return g, ListStream(5, 3.0, events)


def test_hand_built_colours():
    g, stream = path_scenario()
    d = build_history(g, np.arange(5), stream, PRM, 3)
    assert d.levels[0][1] == {0} and d.is_red(0)
    assert d.levels[1][2] == frozenset()
    assert d.levels[3][2] == {2, 3, 4} == d.levels[4][2]
    assert not d.levels[3][1] and not d.levels[4][1]
    part = assemble_clusters(d)
    by_edge = {int(e): (tuple(c.tolist()), col) for c, col in zip(part.clusters, part.colors) for e in c}
    assert by_edge[0] == ((0,), RED)
    assert by_edge[1] == ((1,), BLUE)
    assert by_edge[3] == ((2, 3, 4), GREEN)
    assert part.counts() == {RED: 1, BLUE: 1, GREEN: 3}
    assert all(v == 0 for v in check_diagram(d).values())


def test_hand_built_reconstruction():
    g, stream = path_scenario()
    part = assemble_clusters(build_history(g, np.arange(5), stream, PRM, 3))
    ok, red = reconstruction_check(g, part, stream, PRM, 3, g.full(), g.empty())
    assert ok and red
    ok, red = reconstruction_check(g, part, stream, PRM, 3, g.full(), g.full())
    assert ok and not red


def test_no_updates_gives_red_singletons():
    g = torus(2, 3)
    stream = ListStream(g.n_edges, 5.0, [])
    d = build_history(g, np.arange(g.n_edges), stream, PRM, 5)
    for e in range(g.n_edges):
        assert all(d.levels[e][j] == {e} for j in range(1, 6))
    part = assemble_clusters(d)
    assert len(part.clusters) == g.n_edges and set(part.colors) == {RED}


def test_oblivious_top_window_gives_blue_singletons():
    g = torus(2, 3)
    stream = ListStream(g.n_edges, 4.0, [(e, 3.5, 0.2) for e in range(g.n_edges)])
    part = assemble_clusters(build_history(g, np.arange(g.n_edges), stream, PRM, 4))
    assert set(part.colors) == {BLUE} and len(part.clusters) == g.n_edges


def test_cluster_partition_covers_edges():
    prm = RCParams(0.04, 2.0)
    g = torus(2, 6)
    for s in replica_seeds(1, 3):
        stream = generate(g, prm.tau(8), s)
        part = assemble_clusters(build_history(g, np.arange(g.n_edges), stream, prm, 8))
        c = part.counts()
        assert c[RED] + c[BLUE] + c[GREEN] == g.n_edges
        assert sorted(np.concatenate(part.clusters).tolist()) == list(range(g.n_edges))


def test_assembly_needs_all_edges():
    g, stream = path_scenario()
    with pytest.raises(ValueError):
        assemble_clusters(build_history(g, [0, 1], stream, PRM, 3))


def test_build_history_argument_checks():
    g, stream = path_scenario()
    with pytest.raises(ValueError):
        build_history(g, [0], stream, PRM, 1)
    with pytest.raises(ValueError):
        build_history(g, [0], stream, PRM, 5)


# -- deterministic properties on random diagrams ------------------------------------------

def test_random_diagrams_zero_violations():
    prm = RCParams(0.04, 2.0)
    g = torus(2, 8)
    total = {}
    for s in replica_seeds(7, 10):
        stream = generate(g, prm.tau(20), s)
        d = build_history(g, np.arange(g.n_edges), stream, prm, 20)
        for k, v in check_diagram(d).items():
            total[k] = total.get(k, 0) + v
        for e in (0, 17, 100):
            for k, v in check_diagram(d, [e]).items():
                total[k] += v
        part = assemble_clusters(d)
        ok, _ = reconstruction_check(g, part, stream, prm, 20, g.full(), g.empty())
        assert ok
    assert all(v == 0 for v in total.values()), total


def test_dead_history_stays_dead_and_xi_below_theta():
    prm = RCParams(0.1, 2.0)
    g = torus(2, 6)
    stream = generate(g, prm.tau(10), 3)
    d = build_history(g, np.arange(g.n_edges), stream, prm, 10)
    wc = classify_windows(d)
    for i in range(1, 8):
        xi, theta = xi_theta(d.cache, wc, i)
        assert np.all(xi <= theta)
    for e in range(g.n_edges):
        lv = d.levels[e]
        for j in range(9, 0, -1):
            if not lv[j + 1]:
                assert not lv[j]
    one = build_history(g, [5], stream, prm, 10)
    wc1 = classify_windows(one, [5])
    for i in range(1, 8):
        if not wc1.W[i + 2].any():
            assert sandwich_Z(one, i, [5], wc1)
            assert not wc1.W[i].any()


# -- branching -----------------------------------------------------------------------------

def test_branching_counts():
    g, stream = path_scenario()
    d = build_history(g, np.arange(5), stream, PRM, 3)
    a, sigma = branching_stats(d, [1])
    assert a[3] == 1 and a[2] == 0 and a[1] == 0
    a, sigma = branching_stats(d, [0])
    assert list(a[1:]) == [1, 1, 1] and sigma == 2
    a, _ = branching_stats(d, [0, 1, 3])
    assert a[3] == 3


def test_branching_mean_dominated_by_closure_size():
    prm = RCParams(0.01, 2.0)
    g = torus(2, 10)
    seed_edge = 0
    vals = []
    for s in replica_seeds(2, 1500):
        stream = generate(g, prm.tau(3), s, materialize=False)
        d = build_history(g, [seed_edge], _Materialized(stream), prm, 3)
        vals.append(branching_stats(d, [seed_edge])[0][2])
    vals = np.array(vals, float)
    p1 = 2 * math.sqrt(prm.p)
    ey = mean_closure_size(g, 2 * p1, 4000, seed=1, edge=seed_edge)
    assert vals.mean() <= ey + 3 * vals.std() / math.sqrt(vals.size)


class _Materialized:
    """Wrap a lazy stream so window queries reuse one event list."""

    def __init__(self, stream):
        self._blk = stream.events(0.0, stream.horizon)
        self.n_edges = stream.n_edges
        self.horizon = stream.horizon
        self.materialized = True

    def events(self, t1, t2):
        lo = np.searchsorted(self._blk.times, t1, side="right")
        hi = np.searchsorted(self._blk.times, t2, side="right")
        return type(self._blk)(self._blk.edges[lo:hi], self._blk.times[lo:hi], self._blk.marks[lo:hi])


# -- red probability ---------------------------------------------------------------------------

def test_red_probability_lower_bound_m2():
    prm = RCParams(0.3, 2.0)
    g = torus(2, 5)
    curve = red_probability_curve(g, prm, 0, [2], 3000, seed=0, method="direct")
    void = math.exp(-prm.delta)
    assert curve.ci_hi[0] >= void


def test_red_probability_methods_agree_and_decrease():
    prm = RCParams(0.04, 2.0)
    g = torus(2, 8)
    m_list = [2, 3, 4, 5]
    direct = red_probability_curve(g, prm, 0, m_list, 4000, seed=1, method="direct")
    split = red_probability_curve(g, prm, 0, m_list, 4000, seed=2, method="splitting")
    for k in range(len(m_list)):
        assert direct.ci_lo[k] <= split.ci_hi[k] and split.ci_lo[k] <= direct.ci_hi[k]
    assert np.all(np.diff(split.probability) <= 1e-12)
    assert np.all(np.diff(direct.probability) <= np.maximum(direct.ci_hi - direct.ci_lo, 0)[1:])


def test_red_probability_bad_method():
    with pytest.raises(ValueError):
        red_probability_curve(torus(2, 4), RCParams(0.1, 2.0), 0, [2], 10, method="nope")


# -- blue marginal ------------------------------------------------------------------------------

def test_blue_edges_are_bernoulli_p_bar():
    prm = RCParams(0.5, 2.0, d=1)
    assert prm.p_bar == pytest.approx(0.4)
    g = torus(1, 200)
    m = 4
    ones = total = 0
    for s in replica_seeds(3, 60):
        stream = generate(g, prm.tau(m), s)
        part = assemble_clusters(build_history(g, np.arange(g.n_edges), stream, prm, m))
        x = evolve(g, g.full(), prm, stream, prm.tau(1), prm.tau(m))
        blue = part.mask(BLUE)
        ones += int(x[blue].sum())
        total += int(blue.sum())
    assert total > 500
    chi2 = stats.chisquare([ones, total - ones], [total * 0.4, total * 0.6])
    assert chi2.pvalue > 0.01


# -- serialization ------------------------------------------------------------------------------

def test_diagram_dump(tmp_path):
    import json

    g, stream = path_scenario()
    d = build_history(g, np.arange(5), stream, PRM, 3)
    part = assemble_clusters(d)
    dump_diagram(tmp_path / "d.json", d, part)
    rec = json.loads((tmp_path / "d.json").read_text())
    assert rec == json.loads(json.dumps(diagram_record(d, part)))
    assert rec["levels"][1]["W"] == [0, 2, 3, 4]
    assert {c["color"] for c in rec["clusters"]} == {RED, BLUE, GREEN}
