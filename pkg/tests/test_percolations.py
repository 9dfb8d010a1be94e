import math

import numpy as np
import pytest

from conftest import ListStream
from rcdynamics.dynamics import spd_evolve
from rcdynamics.lattice import torus
from rcdynamics.percolations import (NON_OBLIVIOUS, NO_UPDATE, OBLIVIOUS, WindowCache, compute_window,
                                     connectivity_decay, domination_bounds, domination_report,
                                     expected_frequencies, sandwich_violations, summarize_block,
                                     write_domination_csv)
from rcdynamics.stream import EventBlock, RCParams, generate, replica_seeds


def test_summary_rules():
    prm = RCParams(0.04, 2.0)
    blk = EventBlock(np.array([1, 2, 2]), np.array([0.5, 1.0, 2.0]), np.array([0.999, 0.97, 0.1]))
    ev = summarize_block(4, blk, prm)
    assert (ev.nup[0], ev.eemp[0], ev.env[0]) == (1, 0, 1)
    assert (ev.nup[1], ev.eemp[1], ev.env[1]) == (0, 1, 1)
    assert ev.eemp[2] == 1 and ev.last_mark[2] == 0.1
    assert ev.last_class[0] == NO_UPDATE and ev.last_class[2] == OBLIVIOUS
    assert ev.last_class[1] == NON_OBLIVIOUS


def spd_open_somewhere(g, start, i0, prm, stream, t1, t2):
    """Whether the percolation dynamics started at ``tau_i0`` is open at some
    time in ``[t1, t2]``, scanning every event time."""
    blk = stream.events(t1, t2)
    out = spd_evolve(g, start, i0, prm, stream, t1).astype(bool)
    for t in blk.times:
        out |= spd_evolve(g, start, i0, prm, stream, t).astype(bool)
    return out


def test_window_percolations_match_spd_scans():
    g = torus(2, 5)
    prm = RCParams(0.2, 2.0)
    for s in replica_seeds(4, 5):
        stream = generate(g, prm.tau(4), s)
        cache = WindowCache(g, stream, prm)
        for i in (1, 2, 3):
            wp = cache.window(i)
            t1, t2 = prm.tau(i), prm.tau(i + 1)
            eemp = spd_open_somewhere(g, "empty", i, prm, stream, t1, t2)
            eful = spd_open_somewhere(g, "full", i - 1, prm, stream, t1, t2)
            nup = np.ones(g.n_edges, bool)
            nup[stream.events(t1, t2).edges] = False
            assert np.array_equal(wp.eemp.astype(bool), eemp)
            assert np.array_equal(wp.nup.astype(bool), nup)
            assert np.array_equal(wp.env.astype(bool), eemp | nup)
            assert np.array_equal(wp.eful.astype(bool), eful)


def test_window_zero_needs_start():
    g = torus(2, 4)
    prm = RCParams(0.2, 2.0)
    stream = generate(g, prm.tau(2), 0)
    with pytest.raises(ValueError):
        WindowCache(g, stream, prm).window(0)
    wp = compute_window(g, stream, prm, 0, x0=g.full())
    assert wp.eful.all()


def test_horizon_check():
    g = torus(2, 4)
    prm = RCParams(0.2, 2.0)
    with pytest.raises(ValueError):
        WindowCache(g, generate(g, prm.tau(1), 0), prm).events(2)


def test_hand_built_window():
    prm = RCParams(0.25, 2.0, delta=1.0)
    g = torus(2, 3)
    stream = ListStream(g.n_edges, 3.0, [(0, 1.5, 0.9), (1, 1.2, 0.1), (1, 0.4, 0.95)])
    wp = WindowCache(g, stream, prm).window(1)
    assert wp.eemp[0] == 1 and wp.eemp[1] == 0 and wp.nup[2] == 1
    # edge 1: last update in window 0 opened it, so it is full at tau_1
    assert wp.eful[1] == 1


def test_closed_form_frequencies():
    f = expected_frequencies(RCParams(0.04, 2.0))
    assert f["eemp"] == pytest.approx(1 - math.exp(-0.2))
    assert f["eemp"] == pytest.approx(0.18127, abs=1e-5)
    assert f["nup"] == pytest.approx(math.exp(-5))
    b = domination_bounds(RCParams(0.04, 2.0))
    assert b == {"eemp": pytest.approx(0.2), "nup": pytest.approx(0.2), "env": pytest.approx(0.4),
                 "eful": pytest.approx(0.6)}
    for k in f:
        assert f[k] <= b[k]


def test_domination_report_frequencies():
    prm = RCParams(0.04, 2.0)
    g = torus(2, 20)
    rows, sandwich = domination_report(g, prm, 10, 20, seed=3, sandwich=False)
    trials = rows[0]["trials"]
    assert trials == 20 * 10 * g.n_edges
    for r in rows:
        assert abs(r["frequency"] - r["exact"]) <= 4 * math.sqrt(r["exact"] * (1 - r["exact"]) / trials) + 1e-12
        assert r["frequency"] <= r["bound"] + 3 * r["sigma"]


def test_sandwich_zero_violations():
    prm = RCParams(0.1, 2.0)
    g = torus(2, 6)
    total = {"upper_env": 0, "upper_spd": 0}
    rng = np.random.default_rng(0)
    for s in replica_seeds(5, 30):
        stream = generate(g, prm.tau(6), s)
        x0 = g.full() if s % 2 else (rng.random(g.n_edges) < 0.5).astype(np.uint8)
        for k, v in sandwich_violations(g, prm, stream, x0, 5).items():
            total[k] += v
    assert total == {"upper_env": 0, "upper_spd": 0}


def test_report_csv(tmp_path):
    prm = RCParams(0.04, 2.0)
    rows, _ = domination_report(torus(2, 4), prm, 2, 2)
    write_domination_csv(tmp_path / "d.csv", rows)
    header = (tmp_path / "d.csv").read_text().splitlines()[0]
    assert header.startswith("model,p,delta,frequency,bound,z_score")


def test_connectivity_decay():
    prm = RCParams(0.04, 2.0)
    fit = connectivity_decay(torus(2, 32), prm, 100, list(range(1, 11)), seed=1)
    assert fit.slope < 0 and fit.r2 > 0.9
    assert np.all(np.diff(fit.probabilities[fit.probabilities > 0]) <= 0)
    zero = connectivity_decay(torus(2, 8), prm, 5, [0, 1], seed=1)
    assert zero.probabilities[0] == 1.0


def test_connectivity_small_p():
    prm = RCParams(1e-4, 2.0)
    fit = connectivity_decay(torus(2, 8), prm, 20, [1, 2, 3, 4], seed=2, window=1)
    assert np.all(fit.probabilities < 0.05)
