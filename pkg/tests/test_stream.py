import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import exact_p_bar
from rcdynamics.lattice import torus
from rcdynamics.stream import (RCParams, UpdateStream, generate, load_events, replica_seeds,
                               window_block)


# -- parameters ---------------------------------------------------------------------

def test_derived_parameters():
    prm = RCParams(0.5, 2.0)
    assert prm.p_star == pytest.approx(1 / 3)
    assert prm.p_bar == pytest.approx(float(exact_p_bar(Fraction(1, 2), 2)))
    assert float(exact_p_bar(Fraction(1, 2), 2)) == 0.4
    assert RCParams(0.04, 2.0).delta == pytest.approx(5.0)
    assert RCParams(0.04, 2.0).tau(3) == pytest.approx(15.0)


def test_burn_in_time():
    prm = RCParams(0.1, 2.0, d=2)
    assert prm.p_init == pytest.approx(0.3)
    assert prm.t_init == pytest.approx(math.log(4.5))
    assert prm.t_init == pytest.approx(1.5041, abs=1e-4)
    t = prm.t_init
    assert math.exp(-t) + prm.p * (1 - math.exp(-t)) == pytest.approx(prm.p_init)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(1.0, 10.0))
def test_p_star_bounds(p, q):
    prm = RCParams(p, q)
    assert 0 < prm.p_star <= p + 1e-15
    assert prm.close_below <= prm.open_below <= 1.0
    assert 0 < prm.p_bar <= 1.0


def test_q_one_has_empty_top_band():
    prm = RCParams(0.3, 1.0)
    assert prm.open_below == pytest.approx(1.0)


@pytest.mark.parametrize("p,q", [(0.0, 2.0), (1.0, 2.0), (0.5, 0.5)])
def test_invalid_parameters(p, q):
    with pytest.raises(ValueError):
        RCParams(p, q)


# -- stream ---------------------------------------------------------------------------

def test_determinism_and_prefix_agreement():
    g = torus(2, 4)
    a = generate(g, 7.5, 42).events(0, 7.5)
    b = generate(g, 7.5, 42).events(0, 7.5)
    c = generate(g, 12.0, 42).events(0, 7.5)
    for x, y in ((a, b), (a, c)):
        assert np.array_equal(x.edges, y.edges) and np.array_equal(x.times, y.times)
        assert np.array_equal(x.marks, y.marks)
    d = generate(g, 7.5, 43).events(0, 7.5)
    assert not np.array_equal(a.times[:5], d.times[:5])


def test_lazy_equals_materialized():
    a = UpdateStream(30, 6.3, 9, materialize=True)
    b = UpdateStream(30, 6.3, 9, materialize=False)
    for t1, t2 in ((0, 6.3), (1.2, 3.7), (2.0, 2.0), (5.5, 6.3)):
        x, y = a.events(t1, t2), b.events(t1, t2)
        assert np.array_equal(x.times, y.times) and np.array_equal(x.edges, y.edges)


def test_events_half_open_and_sorted():
    s = UpdateStream(50, 5.0, 1)
    blk = s.events(1.0, 3.0)
    assert np.all(blk.times > 1.0) and np.all(blk.times <= 3.0)
    assert np.all(np.diff(blk.times) > 0)
    assert np.all((blk.marks >= 0) & (blk.marks < 1))


def test_event_rate_and_void_probability():
    # p = 0.04 gives windows of length 5; 10^6 edge-windows
    prm = RCParams(0.04, 2.0)
    n_edges, windows = 10_000, 100
    s = UpdateStream(n_edges, prm.tau(windows), 5, materialize=False)
    empty = 0
    total = 0
    for i in range(windows):
        blk = s.events(prm.tau(i), prm.tau(i + 1))
        total += len(blk)
        empty += n_edges - np.unique(blk.edges).size
    trials = n_edges * windows
    assert total / trials == pytest.approx(prm.delta, rel=3 * math.sqrt(prm.delta / trials) / prm.delta)
    f = empty / trials
    exp = math.exp(-5.0)
    assert exp == pytest.approx(0.006738, abs=1e-6)
    assert abs(f - exp) <= 3 * math.sqrt(exp * (1 - exp) / trials)


def test_slices_and_last_update():
    s = UpdateStream(8, 20.0, 3)
    rng = np.random.default_rng(0)
    for e in range(8):
        assert s.slice(4.0, 4.0, e) == []
        cuts = np.sort(np.concatenate([[0.0, 20.0], rng.uniform(0, 20, 4)]))
        pieces = [ev for a, b in zip(cuts[:-1], cuts[1:]) for ev in s.slice(a, b, e)]
        times, marks = s.edge_events(e)
        assert [ev.time for ev in pieces] == times.tolist()
        assert s.last_update(e, 20.0).time == times[-1]
        assert s.last_update(e, times[0] / 2) is None
    # scan oracle on random queries
    all_ev = s.events(0, 20.0)
    for _ in range(2000):
        e = int(rng.integers(8))
        t = float(rng.uniform(0, 20))
        sel = (all_ev.edges == e) & (all_ev.times <= t)
        got = s.last_update(e, t)
        if not sel.any():
            assert got is None
        else:
            k = np.flatnonzero(sel)[-1]
            assert got.time == all_ev.times[k] and got.mark == all_ev.marks[k]
        sl = s.slice(0.0, t, e)
        if sl:
            assert sl[-1] == got


def test_lazy_stream_slice_matches():
    a = UpdateStream(6, 4.0, 8, materialize=False)
    b = UpdateStream(6, 4.0, 8)
    assert a.slice(0.5, 3.5, 2) == b.slice(0.5, 3.5, 2)


def test_interval_errors():
    s = UpdateStream(4, 2.0, 0)
    with pytest.raises(ValueError):
        s.events(1.5, 1.0)
    with pytest.raises(ValueError):
        s.events(0.0, 3.0)
    with pytest.raises(ValueError):
        UpdateStream(4, 0.0, 0)


def test_dump_roundtrip(tmp_path):
    s = UpdateStream(12, 3.0, 4)
    path = tmp_path / "ev.bin"
    s.dump(path)
    blk = load_events(path)
    ref = s.events(0, 3.0)
    assert np.array_equal(blk.edges, ref.edges) and np.array_equal(blk.times, ref.times)
    assert np.array_equal(blk.marks, ref.marks)
    assert path.stat().st_size == 20 * len(ref)


def test_replica_seeds_distinct_and_stable():
    a = replica_seeds(7, 50)
    assert len(set(a)) == 50 and a == replica_seeds(7, 50)
    assert a[:10] == replica_seeds(7, 10)


def test_window_block_length():
    blk = window_block(100, 2.5, 1)
    assert np.all(blk.times <= 2.5)
