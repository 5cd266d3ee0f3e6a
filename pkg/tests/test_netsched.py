import pytest
from hypothesis import given
from hypothesis import strategies as st

from flexcomm.costmodel import NetParams
from flexcomm.netsched import (
    NetworkSchedule,
    SimClock,
    charge,
    network_changed,
    params_at,
    parse_trace,
    preset,
    read_trace,
    write_trace,
)


def c1():
    return NetworkSchedule.from_rows([(0, 1, 25), (13, 1, 1), (25, 50, 1), (37, 50, 25)])


def test_params_at_examples():
    s = c1()
    assert params_at(s, 30) == NetParams.from_ms_gbps(50, 1)
    assert params_at(s, 0) == NetParams.from_ms_gbps(1, 25)
    assert params_at(s, 1000) == NetParams.from_ms_gbps(50, 25)
    assert params_at(s, 12) == NetParams.from_ms_gbps(1, 25)
    assert params_at(s, 13) == NetParams.from_ms_gbps(1, 1)


def test_params_at_negative_epoch():
    with pytest.raises(ValueError):
        params_at(c1(), -1)


def test_schedule_validation():
    with pytest.raises(ValueError):
        NetworkSchedule(())
    with pytest.raises(ValueError):
        NetworkSchedule.from_rows([(1, 1, 1)])
    with pytest.raises(ValueError):
        NetworkSchedule.from_rows([(0, 1, 1), (5, 1, 2), (5, 1, 3)])
    with pytest.raises(ValueError):
        NetworkSchedule.from_rows([(0, 1, 0)])


def test_network_changed_examples():
    a, b, c = (NetParams.from_ms_gbps(*x) for x in ((1, 25), (1, 1), (50, 25)))
    assert network_changed(a, b)
    assert not network_changed(a, NetParams.from_ms_gbps(1, 25))
    assert network_changed(a, c)
    assert not network_changed(None, a)


def test_network_changed_relative_threshold():
    a = NetParams.from_ms_gbps(10, 10)
    assert not network_changed(a, NetParams.from_ms_gbps(10.5, 10), threshold=0.1)
    assert network_changed(a, NetParams.from_ms_gbps(12, 10), threshold=0.1)
    assert network_changed(a, NetParams.from_ms_gbps(10, 5), threshold=0.1)


def test_charge_examples():
    clk = SimClock()
    charge(clk, "sync", 0.05)
    charge(clk, "compute", 0.1)
    assert clk.now == pytest.approx(0.15)
    charge(clk, "io", 0.0)
    assert clk.now == pytest.approx(0.15)
    with pytest.raises(ValueError):
        charge(clk, "io", -1)
    with pytest.raises(ValueError):
        charge(clk, "teleport", 1.0)


@given(st.lists(st.tuples(st.sampled_from(["compute", "sync", "compression", "io", "exploration"]),
                          st.floats(0, 10)), max_size=50))
def test_clock_now_is_sum_and_nondecreasing(charges):
    clk = SimClock()
    prev = 0.0
    for cat, sec in charges:
        clk.charge(cat, sec)
        assert clk.now >= prev
        prev = clk.now
    assert clk.now == pytest.approx(sum(s for _, s in charges))


def test_preset_c1_default_and_scaled():
    assert preset("c1", 50).starts == [0, 13, 25, 37]
    assert preset("c1", 100).starts == [0, 26, 50, 74]
    assert [r[1:] for r in preset("c1").rows()] == [(1, 25), (1, 1), (50, 1), (50, 25)]


def test_preset_c2_layout():
    s = preset("c2", 50)
    assert s.starts == [0, 12, 20, 28, 36]
    assert params_at(s, 15) == NetParams.from_ms_gbps(10, 10)
    assert params_at(s, 22) == NetParams.from_ms_gbps(50, 1)
    assert params_at(s, 40) == NetParams.from_ms_gbps(1, 25)


def test_preset_errors():
    with pytest.raises(ValueError):
        preset("c1", 0)
    with pytest.raises(ValueError):
        preset("c9", 50)
    with pytest.raises(ValueError):
        preset("c1", 2)


def test_trace_round_trip(tmp_path):
    s = preset("c2", 80)
    p = tmp_path / "t.csv"
    write_trace(s, p, header="test")
    assert read_trace(p) == s


def test_parse_trace_comments_and_errors():
    s = parse_trace("# header\n0,1,25  # inline\n\n13, 1, 1\n")
    assert s.starts == [0, 13]
    with pytest.raises(ValueError, match="line 1"):
        parse_trace("0,1\n")
    with pytest.raises(ValueError, match="line 2"):
        parse_trace("0,1,1\nx,1,1\n")


@given(st.lists(st.integers(1, 20), min_size=0, max_size=6), st.integers(0, 200))
def test_params_at_piecewise_constant(gaps, epoch):
    starts = [0]
    for g in gaps:
        starts.append(starts[-1] + g)
    s = NetworkSchedule.from_rows([(e, 1 + i, 1 + i) for i, e in enumerate(starts)])
    expected = max(i for i, e in enumerate(starts) if e <= epoch)
    assert params_at(s, epoch) == s.segments[expected].net
