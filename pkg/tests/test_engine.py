import math

import numpy as np
import pytest

from regensim import distlib as D
from regensim.decomp import LambdaChoice, build_decomposition
from regensim.engine import EventOutcome, SimState, Simulation, StateFunctional, integrate_h
from regensim.errors import IntervalContainsEvent
from regensim.network import ClassSpec, NetworkConfig, shipped_config
from regensim.regen import Detector


def mm1(lam=0.5, mu=1.0):
    return NetworkConfig(1, (ClassSpec(0, D.Exponential(mu), D.Exponential(lam)),), np.zeros((1, 1)))


def tandem():
    return NetworkConfig(2, (ClassSpec(0, D.Exponential(2.0), D.Exponential(1.0)), ClassSpec(1, D.Exponential(2.0))),
                         np.array([[0.0, 1.0], [0.0, 0.0]]))


def table1_ladders(cfg, factors=(1.0,), classes=(1, 2)):
    return {k: [build_decomposition(cfg.classes[k].interarrival, LambdaChoice.scaled(f)) for f in factors]
            for k in classes}


def test_phi_start():
    cfg = shipped_config("table1_surrogate")
    sim = Simulation(cfg, table1_ladders(cfg), seed=1)
    assert sim.total == 1 and sim.counts == [1, 0, 0, 0]
    assert all(sim.in_exp_phase(k) for k in (1, 2))
    snap = sim.snapshot()
    assert snap.U_ne[1][0] == 0.0 and snap.U_ne[2][0] == 0.0
    assert snap.V[0] > 0 and snap.V[1:] == [0.0, 0.0, 0.0]


def test_phi_start_class1_mean():
    cfg = shipped_config("table1_surrogate")
    lad = table1_ladders(cfg)
    u1 = [Simulation(cfg, lad, seed=9, replication=r).next_arrival[0] for r in range(10_000)]
    assert abs(np.mean(u1) - 20.0) < 0.5


def test_step_single_arrival():
    sim = Simulation(mm1(), {}, seed=3, init="empty")
    delta = sim.next_arrival[0]
    out = sim.step()
    assert out == EventOutcome("arrival", 0, delta)
    assert sim.t_now == delta and sim.total == 1


def test_departures_win_ties():
    sim = Simulation(mm1(), {}, seed=3, init="empty")
    sim.step()
    # force a departure and the next arrival onto the same instant
    t = sim.t_now + 1.0
    sim.calendar = [(t, 0), (t, 1)]
    sim.next_arrival[0] = t
    sim.departure[0] = t
    assert sim.step().kind == "departure"
    assert sim.step().kind == "arrival"


def test_integrate_h():
    st = SimState(t_now=2.0, counts=[3], U_ne=[[10.0]], U_e=[[0.0]], V=[0.0])
    assert integrate_h(st, StateFunctional("total"), 2.0, 5.0) == 9.0
    assert integrate_h(st, StateFunctional("indicator", 10), 2.0, 5.0) == 0.0
    assert integrate_h(st, StateFunctional.parse("class:1"), 2.0, 5.0) == 9.0
    with pytest.raises(IntervalContainsEvent):
        integrate_h(st, StateFunctional(), 2.0, 20.0)


def test_functional_parse():
    assert str(StateFunctional.parse("class:2")) == "class:2"
    assert StateFunctional.parse("indicator:3").value([2, 2]) == 1.0
    with pytest.raises(ValueError):
        StateFunctional.parse("median")


def test_mm1_busy_fraction_and_mean():
    sim = Simulation(mm1(), {}, seed=11).run(1e6)
    assert abs(sim.busy_fraction()[0] - 0.5) < 0.01
    assert abs(sim.area / sim.t_now - 1.0) < 0.05


@pytest.mark.parametrize("cfg", [mm1(), tandem()], ids=["mm1", "tandem"])
def test_littles_law(cfg):
    sim = Simulation(cfg, {}, seed=5).run(1e6)
    L = sim.area / sim.t_now
    lam = sim.counters.exits / sim.t_now
    W = sim.counters.sojourn_total / sim.counters.exits
    assert L == pytest.approx(lam * W, rel=0.02)


def test_conservation_and_fifo():
    cfg = shipped_config("table1_surrogate")
    sim = Simulation(cfg, table1_ladders(cfg), seed=2, trace=True)
    for _ in range(20_000):
        sim.step()
        assert sim.counters.exogenous_arrivals + 1 == sim.counters.exits + sim.total
        assert sum(sim.counts) == sim.total
        for s, q in enumerate(sim.queues):
            # work conservation: idle iff empty
            assert (sim.departure[s] == math.inf) == (len(q) == 0)
            seqs = [c[2] for c in q]
            assert seqs == sorted(seqs)


def test_phase_entry_views_agree():
    cfg = shipped_config("table1_surrogate")
    sim = Simulation(cfg, table1_ladders(cfg, (1.0, 2.0)), seed=8)
    for _ in range(5000):
        sim.step()
        snap = sim.snapshot()
        for k in (1, 2):
            for j in range(2):
                entry = sim.phase_entry(k, j)
                assert sim.in_exp_phase(k, j) == (sim.t_now >= entry)
                assert snap.in_exp_phase(k, j) == sim.in_exp_phase(k, j)
                assert snap.U_ne[k][j] + snap.U_e[k][j] == pytest.approx(sim.next_arrival[k] - sim.t_now, abs=1e-9)
                if not sim.in_exp_phase(k, j):
                    assert snap.U_e[k][j] == sim.exp_parts[k][j]


def test_reproducible_traces():
    cfg = shipped_config("table1_surrogate")
    a = Simulation(cfg, table1_ladders(cfg), seed=21, trace=True).run(5e3)
    b = Simulation(cfg, table1_ladders(cfg), seed=21, trace=True).run(5e3)
    c = Simulation(cfg, table1_ladders(cfg), seed=22, trace=True).run(5e3)
    assert a.trace_rows == b.trace_rows
    assert a.trace_rows != c.trace_rows


def test_run_is_resumable():
    cfg = shipped_config("table1_surrogate")
    whole = Simulation(cfg, table1_ladders(cfg), seed=4, trace=True).run(2e4)
    split = Simulation(cfg, table1_ladders(cfg), seed=4, trace=True).run(7e3).run(2e4)
    assert whole.trace_rows == split.trace_rows
    assert whole.area == pytest.approx(split.area, rel=1e-12)


def test_trace_csv(tmp_path):
    sim = Simulation(mm1(), {}, seed=1, trace=True).run(50)
    path = tmp_path / "trace.csv"
    sim.write_trace(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,event,class,station,total_in_network"
    assert len(lines) == len(sim.trace_rows) + 1
    with pytest.raises(ValueError):
        Simulation(mm1(), {}, seed=1).write_trace(path)


def test_state_functionals_integrate_consistently():
    cfg = tandem()
    tot = Simulation(cfg, {}, seed=6, h=StateFunctional("total")).run(1e4)
    c1 = Simulation(cfg, {}, seed=6, h=StateFunctional("class", 0)).run(1e4)
    c2 = Simulation(cfg, {}, seed=6, h=StateFunctional("class", 1)).run(1e4)
    assert tot.area == pytest.approx(c1.area + c2.area, rel=1e-12)


def test_observers_see_consistent_area():
    d = Detector("primary")
    sim = Simulation(mm1(), {}, seed=1, observers=[d]).run(1e4)
    assert d.times[0] == 0.0 and d.areas[0] == 0.0
    assert np.all(np.diff(d.times) > 0) and np.all(np.diff(d.areas) >= 0)
    assert d.areas[-1] <= sim.area
