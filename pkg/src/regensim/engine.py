"""Discrete-event core for single-server FIFO multiclass networks.

The state is ``Y(t) = (Q, U, V)``. Each pending exogenous arrival is one
calendar entry at its absolute time; alongside it we keep the exponential
part of that interarrival time (one value per rung of a rate ladder), so
the split clocks are derived views::

    remaining = next_arrival[k] - t
    U_e[k][j] = min(remaining, exp_parts[k][j])
    U_ne[k][j] = remaining - U_e[k][j]

Class ``k`` is in exponential phase on rung ``j`` iff ``U_ne[k][j] == 0``.

Calendar ties: departures before arrivals, then lower class index first.
"""

from __future__ import annotations

import csv
import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .decomp import Decomposition, DecompStreams, sample_ladder
from .errors import IntervalContainsEvent
from .network import NetworkConfig
from .rng import Purpose, buffered, substream

INF = math.inf


# ---------------------------------------------------------------------------
# state functionals


@dataclass(frozen=True)
class StateFunctional:
    """``h`` as a function of queue contents: ``total``, ``class`` (arg = class) or ``indicator`` (arg = c)."""

    kind: str = "total"
    arg: float = 0

    def __post_init__(self):
        if self.kind not in ("total", "class", "indicator"):
            raise ValueError(f"unknown state functional {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "StateFunctional":
        """``total``, ``class:k`` (1-based) or ``indicator:c``."""
        if text == "total":
            return cls()
        name, _, val = text.partition(":")
        if name == "class":
            return cls("class", int(val) - 1)
        if name == "indicator":
            return cls("indicator", float(val))
        raise ValueError(f"cannot parse h={text!r}")

    def __str__(self):
        if self.kind == "total":
            return "total"
        if self.kind == "class":
            return f"class:{int(self.arg) + 1}"
        return f"indicator:{self.arg:g}"

    def value(self, counts: Sequence[int]) -> float:
        if self.kind == "total":
            return float(sum(counts))
        if self.kind == "class":
            return float(counts[int(self.arg)])
        return 1.0 if sum(counts) > self.arg else 0.0


TotalQueue = StateFunctional("total")


# ---------------------------------------------------------------------------
# state snapshots


@dataclass
class SimState:
    """Snapshot of ``Y(t)`` with explicit clock views.

    ``U_ne[k][j]`` and ``U_e[k][j]`` are the non-exponential and exponential
    remaining parts of exogenous class ``k`` on ladder rung ``j`` (a class
    that is not decomposed has ``U_e == 0`` and its whole remaining time in
    ``U_ne``). ``V[i]`` is the residual service at station ``i`` (0 if idle).
    """

    t_now: float
    counts: list[int]
    U_ne: list[list[float]]
    U_e: list[list[float]]
    V: list[float] = field(default_factory=list)
    queues: list[list[int]] = field(default_factory=list)

    @property
    def L(self) -> int:
        return len(self.U_ne)

    @property
    def total(self) -> int:
        return sum(self.counts)

    def remaining(self, k: int) -> float:
        return self.U_ne[k][0] + self.U_e[k][0]

    def in_exp_phase(self, k: int, level: int = 0) -> bool:
        return self.U_ne[k][level] == 0.0

    @property
    def next_event(self) -> float:
        pending = [self.remaining(k) for k in range(self.L)] + [v for v in self.V if v > 0]
        return self.t_now + min(pending, default=INF)


def integrate_h(state, h: StateFunctional, t_from: float, t_to: float) -> float:
    """Exact integral of the piecewise-constant ``h`` over ``[t_from, t_to]`` with no event inside."""
    if t_to < t_from:
        raise ValueError("t_to must not precede t_from")
    nxt = state.next_event
    if t_from < nxt < t_to:
        raise IntervalContainsEvent(f"event at {nxt} inside ({t_from}, {t_to})")
    return h.value(state.counts) * (t_to - t_from)


class EventOutcome(NamedTuple):
    kind: str  # "arrival" | "departure"
    cls: int
    t_event: float
    to_class: int | None = None  # departures: next class, None on exit


# ---------------------------------------------------------------------------


@dataclass
class RunCounters:
    events: int = 0
    exogenous_arrivals: int = 0
    exits: int = 0
    sojourn_total: float = 0.0


class Simulation:
    """One replication of the network.

    ``ladders`` maps each decomposed exogenous class to its rate ladder
    (ascending list of decompositions, all of the same length ``levels``);
    classes without an entry draw their interarrival times whole.
    ``observers`` are regeneration detectors (see :mod:`regensim.regen`);
    they are consulted only when an arrival finds the network empty or a
    departure empties it.
    """

    def __init__(
        self,
        cfg: NetworkConfig,
        ladders: dict[int, list[Decomposition]],
        *,
        seed: int = 0,
        replication: int = 0,
        h: StateFunctional = TotalQueue,
        observers: Sequence = (),
        trace: bool = False,
        init: str = "phi",
    ):
        self.cfg = cfg
        self.K, self.L = cfg.K, cfg.L
        self.levels = max((len(v) for v in ladders.values()), default=1)
        for k, lad in ladders.items():
            if len(lad) != self.levels:
                raise ValueError("all ladders need the same number of rungs")
            if not 0 <= k < self.L:
                raise ValueError(f"class {k + 1} has no exogenous arrivals to decompose")
        self.ladders = ladders
        self.h = h
        self.seed, self.replication = seed, replication
        self.observers = list(observers)
        self.trace_rows: list[tuple] | None = [] if trace else None

        K, d = self.K, cfg.stations
        self.station_of = cfg.station_of
        self.t_now = 0.0
        self.counts = [0] * K
        self.total = 0
        self.queues: list[deque] = [deque() for _ in range(d)]
        self.departure = [INF] * d
        self.next_arrival = [INF] * K
        self.exp_parts = [[0.0] * self.levels for _ in range(K)]
        self.ia_total = [INF] * K
        self.draw_time = [0.0] * K
        self.busy = [0.0] * d
        self.area = 0.0
        self.seq = 0
        self.counters = RunCounters()
        self.calendar: list[tuple[float, int]] = []
        self._make_streams()
        if init == "phi":
            self._init_from_phi()
        elif init == "empty":
            self._init_empty()
        else:
            raise ValueError(f"unknown init {init!r}")
        self.hval = self.h.value(self.counts)
        for obs in self.observers:
            obs.start(self)

    # -- randomness -----------------------------------------------------------
    def _stream(self, cls: int, purpose: Purpose) -> np.random.Generator:
        return substream(self.seed, self.replication, cls, purpose)

    def _make_streams(self):
        cfg, K, L = self.cfg, self.K, self.L
        self._arr_it = []
        for k in range(L):
            spec = cfg.classes[k]
            if k in self.ladders:
                streams = DecompStreams(*(self._stream(k, p) for p in
                                          (Purpose.MIXTURE, Purpose.E, Purpose.Z, Purpose.RESIDUAL, Purpose.LADDER)))
                self._arr_it.append(buffered(_ladder_block(self.ladders[k], streams)))
            else:
                g = self._stream(k, Purpose.ARRIVAL)
                zeros = [0.0] * self.levels
                fam = spec.interarrival
                self._arr_it.append(buffered(lambda n, fam=fam, g=g, z=zeros: [
                    (x, z) for x in np.asarray(fam.sample(g, n), dtype=float).tolist()]))
        self._svc_it = []
        self._route_it = []
        for k in range(K):
            g = self._stream(k, Purpose.SERVICE)
            fam = cfg.classes[k].service
            self._svc_it.append(buffered(lambda n, fam=fam, g=g: np.asarray(fam.sample(g, n), dtype=float).tolist()))
            row = cfg.routing[k]
            exit_p = max(0.0, 1.0 - row.sum())
            targets = np.flatnonzero(row > 0)
            if len(targets) == 0:
                self._route_it.append(buffered(lambda n: [-1] * n, block=1 << 16))
                continue
            probs = np.append(row[targets], exit_p)
            probs = probs / probs.sum()
            choices = np.append(targets, -1)
            g = self._stream(k, Purpose.ROUTING)
            self._route_it.append(buffered(lambda n, g=g, p=probs, c=choices: c[g.choice(len(c), size=n, p=p)].tolist()))

    def _set_clock(self, k: int, t: float, total: float, exps: list[float]):
        self.draw_time[k] = t
        self.next_arrival[k] = t + total
        self.exp_parts[k] = exps
        self.ia_total[k] = total
        heapq.heappush(self.calendar, (t + total, self.K + k))

    def _init_empty(self):
        for k in range(self.L):
            total, exps = next(self._arr_it[k])
            self._set_clock(k, 0.0, total, exps)

    def _init_from_phi(self):
        """Start in D~: one class-1 customer in service, classes 2..L in exponential phase."""
        if self.L == 0:
            raise ValueError("no exogenous class to start from")
        total, exps = next(self._arr_it[0])
        self._set_clock(0, 0.0, total, exps)
        for k in range(1, self.L):
            if k in self.ladders:
                # residual clock entirely exponential on the base rung
                g = self._stream(k, Purpose.INIT)
                lad = self.ladders[k]
                streams = DecompStreams(g, g, g, g, g)
                n = 1
                exp = _exp_ladder(lad, streams, n)[0]
                self._set_clock(k, 0.0, exp[0], exp)
            else:
                total, exps = next(self._arr_it[k])
                self._set_clock(k, 0.0, total, exps)
        self._enqueue(0, 0.0)

    # -- event handling -------------------------------------------------------
    def _start_service(self, s: int, t: float):
        c = self.queues[s][0][0]
        svc = next(self._svc_it[c])
        self.busy[s] += svc
        self.departure[s] = t + svc
        heapq.heappush(self.calendar, (t + svc, c))

    def _enqueue(self, k: int, t_entry: float, t: float | None = None):
        t = t_entry if t is None else t
        s = self.station_of[k]
        q = self.queues[s]
        q.append((k, t_entry, self.seq))
        self.seq += 1
        self.counts[k] += 1
        self.total += 1
        if len(q) == 1:
            self._start_service(s, t)

    def run(self, horizon: float, max_events: int | None = None) -> "Simulation":
        """Advance to ``horizon`` (or until ``max_events`` more events have been handled)."""
        cal = self.calendar
        heappop, heappush = heapq.heappop, heapq.heappush
        K = self.K
        counts, queues, station_of = self.counts, self.queues, self.station_of
        departure, busy = self.departure, self.busy
        next_arrival, exp_parts, ia_total, draw_time = self.next_arrival, self.exp_parts, self.ia_total, self.draw_time
        arr_it, svc_it, route_it = self._arr_it, self._svc_it, self._route_it
        observers = self.observers
        trace = self.trace_rows
        hkind = self.h.kind
        hclass = int(self.h.arg) if hkind == "class" else 0
        hthresh = self.h.arg
        area, hval, tnow, total, seq = self.area, self.hval, self.t_now, self.total, self.seq
        counters = self.counters
        n_events = exo = exits = 0
        sojourn = 0.0
        budget = INF if max_events is None else max_events
        last = None

        while n_events < budget:
            t, code = cal[0]
            if t > horizon:
                break
            heappop(cal)
            area += hval * (t - tnow)
            tnow = t
            n_events += 1
            if code < K:
                k = code
                s = station_of[k]
                q = queues[s]
                cust = q.popleft()
                counts[k] -= 1
                total -= 1
                departure[s] = INF
                nxt = next(route_it[k])
                if nxt >= 0:
                    s2 = station_of[nxt]
                    q2 = queues[s2]
                    q2.append((nxt, cust[1], seq))
                    seq += 1
                    counts[nxt] += 1
                    total += 1
                    if s2 != s and len(q2) == 1:
                        svc = next(svc_it[nxt])
                        busy[s2] += svc
                        departure[s2] = t + svc
                        heappush(cal, (t + svc, nxt))
                else:
                    exits += 1
                    sojourn += t - cust[1]
                if q:
                    c = q[0][0]
                    svc = next(svc_it[c])
                    busy[s] += svc
                    departure[s] = t + svc
                    heappush(cal, (t + svc, c))
                if trace is not None:
                    trace.append((t, "departure", k, s, total, nxt, cust[2]))
                if total == 0 and observers:
                    self.t_now, self.total, self.area = t, 0, area
                    for obs in observers:
                        obs.on_emptying_departure(self, t)
                if max_events is not None:
                    last = EventOutcome("departure", k, t, nxt if nxt >= 0 else None)
            else:
                k = code - K
                if total == 0 and observers:
                    self.t_now, self.total, self.area = t, 0, area
                    for obs in observers:
                        obs.on_arrival_into_empty(self, k, t)
                s = station_of[k]
                q = queues[s]
                q.append((k, t, seq))
                seq += 1
                counts[k] += 1
                total += 1
                exo += 1
                if len(q) == 1:
                    svc = next(svc_it[k])
                    busy[s] += svc
                    departure[s] = t + svc
                    heappush(cal, (t + svc, k))
                tot, exps = next(arr_it[k])
                draw_time[k] = t
                next_arrival[k] = t + tot
                exp_parts[k] = exps
                ia_total[k] = tot
                heappush(cal, (t + tot, code))
                if trace is not None:
                    trace.append((t, "arrival", k, s, total, None, seq - 1))
                if max_events is not None:
                    last = EventOutcome("arrival", k, t)
            if hkind == "total":
                hval = total
            elif hkind == "class":
                hval = counts[hclass]
            else:
                hval = 1.0 if total > hthresh else 0.0

        if n_events < budget:
            # reached the horizon: integrate the final stretch
            area += hval * (horizon - tnow)
            tnow = horizon
        self.area, self.hval, self.t_now, self.total, self.seq = area, hval, tnow, total, seq
        counters.events += n_events
        counters.exogenous_arrivals += exo
        counters.exits += exits
        counters.sojourn_total += sojourn
        self.last_event = last
        return self

    def step(self) -> EventOutcome | None:
        """Handle exactly the next event."""
        self.run(INF, max_events=1)
        return self.last_event

    # -- views ---------------------------------------------------------------
    def phase_entry(self, k: int, level: int = 0) -> float:
        """Instant at which class ``k`` enters exponential phase (rung ``level``)."""
        return self.draw_time[k] + (self.ia_total[k] - self.exp_parts[k][level])

    def in_exp_phase(self, k: int, level: int = 0) -> bool:
        # compare elapsed time with the non-exponential part: exact when that part is 0
        return self.t_now - self.draw_time[k] >= self.ia_total[k] - self.exp_parts[k][level]

    def snapshot(self) -> SimState:
        t = self.t_now
        U_ne, U_e = [], []
        for k in range(self.L):
            rem = self.next_arrival[k] - t
            ne_row, e_row = [], []
            for j in range(self.levels):
                if self.in_exp_phase(k, j):
                    ne, e = 0.0, rem
                else:
                    ne = self.phase_entry(k, j) - t
                    e = self.exp_parts[k][j]
                ne_row.append(ne)
                e_row.append(e)
            U_ne.append(ne_row)
            U_e.append(e_row)
        return SimState(
            t_now=t,
            counts=list(self.counts),
            U_ne=U_ne,
            U_e=U_e,
            V=[d - t if d < INF else 0.0 for d in self.departure],
            queues=[[c[0] for c in q] for q in self.queues],
        )

    @property
    def next_event(self) -> float:
        return self.calendar[0][0] if self.calendar else INF

    def busy_fraction(self) -> list[float]:
        """Fraction of ``[0, t_now]`` each server spent working."""
        out = []
        for s, b in enumerate(self.busy):
            over = self.departure[s] - self.t_now if self.departure[s] < INF else 0.0
            out.append((b - over) / self.t_now if self.t_now > 0 else 0.0)
        return out

    def write_trace(self, path) -> None:
        if self.trace_rows is None:
            raise ValueError("simulation was created without trace=True")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "event", "class", "station", "total_in_network"])
            for t, kind, k, s, tot, *_ in self.trace_rows:
                w.writerow([repr(t), kind, k + 1, s + 1, tot])


def _exp_ladder(lad: list[Decomposition], streams: DecompStreams, n: int) -> list[list[float]]:
    """Coupled ``Exp(lam_j)`` draws across the ladder (the exponential parts alone)."""
    e = streams.E.standard_exponential(n) / lad[-1].lam
    cols = [e]
    for j in range(len(lad) - 2, -1, -1):
        lo, hi = lad[j].lam, lad[j + 1].lam
        if hi > lo:
            u = streams.ladder.random(n)
            z = streams.ladder.standard_exponential(n) / lo
            e = e + np.where(u < lo / hi, 0.0, z)
        cols.append(e)
    return np.column_stack(cols[::-1]).tolist()


def _ladder_block(lad: list[Decomposition], streams: DecompStreams):
    def block(n):
        total, exp = sample_ladder(lad, streams, n)
        return list(zip(total.tolist(), exp.tolist()))

    return block
