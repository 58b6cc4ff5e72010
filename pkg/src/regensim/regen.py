"""Online regeneration detection and cycle segmentation.

Two structures are supported:

* primary: a class-1 arrival whose left-limit state has an empty network and
  every other exogenous class in exponential phase;
* alternative: a departure that empties the network while all exogenous
  classes are in exponential phase arms the detector, and the next arrival
  (of any class) is the regeneration.

Detectors are observers of a :class:`~regensim.engine.Simulation`; they are
called only at arrivals into an empty network and at departures that empty
it, which are the only instants where the regeneration sets can be hit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from .errors import NoRegenerationsFound


class RegenMode(str, Enum):
    PRIMARY = "primary"
    ALTERNATIVE = "alternative"

    @classmethod
    def parse(cls, text) -> "RegenMode":
        return text if isinstance(text, cls) else cls(str(text).lower())


class CycleRecord(NamedTuple):
    index: int
    start: float
    tau: float
    R: float


# ---------------------------------------------------------------------------
# predicates on state snapshots


def is_in_D(state, level: int = 0) -> bool:
    """Empty network, classes 2..L in exponential phase, class 1 next to arrive."""
    if state.total != 0:
        return False
    if not all(state.in_exp_phase(k, level) for k in range(1, state.L)):
        return False
    u1 = state.remaining(0)
    return all(u1 < state.U_e[k][level] for k in range(1, state.L))


def detect_primary(prev_state, event, level: int = 0) -> bool:
    """Primary regeneration test for ``event`` given the left-limit state."""
    return event.kind == "arrival" and event.cls == 0 and is_in_D(prev_state, level)


def detect_alternative(prev_state, event, level: int = 0) -> float | None:
    """Regeneration instant armed by an emptying departure, else ``None``.

    ``prev_state`` is the state right after the departure.
    """
    if event.kind != "departure" or prev_state.total != 0:
        return None
    if not all(prev_state.in_exp_phase(k, level) for k in range(prev_state.L)):
        return None
    return prev_state.t_now + min(prev_state.U_e[k][level] for k in range(prev_state.L))


# ---------------------------------------------------------------------------
# online detectors


@dataclass
class Detector:
    """Records regeneration instants and the running ``int h`` at each of them."""

    mode: RegenMode = RegenMode.PRIMARY
    level: int = 0
    times: list[float] = field(default_factory=list)
    areas: list[float] = field(default_factory=list)
    armed: bool = False

    def __post_init__(self):
        self.mode = RegenMode.parse(self.mode)

    @property
    def delayed(self) -> bool:
        return not self.times or self.times[0] != 0.0

    def start(self, sim) -> None:
        # the phi start is a regeneration when it lies in D~ for this detector
        if self.mode is RegenMode.PRIMARY and self._start_in_D_tilde(sim):
            self._record(0.0, 0.0)

    def _start_in_D_tilde(self, sim) -> bool:
        if sim.total != 1 or sim.counts[0] != 1:
            return False
        return all(sim.in_exp_phase(k, self.level) for k in range(1, sim.L))

    def _record(self, t: float, area: float) -> None:
        self.times.append(t)
        self.areas.append(area)

    def on_arrival_into_empty(self, sim, k: int, t: float) -> None:
        if self.mode is RegenMode.PRIMARY:
            # sim.t_now == t here; the other clocks still show their left limits
            if k == 0 and all(sim.in_exp_phase(j, self.level) for j in range(1, sim.L)):
                self._record(t, sim.area)
        elif self.armed:
            self.armed = False
            self._record(t, sim.area)

    def on_emptying_departure(self, sim, t: float) -> None:
        if self.mode is RegenMode.ALTERNATIVE:
            self.armed = all(sim.in_exp_phase(j, self.level) for j in range(sim.L))

    def cycles(self) -> list[CycleRecord]:
        return segment(self.times, self.areas)


def segment(times, areas) -> list[CycleRecord]:
    """Cycles between consecutive regenerations; anything before the first or after the last is dropped."""
    t = np.asarray(times, dtype=float)
    a = np.asarray(areas, dtype=float)
    if len(t) < 2:
        raise NoRegenerationsFound(f"{max(len(t) - 1, 0)} complete cycles")
    tau = np.diff(t)
    R = np.diff(a)
    return [CycleRecord(i + 1, float(s), float(x), float(r)) for i, (s, x, r) in enumerate(zip(t[:-1], tau, R))]


def cycle_arrays(times, areas) -> tuple[np.ndarray, np.ndarray]:
    """``(R, tau)`` arrays of complete cycles."""
    t = np.asarray(times, dtype=float)
    if len(t) < 2:
        raise NoRegenerationsFound(f"{max(len(t) - 1, 0)} complete cycles")
    return np.diff(np.asarray(areas, dtype=float)), np.diff(t)


def write_cycles_csv(path, cycles: list[CycleRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "T", "tau", "R"])
        for c in cycles:
            w.writerow([c.index, repr(c.start), repr(c.tau), repr(c.R)])
