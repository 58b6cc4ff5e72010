"""Regenerative estimators built from cycle rewards ``R_i`` and lengths ``tau_i``.

With ``W_i = R_i - beta*tau_i`` and ``t = sum(tau_i)``::

    beta = sum(R) / t
    s^2  = sum(W^2) / t                          (TAVC estimate)
    b    = 2 sum(W tau) / t
    K    = sum((W^2 - s^2 tau - b W)^2) / (4 s^2 t)   (AVSDE estimate)
    CI   = beta -+ z s / sqrt(t)

Every quantity is available from the power sums of ``(R, tau)`` up to total
order 4, which makes the accumulator mergeable across replications.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from math import comb
from typing import Any

import numpy as np

from .errors import DegenerateVariance, NoCycles, TooFewCycles

ORDER = 4
REPORT_SCHEMA = 1


# ---------------------------------------------------------------------------
# normal quantile (Acklam's rational approximation, relative error < 1.15e-9)

_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00, 3.754408661907416e00)
_P_LOW = 0.02425


def normal_quantile(p: float) -> float:
    """Inverse of the standard normal CDF."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p!r}")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
               ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if p > 1.0 - _P_LOW:
        return -normal_quantile(1.0 - p)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
           (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)


def z_value(level: float) -> float:
    """``z`` with ``P(-z <= N(0,1) <= z) = level``."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must lie in (0, 1), got {level!r}")
    return normal_quantile(0.5 + 0.5 * level)


# ---------------------------------------------------------------------------


@dataclass
class EstimatorAccumulator:
    """Mergeable sufficient statistics for the cycle estimators.

    ``S[a, c] = sum((R - shift*tau)^a tau^c)`` for ``a + c <= 4``; ``S[0, 0]``
    is the cycle count. The shift is a reference ratio fixed by the first
    batch added (``shift = 0`` gives plain power sums). Keeping the sums
    centred near ``beta`` avoids the cancellation a raw expansion of
    ``sum(W^4)`` suffers when ``beta * tau`` dwarfs ``W``.
    """

    S: np.ndarray = field(default_factory=lambda: np.zeros((ORDER + 1, ORDER + 1)))
    shift: float | None = None

    @classmethod
    def from_cycles(cls, R, tau, shift: float | None = None) -> "EstimatorAccumulator":
        acc = cls(shift=shift)
        acc.add(R, tau)
        return acc

    def add(self, R, tau) -> None:
        R = np.atleast_1d(np.asarray(R, dtype=float))
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        if R.shape != tau.shape:
            raise ValueError("R and tau must have the same length")
        if len(R) == 0:
            return
        if self.shift is None:
            t = math.fsum(tau)
            self.shift = math.fsum(R) / t if t > 0 else 0.0
        W = R - self.shift * tau
        Wp = [np.ones_like(W)]
        tp = [np.ones_like(tau)]
        for _ in range(ORDER):
            Wp.append(Wp[-1] * W)
            tp.append(tp[-1] * tau)
        for a in range(ORDER + 1):
            for c in range(ORDER + 1 - a):
                self.S[a, c] += math.fsum(Wp[a] * tp[c])

    def rebased(self, shift: float) -> "EstimatorAccumulator":
        """The same statistics expressed about another reference ratio."""
        old = 0.0 if self.shift is None else self.shift
        d = old - shift
        S = np.zeros_like(self.S)
        for a in range(ORDER + 1):
            for c in range(ORDER + 1 - a):
                S[a, c] = math.fsum(comb(a, i) * d ** (a - i) * self.S[i, a - i + c] for i in range(a + 1))
        return EstimatorAccumulator(S, shift)

    def merge(self, other: "EstimatorAccumulator") -> "EstimatorAccumulator":
        if self.shift is None:
            return EstimatorAccumulator(other.S.copy(), other.shift)
        if other.shift is None:
            return EstimatorAccumulator(self.S.copy(), self.shift)
        if other.shift == self.shift:
            return EstimatorAccumulator(self.S + other.S, self.shift)
        # re-centre both sides on the pooled ratio, where the W sums are small
        t = self.S[0, 1] + other.S[0, 1]
        r = (self.S[1, 0] + self.shift * self.S[0, 1]) + (other.S[1, 0] + other.shift * other.S[0, 1])
        shift = r / t if t > 0 else self.shift
        return EstimatorAccumulator(self.rebased(shift).S + other.rebased(shift).S, shift)

    __add__ = merge

    @property
    def N(self) -> int:
        return int(round(self.S[0, 0]))

    @property
    def t(self) -> float:
        return float(self.S[0, 1])

    def w_moment(self, p: int, q: int, beta: float) -> float:
        """``sum(W^p tau^q)`` with ``W = R - beta*tau``, expanded over the stored sums."""
        d = (self.shift or 0.0) - beta
        return math.fsum(comb(p, i) * d ** (p - i) * self.S[i, p - i + q] for i in range(p + 1))

    def to_dict(self) -> dict[str, Any]:
        return {"N": self.N, "shift": self.shift,
                "sums": {f"{a},{c}": float(self.S[a, c]) for a in range(ORDER + 1) for c in range(ORDER + 1 - a)}}


def _need(acc: EstimatorAccumulator, n: int) -> None:
    if acc.N < 1:
        raise NoCycles("no complete regeneration cycles")
    if acc.N < n:
        raise TooFewCycles(f"need at least {n} cycles, have {acc.N}")


def beta_hat(acc: EstimatorAccumulator) -> float:
    _need(acc, 1)
    return (acc.shift or 0.0) + float(acc.S[1, 0] / acc.S[0, 1])


def s_hat(acc: EstimatorAccumulator) -> float:
    _need(acc, 2)
    beta = beta_hat(acc)
    return math.sqrt(max(acc.w_moment(2, 0, beta), 0.0) / acc.t)


def b_hat(acc: EstimatorAccumulator) -> float:
    _need(acc, 2)
    return 2.0 * acc.w_moment(1, 1, beta_hat(acc)) / acc.t


def avsde_hat(acc: EstimatorAccumulator) -> float:
    """AVSDE estimate from the stored power sums."""
    _need(acc, 2)
    beta, s = beta_hat(acc), s_hat(acc)
    if s == 0.0:
        raise DegenerateVariance("s = 0: every cycle has R = beta * tau")
    b = b_hat(acc)
    s2 = s * s
    m = acc.w_moment
    num = math.fsum([m(4, 0, beta), s2 * s2 * acc.S[0, 2], b * b * m(2, 0, beta), -2.0 * s2 * m(2, 1, beta),
                     -2.0 * b * m(3, 0, beta), 2.0 * b * s2 * m(1, 1, beta)])
    return max(num, 0.0) / (4.0 * s2 * acc.t)


def avsde_two_pass(R, tau) -> float:
    """AVSDE estimate by a second pass over the cycle records."""
    R = np.asarray(R, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if len(R) < 2:
        raise TooFewCycles(f"need at least 2 cycles, have {len(R)}")
    t = math.fsum(tau)
    beta = math.fsum(R) / t
    W = R - beta * tau
    s2 = math.fsum(W * W) / t
    if s2 == 0.0:
        raise DegenerateVariance("s = 0: every cycle has R = beta * tau")
    b = 2.0 * math.fsum(W * tau) / t
    return math.fsum((W * W - s2 * tau - b * W) ** 2) / (4.0 * s2 * t)


def confidence_interval(acc: EstimatorAccumulator, level: float = 0.95) -> tuple[float, float]:
    _need(acc, 2)
    beta = beta_hat(acc)
    hw = z_value(level) * s_hat(acc) / math.sqrt(acc.t)
    return beta - hw, beta + hw


def time_average(area: float, horizon: float) -> float:
    """``(1/t) int_0^t h`` over the whole run, cycle fragments included."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    return area / horizon


# ---------------------------------------------------------------------------


@dataclass
class Report:
    beta: float
    s: float
    tavc: float
    b: float
    avsde: float | None
    ci_low: float
    ci_high: float
    ci_halfwidth: float
    level: float
    z: float
    N_cycles: int
    t_cycles: float
    r_time_average: float | None = None
    horizon: float | None = None
    mode: str = "primary"
    lambda_choices: dict[str, Any] = field(default_factory=dict)
    delay_prefix: float = 0.0
    extra: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_cycles(cls, R, tau, *, level: float = 0.95, **meta) -> "Report":
        R = np.asarray(R, dtype=float)
        tau = np.asarray(tau, dtype=float)
        acc = EstimatorAccumulator.from_cycles(R, tau)
        return cls.from_accumulator(acc, level=level, two_pass=(R, tau), **meta)

    @classmethod
    def from_accumulator(cls, acc: EstimatorAccumulator, *, level: float = 0.95, two_pass=None,
                         **meta) -> "Report":
        _need(acc, 2)
        beta, s, b = beta_hat(acc), s_hat(acc), b_hat(acc)
        z = z_value(level)
        hw = z * s / math.sqrt(acc.t)
        if s == 0.0:
            avsde = None
        else:
            avsde = avsde_two_pass(*two_pass) if two_pass is not None else avsde_hat(acc)
        return cls(beta=beta, s=s, tavc=s * s, b=b, avsde=avsde, ci_low=beta - hw, ci_high=beta + hw,
                   ci_halfwidth=hw, level=level, z=z, N_cycles=acc.N, t_cycles=acc.t, **meta)

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["schema"] = REPORT_SCHEMA
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def rounded(self, sig: int = 3) -> dict[str, Any]:
        """Table-style view: estimates rounded to ``sig`` significant figures."""
        out = {}
        for k in ("beta", "ci_halfwidth", "tavc", "avsde"):
            v = getattr(self, k)
            out[k] = None if v is None else float(f"{v:.{sig}g}")
        out["N_cycles"] = self.N_cycles
        out["mode"] = self.mode
        return out
