"""Independent references for verification.

Nothing here reuses the samplers or CDFs of :mod:`regensim.distlib`; the
families are mapped onto ``scipy.stats`` distributions instead, so a test
that compares the two is a genuine cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import distlib
from .decomp import Decomposition, DecompStreams, sample_ladder
from .errors import InfiniteSecondMoment, Unstable, UnsupportedFamily

#: two-sided KS critical coefficient at level 0.001, sqrt(-log(0.0005)/2)
KS_C999 = math.sqrt(-0.5 * math.log(0.0005))


@dataclass(frozen=True)
class KSReport:
    statistic: float
    critical: float
    n: int
    m: int

    @property
    def passed(self) -> bool:
        return self.statistic < self.critical

    def to_dict(self):
        return {"statistic": self.statistic, "critical": self.critical, "n": self.n, "m": self.m,
                "passed": self.passed}


def ks_critical(n: int, m: int | None = None) -> float:
    """99.9% critical value of the KS statistic (one-sample when ``m`` is None)."""
    if m is None:
        return KS_C999 / math.sqrt(n)
    return KS_C999 * math.sqrt((n + m) / (n * m))


# ---------------------------------------------------------------------------
# scipy twins of the built-in families


class _Mixture:
    """Finite mixture of frozen scipy distributions."""

    def __init__(self, weights, parts):
        self.w = np.asarray(weights, dtype=float)
        self.parts = parts

    def cdf(self, x):
        return sum(w * p.cdf(x) for w, p in zip(self.w, self.parts))

    def sf(self, x):
        return sum(w * p.sf(x) for w, p in zip(self.w, self.parts))

    def rvs(self, size, random_state):
        idx = random_state.choice(len(self.w), size=size, p=self.w)
        out = np.empty(size)
        for i, p in enumerate(self.parts):
            sel = idx == i
            out[sel] = p.rvs(size=int(sel.sum()), random_state=random_state)
        return out

    def moment(self, k):
        return float(sum(w * p.moment(k) for w, p in zip(self.w, self.parts)))


class _Truncated:
    """``parent`` restricted to ``[at, inf)`` (tail) or ``[0, at)`` (head)."""

    def __init__(self, parent, at, tail):
        self.parent, self.at, self.tail = parent, at, tail
        self.mass = parent.sf(at) if tail else parent.cdf(at)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.tail:
            return np.where(x < self.at, 0.0, 1.0 - self.parent.sf(np.maximum(x, self.at)) / self.mass)
        return np.where(x >= self.at, 1.0, self.parent.cdf(np.minimum(x, self.at)) / self.mass)

    def rvs(self, size, random_state):
        u = random_state.random(size)
        if self.tail:
            return self.parent.isf(u * self.mass)
        return self.parent.ppf(u * self.mass)


class _Convolved:
    """``Exp(rate) + component`` by direct summation (cdf via numerical convolution)."""

    def __init__(self, rate, component):
        self.exp = stats.expon(scale=1.0 / rate)
        self.component = component

    def rvs(self, size, random_state):
        return self.exp.rvs(size=size, random_state=random_state) + \
            self.component.rvs(size=size, random_state=random_state)

    def moment(self, k):
        # binomial expansion of E[(X + Y)^k]
        return float(sum(math.comb(k, i) * self.exp.moment(i) * self.component.moment(k - i)
                         for i in range(k + 1)))


def scipy_twin(fam: distlib.Density):
    """A scipy-backed object with ``rvs`` (and ``cdf``/``moment`` where cheap) for ``fam``."""
    if isinstance(fam, distlib.Exponential):
        return stats.expon(scale=1.0 / fam.rate)
    if isinstance(fam, distlib.Gamma):
        return stats.gamma(fam.shape, scale=1.0 / fam.rate)
    if isinstance(fam, distlib.Lognormal):
        return stats.lognorm(math.sqrt(fam.sigma2), scale=math.exp(fam.mu))
    if isinstance(fam, distlib.ParetoLomax):
        return stats.lomax(fam.shape, scale=1.0 / fam.scale)
    if isinstance(fam, distlib.Weibull):
        return stats.weibull_min(fam.shape, scale=1.0 / fam.scale)
    if isinstance(fam, distlib.Uniform):
        return stats.uniform(fam.low, fam.high - fam.low)
    if isinstance(fam, distlib.HyperExp2):
        return _Mixture([fam.p1, 1.0 - fam.p1],
                        [stats.expon(scale=1.0 / fam.rate1), stats.expon(scale=1.0 / fam.rate2)])
    if isinstance(fam, distlib.ExpPlus):
        return _Convolved(fam.rate, scipy_twin(fam.component))
    if isinstance(fam, distlib.TruncatedTail):
        return _Truncated(scipy_twin(fam.parent), fam.at, tail=True)
    if isinstance(fam, distlib.TruncatedHead):
        return _Truncated(scipy_twin(fam.parent), fam.at, tail=False)
    raise UnsupportedFamily(f"no scipy twin for {type(fam).__name__}")


def direct_sample(fam: distlib.Density, n: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.asarray(scipy_twin(fam).rvs(size=n, random_state=rng), dtype=float)


def decomposition_law_check(fam: distlib.Density, dec: Decomposition, n: int = 100_000,
                            seed: int = 0) -> KSReport:
    """Two-sample KS between ``n`` split-path draws and ``n`` direct draws of ``fam``."""
    ss = np.random.SeedSequence(seed)
    mix_seed, direct_seed = ss.spawn(2)
    streams = DecompStreams.from_generator(np.random.default_rng(mix_seed))
    total, _ = sample_ladder([dec], streams, n)
    direct = direct_sample(fam, n, direct_seed)
    res = stats.ks_2samp(total, direct)
    return KSReport(float(res.statistic), ks_critical(n, n), n, n)


# ---------------------------------------------------------------------------
# queueing formulas


def mm1_mean_number(lam: float, mu: float) -> float:
    """Stationary mean number in system of M/M/1."""
    if lam < 0 or mu <= 0:
        raise ValueError("rates must satisfy lam >= 0, mu > 0")
    rho = lam / mu
    if rho >= 1.0:
        raise Unstable(f"rho = {rho} >= 1")
    return rho / (1.0 - rho)


def birth_death_mean(lam: float, mu: float, n_max: int = 10_000) -> float:
    """Mean of the M/M/1 birth-death chain truncated at ``n_max``, from its balance equations."""
    if lam >= mu:
        raise Unstable(f"rho = {lam / mu} >= 1")
    n = np.arange(n_max + 1)
    logw = n * math.log(lam / mu) if lam > 0 else np.where(n == 0, 0.0, -np.inf)
    w = np.exp(logw - np.max(logw))
    return float((n * w).sum() / w.sum())


def mg1_mean_number(lam: float, service: distlib.Density) -> float:
    """Pollaczek-Khinchine mean number in system."""
    twin = scipy_twin(service)
    m1 = float(twin.moment(1))
    rho = lam * m1
    if rho >= 1.0:
        raise Unstable(f"rho = {rho} >= 1")
    if isinstance(service, distlib.ParetoLomax) and service.shape <= 2.0:
        raise InfiniteSecondMoment(f"pareto shape {service.shape} <= 2")
    m2 = float(twin.moment(2))
    if not math.isfinite(m2):
        raise InfiniteSecondMoment("service time has infinite second moment")
    return rho + lam * lam * m2 / (2.0 * (1.0 - rho))
