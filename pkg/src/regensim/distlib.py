"""Density families used for interarrival and service times.

Every family exposes its density, the closed-form log-slope ``-f'/f`` and the
quantity ``lambda_f = sup_{y>a} -f'(y)/f(y)`` that decides whether an
exponential component can be split off. Parameterizations:

* ``ParetoLomax(shape, scale)``: ``P(X > x) = (1 + scale*x)**-shape``
* ``Weibull(shape, scale)``: ``P(X > x) = exp(-(scale*x)**shape)``
* ``Gamma(shape, rate)``, ``Lognormal(mu, sigma2)``, ``HyperExp2(p1, rate1, rate2)``
* ``ExpPlus(rate, component)``: independent sum ``Exp(rate) + component``
* ``TruncatedTail(parent, at)``: ``parent`` conditioned on ``X >= at``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import integrate, optimize, special

from .errors import InvalidParameters, InvalidShape, UnsupportedFamily

__all__ = [
    "Density",
    "Exponential",
    "Gamma",
    "Lognormal",
    "ParetoLomax",
    "HyperExp2",
    "Weibull",
    "Uniform",
    "ExpPlus",
    "TruncatedTail",
    "TruncatedHead",
    "pdf",
    "lambda_f",
    "lambda_f_grid",
    "sample",
    "weibull_truncation_point",
    "from_dict",
]


def _arr(x):
    return np.asarray(x, dtype=float)


def _ret(x, out):
    return float(out) if np.ndim(x) == 0 else out


class Density:
    """Base class for a density ``f`` with left support edge ``a``.

    Subclasses implement the vectorised primitives ``_pdf``, ``_score``,
    ``_sf`` on points strictly inside the support and ``sample``.
    """

    kind = "custom"
    #: -f'/f is non-increasing on (a, inf)
    log_convex = False

    @property
    def support_edge(self) -> float:
        return 0.0

    @property
    def support_upper(self) -> float:
        return math.inf

    # -- primitives ---------------------------------------------------------
    def _pdf(self, x):
        raise NotImplementedError

    def _score(self, x):
        raise NotImplementedError

    def _sf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        x = _arr(x)
        a, b = self.support_edge, self.support_upper
        inside = (x >= a) & (x <= b)
        out = np.zeros_like(x)
        if np.any(inside):
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                out[inside] = self._pdf(x[inside])
        out[np.isnan(out)] = 0.0
        return _ret(x, out)

    def edge_density(self) -> float:
        """``f(a+)``, the density at the left support edge."""
        return float(self.pdf(self.support_edge))

    def score(self, x):
        """Closed-form ``-f'(x)/f(x)`` for ``x`` inside the support."""
        x = _arr(x)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.asarray(self._score(x), dtype=float) * np.ones_like(x)
        return _ret(x, out)

    def dpdf(self, x):
        x = _arr(x)
        out = -_arr(self.score(x)) * _arr(self.pdf(x))
        out = np.where(_arr(self.pdf(x)) > 0, out, 0.0)
        return _ret(x, out)

    def sf(self, x):
        x = _arr(x)
        out = np.ones_like(x)
        out[x >= self.support_upper] = 0.0
        inside = (x > self.support_edge) & (x < self.support_upper)
        if np.any(inside):
            out[inside] = self._sf(x[inside])
        return _ret(x, out)

    def cdf(self, x):
        x = _arr(x)
        return _ret(x, 1.0 - _arr(self.sf(x)))

    # -- moments ------------------------------------------------------------
    def moment(self, k: int) -> float:
        a = self.support_edge
        val, _ = integrate.quad(lambda y: y**k * self.pdf(y), a, self.support_upper, limit=200)
        return val

    @property
    def mean(self) -> float:
        return self.moment(1)

    @property
    def moment_order(self) -> float:
        """Supremum of the orders ``p`` with ``E[X**p] < inf``."""
        return math.inf

    # -- lambda_f -----------------------------------------------------------
    def lambda_f_closed(self) -> float:
        raise UnsupportedFamily(f"no closed-form lambda_f for {self.kind!r}")

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        raise UnsupportedFamily(f"{self.kind!r} has no config literal")


# ---------------------------------------------------------------------------


def _positive(**kw):
    for name, v in kw.items():
        if not (v > 0 and math.isfinite(v)):
            raise InvalidParameters(f"{name} must be a positive finite number, got {v!r}")


@dataclass(frozen=True)
class Exponential(Density):
    rate: float
    kind = "exponential"
    log_convex = True

    def __post_init__(self):
        _positive(rate=self.rate)

    def _pdf(self, x):
        return self.rate * np.exp(-self.rate * x)

    def _score(self, x):
        return self.rate

    def _sf(self, x):
        return np.exp(-self.rate * x)

    def isf(self, q):
        return -np.log(q) / self.rate

    def ppf(self, p):
        return -np.log1p(-np.asarray(p)) / self.rate

    def moment(self, k):
        return math.factorial(k) / self.rate**k

    def lambda_f_closed(self):
        return self.rate

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class Gamma(Density):
    shape: float
    rate: float
    kind = "gamma"

    def __post_init__(self):
        _positive(shape=self.shape, rate=self.rate)

    def _pdf(self, x):
        a, g = self.shape, self.rate
        # xlogy keeps 0**0 = 1 at the edge when shape == 1
        return np.exp(a * math.log(g) + special.xlogy(a - 1, x) - g * x - special.gammaln(a))

    def _score(self, x):
        return self.rate - (self.shape - 1.0) / x

    def _sf(self, x):
        return special.gammaincc(self.shape, self.rate * x)

    def isf(self, q):
        return special.gammainccinv(self.shape, q) / self.rate

    def moment(self, k):
        return math.exp(special.gammaln(self.shape + k) - special.gammaln(self.shape)) / self.rate**k

    def lambda_f_closed(self):
        # score increases to `rate` when shape >= 1; blows up at 0 otherwise
        return self.rate if self.shape >= 1 else math.inf

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def to_dict(self):
        return {"kind": self.kind, "shape": self.shape, "rate": self.rate}


@dataclass(frozen=True)
class Lognormal(Density):
    mu: float
    sigma2: float
    kind = "lognormal"

    def __post_init__(self):
        _positive(sigma2=self.sigma2)
        if not math.isfinite(self.mu):
            raise InvalidParameters("mu must be finite")

    def _pdf(self, x):
        s2 = self.sigma2
        return np.exp(-((np.log(x) - self.mu) ** 2) / (2 * s2)) / (x * math.sqrt(2 * math.pi * s2))

    def _score(self, x):
        return (1.0 + (np.log(x) - self.mu) / self.sigma2) / x

    def _sf(self, x):
        return 0.5 * special.erfc((np.log(x) - self.mu) / math.sqrt(2 * self.sigma2))

    def isf(self, q):
        return np.exp(self.mu + math.sqrt(2 * self.sigma2) * special.erfcinv(2 * np.asarray(q)))

    def moment(self, k):
        return math.exp(k * self.mu + 0.5 * k * k * self.sigma2)

    def lambda_f_closed(self):
        # attained at x = exp(mu + 1 - sigma2)
        return math.exp(self.sigma2 - (self.mu + 1.0)) / self.sigma2

    def sample(self, rng, size=None):
        return rng.lognormal(self.mu, math.sqrt(self.sigma2), size)

    def to_dict(self):
        return {"kind": self.kind, "mu": self.mu, "sigma2": self.sigma2}


@dataclass(frozen=True)
class ParetoLomax(Density):
    shape: float
    scale: float
    kind = "pareto"
    log_convex = True

    def __post_init__(self):
        _positive(shape=self.shape, scale=self.scale)

    def _pdf(self, x):
        a, g = self.shape, self.scale
        return a * g * (1.0 + g * x) ** (-(a + 1.0))

    def _score(self, x):
        return (self.shape + 1.0) * self.scale / (1.0 + self.scale * x)

    def _sf(self, x):
        return (1.0 + self.scale * x) ** (-self.shape)

    def isf(self, q):
        return (np.asarray(q) ** (-1.0 / self.shape) - 1.0) / self.scale

    def ppf(self, p):
        return np.expm1(-np.log1p(-np.asarray(p)) / self.shape) / self.scale

    def moment(self, k):
        if k >= self.shape:
            return math.inf
        a = self.shape
        return math.factorial(k) * math.exp(special.gammaln(a - k) - special.gammaln(a)) / self.scale**k

    @property
    def moment_order(self):
        return self.shape

    def lambda_f_closed(self):
        return (self.shape + 1.0) * self.scale

    def sample(self, rng, size=None):
        return rng.pareto(self.shape, size) / self.scale

    def to_dict(self):
        return {"kind": self.kind, "shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class HyperExp2(Density):
    """Two-phase hyper-exponential ``p1*Exp(rate1) + (1-p1)*Exp(rate2)``."""

    p1: float
    rate1: float
    rate2: float
    kind = "hyperexp2"
    log_convex = True

    def __post_init__(self):
        if not 0.0 < self.p1 < 1.0:
            raise InvalidParameters(f"p1 must lie in (0, 1), got {self.p1!r}")
        _positive(rate1=self.rate1, rate2=self.rate2)

    @property
    def p2(self):
        return 1.0 - self.p1

    def _weights(self, x):
        # phase weights p_i*l_i*exp(-l_i x), rescaled by exp(m x) against underflow
        m = min(self.rate1, self.rate2)
        w1 = self.p1 * self.rate1 * np.exp(-(self.rate1 - m) * x)
        w2 = self.p2 * self.rate2 * np.exp(-(self.rate2 - m) * x)
        return w1, w2, m

    def _pdf(self, x):
        return self.p1 * self.rate1 * np.exp(-self.rate1 * x) + self.p2 * self.rate2 * np.exp(-self.rate2 * x)

    def _score(self, x):
        w1, w2, _ = self._weights(x)
        return (w1 * self.rate1 + w2 * self.rate2) / (w1 + w2)

    def _sf(self, x):
        return self.p1 * np.exp(-self.rate1 * x) + self.p2 * np.exp(-self.rate2 * x)

    def moment(self, k):
        return math.factorial(k) * (self.p1 / self.rate1**k + self.p2 / self.rate2**k)

    def lambda_f_closed(self):
        p1, p2, l1, l2 = self.p1, self.p2, self.rate1, self.rate2
        return (p1 * l1 * l1 + p2 * l2 * l2) / (p1 * l1 + p2 * l2)

    def sample(self, rng, size=None):
        u = rng.random(size)
        e = rng.standard_exponential(size)
        return np.where(u < self.p1, e / self.rate1, e / self.rate2) if size is not None else (
            e / self.rate1 if u < self.p1 else e / self.rate2
        )

    def to_dict(self):
        return {"kind": self.kind, "p1": self.p1, "rate1": self.rate1, "rate2": self.rate2}


@dataclass(frozen=True)
class Weibull(Density):
    shape: float
    scale: float
    kind = "weibull"

    def __post_init__(self):
        _positive(shape=self.shape, scale=self.scale)

    @property
    def log_convex(self):
        return self.shape <= 1.0

    def _pdf(self, x):
        a, g = self.shape, self.scale
        gx = g * x
        return a * g * gx ** (a - 1.0) * np.exp(-(gx**a))

    def _score(self, x):
        a, g = self.shape, self.scale
        return (1.0 - a) / x + a * g * (g * x) ** (a - 1.0)

    def _sf(self, x):
        return np.exp(-((self.scale * x) ** self.shape))

    def isf(self, q):
        return (-np.log(q)) ** (1.0 / self.shape) / self.scale

    def ppf(self, p):
        return (-np.log1p(-np.asarray(p))) ** (1.0 / self.shape) / self.scale

    def moment(self, k):
        return math.gamma(1.0 + k / self.shape) / self.scale**k

    def lambda_f_closed(self):
        return self.scale if self.shape == 1.0 else math.inf

    def sample(self, rng, size=None):
        return rng.weibull(self.shape, size) / self.scale

    def to_dict(self):
        return {"kind": self.kind, "shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class Uniform(Density):
    low: float
    high: float
    kind = "uniform"

    def __post_init__(self):
        if not (math.isfinite(self.low) and math.isfinite(self.high) and self.high > self.low):
            raise InvalidParameters(f"need low < high, got ({self.low!r}, {self.high!r})")

    @property
    def support_edge(self):
        return self.low

    @property
    def support_upper(self):
        return self.high

    def _pdf(self, x):
        return np.full_like(x, 1.0 / (self.high - self.low))

    def _score(self, x):
        return np.zeros_like(x)

    def _sf(self, x):
        return (self.high - x) / (self.high - self.low)

    def isf(self, q):
        return self.high - np.asarray(q) * (self.high - self.low)

    def moment(self, k):
        a, b = self.low, self.high
        return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))

    def lambda_f_closed(self):
        # bounded support: not exponential-or-heavier tailed, hence not in H
        return math.inf

    def sample(self, rng, size=None):
        return rng.uniform(self.low, self.high, size)

    def to_dict(self):
        return {"kind": self.kind, "low": self.low, "high": self.high}


@dataclass(frozen=True)
class ExpPlus(Density):
    """Independent sum ``Exp(rate) + component`` with ``component >= 0``.

    ``-f'/f = rate * (1 - g/f)`` where ``g`` is the component density, so the
    supremum is ``rate`` (approached as x grows) and ``G^f_rate`` is exactly
    the law of the component.
    """

    rate: float
    component: Density
    kind = "exp_plus"

    def __post_init__(self):
        _positive(rate=self.rate)
        if self.component.support_edge < 0:
            raise InvalidParameters("component must be non-negative")

    @property
    def support_edge(self):
        return self.component.support_edge

    def _conv(self, x):
        # f(x) = rate * int_0^{x-a} exp(-rate u) g(x-u) du, adaptive over all points at once
        x = _arr(x)
        span = np.maximum(x - self.component.support_edge, 0.0)
        lam, g = self.rate, self.component

        def integrand(s):
            u = s * span
            return lam * np.exp(-lam * u) * _arr(g.pdf(x - u)) * span

        val, _ = integrate.quad_vec(integrand, 0.0, 1.0, epsrel=1e-12, norm="max")
        return val

    def _pdf(self, x):
        return self._conv(x)

    def _score(self, x):
        f = self._conv(x)
        g = _arr(self.component.pdf(x))
        ratio = np.where(g > 0, g / np.where(f > 0, f, np.inf), 0.0)
        return self.rate * (1.0 - ratio)

    def _sf(self, x):
        return _arr(self.component.sf(x)) + self._conv(x) / self.rate

    def moment(self, k):
        # binomial expansion of E[(E + W)^k]
        return sum(
            math.comb(k, j) * math.factorial(j) / self.rate**j * (self.component.moment(k - j) if k > j else 1.0)
            for j in range(k + 1)
        )

    @property
    def moment_order(self):
        return self.component.moment_order

    def lambda_f_closed(self):
        return self.rate

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size) + self.component.sample(rng, size)

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate, "component": self.component.to_dict()}


@dataclass(frozen=True)
class TruncatedTail(Density):
    """``parent`` conditioned on ``X >= at`` (density ``parent.pdf / q`` on ``[at, inf)``)."""

    parent: Density
    at: float
    q: float = field(init=False, repr=False)
    kind = "truncated_tail"

    def __post_init__(self):
        p = self.parent
        if not (p.support_edge < self.at < p.support_upper):
            raise InvalidParameters(f"truncation point {self.at!r} not inside the parent support")
        object.__setattr__(self, "q", float(p.sf(self.at)))

    @property
    def support_edge(self):
        return self.at

    @property
    def log_convex(self):
        return self.parent.log_convex

    def _pdf(self, x):
        return _arr(self.parent.pdf(x)) / self.q

    def _score(self, x):
        return self.parent.score(x)

    def _sf(self, x):
        return _arr(self.parent.sf(x)) / self.q

    def isf(self, q):
        return self.parent.isf(np.asarray(q) * self.q)

    @property
    def mean(self):
        tail, _ = integrate.quad(lambda y: self.parent.sf(y), self.at, math.inf, limit=200)
        return self.at + tail / self.q

    @property
    def moment_order(self):
        return self.parent.moment_order

    def lambda_f_closed(self):
        if self.parent.log_convex:
            return float(self.parent.score(self.at))
        raise UnsupportedFamily("closed-form lambda_f of a truncated tail needs a log-convex parent")

    def sample(self, rng, size=None):
        u = rng.random(size)
        return self.isf(1.0 - u)

    def to_dict(self):
        return {"kind": self.kind, "of": self.parent.to_dict(), "at": self.at}


@dataclass(frozen=True)
class TruncatedHead(Density):
    """``parent`` conditioned on ``X < at``; the leftover law when only the tail is decomposed."""

    parent: Density
    at: float
    mass: float = field(init=False, repr=False)
    kind = "truncated_head"

    def __post_init__(self):
        p = self.parent
        if not (p.support_edge < self.at < p.support_upper):
            raise InvalidParameters(f"truncation point {self.at!r} not inside the parent support")
        object.__setattr__(self, "mass", float(p.cdf(self.at)))

    @property
    def support_edge(self):
        return self.parent.support_edge

    @property
    def support_upper(self):
        return self.at

    def _pdf(self, x):
        return _arr(self.parent.pdf(x)) / self.mass

    def _score(self, x):
        return self.parent.score(x)

    def _sf(self, x):
        return (_arr(self.parent.cdf(self.at)) - _arr(self.parent.cdf(x))) / self.mass

    def sample(self, rng, size=None):
        u = rng.random(size)
        return self.parent.ppf(u * self.mass)

    def to_dict(self):
        return {"kind": self.kind, "of": self.parent.to_dict(), "at": self.at}


# ---------------------------------------------------------------------------
# module-level operations


def pdf(fam: Density, x):
    return fam.pdf(x)


def sample(fam: Density, rng: np.random.Generator, size=None):
    return fam.sample(rng, size)


def lambda_f(fam: Density, numeric_fallback: bool = False) -> float:
    """``sup_{y>a} -f'(y)/f(y)``; ``inf`` means the family is not in H.

    Families without a closed form raise ``UnsupportedFamily`` unless
    ``numeric_fallback`` is set, in which case the (approximate) grid value
    from :func:`lambda_f_grid` is returned.
    """
    try:
        return fam.lambda_f_closed()
    except UnsupportedFamily:
        if not numeric_fallback:
            raise
    return lambda_f_grid(fam)[0]


def lambda_f_grid(fam: Density, n: int = 10_000, span: float = 50.0, refine: bool = True):
    """Grid diagnostic for ``sup -f'/f``: returns ``(value, argmax)``.

    The grid is log-spaced over ``(a, a + span*mean]``. With ``refine`` an
    interior maximum is polished by bounded scalar search, and a maximum at
    the right edge triggers geometric extension of the grid until the value
    stops increasing. The result is approximate: -f'/f need not be unimodal.
    """
    a = fam.support_edge
    m = fam.mean
    upper = min(span * m, fam.support_upper - a)
    offsets = np.logspace(math.log10(upper) - 12.0, math.log10(upper), n)
    xs = a + offsets
    vals = _arr(fam.score(xs))
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    i = int(np.argmax(vals))
    best, arg = float(vals[i]), float(xs[i])
    if not refine:
        return best, arg
    if 0 < i < n - 1:
        res = optimize.minimize_scalar(
            lambda y: -float(fam.score(y)), bounds=(xs[i - 1], xs[i + 1]), method="bounded",
            options={"xatol": 1e-14 * max(1.0, xs[i])},
        )
        if -res.fun > best:
            best, arg = float(-res.fun), float(res.x)
    elif i == n - 1 and math.isinf(fam.support_upper):
        off = upper
        for _ in range(200):
            off *= 2.0
            v = float(fam.score(a + off))
            if not math.isfinite(v) or v <= best * (1.0 + 1e-13):
                if math.isfinite(v) and v > best:
                    best, arg = v, a + off
                break
            best, arg = v, a + off
    return best, arg


def weibull_truncation_point(alpha: float, gamma: float, rule: str = "optimal") -> float:
    """Truncation point for Weibull(alpha < 1, gamma) that maximizes ``q/lambda_f``.

    With ``u = (gamma*a)**alpha`` the objective ``q/lambda_f`` is proportional
    to ``u**(1/alpha) * exp(-u) / (alpha*u + 1 - alpha)``, stationary at
    ``u = sqrt(1 - alpha)/alpha``. ``rule="printed"`` returns the commonly quoted
    expression ``(1 - alpha)**(1/(2 alpha)) / (gamma * alpha**alpha)``, which
    is not the maximizer.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidShape(f"truncation needs 0 < alpha < 1, got {alpha!r}")
    _positive(gamma=gamma)
    if rule == "optimal":
        return (1.0 - alpha) ** (1.0 / (2.0 * alpha)) / (gamma * alpha ** (1.0 / alpha))
    if rule == "printed":
        return (1.0 - alpha) ** (1.0 / (2.0 * alpha)) / (gamma * alpha**alpha)
    raise ValueError(f"unknown rule {rule!r}")


_KINDS = {
    "exponential": lambda d: Exponential(float(d["rate"])),
    "gamma": lambda d: Gamma(float(d["shape"]), float(d["rate"])),
    "lognormal": lambda d: Lognormal(float(d["mu"]), float(d["sigma2"])),
    "pareto": lambda d: ParetoLomax(float(d["shape"]), float(d["scale"])),
    "hyperexp2": lambda d: HyperExp2(float(d["p1"]), float(d["rate1"]), float(d["rate2"])),
    "weibull": lambda d: Weibull(float(d["shape"]), float(d["scale"])),
    "uniform": lambda d: Uniform(float(d["low"]), float(d["high"])),
    "exp_plus": lambda d: ExpPlus(float(d["rate"]), from_dict(d["component"])),
    "truncated_tail": lambda d: TruncatedTail(from_dict(d["of"]), float(d["at"])),
    "truncated_head": lambda d: TruncatedHead(from_dict(d["of"]), float(d["at"])),
}


def from_dict(d: dict[str, Any]) -> Density:
    """Build a family from its config literal, e.g. ``{"kind": "pareto", "shape": 10, "scale": 0.1}``."""
    try:
        build = _KINDS[d["kind"]]
    except KeyError as exc:
        raise UnsupportedFamily(f"unknown distribution literal {d!r}") from exc
    try:
        return build(d)
    except KeyError as exc:
        raise InvalidParameters(f"missing parameter {exc} in {d!r}") from exc
