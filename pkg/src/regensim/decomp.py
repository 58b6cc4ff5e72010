"""Splitting an interarrival law into exponential and non-exponential parts.

A decomposable interarrival time is represented as the mixture

    xi = (1 - B) * xi_res + B * (E + Z)

with ``B ~ Bernoulli(q_bar)``, ``E ~ Exp(lam)`` for some ``lam >= lambda_f``
of the base density ``f``, ``Z`` drawn from ``G(x) = F(x) + f(x)/lam`` (an atom
of mass ``f(a)/lam`` at the edge ``a`` plus density ``f + f'/lam``) and
``xi_res`` the leftover law ``(F_xi - q_bar*F)/(1 - q_bar)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from . import distlib
from .distlib import Density, ExpPlus, TruncatedHead, TruncatedTail, Weibull
from .errors import LambdaTooSmall, NotDecomposable

__all__ = [
    "LambdaChoice",
    "Decomposition",
    "SplitDraw",
    "DecompStreams",
    "build_decomposition",
    "sample_G",
    "sample_interarrival",
    "sample_ladder",
    "G_cdf",
]

BISECT_RTOL = 1e-12


@dataclass(frozen=True)
class LambdaChoice:
    """How to pick the exponential rate: ``minimal``, ``scaled`` (factor >= 1) or ``explicit``."""

    kind: str = "minimal"
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("minimal", "scaled", "explicit"):
            raise ValueError(f"unknown lambda choice {self.kind!r}")
        if self.kind == "scaled" and not self.value >= 1.0:
            raise ValueError(f"scale factor must be >= 1, got {self.value!r}")
        if self.kind == "explicit" and not self.value > 0.0:
            raise ValueError(f"explicit lambda must be positive, got {self.value!r}")

    @classmethod
    def minimal(cls):
        return cls("minimal")

    @classmethod
    def scaled(cls, factor: float):
        return cls("scaled", float(factor))

    @classmethod
    def explicit(cls, lam: float):
        return cls("explicit", float(lam))

    @classmethod
    def parse(cls, spec) -> "LambdaChoice":
        """Accept the config forms ``"minimal"``, ``{"scale": s}``, ``{"explicit": v}``."""
        if isinstance(spec, LambdaChoice):
            return spec
        if spec is None or spec == "minimal":
            return cls.minimal()
        if isinstance(spec, dict) and len(spec) == 1:
            (k, v), = spec.items()
            if k == "scale":
                return cls.scaled(v)
            if k == "explicit":
                return cls.explicit(v)
        raise ValueError(f"cannot parse lambda choice {spec!r}")

    def to_config(self):
        if self.kind == "minimal":
            return "minimal"
        return {"scale" if self.kind == "scaled" else "explicit": self.value}

    def rate(self, lam_f: float) -> float:
        if self.kind == "minimal":
            return lam_f
        if self.kind == "scaled":
            return self.value * lam_f
        return self.value


@dataclass(frozen=True)
class Decomposition:
    source: Density
    base: Density
    q_bar: float
    lam: float
    residual: Density | None
    atom_mass: float
    lambda_f: float
    #: length scale for the bisection bracket and tolerance
    scale: float

    @property
    def atom_at(self) -> float:
        return self.base.support_edge

    @property
    def exp_mean_share(self) -> float:
        """Mean of the extracted exponential part relative to the mean of ``xi``."""
        return self.q_bar / self.lam / self.source.mean


class SplitDraw(NamedTuple):
    is_exp_phase_reachable: bool
    non_exp_part: float
    exp_part: float

    @property
    def total(self) -> float:
        return self.non_exp_part + self.exp_part


@dataclass
class DecompStreams:
    """Independent generators for each ingredient of a split draw."""

    mixture: np.random.Generator
    E: np.random.Generator
    Z: np.random.Generator
    residual: np.random.Generator
    ladder: np.random.Generator

    @classmethod
    def from_generator(cls, rng: np.random.Generator) -> "DecompStreams":
        children = rng.spawn(5) if hasattr(rng, "spawn") else [np.random.default_rng(s) for s in
                                                                 rng.bit_generator.seed_seq.spawn(5)]
        return cls(*children)


StreamsLike = Union[DecompStreams, np.random.Generator]


def _streams(rng: StreamsLike) -> DecompStreams:
    return rng if isinstance(rng, DecompStreams) else DecompStreams(rng, rng, rng, rng, rng)


def build_decomposition(fam: Density, lambda_choice="minimal", *, unchecked: bool = False) -> Decomposition:
    """Decompose ``fam`` with the exponential rate given by ``lambda_choice``.

    Weibull with shape below one has ``lambda_f = inf``; its tail beyond the
    optimal truncation point is decomposed instead and the head is kept as the
    residual law. ``unchecked`` skips the ``lam >= lambda_f`` guard (used to
    demonstrate the failure of an invalid split).
    """
    choice = LambdaChoice.parse(lambda_choice)
    if isinstance(fam, Weibull) and fam.shape < 1.0:
        at = distlib.weibull_truncation_point(fam.shape, fam.scale)
        base: Density = TruncatedTail(fam, at)
        q_bar = base.q
        residual: Density | None = TruncatedHead(fam, at)
    else:
        base, q_bar, residual = fam, 1.0, None
    lam_f = distlib.lambda_f(base)
    if not math.isfinite(lam_f):
        raise NotDecomposable(
            f"{fam.kind} has lambda_f = inf: no exponential component can be extracted"
        )
    lam = choice.rate(lam_f)
    if lam < lam_f * (1.0 - 1e-12) and not unchecked:
        raise LambdaTooSmall(f"lambda={lam!r} is below lambda_f={lam_f!r}")
    atom = base.edge_density() / lam
    if not unchecked and not 0.0 <= atom <= 1.0 + 1e-12:
        raise LambdaTooSmall(f"atom mass {atom!r} outside [0, 1]")
    return Decomposition(
        source=fam,
        base=base,
        q_bar=q_bar,
        lam=lam,
        residual=residual,
        atom_mass=min(atom, 1.0),
        lambda_f=lam_f,
        scale=max(base.mean, 1.0 / lam),
    )


def G_cdf(dec: Decomposition, x):
    """``G(x) = F(x) + f(x)/lam`` of the residual component ``Z`` (with the edge atom)."""
    return _arr_ret(x, 1.0 - _G_sf(dec, np.asarray(x, dtype=float)))


def _arr_ret(x, out):
    return float(out) if np.ndim(x) == 0 else out


def _G_sf(dec: Decomposition, x: np.ndarray) -> np.ndarray:
    base = dec.base
    out = np.asarray(base.sf(x), dtype=float) - np.asarray(base.pdf(x), dtype=float) / dec.lam
    return np.where(x < dec.atom_at, 1.0, out)


def _invert_G(dec: Decomposition, u: np.ndarray) -> np.ndarray:
    """Solve ``P(Z > x) = u`` by bracketed bisection (G may be flat, so no Newton)."""
    a = dec.atom_at
    lo = np.full_like(u, a)
    width = np.full_like(u, 4.0 * dec.scale)
    hi = a + width
    todo = _G_sf(dec, hi) > u
    while np.any(todo):
        width[todo] *= 2.0
        hi[todo] = a + width[todo]
        todo[todo] = _G_sf(dec, hi[todo]) > u[todo]
    tol = BISECT_RTOL * dec.scale
    while True:
        gap = hi - lo
        if not np.any(gap > tol):
            break
        mid = lo + 0.5 * gap
        above = _G_sf(dec, mid) > u
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return 0.5 * (lo + hi)


def _sample_Z_many(dec: Decomposition, rng: np.random.Generator, n: int) -> np.ndarray:
    base = dec.base
    if isinstance(base, ExpPlus):
        # G for Exp(r) + W at rate lam >= r is W plus an atom-or-Exp(r) piece
        z = np.asarray(base.component.sample(rng, n), dtype=float)
        if dec.lam > base.rate:
            z = z + _exp_link(base.rate, dec.lam, rng, n)
        return z
    u = rng.random(n)
    out = np.full(n, dec.atom_at)
    cont = u < 1.0 - dec.atom_mass
    if np.any(cont):
        out[cont] = _invert_G(dec, u[cont])
    return out


def _exp_link(lo_rate: float, hi_rate: float, rng: np.random.Generator, n: int) -> np.ndarray:
    """``Z'`` with ``Exp(lo_rate) = Exp(hi_rate) + Z'``: atom ``lo/hi`` at 0, else ``Exp(lo_rate)``."""
    u = rng.random(n)
    e = rng.standard_exponential(n) / lo_rate
    return np.where(u < lo_rate / hi_rate, 0.0, e)


def sample_G(dec: Decomposition, rng: np.random.Generator, size=None):
    """Draw ``Z ~ G^f_lam``."""
    n = 1 if size is None else int(np.prod(size))
    z = _sample_Z_many(dec, rng, n)
    return float(z[0]) if size is None else z.reshape(size)


def sample_interarrival(dec: Decomposition, rng: StreamsLike) -> SplitDraw:
    """One split interarrival: ``(True, Z, E)`` with prob. ``q_bar``, else ``(False, xi_res, 0)``."""
    total, exp = sample_ladder([dec], _streams(rng), 1)
    e = float(exp[0, 0])
    reach = e > 0.0 or dec.q_bar == 1.0
    return SplitDraw(bool(reach), float(total[0]) - e, e)


def sample_ladder(decs: list[Decomposition], rng: StreamsLike, n: int):
    """Coupled split draws for a ladder of rates ``lam_0 <= lam_1 <= ...``.

    All decompositions must share the base law and ``q_bar``. Returns
    ``(total, exp)`` with ``total`` of shape ``(n,)`` and ``exp[:, j]`` the
    exponential part under ``decs[j]``. The total is common to every rung and
    ``exp[:, j]`` is non-increasing in ``j``: the top rung draws
    ``E ~ Exp(lam_top)`` and each lower rung adds an independent link so
    that ``E_j = E_{j+1} + Z'_j ~ Exp(lam_j)``. With a single rung this is the
    plain split draw.
    """
    streams = _streams(rng)
    d0 = decs[0]
    for d in decs[1:]:
        if d.base != d0.base or d.q_bar != d0.q_bar or d.lam < d0.lam:
            raise ValueError("ladder rungs must share base law and q_bar with ascending rates")
    m = len(decs)
    reach = streams.mixture.random(n) < d0.q_bar if d0.q_bar < 1.0 else np.ones(n, dtype=bool)
    k = int(reach.sum())
    exp = np.zeros((n, m))
    total = np.empty(n)
    if k:
        e = streams.E.standard_exponential(k) / decs[-1].lam
        cols = [e]
        for j in range(m - 2, -1, -1):
            lo, hi = decs[j].lam, decs[j + 1].lam
            if hi > lo:
                e = e + _exp_link(lo, hi, streams.ladder, k)
            cols.append(e)
        exp[reach] = np.column_stack(cols[::-1])
        total[reach] = exp[reach, 0] + _sample_Z_many(d0, streams.Z, k)
    if k < n:
        total[~reach] = np.asarray(d0.residual.sample(streams.residual, n - k), dtype=float)
    return total, exp
