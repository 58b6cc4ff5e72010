"""Network primitives, traffic equations and assumption checks.

Conventions: classes and stations are 0-based in Python and 1-based in the
JSON config. Exogenous (non-null) classes come first, so classes ``0..L-1``
carry an interarrival law and the rest receive only routed customers.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import distlib
from .decomp import Decomposition, LambdaChoice, build_decomposition
from .distlib import Density
from .errors import ConfigInvalid, NotDecomposable, RegenSimError, SingularRouting, Unstable

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ClassSpec:
    station: int
    service: Density
    interarrival: Density | None = None
    decompose: LambdaChoice | None = None
    name: str = ""


@dataclass(frozen=True)
class NetworkConfig:
    stations: int
    classes: tuple[ClassSpec, ...]
    routing: np.ndarray = field(compare=False)
    description: str = ""

    def __post_init__(self):
        P = np.asarray(self.routing, dtype=float)
        K = len(self.classes)
        if P.shape != (K, K):
            raise ConfigInvalid(f"routing matrix must be {K}x{K}, got {P.shape}")
        if np.any(P < 0) or np.any(P.sum(axis=1) > 1.0 + 1e-12):
            raise ConfigInvalid("routing rows must be non-negative with sums <= 1")
        for k, c in enumerate(self.classes):
            if not 0 <= c.station < self.stations:
                raise ConfigInvalid(f"class {k + 1}: station {c.station + 1} out of range")
        exo = [c.interarrival is not None for c in self.classes]
        if exo != sorted(exo, reverse=True):
            raise ConfigInvalid("exogenous classes must precede null-exogenous ones")
        P.setflags(write=False)
        object.__setattr__(self, "routing", P)

    @property
    def K(self) -> int:
        return len(self.classes)

    @property
    def L(self) -> int:
        return sum(c.interarrival is not None for c in self.classes)

    @property
    def d(self) -> int:
        return self.stations

    @property
    def station_of(self) -> list[int]:
        return [c.station for c in self.classes]

    def constituency(self, i: int) -> list[int]:
        return [k for k, c in enumerate(self.classes) if c.station == i]

    @property
    def alpha(self) -> np.ndarray:
        return np.array([1.0 / c.interarrival.mean if c.interarrival is not None else 0.0 for c in self.classes])

    @property
    def mu(self) -> np.ndarray:
        return np.array([1.0 / c.service.mean for c in self.classes])

    def with_class(self, k: int, **changes) -> "NetworkConfig":
        classes = list(self.classes)
        classes[k] = _replace(classes[k], **changes)
        return NetworkConfig(self.stations, tuple(classes), self.routing, self.description)

    # -- (de)serialization ----------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "NetworkConfig":
        try:
            classes = []
            for i, c in enumerate(d["classes"]):
                ia = c.get("interarrival")
                dec = c.get("decompose")
                classes.append(
                    ClassSpec(
                        station=int(c["station"]) - 1,
                        service=distlib.from_dict(c["service"]),
                        interarrival=distlib.from_dict(ia) if ia is not None else None,
                        decompose=LambdaChoice.parse(dec.get("lambda")) if dec is not None else None,
                        name=c.get("name", f"class {i + 1}"),
                    )
                )
            return cls(int(d["stations"]), tuple(classes), np.array(d["routing"], dtype=float),
                       d.get("description", ""))
        except ConfigInvalid:
            raise
        except (KeyError, TypeError, ValueError, RegenSimError) as exc:
            raise ConfigInvalid(f"invalid network config: {exc}") from exc

    def to_dict(self) -> dict[str, Any]:
        out = []
        for c in self.classes:
            e: dict[str, Any] = {"name": c.name, "station": c.station + 1,
                                 "interarrival": c.interarrival.to_dict() if c.interarrival else None,
                                 "service": c.service.to_dict()}
            if c.decompose is not None:
                e["decompose"] = {"lambda": c.decompose.to_config()}
            out.append(e)
        return {"schema": SCHEMA_VERSION, "description": self.description, "stations": self.stations,
                "classes": out, "routing": self.routing.tolist()}


def _replace(spec: ClassSpec, **changes) -> ClassSpec:
    from dataclasses import replace

    return replace(spec, **changes)


def load_config(path) -> NetworkConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    return NetworkConfig.from_dict(data)


def shipped_config(name: str) -> NetworkConfig:
    """Load one of the configs bundled under ``regensim/configs``."""
    from importlib import resources

    ref = resources.files("regensim") / "configs" / f"{name}.json"
    return NetworkConfig.from_dict(json.loads(ref.read_text()))


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrafficSolution:
    sigma: np.ndarray
    rho: np.ndarray

    @property
    def stable(self) -> bool:
        return bool(np.all(self.rho < 1.0))


def solve_traffic(cfg: NetworkConfig, on_unstable: str = "error") -> TrafficSolution:
    """Effective arrival rates ``sigma = (I - P')^-1 alpha`` and nominal loads ``rho``.

    ``on_unstable`` is one of ``"error"``, ``"warn"``, ``"ignore"``.
    """
    P = cfg.routing
    K = cfg.K
    A = np.eye(K) - P.T
    # open network: spectral radius of P below one, so the Neumann series converges
    if K and np.max(np.abs(np.linalg.eigvals(P))) >= 1.0 - 1e-12:
        raise SingularRouting("routing matrix has spectral radius >= 1; the network is not open")
    try:
        sigma = np.linalg.solve(A, cfg.alpha)
    except np.linalg.LinAlgError as exc:
        raise SingularRouting(str(exc)) from exc
    resid = np.max(np.abs(sigma - cfg.alpha - P.T @ sigma)) if K else 0.0
    if resid >= 1e-10 * max(1.0, float(np.max(np.abs(sigma)))):
        raise SingularRouting(f"traffic equations badly conditioned (residual {resid:.3g})")
    load = sigma / cfg.mu
    rho = np.array([load[cfg.constituency(i)].sum() for i in range(cfg.stations)])
    sol = TrafficSolution(sigma, rho)
    if not sol.stable:
        msg = "nominal load >= 1 at station(s) " + ", ".join(str(i + 1) for i in np.flatnonzero(rho >= 1.0))
        if on_unstable == "error":
            raise Unstable(msg)
        if on_unstable == "warn":
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return sol


# ---------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    ok: bool | None  # None: not verified
    detail: str = ""
    cls: int | None = None


@dataclass
class ValidationReport:
    mode: str
    checks: list[Check] = field(default_factory=list)
    moment_order: float = math.inf

    @property
    def ok(self) -> bool:
        return all(c.ok is not False for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if c.ok is False]

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "ok": self.ok,
            "moment_order": self.moment_order if math.isfinite(self.moment_order) else "inf",
            "checks": [
                {"name": c.name, "class": None if c.cls is None else c.cls + 1, "ok": c.ok, "detail": c.detail}
                for c in self.checks
            ],
        }


def decompositions(cfg: NetworkConfig, classes, override: LambdaChoice | None = None) -> dict[int, Decomposition]:
    """Build decompositions for the given classes (config directive, else minimal)."""
    out = {}
    for k in classes:
        spec = cfg.classes[k]
        if spec.interarrival is None:
            raise NotDecomposable(f"class {k + 1} is null exogenous")
        choice = override or spec.decompose or LambdaChoice.minimal()
        out[k] = build_decomposition(spec.interarrival, choice)
    return out


def required_decomposable(cfg: NetworkConfig, mode: str) -> range:
    return range(1, cfg.L) if mode == "primary" else range(0, cfg.L)


def validate_assumptions(cfg: NetworkConfig, mode: str = "primary") -> ValidationReport:
    """Check the modelling assumptions relevant to the chosen regeneration mode."""
    if mode not in ("primary", "alternative"):
        raise ValueError(f"unknown mode {mode!r}")
    rep = ValidationReport(mode)
    if cfg.L == 0:
        rep.checks.append(Check("exogenous", False, "no class has exogenous arrivals"))
        return rep
    try:
        sol = solve_traffic(cfg, on_unstable="ignore")
        for i, r in enumerate(sol.rho):
            rep.checks.append(Check("stability", bool(r < 1.0), f"station {i + 1}: rho={r:.6g}"))
    except SingularRouting as exc:
        rep.checks.append(Check("open-network", False, str(exc)))

    for k in required_decomposable(cfg, mode):
        spec = cfg.classes[k]
        try:
            dec = decompositions(cfg, [k])[k]
            rep.checks.append(Check("A3", True, f"lambda_f={dec.lambda_f:.6g}, lambda={dec.lam:.6g}, "
                                                f"q_bar={dec.q_bar:.6g}", k))
        except RegenSimError as exc:
            rep.checks.append(Check("A3", False, f"{spec.interarrival.kind}: {exc}", k))

    # every built-in family is absolutely continuous, hence spread out
    rep.checks.append(Check("A4", True, f"class 1 interarrival {cfg.classes[0].interarrival.kind} has a density", 0))

    orders = [c.interarrival.moment_order for c in cfg.classes if c.interarrival is not None]
    orders += [c.service.moment_order for c in cfg.classes]
    rep.moment_order = min(orders)
    rep.checks.append(Check("A2", rep.moment_order > 1.0,
                            f"moments finite for orders below {rep.moment_order:g}"))

    ia1 = cfg.classes[0].interarrival
    unbounded = math.isinf(ia1.support_upper)
    services_at_zero = all(c.service.support_edge == 0.0 for c in cfg.classes)
    if unbounded or services_at_zero:
        why = "class 1 interarrivals unbounded" if unbounded else "every service law has support reaching 0"
        rep.checks.append(Check("A5", True, why))
    else:
        rep.checks.append(Check("A5", None, "unverified: no sufficient condition applies"))
    return rep
