"""Command-line entry point and experiment orchestration.

Subcommands: ``run``, ``sweep-lambda``, ``compare-modes``, ``verify``,
``validate``. Every subcommand writes a JSON document (``--out`` or stdout).

A replication is one simulation run from the phi start. One run can feed
several detectors, one per (regeneration mode, rate-ladder rung): a lambda
sweep decomposes each class once per factor with coupled exponential parts,
so all factors see the same sample path and differ only in which instants
count as regenerations.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__, oracles
from .decomp import LambdaChoice, build_decomposition
from .engine import Simulation, StateFunctional
from .errors import (ConfigInvalid, ModeUnavailable, NoRegenerationsFound, RegenSimError, TooFewCycles,
                     Unstable)
from .network import NetworkConfig, load_config, shipped_config, solve_traffic, validate_assumptions
from .regen import Detector, RegenMode
from .stats import EstimatorAccumulator, Report, time_average

OUTPUT_SCHEMA = 1


@dataclass
class RunSpec:
    config: NetworkConfig
    horizon: float
    seed: int = 0
    reps: int = 1
    mode: RegenMode = RegenMode.PRIMARY
    h: StateFunctional = field(default_factory=StateFunctional)
    level: float = 0.95
    lambda_choice: LambdaChoice | None = None  # overrides every class directive when set
    allow_unstable: bool = False
    workers: int | None = None

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.reps < 1:
            raise ValueError("replications must be >= 1")
        self.mode = RegenMode.parse(self.mode)


# ---------------------------------------------------------------------------
# one replication


@dataclass
class ReplicationResult:
    replication: int
    horizon: float
    area: float
    events: int
    #: per detector: (regeneration times, areas at those times)
    regenerations: list[tuple[np.ndarray, np.ndarray]]

    def cycles(self, i: int) -> tuple[np.ndarray, np.ndarray, float]:
        t, a = self.regenerations[i]
        if len(t) < 2:
            return np.empty(0), np.empty(0), float(t[0]) if len(t) else self.horizon
        return np.diff(a), np.diff(t), float(t[0])


def _replicate(args) -> ReplicationResult:
    cfg, ladders, detectors, horizon, seed, rep, h = args
    dets = [Detector(m, lv) for m, lv in detectors]
    sim = Simulation(cfg, ladders, seed=seed, replication=rep, h=h, observers=dets)
    sim.run(horizon)
    return ReplicationResult(rep, horizon, sim.area, sim.counters.events,
                             [(np.array(d.times), np.array(d.areas)) for d in dets])


def _map(fn, jobs: list, workers: int | None):
    workers = os.cpu_count() or 1 if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def _check_mode(cfg: NetworkConfig, mode: RegenMode, allow_unstable: bool) -> None:
    rep = validate_assumptions(cfg, mode.value)
    a3 = [c for c in rep.failures if c.name == "A3"]
    if a3:
        raise ModeUnavailable(f"{mode.value} regenerations unavailable: " +
                              "; ".join(f"class {c.cls + 1}: {c.detail}" for c in a3))
    if not allow_unstable:
        solve_traffic(cfg, on_unstable="error")


def _ladders(cfg: NetworkConfig, classes: Sequence[int], choices: Sequence[LambdaChoice | None]):
    """Per class, one decomposition per entry of ``choices`` (None = class directive or minimal)."""
    out = {}
    for k in classes:
        spec = cfg.classes[k]
        decs = [build_decomposition(spec.interarrival, c or spec.decompose or LambdaChoice.minimal())
                for c in choices]
        order = sorted(range(len(decs)), key=lambda j: decs[j].lam)
        if order != list(range(len(decs))):
            raise ValueError("rate ladder must be ascending")
        out[k] = decs
    return out


def _simulate(spec: RunSpec, modes: Sequence[RegenMode], choices: Sequence[LambdaChoice | None]):
    cfg = spec.config
    for m in modes:
        _check_mode(cfg, m, spec.allow_unstable)
    first = 0 if RegenMode.ALTERNATIVE in modes else 1
    ladders = _ladders(cfg, range(first, cfg.L), choices)
    detectors = [(m, j) for m in modes for j in range(len(choices))]
    jobs = [(cfg, ladders, detectors, spec.horizon, spec.seed, r, spec.h) for r in range(spec.reps)]
    results = _map(_replicate, jobs, spec.workers)
    return ladders, detectors, results


def _lambda_summary(ladders, j) -> dict[str, Any]:
    return {f"class {k + 1}": {"lambda": lad[j].lam, "lambda_f": lad[j].lambda_f,
                               "factor": lad[j].lam / lad[j].lambda_f, "q_bar": lad[j].q_bar}
            for k, lad in ladders.items()}


def _summarize(spec: RunSpec, results: list[ReplicationResult], i: int, mode: RegenMode,
               lambdas: dict[str, Any], extra: dict[str, Any] | None = None) -> dict[str, Any]:
    per_rep = []
    Rs, taus = [], []
    pooled_acc = EstimatorAccumulator()
    for res in results:
        R, tau, prefix = res.cycles(i)
        entry: dict[str, Any] = {"replication": res.replication, "events": res.events,
                                 "delay_prefix": prefix, "N_cycles": len(R)}
        try:
            rpt = Report.from_cycles(R, tau, level=spec.level, r_time_average=time_average(res.area, res.horizon),
                                     horizon=res.horizon, mode=mode.value, lambda_choices=lambdas,
                                     delay_prefix=prefix)
            entry["report"] = rpt.to_dict()
        except (NoRegenerationsFound, TooFewCycles, RegenSimError) as exc:
            entry["error"] = f"{type(exc).__name__}: {exc}"
        per_rep.append(entry)
        Rs.append(R)
        taus.append(tau)
        pooled_acc = pooled_acc.merge(EstimatorAccumulator.from_cycles(R, tau))
    R_all, tau_all = np.concatenate(Rs), np.concatenate(taus)
    out: dict[str, Any] = {"mode": mode.value, "lambda_choices": lambdas, "replications": per_rep}
    try:
        pooled = Report.from_cycles(
            R_all, tau_all, level=spec.level,
            r_time_average=sum(r.area for r in results) / sum(r.horizon for r in results),
            horizon=spec.horizon, mode=mode.value, lambda_choices=lambdas,
            delay_prefix=sum(e["delay_prefix"] for e in per_rep))
        out["pooled"] = pooled.to_dict()
        out["pooled_rounded"] = pooled.rounded()
        out["accumulator"] = pooled_acc.to_dict()
    except RegenSimError as exc:
        out["pooled"] = None
        out["error"] = f"{type(exc).__name__}: {exc}"
    if extra:
        out.update(extra)
    return out


def _header(spec: RunSpec, command: str) -> dict[str, Any]:
    sol = solve_traffic(spec.config, on_unstable="ignore")
    return {"schema": OUTPUT_SCHEMA, "version": __version__, "command": command, "horizon": spec.horizon,
            "seed": spec.seed, "reps": spec.reps, "h": str(spec.h), "level": spec.level,
            "traffic": {"sigma": sol.sigma.tolist(), "rho": sol.rho.tolist(), "stable": sol.stable},
            "config": spec.config.to_dict()}


# ---------------------------------------------------------------------------
# operations


def run(spec: RunSpec) -> dict[str, Any]:
    """Replications under one mode; per-replication and pooled reports."""
    ladders, detectors, results = _simulate(spec, [spec.mode], [spec.lambda_choice])
    out = _header(spec, "run")
    out["results"] = [_summarize(spec, results, 0, spec.mode, _lambda_summary(ladders, 0))]
    out["_cycles"] = [(r.replication, *r.cycles(0)) for r in results]
    return out


def sweep_lambda(spec: RunSpec, factors: Sequence[float]) -> dict[str, Any]:
    """One report per scale factor of ``lambda_f``; all factors share each replication's path."""
    if not factors or any(not f >= 1.0 for f in factors):
        raise ValueError("factors must all be >= 1")
    order = sorted(range(len(factors)), key=lambda j: factors[j])
    choices = [LambdaChoice.scaled(factors[j]) for j in order]
    ladders, detectors, results = _simulate(spec, [spec.mode], choices)
    out = _header(spec, "sweep-lambda")
    rows = [None] * len(factors)
    for rung, j in enumerate(order):
        rows[j] = _summarize(spec, results, rung, spec.mode, _lambda_summary(ladders, rung),
                             {"factor": factors[j]})
    out["results"] = rows
    out["table"] = _table(rows, "factor")
    return out


def compare_modes(spec: RunSpec) -> dict[str, Any]:
    """Primary and alternative reports from the same runs."""
    modes = [RegenMode.PRIMARY, RegenMode.ALTERNATIVE]
    ladders, detectors, results = _simulate(spec, modes, [spec.lambda_choice])
    out = _header(spec, "compare-modes")
    rows = [_summarize(spec, results, i, m, _lambda_summary(ladders, 0)) for i, (m, _) in enumerate(detectors)]
    out["results"] = rows
    out["table"] = _table(rows, "mode")
    return out


def _table(rows, key) -> list[dict[str, Any]]:
    out = []
    for r in rows:
        p = r.get("pooled") or {}
        out.append({key: r.get(key), "beta": p.get("beta"), "ci_halfwidth": p.get("ci_halfwidth"),
                    "tavc": p.get("tavc"), "avsde": p.get("avsde"), "N_cycles": p.get("N_cycles")})
    return out


def verify(spec: RunSpec, n: int = 100_000) -> dict[str, Any]:
    """Oracle checks for a config: decomposition laws, and analytic means for M/G/1-shaped networks."""
    cfg = spec.config
    out: dict[str, Any] = {"schema": OUTPUT_SCHEMA, "version": __version__, "command": "verify", "checks": []}
    for k in range(cfg.L):
        ia = cfg.classes[k].interarrival
        try:
            dec = build_decomposition(ia, spec.lambda_choice or cfg.classes[k].decompose or LambdaChoice.minimal())
        except RegenSimError as exc:
            out["checks"].append({"check": "decomposition_law", "class": k + 1, "skipped": str(exc)})
            continue
        ks = oracles.decomposition_law_check(ia, dec, n=n, seed=spec.seed)
        out["checks"].append({"check": "decomposition_law", "class": k + 1, "lambda": dec.lam, **ks.to_dict()})
    analytic = _analytic_mean(cfg)
    if analytic is not None and spec.h.kind == "total":
        res = run(spec)["results"][0]
        pooled = res.get("pooled")
        ok = pooled is not None and pooled["ci_low"] <= analytic <= pooled["ci_high"]
        out["checks"].append({"check": "analytic_mean", "analytic": analytic,
                              "beta": pooled and pooled["beta"], "ci": pooled and [pooled["ci_low"], pooled["ci_high"]],
                              "passed": ok})
    out["passed"] = all(c.get("passed", True) for c in out["checks"])
    return out


def _analytic_mean(cfg: NetworkConfig) -> float | None:
    """Mean number in system for a single Poisson-fed station with no feedback, else None."""
    from .distlib import Exponential

    if cfg.K != 1 or cfg.routing[0, 0] != 0.0:
        return None
    ia = cfg.classes[0].interarrival
    if not isinstance(ia, Exponential):
        return None
    return oracles.mg1_mean_number(ia.rate, cfg.classes[0].service)


def validate(cfg: NetworkConfig, mode: RegenMode) -> dict[str, Any]:
    rep = validate_assumptions(cfg, RegenMode.parse(mode).value)
    sol = solve_traffic(cfg, on_unstable="ignore")
    return {"schema": OUTPUT_SCHEMA, "command": "validate", **rep.to_dict(),
            "traffic": {"sigma": sol.sigma.tolist(), "rho": sol.rho.tolist()}}


# ---------------------------------------------------------------------------
# argument handling


def _config(text: str) -> NetworkConfig:
    p = Path(text)
    if p.exists():
        return load_config(p)
    if text.startswith("builtin:"):
        try:
            return shipped_config(text.split(":", 1)[1])
        except FileNotFoundError as exc:
            raise ConfigInvalid(f"no bundled config {text!r}") from exc
    raise ConfigInvalid(f"config {text!r} not found")


def _lambda(text: str | None) -> LambdaChoice | None:
    if text is None:
        return None
    if text == "minimal":
        return LambdaChoice.minimal()
    kind, _, val = text.partition(":")
    if kind in ("scale", "explicit") and val:
        return LambdaChoice.parse({kind: float(val)})
    raise argparse.ArgumentTypeError(f"bad --lambda {text!r}: use minimal, scale:S or explicit:V")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="regensim", description="Regenerative simulation of multiclass queueing networks.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, sim=True):
        p.add_argument("--config", required=True, help="JSON config path or builtin:NAME")
        p.add_argument("--mode", default="primary", choices=["primary", "alternative"])
        p.add_argument("--out", help="write the JSON report here instead of stdout")
        if not sim:
            return
        p.add_argument("--horizon", type=float, default=1e5)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--reps", type=int, default=1)
        p.add_argument("--h", default="total", help="total | class:k | indicator:c")
        p.add_argument("--level", type=float, default=0.95)
        p.add_argument("--lambda", dest="lam", type=_lambda, default=None,
                       help="minimal | scale:S | explicit:V (overrides the config)")
        p.add_argument("--allow-unstable", action="store_true")
        p.add_argument("--workers", type=int, default=None, help="worker processes (default: CPU count)")

    p = sub.add_parser("run", help="simulate and estimate under one regeneration mode")
    common(p)
    p.add_argument("--cycles-csv", help="write per-cycle records here")
    p = sub.add_parser("sweep-lambda", help="compare exponential-rate choices on common paths")
    common(p)
    p.add_argument("--factors", default="1,1.5,2", help="comma-separated multiples of lambda_f")
    p = sub.add_parser("compare-modes", help="primary vs alternative regenerations on common paths")
    common(p)
    p = sub.add_parser("verify", help="oracle checks for a config")
    common(p)
    p.add_argument("--samples", type=int, default=100_000)
    p = sub.add_parser("validate", help="check modelling assumptions")
    common(p, sim=False)
    return ap


def _spec(a) -> RunSpec:
    return RunSpec(config=_config(a.config), horizon=a.horizon, seed=a.seed, reps=a.reps, mode=a.mode,
                   h=StateFunctional.parse(a.h), level=a.level, lambda_choice=a.lam,
                   allow_unstable=a.allow_unstable, workers=a.workers)


def _emit(doc: dict[str, Any], out: str | None) -> None:
    text = json.dumps({k: v for k, v in doc.items() if not k.startswith("_")}, indent=2, default=_json_default)
    if out:
        Path(out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_cycles_csv(path, cycles) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replication", "index", "T", "tau", "R"])
        for rep, R, tau, start in cycles:
            T = start + np.concatenate([[0.0], np.cumsum(tau)[:-1]]) if len(tau) else []
            for i, (t0, x, r) in enumerate(zip(T, tau, R), 1):
                w.writerow([rep + 1, i, repr(float(t0)), repr(float(x)), repr(float(r))])


EXIT_CODES = {ConfigInvalid: 2, ModeUnavailable: 3, Unstable: 4}


def main(argv: Sequence[str] | None = None) -> int:
    a = build_parser().parse_args(argv)
    try:
        if a.command == "validate":
            doc = validate(_config(a.config), a.mode)
            _emit(doc, a.out)
            return 0 if doc["ok"] else 1
        spec = _spec(a)
        if a.command == "run":
            doc = run(spec)
            if a.cycles_csv:
                write_cycles_csv(a.cycles_csv, doc["_cycles"])
        elif a.command == "sweep-lambda":
            doc = sweep_lambda(spec, [float(x) for x in a.factors.split(",")])
        elif a.command == "compare-modes":
            doc = compare_modes(spec)
        else:
            doc = verify(spec, n=a.samples)
        _emit(doc, a.out)
        return 0 if doc.get("passed", True) else 1
    except RegenSimError as exc:
        print(f"regensim: {type(exc).__name__}: {exc}", file=sys.stderr)
        for cls, code in EXIT_CODES.items():
            if isinstance(exc, cls):
                return code
        return 1
    except ValueError as exc:
        print(f"regensim: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
