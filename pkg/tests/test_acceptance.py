"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (see ``conftest.py``). Stochastic
criteria run on fixed seeds chosen before looking at the outcome.
"""

import math
import time

import numpy as np
import pytest

from regensim import distlib as D
from regensim.cli import RunSpec, compare_modes, run, sweep_lambda
from regensim.decomp import G_cdf, LambdaChoice, build_decomposition
from regensim.network import shipped_config
from regensim.oracles import decomposition_law_check, mg1_mean_number, mm1_mean_number
from regensim.stats import (EstimatorAccumulator, avsde_hat, avsde_two_pass, b_hat, beta_hat, s_hat,
                            z_value)

SEED = 2024


def _per_rep(result, key="avsde"):
    return [e["report"][key] if "report" in e else None for e in result["replications"]]


# 1 -------------------------------------------------------------------------

LAW_FAMILIES = [
    D.Gamma(2, 3),
    D.ParetoLomax(10, 1 / 18),
    D.ParetoLomax(10, 1 / 9),
    D.HyperExp2(0.5, 2 / 3, 2),
    D.Lognormal(0, 2 / 3),
    D.Weibull(0.5, 1.0),  # truncated automatically
]


def test_criterion_01_decomposition_law(verdict):
    t0 = time.perf_counter()
    worst, fails = 0.0, []
    for i, fam in enumerate(LAW_FAMILIES):
        for j, factor in enumerate((1.0, 2.0)):
            dec = build_decomposition(fam, LambdaChoice.scaled(factor))
            ks = decomposition_law_check(fam, dec, n=100_000, seed=1000 + 10 * i + j)
            worst = max(worst, ks.statistic / ks.critical)
            if not ks.passed:
                fams = f"{fam.kind}@{factor}"
                fails.append(fams)
    dt = time.perf_counter() - t0
    ok = not fails and dt < 30
    assert verdict(1, ok, f"12 KS tests, worst D/D_crit = {worst:.3f}, failures {fails}, {dt:.1f}s")


# 2 -------------------------------------------------------------------------

CLOSED_FORM = [
    D.Exponential(0.5),
    D.Gamma(2, 3),
    D.Gamma(3.5, 0.7),
    D.Lognormal(0, 2 / 3),
    D.ParetoLomax(10, 1 / 18),
    D.ParetoLomax(10, 1 / 9),
    D.HyperExp2(0.5, 2 / 3, 2),
    D.Weibull(1.5, 0.3),
    D.ExpPlus(0.5, D.Weibull(2, 0.05)),
    D.TruncatedTail(D.Weibull(0.5, 1.0), D.weibull_truncation_point(0.5, 1.0)),
]


def test_criterion_02_lambda_f_grid(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for fam in CLOSED_FORM:
        closed = D.lambda_f(fam)
        grid, _ = D.lambda_f_grid(fam)
        worst = max(worst, abs(grid - closed) / closed)
    dt = time.perf_counter() - t0
    assert verdict(2, worst < 1e-6 and dt < 5, f"max relative gap {worst:.2e} over {len(CLOSED_FORM)} families, {dt:.2f}s")


# 3 -------------------------------------------------------------------------


def test_criterion_03_gamma_identity(verdict):
    dec = build_decomposition(D.Gamma(2, 3), {"explicit": 3.0})
    xs = np.linspace(0.0, 10.0, 1000)
    gap = float(np.max(np.abs(G_cdf(dec, xs) - (1.0 - np.exp(-3.0 * xs)))))
    assert verdict(3, gap < 1e-9, f"sup |G - Exp(3) cdf| = {gap:.2e}")


# 4 -------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_04_mm1(verdict):
    cfg = shipped_config("mm1")
    truth = mm1_mean_number(0.5, 1.0)
    res = run(RunSpec(cfg, 1e5, seed=SEED, reps=100, workers=1))["results"][0]
    covered = sum(e["report"]["ci_low"] <= truth <= e["report"]["ci_high"] for e in res["replications"])
    beta = res["pooled"]["beta"]
    ok = covered >= 90 and abs(beta - truth) <= 0.01 * truth
    assert verdict(4, ok, f"{covered}/100 CIs cover 1.0, pooled beta {beta:.4f}")


# 5 -------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_05_mg1(verdict):
    cfg = shipped_config("mg1")
    pk = mg1_mean_number(0.5, D.Gamma(2, 4))
    pooled = run(RunSpec(cfg, 1e5, seed=SEED, reps=50, workers=1))["results"][0]["pooled"]
    ok = pooled["ci_low"] <= pk <= pooled["ci_high"]
    assert verdict(5, ok, f"PK mean {pk} vs pooled CI [{pooled['ci_low']:.4f}, {pooled['ci_high']:.4f}]")


# 6 -------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_06_rate_sweep(verdict):
    doc = sweep_lambda(RunSpec(shipped_config("table1_surrogate"), 1e6, seed=SEED, reps=10, workers=1),
                       [1.0, 1.5, 2.0])
    pooled = [r["pooled"] for r in doc["results"]]
    # joint CIs: Bonferroni over the three factors
    z3 = z_value(1 - 0.05 / 3)
    lo = max(p["beta"] - z3 * p["s"] / math.sqrt(p["t_cycles"]) for p in pooled)
    hi = min(p["beta"] + z3 * p["s"] / math.sqrt(p["t_cycles"]) for p in pooled)
    a = lo <= hi
    N = [p["N_cycles"] for p in pooled]
    b = N[0] > N[1] > N[2]
    tavc = [p["tavc"] for p in pooled]
    c = max(tavc) / min(tavc) - 1 <= 0.15
    K = [p["avsde"] for p in pooled]
    d = K[0] < K[1] < K[2]
    # per-replication view, reported only
    reps = [_per_rep(r, "tavc") for r in doc["results"]]
    within = sum(max(t) / min(t) - 1 <= 0.15 for t in zip(*reps))
    detail = (f"beta {[round(p['beta'], 4) for p in pooled]} joint={a}; N {N}; "
              f"TAVC spread {max(tavc) / min(tavc) - 1:.3f}; K {[f'{k:.3g}' for k in K]}; "
              f"per-rep TAVC within 15% in {within}/10")
    assert verdict(6, a and b and c and d, detail)


# 7, 8 ----------------------------------------------------------------------


def _mode_wins(name):
    doc = compare_modes(RunSpec(shipped_config(name), 1e6, seed=SEED, reps=10, workers=1))
    prim, alt = (_per_rep(r) for r in doc["results"])
    alt_wins = sum(a is not None and p is not None and a < p for p, a in zip(prim, alt))
    return alt_wins, [r["avsde"] for r in doc["table"]]


@pytest.mark.slow
def test_criterion_07_exponential_class1(verdict):
    alt_wins, K = _mode_wins("table1_class1_exp")
    assert verdict(7, alt_wins > 5, f"alternative K below primary in {alt_wins}/10, pooled K {K[0]:.3g} vs {K[1]:.3g}")


@pytest.mark.slow
def test_criterion_08_crossover(verdict):
    low, K_low = _mode_wins("table1_class1_expweibull_share0005")
    high, K_high = _mode_wins("table1_class1_expweibull_share01")
    ok = (10 - low) > 5 and high > 5
    detail = (f"share 0.005: primary wins {10 - low}/10 (K {K_low[0]:.3g} vs {K_low[1]:.3g}); "
              f"share 0.1: alternative wins {high}/10 (K {K_high[0]:.3g} vs {K_high[1]:.3g})")
    assert verdict(8, ok, detail)


# 9 -------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_09_subsequence_ordering(verdict):
    # primary times are a thinned subsequence of alternative times on this toy
    doc = compare_modes(RunSpec(shipped_config("two_poisson"), 1e6, seed=SEED, reps=20, workers=1))
    thinned, full = (_per_rep(r) for r in doc["results"])
    held = sum(t >= f for t, f in zip(thinned, full))
    ratio = sorted(t / f for t, f in zip(thinned, full))
    assert verdict(9, held >= 18, f"K(thinned) >= K(full) in {held}/20, ratio min {ratio[0]:.3f} median {ratio[10]:.3f}")


# 10 ------------------------------------------------------------------------


def test_criterion_10_micro_oracle(verdict):
    acc = EstimatorAccumulator.from_cycles([2.0, 4.0], [1.0, 3.0])
    got = (beta_hat(acc), s_hat(acc), b_hat(acc), avsde_hat(acc))
    want = (1.5, math.sqrt(0.125), -0.5, 0.140625)
    gap = max(abs(g - w) for g, w in zip(got, want))
    assert verdict(10, gap <= 1e-12, f"max abs error {gap:.1e}")


# 11 ------------------------------------------------------------------------


def _est(acc):
    return np.array([beta_hat(acc), s_hat(acc), b_hat(acc), avsde_hat(acc)])


def test_criterion_11_merge_and_two_pass(verdict):
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    worst_merge = worst_pass = 0.0
    for _ in range(1000):
        n = int(rng.integers(4, 200))
        tau = rng.exponential(rng.uniform(0.1, 10), n)
        R = tau * rng.uniform(0, 20) + rng.normal(0, rng.uniform(0.1, 5), n) * np.sqrt(tau)
        whole = _est(EstimatorAccumulator.from_cycles(R, tau))
        cuts = np.sort(rng.choice(np.arange(1, n), size=min(3, n - 1), replace=False))
        parts = [EstimatorAccumulator.from_cycles(r, t) for r, t in zip(np.split(R, cuts), np.split(tau, cuts))]
        left = ((parts[0] + parts[1]) + parts[2]) + parts[3]
        right = parts[0] + (parts[1] + (parts[2] + parts[3]))
        scale = np.abs(whole).max()
        for m in (left, right):
            worst_merge = max(worst_merge, float(np.max(np.abs(_est(m) - whole) / np.maximum(np.abs(whole), 1e-3 * scale))))
        worst_pass = max(worst_pass, abs(whole[3] - avsde_two_pass(R, tau)) / whole[3])
    dt = time.perf_counter() - t0
    ok = worst_merge < 1e-9 and worst_pass < 1e-9 and dt < 5
    assert verdict(11, ok, f"merge rel {worst_merge:.1e}, two-pass rel {worst_pass:.1e}, {dt:.2f}s")
