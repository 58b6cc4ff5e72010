import numpy as np
import pytest
from scipy import stats

from regensim import distlib as D
from regensim.decomp import build_decomposition
from regensim.errors import InfiniteSecondMoment, Unstable
from regensim.oracles import (birth_death_mean, decomposition_law_check, direct_sample, ks_critical,
                              mg1_mean_number, mm1_mean_number)


def test_mm1_examples():
    assert mm1_mean_number(0.5, 1.0) == pytest.approx(1.0)
    assert mm1_mean_number(0.0, 1.0) == 0.0
    assert mm1_mean_number(0.9, 1.0) == pytest.approx(9.0)
    with pytest.raises(Unstable):
        mm1_mean_number(1.0, 1.0)


def test_birth_death_agrees_with_formula():
    for lam in (0.1, 0.5, 0.9):
        assert birth_death_mean(lam, 1.0) == pytest.approx(mm1_mean_number(lam, 1.0), rel=1e-10)


def test_mg1_examples():
    assert mg1_mean_number(0.5, D.Exponential(1.0)) == pytest.approx(mm1_mean_number(0.5, 1.0), rel=1e-12)
    assert mg1_mean_number(0.5, D.Gamma(2, 4)) == pytest.approx(0.3125, rel=1e-12)
    assert mg1_mean_number(0.5, D.Gamma(50, 50)) < mm1_mean_number(0.5, 1.0)
    with pytest.raises(InfiniteSecondMoment):
        mg1_mean_number(0.1, D.ParetoLomax(2, 1))
    with pytest.raises(InfiniteSecondMoment):
        mg1_mean_number(0.1, D.ParetoLomax(1.5, 1))
    with pytest.raises(Unstable):
        mg1_mean_number(2.0, D.Exponential(1.0))


def test_ks_critical():
    # asymptotic 99.9% quantile of the Kolmogorov distribution
    assert ks_critical(1) == pytest.approx(stats.kstwobign.isf(0.001), rel=1e-3)
    assert ks_critical(100, 100) == pytest.approx(ks_critical(50))


def test_law_check_examples():
    g = D.Gamma(2, 3)
    assert decomposition_law_check(g, build_decomposition(g, {"explicit": 3.0}), 100_000, 1).passed
    p = D.ParetoLomax(10, 1 / 18)
    assert decomposition_law_check(p, build_decomposition(p, {"explicit": 11 / 18}), 100_000, 7).passed
    bad = build_decomposition(p, {"explicit": 0.25}, unchecked=True)
    assert not decomposition_law_check(p, bad, 100_000, 1).passed


def test_direct_sample_is_reproducible():
    a = direct_sample(D.Lognormal(0, 2 / 3), 100, 4)
    assert np.array_equal(a, direct_sample(D.Lognormal(0, 2 / 3), 100, 4))
