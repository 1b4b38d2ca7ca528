import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

import oracles
from conftest import GRID_GRAPHS
from htnet.design import (
    Bernoulli,
    ClusterRandomized,
    CompletelyRandomized,
    IndependentSetATE,
    IndependentSetTTE,
    classify_design,
    exposure_count_summary,
)
from htnet.errors import DesignError, EnumerationTooLarge
from htnet.exposure import ExposureModel
from htnet.graph import ClusterPartition, path_graph, star_graph

BIN, SYM = ExposureModel.BINARY, ExposureModel.SYMMETRIC


def test_bernoulli_pmf():
    d = Bernoulli(3, 0.5)
    for z in oracles.assignments(3):
        assert d.pmf(z) == 0.125


def test_crd_pmf():
    d = CompletelyRandomized(4, 2)
    assert d.pmf((1, 1, 0, 0)) == pytest.approx(1 / 6, abs=1e-15)
    assert d.pmf((1, 1, 1, 0)) == 0.0


def test_crd_samples_have_fixed_size():
    d = CompletelyRandomized(6, 2)
    Z = d.sample_many(np.random.default_rng(0), 500)
    assert np.all(Z.sum(axis=1) == 2)


@pytest.mark.parametrize("p,value", [(0.0, 0), (1.0, 1)])
def test_degenerate_bernoulli(p, value):
    z = Bernoulli(5, p).sample(seed=3)
    assert np.all(z == value)
    assert Bernoulli(5, p).support_size() == 1


def test_sampling_deterministic_per_seed():
    d = Bernoulli(6, 0.3)
    assert np.array_equal(d.sample(seed=11), d.sample(seed=11))


def test_support_sizes():
    assert len(list(Bernoulli(3, 0.4).support())) == 8
    pts = list(CompletelyRandomized(4, 2).support())
    assert len(pts) == 6 and all(p == pytest.approx(1 / 6, abs=1e-15) for _, p in pts)


def test_is_tte_support_on_path3():
    d = IndependentSetTTE(path_graph(3), (0, 2), 1)
    pts = sorted(d.support())
    assert pts == [((0, 1, 1), 0.5), ((1, 1, 0), 0.5)]


def test_is_ate_support_on_path3():
    d = IndependentSetATE(path_graph(3), (0, 2), 1)
    assert sorted(z for z, _ in d.support()) == [(0, 0, 1), (1, 0, 0)]


def test_is_tte_overlapping_neighbor_treated_once():
    # leaves 1 and 2 of a star share the centre as a neighbor
    d = IndependentSetTTE(star_graph(4), (1, 2, 3), 2)
    for z, _ in d.support():
        assert sum(z) == 3 and z[0] == 1


def test_is_validation():
    with pytest.raises(DesignError, match="independent"):
        IndependentSetATE(path_graph(3), (0, 1), 1)
    with pytest.raises(DesignError, match="n_1"):
        IndependentSetATE(path_graph(3), (0, 2), 3)


def test_budget_error_names_size():
    with pytest.raises(EnumerationTooLarge, match="enumeration too large.*1048576"):
        Bernoulli(20, 0.5).support_arrays(budget=1000)


def _pmf_oracle(d):
    if isinstance(d, Bernoulli):
        return lambda z: oracles.pmf_bernoulli(d.p, z)
    if isinstance(d, CompletelyRandomized):
        return lambda z: oracles.pmf_crd(d.n_t, z)
    return lambda z: oracles.pmf_cluster(d.partition.assignment, d.K, d.K_t, z)


DESIGNS = [
    Bernoulli(4, 0.3),
    Bernoulli(5, 0.5),
    CompletelyRandomized(5, 2),
    CompletelyRandomized(4, 3),
    ClusterRandomized(ClusterPartition.from_assignment([0, 0, 1, 2, 2]), 2),
]


@pytest.mark.parametrize("d", DESIGNS, ids=lambda d: d.kind)
def test_support_matches_bruteforce_pmf(d):
    ref = _pmf_oracle(d)
    Z, p = d.support_arrays()
    assert math.fsum(p) == pytest.approx(1.0, abs=1e-12)
    got = {tuple(int(v) for v in z): float(q) for z, q in zip(Z, p)}
    assert len(got) == len(Z)
    for z in oracles.assignments(d.n):
        assert got.get(z, 0.0) == pytest.approx(ref(z), abs=1e-15)
        assert d.pmf(z) == pytest.approx(ref(z), abs=1e-15)


@pytest.mark.parametrize(
    "d",
    DESIGNS + [IndependentSetATE(star_graph(4), (1, 2, 3), 1), IndependentSetTTE(path_graph(5), (0, 2, 4), 2)],
    ids=lambda d: d.kind,
)
def test_sampler_chi_square(d):
    R = 100_000
    Z, p = d.support_arrays()
    index = {z.tobytes(): s for s, z in enumerate(Z)}
    draws = d.sample_many(np.random.default_rng(2024), R)
    counts = np.bincount([index[z.tobytes()] for z in draws], minlength=len(p))
    if len(p) == 1:
        assert counts[0] == R
        return
    assert chisquare(counts, R * p).pvalue > 1e-4


def test_exposure_count_single_edge():
    s = exposure_count_summary(Bernoulli(2, 0.5), path_graph(2), BIN, (1, 1))
    assert (s.mean, s.variance, s.classification) == (0.5, 0.75, "Random")


def test_exposure_count_matches_oracle():
    g = GRID_GRAPHS["cycle-5"]
    d = CompletelyRandomized(5, 2)
    for tau in [(1, 1), (0, 0), (1, 0)]:
        s = exposure_count_summary(d, g, BIN, tau)
        mean, var = oracles.count_moments(lambda z: oracles.pmf_crd(2, z), g.neighborhoods, "binary", tau)
        assert s.mean == pytest.approx(mean, abs=1e-12)
        assert s.variance == pytest.approx(var, abs=1e-12)


def test_is_ate_fixed_on_path3():
    s = exposure_count_summary(IndependentSetATE(path_graph(3), (0, 2), 1), path_graph(3), BIN, (1, 0))
    assert s.variance == 0.0 and s.fixed


def test_single_point_design_is_constant():
    c = classify_design(Bernoulli(3, 1.0), path_graph(3), BIN, (1, 1), (0, 0))
    assert c.constant_design and c.tau1.variance == 0.0 and c.verdict == "Fixed"


def test_mc_classification_is_approximate():
    c = classify_design(CompletelyRandomized(4, 2), path_graph(4), BIN, (1, 1), (0, 0), mode="mc", R=2000, seed=1)
    assert c.approximate and c.verdict == "Random"


def test_mixed_verdict_when_one_count_is_constant():
    # with a single control on a path, that control always has a treated neighbor
    c = classify_design(CompletelyRandomized(4, 3), path_graph(4), BIN, (1, 1), (0, 0))
    assert c.tau0.fixed and c.tau0.mean == 0.0
    assert not c.tau1.fixed
    assert c.verdict == "Mixed"


@pytest.mark.parametrize("kind", ["ate", "tte"])
@pytest.mark.parametrize("g", [path_graph(3), star_graph(4), star_graph(5)], ids=["p3", "s4", "s5"])
def test_independent_set_designs_fixed(kind, g):
    from htnet.graph import greedy_independent_set

    S = greedy_independent_set(g)
    if kind == "ate":
        c = classify_design(IndependentSetATE(g, S, 1), g, BIN, (1, 0), (0, 0))
    else:
        c = classify_design(IndependentSetTTE(g, S, 1), g, BIN, (1, 1), (0, 0))
    assert c.verdict == "Fixed"


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.data())
def test_crd_support_counts(n, data):
    n_t = data.draw(st.integers(0, n))
    Z, p = CompletelyRandomized(n, n_t).support_arrays()
    assert len(Z) == math.comb(n, n_t)
    assert np.all(Z.sum(axis=1) == n_t)
    assert math.fsum(p) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kind", ["ate", "tte"])
def test_independent_set_unequal_degrees_not_fixed(kind):
    # on path-5 the set {0, 2, 4} mixes degree-1 and degree-2 units, so the
    # number of untouched controls depends on which unit is drawn
    g = path_graph(5)
    cls, tau1 = (IndependentSetATE, (1, 0)) if kind == "ate" else (IndependentSetTTE, (1, 1))
    c = classify_design(cls(g, (0, 2, 4), 1), g, BIN, tau1, (0, 0))
    assert not c.tau0.fixed
    assert c.verdict != "Fixed"
