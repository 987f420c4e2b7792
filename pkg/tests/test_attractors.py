import itertools
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from obslab.errors import DomainError, LatticeTooLarge
from obslab.attractors import (
    attraction_in_mean, chain_cochain_analysis, chain_limit_diagnostic, cochain_cover_check,
    decompose, dirac_location, independence, lattice_analysis, max_clique, neighbourhood_mask,
)
from obslab.dynamics import GradientTimeOne, LinearExpanding, build_bowen
from obslab.measure_core import CIRCLE, SQUARE, ProbMeasure, TestFunctionBasis
from obslab.observability import run_ensemble


def clique_oracle(n, edges):
    best = 1 if n else 0
    for size in range(2, n + 1):
        found = any(all((a, b) in edges for a, b in itertools.combinations(c, 2))
                    for c in itertools.combinations(range(n), size))
        if not found:
            break
        best = size
    return best


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 9).flatmap(lambda n: st.tuples(
    st.just(n), st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))))))
def test_max_clique_against_enumeration(family):
    n, raw = family
    edges = {(a, b) for a, b in raw if a != b} | {(b, a) for a, b in raw if a != b}
    adj = [sum(1 << b for b in range(n) if (a, b) in edges) for a in range(n)]
    assert max_clique(adj) == clique_oracle(n, edges)


def _unit_family():
    @st.composite
    def build(draw):
        n = draw(st.integers(1, 10))
        units = st.frozensets(st.integers(0, n - 1), min_size=1, max_size=min(n, 4))
        sets = draw(st.lists(units, min_size=1, max_size=60))
        return n, sets
    return build()


@settings(max_examples=80, deadline=None)
@given(_unit_family())
def test_dilworth_constructive_equals_brute_force(fam):
    n, sets = fam
    t0 = time.perf_counter()
    res = lattice_analysis(n, sets)
    assert time.perf_counter() - t0 < 1.0
    assert res.k == res.h == res.brute_k == res.brute_h
    assert res.dilworth_holds
    # the minimal sets are pairwise non-nested
    mins = [set(m) for m in res.minimal]
    assert all(not (a <= b) for a, b in itertools.permutations(mins, 2))


def test_lattice_rejects_bad_units():
    with pytest.raises(DomainError):
        lattice_analysis(3, [frozenset([5])])


def test_known_lattices():
    # two disjoint attractors plus points whose pω sees both
    res = lattice_analysis(2, [frozenset([0])] * 5 + [frozenset([1])] * 5 + [frozenset([0, 1])])
    assert res.k == res.h == 2
    # a nested family has a single minimal reduction
    res = lattice_analysis(3, [frozenset([0]), frozenset([0, 1]), frozenset([0, 1, 2])])
    assert res.k == res.h == 1 and res.minimal == [[0]]


@pytest.fixture(scope="module")
def g2_dec():
    ens = run_ensemble(LinearExpanding(2), size=100, seed=1, n_max=10**5)
    return decompose(LinearExpanding(2), ens)


@pytest.fixture(scope="module")
def bowen_dec():
    bow = build_bowen("oscillating")
    ens = run_ensemble(bow, size=100, seed=2, n_max=10**5)
    return decompose(bow, ens)


def test_doubling_single_physical_record(g2_dec):
    assert len(g2_dec) == 1
    r = g2_dec.records[0]
    assert r.diameter == 0.0 and r.size == 1.0 and r.physical and r.irreducible
    assert r.support.mean() > 0.9
    cov = cochain_cover_check(g2_dec)
    assert cov.verdict == "all-physical" and cov.consistent_with_observability
    res = chain_cochain_analysis(g2_dec)
    assert res.k == res.h == 1 and res.dilworth_holds
    cl = chain_limit_diagnostic(g2_dec, ProbMeasure.lebesgue(CIRCLE))
    assert cl.physical_by_chain_limit


def test_doubling_attraction_in_mean(g2_dec):
    r = g2_dec.records[0]
    m = attraction_in_mean(LinearExpanding(2), r, 0.05, g2_dec.ensemble, subset=np.arange(20))
    assert m.passed and m.N is not None and m.fractions.shape[0] == 20


def test_bowen_record_not_physical(bowen_dec):
    assert len(bowen_dec) == 1
    r = bowen_dec.records[0]
    assert r.diameter > 0.1 and r.size == 1.0 and not r.physical
    assert cochain_cover_check(bowen_dec).verdict == "cover-without-physical"
    assert bowen_dec.reduction(r.atoms[:1]).size < 1.0


def test_independence_of_records():
    bow = build_bowen("physical")
    ens = run_ensemble(bow, size=100, seed=5, n_max=10**4)
    dec = decompose(bow, ens)
    r = dec.records[0]
    assert not independence(r, r, ens.size)


def test_dirac_location_recovers_point():
    for space, x in ((CIRCLE, [0.83]), (SQUARE, [0.2, 0.7])):
        basis = TestFunctionBasis(space)
        m = ProbMeasure.dirac(space, x).moments(basis)
        np.testing.assert_allclose(dirac_location(m, basis), x, atol=1e-12)


def test_neighbourhood_mask():
    s = np.zeros(100, dtype=bool)
    s[50] = True
    assert neighbourhood_mask(s, 0.05, False).sum() == 11
    s = np.zeros(100, dtype=bool)
    s[0] = True
    assert neighbourhood_mask(s, 0.02, True).nonzero()[0].tolist() == [0, 1, 2, 98, 99]


def test_lattice_too_large():
    g = GradientTimeOne()
    ens = run_ensemble(g, size=100, seed=6, n_max=10**4, tolerance=0.001)
    dec = decompose(g, ens, physical_check=False)
    assert len(dec.observable) > 10 and len(dec) > 10
    with pytest.raises(LatticeTooLarge):
        chain_cochain_analysis(dec)
