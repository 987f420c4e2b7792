import math
from collections import Counter

import numpy as np
import pytest
from scipy.optimize import brentq

from obslab.errors import DomainError, UndersampledError, UnsupportedOperation
from obslab.dynamics import LinearExpanding, PerturbedExpanding, ProductHalving
from obslab.equilibrium import (
    BirkhoffOrbit, BlockCounts, build_conjugacy, combine, entropy_estimate, entropy_from_counts,
    lyapunov_integral, ply_residual, pressure,
)
from obslab.measure_core import CIRCLE, ProbMeasure


def test_block_counts_match_naive_and_chunking(rng):
    s = rng.integers(0, 3, 5000)
    one = BlockCounts(3, 4).update(s)
    many = BlockCounts(3, 4)
    for part in np.array_split(s, 17):
        many.update(part)
    for k in range(1, 5):
        np.testing.assert_array_equal(one.counts[k - 1], many.counts[k - 1])
        naive = Counter(tuple(s[i:i + k]) for i in range(s.size - k + 1))
        for w, c in naive.items():
            code = 0
            for a in w:
                code = code * 3 + int(a)
            assert one.counts[k - 1][code] == c
    both = one.merge(many)
    assert both.total(2) == 2 * one.total(2)
    # words never straddle two sequences
    a = BlockCounts(2, 3).update([0, 1]).end().update([1, 0])
    assert a.total(3) == 0 and a.total(2) == 2
    with pytest.raises(DomainError):
        one.merge(BlockCounts(2, 4))


def test_entropy_of_iid_and_markov_sources(rng):
    p = 0.3
    s = (rng.random(2_000_000) < p).astype(int)
    est = entropy_from_counts(BlockCounts(2, 9).update(s), 8)
    exact = -p * math.log(p) - (1 - p) * math.log(1 - p)
    assert abs(est.h - exact) <= est.error + 1e-3
    # two-state Markov chain: h = sum_i pi_i H(P_i)
    P = np.array([[0.9, 0.1], [0.4, 0.6]])
    pi = np.array([0.8, 0.2])
    u = rng.random(2_000_000)
    x = np.empty(u.size, dtype=int)
    x[0] = 0
    for i in range(1, u.size):
        x[i] = int(u[i] < P[x[i - 1], 1])
    est = entropy_from_counts(BlockCounts(2, 9).update(x), 8)
    H = lambda q: -(q * np.log(q)).sum()
    exact = pi[0] * H(P[0]) + pi[1] * H(P[1])
    assert abs(est.h - exact) <= est.error + 1e-3
    with pytest.raises(UndersampledError) as ei:
        entropy_from_counts(BlockCounts(2, 13).update(x[:10_000]), 12)
    assert ei.value.args


def test_conjugacy_of_doubling_is_identity():
    code = build_conjugacy(LinearExpanding(2))
    x = np.linspace(0, 0.999, 50)
    np.testing.assert_allclose(code.encode(x), x, atol=1e-5)
    assert code.monotone() and code.residual() <= code.residual_bound


def test_conjugacy_of_perturbed_map():
    f = PerturbedExpanding(2, 0.3)
    code = build_conjugacy(f)
    assert code.monotone() and code.residual() <= code.residual_bound
    for word in ([0, 1], [0, 0, 1], [0, 1, 1]):
        orb = code.periodic_orbit(word)
        y = orb[0]
        for _ in word:
            y = f.map(np.array([y]))[0, 0]
        assert abs(((y - orb[0] + 0.5) % 1.0) - 0.5) < 1e-10
        np.testing.assert_array_equal(code.itinerary(orb[0], len(word))[0, : len(word)], word)
    with pytest.raises(DomainError):
        code.periodic_orbit([2])
    with pytest.raises(UnsupportedOperation):
        build_conjugacy(ProductHalving())


def test_period_two_residual_equals_minus_lyapunov():
    f = PerturbedExpanding(2, 0.3)
    # independent oracle: solve f(f(x)) = x + 1 on the lift for the 01-cycle
    F = lambda x: 2 * x + 0.3 * np.sin(2 * np.pi * x) / (2 * np.pi)
    x = brentq(lambda t: F(F(t)) - t - 1.0, 0.05, 0.6)
    orbit = np.array([x % 1.0, F(x) % 1.0])
    code_orbit = np.sort(build_conjugacy(f).periodic_orbit([0, 1]))
    np.testing.assert_allclose(np.sort(orbit), code_orbit, atol=1e-10)
    mu = ProbMeasure.atoms(CIRCLE, orbit[:, None])
    an = ply_residual(f, mu)
    dF = lambda t: 2 + 0.3 * np.cos(2 * np.pi * t)
    L = np.mean(np.log(dF(orbit)))
    assert an.h == 0.0 and an.L == pytest.approx(L, abs=1e-14)
    assert an.V == pytest.approx(-L, abs=1e-14) and an.V_err == 0.0
    assert not an.candidate and an.ruelle_holds
    assert an.V <= -math.log(1.7)


def test_lebesgue_typical_doubling_is_equilibrium():
    g2 = LinearExpanding(2)
    an = ply_residual(g2, BirkhoffOrbit(0.1234, 10**6, seed=3), k=10)
    assert an.L == math.log(2) and an.L_err == 0.0
    assert abs(an.h - math.log(2)) <= an.h_err and an.candidate
    assert all(an.K_r.values())


def test_lyapunov_quadrature_and_warning():
    f = PerturbedExpanding(2, 0.3)
    leb = ProbMeasure.lebesgue(CIRCLE)
    li = lyapunov_integral(f, leb)
    xs = (np.arange(200_000) + 0.5) / 200_000
    assert li.value == pytest.approx(np.mean(np.log(2 + 0.3 * np.cos(2 * np.pi * xs))), abs=1e-6)
    # a Dirac off the fixed point is not invariant
    assert "not invariant" in lyapunov_integral(f, ProbMeasure.dirac(CIRCLE, [0.3])).warning
    assert lyapunov_integral(LinearExpanding(2), leb).warning == ""


def test_combine_is_affine_and_pressure():
    g2 = LinearExpanding(2)
    typ = ply_residual(g2, BirkhoffOrbit(0.1234, 10**6, seed=3), k=10)
    fix = ply_residual(g2, ProbMeasure.dirac(CIRCLE, [0.0]), k=10)
    mix = combine(g2, [typ, fix], [0.25, 0.75])
    assert mix.h == pytest.approx(0.25 * typ.h) and mix.L == pytest.approx(math.log(2))
    assert mix.V == pytest.approx(0.25 * typ.V + 0.75 * fix.V)
    m, arg = pressure([typ, fix, mix])
    assert arg is typ and m == typ.V
    with pytest.raises(DomainError):
        combine(g2, [typ, fix], [0.5, 0.6])


def test_entropy_methods():
    g3 = LinearExpanding(3)
    assert entropy_estimate(g3, ProbMeasure.dirac(CIRCLE, [0.5])).method == "atomic_exact"
    with pytest.raises(DomainError):
        entropy_estimate(g3, ProbMeasure.dirac(CIRCLE, [0.5]), method="magic")
    with pytest.raises(UnsupportedOperation):
        entropy_estimate(ProductHalving(), ProbMeasure.lebesgue(CIRCLE))
