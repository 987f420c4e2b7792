import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from obslab.errors import ConstructionError, DomainError, UnsupportedOperation
from obslab.dynamics import (
    GradientTimeOne, LinearExpanding, OrbitStream, PerturbedExpanding,
    ProductHalving, QuadraticFeigenbaum, build_bowen, feigenbaum_reference, iterate,
    log_derivative,
)
from obslab.dynamics.systems import HALF, grad_field, rational_digits


def test_doubling_exact_dyadic_reaches_zero():
    orb = iterate(LinearExpanding(2), 0.375, 10)
    np.testing.assert_array_equal(orb.iterates[:, 0], [0.375, 0.75, 0.5, 0, 0, 0, 0, 0, 0, 0])


def test_doubling_rational_period_three():
    orb = iterate(LinearExpanding(2), Fraction(1, 7), 9)
    np.testing.assert_allclose(orb.iterates[:, 0], [1 / 7, 2 / 7, 4 / 7] * 3, atol=1e-15)
    assert rational_digits(Fraction(1, 3), 2, 6).tolist() == [0, 1, 0, 1, 0, 1]


def test_doubling_typical_does_not_collapse():
    orb = iterate(LinearExpanding(2), 0.375, 200_000, seed=1, mode="typical")
    x = orb.iterates[:, 0]
    assert np.count_nonzero(x == 0.0) == 0
    # Lebesgue-typical: bin frequencies close to uniform
    h = np.histogram(x, bins=16, range=(0, 1))[0] / x.size
    assert np.max(np.abs(h - 1 / 16)) < 0.005


def test_typical_mode_is_seeded():
    a = iterate(LinearExpanding(3), 0.2, 1000, seed=7, mode="typical").iterates
    b = iterate(LinearExpanding(3), 0.2, 1000, seed=7, mode="typical").iterates
    c = iterate(LinearExpanding(3), 0.2, 1000, seed=8, mode="typical").iterates
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_symbols_are_leading_digits():
    s = OrbitStream(LinearExpanding(2), 0.3, 40).symbols()
    pts = OrbitStream(LinearExpanding(2), 0.3, 40).points()[:, 0]
    np.testing.assert_array_equal(s, (pts >= 0.5).astype(int))
    with pytest.raises(UnsupportedOperation):
        OrbitStream(PerturbedExpanding(), 0.3, 10).symbols()


def test_perturbed_map_and_derivative():
    f = PerturbedExpanding(2, 0.3)
    x = np.linspace(0, 0.99, 7)
    y = f.map(x)[:, 0]
    np.testing.assert_allclose(y, (2 * x + 0.3 * np.sin(2 * np.pi * x) / (2 * np.pi)) % 1.0)
    np.testing.assert_allclose(log_derivative(f, [0.0]), [math.log(2.3)])
    assert f.winding_number() == 2 and f.verify_expanding() == pytest.approx(1.7, abs=1e-6)
    with pytest.raises(ConstructionError):
        PerturbedExpanding(2, 1.0)
    # streamed float orbit agrees with repeated map application
    orb = iterate(f, 0.123, 30).iterates[:, 0]
    z = [0.123]
    for _ in range(29):
        z.append(f.map([z[-1]])[0, 0])
    np.testing.assert_allclose(orb, z, atol=1e-9)


def test_winding_numbers():
    for d in (2, 3, 5):
        assert LinearExpanding(d).winding_number() == d
    with pytest.raises(ConstructionError):
        LinearExpanding(1)


def test_product_map_reaches_fixed_line():
    orb = iterate(ProductHalving(), [0.8, 0.3], 2000)
    assert orb.iterates[-1, 0] == 0.0 and np.all(orb.iterates[:, 1] == 0.3)
    with pytest.raises(UnsupportedOperation):
        log_derivative(ProductHalving(), [0.1])


def test_gradient_sinks_match_field_roots():
    g = GradientTimeOne()
    s, kinds = g.critical_points
    assert np.all(np.abs(grad_field(s)) < 1e-12)
    # an independent bracket of the largest sink: phi' changes sign from + to -
    big = g.sinks_s[np.argmax(np.abs(g.sinks_s))]
    root = brentq(lambda v: float(grad_field(np.array([v]))[0]), big - 0.01, big + 0.01)
    assert abs(root - big) < 1e-12
    assert len(g.sinks_s) >= 3
    # sinks are attracting: the time-one map moves nearby points towards them
    for v in g.sinks_s[:5]:
        eps = 1e-4 * abs(v)
        for w in (v - eps, v + eps):
            assert abs(g.step_s(w) - v) < abs(w - v)


def test_gradient_time_one_against_ode_solver():
    g = GradientTimeOne()
    s0 = 0.2
    sol = solve_ivp(lambda t, y: grad_field(y), (0, 1), [s0], rtol=1e-12, atol=1e-14)
    assert abs(g.step_s(s0) - sol.y[0, -1]) < 1e-9


def test_gradient_basins_cover_circle():
    g = GradientTimeOne()
    total = sum(hi - lo for _, lo, hi in g.basin_intervals())
    assert total == pytest.approx(2 * HALF, rel=1e-12)


def test_gradient_coarse_integrator_rejected():
    with pytest.raises(ConstructionError):
        GradientTimeOne(substeps=1)


def test_bowen_geometry_and_regimes():
    osc = build_bowen("oscillating")
    assert osc.gamma == pytest.approx(4.0)
    lo, hi = osc.time_at_A_bounds()
    assert lo == pytest.approx(1 / 3) and hi == pytest.approx(2 / 3)
    np.testing.assert_allclose(osc.map(osc.A[None, :]), [osc.A], atol=1e-12)
    np.testing.assert_allclose(osc.map(osc.B[None, :]), [osc.B], atol=1e-12)
    phys = build_bowen("physical")
    assert phys.gamma == pytest.approx(1.0) and phys.physical_weight == pytest.approx(0.5)
    # the heteroclinic edges are invariant
    img = phys.map(phys.manifold_points(50))
    assert np.all((np.abs(img[:, 1]) < 1e-6) | (np.abs(img[:, 0] - 1) < 1e-6))
    with pytest.raises(ConstructionError):
        build_bowen("oscillating", {"lambda_s_A": 2.0})
    with pytest.raises(ConstructionError):
        build_bowen("physical", {"lambda_s_A": math.exp(-3.0)})
    with pytest.raises(ConstructionError):
        build_bowen("oscillating", {"lambda_s_A": math.exp(-0.5), "lambda_s_B": math.exp(-0.5)})
    with pytest.raises(ConstructionError):
        build_bowen("spiral")


def test_bowen_orbit_stays_in_square():
    orb = iterate(build_bowen("oscillating"), [0.3, 0.6], 50_000).iterates
    assert np.all((orb >= 0) & (orb <= 1))


def test_feigenbaum_reference():
    f = QuadraticFeigenbaum()
    for n in (1, 3, 5):
        ref = feigenbaum_reference(n, f)
        assert ref.intervals.shape == (2**n, 2)
        np.testing.assert_allclose(ref.masses(ref.measure), 2.0**-n)
        # intervals are pairwise disjoint
        iv = ref.intervals[np.argsort(ref.intervals[:, 0])]
        assert np.all(iv[1:, 0] > iv[:-1, 1])
    with pytest.raises(ConstructionError):
        QuadraticFeigenbaum(5.0)


def test_stream_length_checks():
    with pytest.raises(DomainError):
        OrbitStream(LinearExpanding(2), 0.1, 0)
    with pytest.raises(DomainError):
        iterate(LinearExpanding(2), 1.5, 10)
