import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from obslab.errors import DomainError, MeasureParseError, NormalizationError, ValidationError
from obslab.measure_core import (
    CIRCLE, INTERVAL, SQUARE, TORUS, PhaseSpace, ProbMeasure, TestFunctionBasis,
    convex_combine, pushforward, support_estimate, weak_star_dist,
)
from obslab.measure_core.io import format_measure, parse_measure, read_measure, write_measure
from obslab.measure_core.measure import dilate_mask
from obslab.dynamics import LinearExpanding, ProductHalving

from oracles import oracle_dist, oracle_g


@pytest.mark.parametrize("space", [CIRCLE, INTERVAL, SQUARE, TORUS])
def test_basis_matches_oracle(space, rng):
    basis = TestFunctionBasis(space)
    x = rng.random((50, space.dimension))
    vals = basis.evaluate(x)
    for i in range(basis.imax):
        np.testing.assert_allclose(vals[:, i], oracle_g(space, i, x), atol=1e-12)
    assert np.all(np.abs(vals) <= 1.0 + 1e-12)
    assert basis.weights[0] == 0.5 and basis.truncation_error == pytest.approx(2.0**-64)


@pytest.mark.parametrize("space", [CIRCLE, INTERVAL, SQUARE])
def test_atom_distance_matches_oracle(space, rng):
    basis = TestFunctionBasis(space)
    for _ in range(5):
        pa, pb = rng.random((3, space.dimension)), rng.random((4, space.dimension))
        wa, wb = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(4))
        a, b = ProbMeasure.atoms(space, pa, wa), ProbMeasure.atoms(space, pb, wb)
        assert weak_star_dist(a, b, basis) == pytest.approx(oracle_dist(space, pa, wa, pb, wb), abs=1e-12)


def test_histogram_moments_are_bin_averages():
    basis = TestFunctionBasis(CIRCLE)
    w = np.zeros(1024)
    w[10] = 1.0
    mu = ProbMeasure.histogram(CIRCLE, w)
    # uniform measure on one bin: moments are exact averages
    t = (10 + (np.arange(20000) + 0.5) / 20000) / 1024
    approx = basis.evaluate(t[:, None]).mean(axis=0)
    np.testing.assert_allclose(mu.moments(basis), approx, atol=1e-9)
    leb = ProbMeasure.lebesgue(CIRCLE)
    m = leb.moments(basis)
    assert m[0] == 1.0 and np.max(np.abs(m[1:])) < 1e-12


def test_validation_errors():
    with pytest.raises(NormalizationError):
        ProbMeasure.atoms(CIRCLE, [[0.1], [0.2]], [0.5, 0.4])
    with pytest.raises(ValidationError):
        ProbMeasure.atoms(CIRCLE, [[0.1], [0.2]], [1.5, -0.5])
    with pytest.raises(DomainError):
        ProbMeasure.dirac(INTERVAL, [1.5])
    with pytest.raises(ValidationError):
        ProbMeasure.histogram(SQUARE, np.full(16, 1 / 16))
    with pytest.raises(DomainError):
        weak_star_dist(ProbMeasure.lebesgue(CIRCLE), ProbMeasure.lebesgue(INTERVAL),
                       TestFunctionBasis(CIRCLE))


def test_space_parsing_and_wrap():
    assert PhaseSpace.parse("Circle") == CIRCLE
    np.testing.assert_allclose(CIRCLE.wrap(np.array([[1.25]])), [[0.25]])
    assert TORUS.periodic and not SQUARE.periodic
    with pytest.raises(Exception):
        PhaseSpace.parse("Sphere")


def test_convex_combine():
    a = ProbMeasure.dirac(CIRCLE, [0.1])
    b = ProbMeasure.dirac(CIRCLE, [0.7])
    basis = TestFunctionBasis(CIRCLE)
    c = convex_combine(0.25, a, b)
    np.testing.assert_allclose(c.moments(basis), 0.25 * a.moments(basis) + 0.75 * b.moments(basis),
                               atol=1e-15)
    assert convex_combine(1.0, a, b) is a and convex_combine(0.0, a, b) is b
    same = convex_combine(0.5, a, a)
    assert same.weights.size == 1
    with pytest.raises(DomainError):
        convex_combine(1.5, a, b)


def test_support_and_dilation():
    w = np.zeros(100)
    w[[3, 50]] = [0.6, 0.4]
    mu = ProbMeasure.histogram(INTERVAL, w)
    s = support_estimate(mu, 0.01)
    assert list(s.indices) == [3, 50] and s.mass == pytest.approx(1.0)
    mask = np.zeros(10, dtype=bool)
    mask[0] = True
    assert dilate_mask(mask, 1, True).nonzero()[0].tolist() == [0, 1, 9]
    assert dilate_mask(mask, 1, False).nonzero()[0].tolist() == [0, 1]


def test_pushforward_invariance():
    basis = TestFunctionBasis(CIRCLE)
    g2 = LinearExpanding(2)
    leb = ProbMeasure.lebesgue(CIRCLE)
    assert weak_star_dist(pushforward(leb, g2), leb, basis) < 1e-12
    d = ProbMeasure.dirac(CIRCLE, [0.25])
    assert pushforward(d, g2).points[0, 0] == 0.5
    sq = ProbMeasure.lebesgue(SQUARE, (32, 32))
    img = pushforward(sq, ProductHalving())
    assert img.weights[:16].sum() == pytest.approx(1.0)


def _measure_strategy():
    space = st.sampled_from([CIRCLE, INTERVAL, SQUARE, TORUS])

    @st.composite
    def build(draw):
        sp = draw(space)
        if draw(st.booleans()):
            m = draw(st.integers(1, 6))
            pts = draw(st.lists(st.lists(st.floats(0, 0.999999), min_size=sp.dimension,
                                         max_size=sp.dimension), min_size=m, max_size=m))
            raw = np.array(draw(st.lists(st.floats(0.01, 10), min_size=m, max_size=m)))
            w = raw / raw.sum()
            w[-1] = 1.0 - w[:-1].sum()
            if w[-1] < 0:
                w = np.full(m, 1.0 / m)
            return ProbMeasure.atoms(sp, pts, w)
        res = (8,) * sp.dimension
        raw = np.array(draw(st.lists(st.floats(0, 5), min_size=8**sp.dimension,
                                     max_size=8**sp.dimension))) + 1e-3
        return ProbMeasure.histogram(sp, (raw / raw.sum()).reshape(res))

    return build()


@settings(max_examples=60, deadline=None)
@given(_measure_strategy())
def test_io_roundtrip_bit_exact(mu):
    text = format_measure(mu)
    back = parse_measure(text)
    assert back.same_as(mu)
    assert format_measure(back) == text


def test_io_errors(tmp_path):
    mu = ProbMeasure.atoms(CIRCLE, [[0.1], [0.2]], [0.3, 0.7])
    p = write_measure(mu, tmp_path / "m.txt")
    assert read_measure(p).same_as(mu)
    bad = format_measure(mu).replace("0.7", "0.6")
    with pytest.raises(NormalizationError):
        parse_measure(bad)
    with pytest.raises(MeasureParseError) as ei:
        parse_measure(format_measure(mu).replace("space: Circle", "space: Blob"))
    assert ei.value.line == 2 and ei.value.field == "space"
    with pytest.raises(MeasureParseError):
        parse_measure("not a measure")
    with pytest.raises(MeasureParseError):
        parse_measure(format_measure(mu).replace("0.3", "abc"))


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(0, 0.999), min_size=3, max_size=3))
def test_metric_axioms_on_diracs(xs):
    basis = TestFunctionBasis(CIRCLE)
    a, b, c = (ProbMeasure.dirac(CIRCLE, [x]) for x in xs)
    dab, dbc, dac = (weak_star_dist(p, q, basis) for p, q in ((a, b), (b, c), (a, c)))
    assert dab == pytest.approx(weak_star_dist(b, a, basis), abs=1e-15)
    assert dac <= dab + dbc + 1e-12
    assert weak_star_dist(a, a, basis) == 0.0
    # with g_1 = 1 the distance never exceeds sum_{i>=2} 2^-i * 2 = 1
    assert dab <= 1.0
