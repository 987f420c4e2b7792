"""Acceptance criteria 1-12.  Each test prints one CRITERION line (also
collected in the terminal summary).  Tolerances are the pinned values."""

import copy
import math
import time

import numpy as np
import pytest
import yaml

from conftest import record_criterion
from oracles import oracle_dist

from obslab import attractors as A
from obslab import equilibrium as E
from obslab.cli.config import PRESETS, preset, preset_text, validate
from obslab.cli.main import EXIT_OK, run
from obslab.dynamics import LinearExpanding
from obslab.dynamics.systems import s_to_x
from obslab.empirical import consecutive_gap, convexlike_search, empirical_sequence
from obslab.measure_core import CIRCLE, INTERVAL, SQUARE, TORUS, ProbMeasure, TestFunctionBasis, weak_star_dist
from obslab.observability import (
    DEFAULT_EPS_GRID, observability_size, observable_set_estimate, run_ensemble, sample_points,
)
from obslab.cli.pipelines import lyndon_words

TOL = 0.02  # cluster / observable-set tolerance


def ensemble_for(name, **over):
    cfg = preset(name)
    sysm = cfg.system.build()
    e, a = cfg.ensemble, cfg.analysis
    kw = dict(size=e.size, seed=e.seed, n_max=e.n_max, ratio=e.ratio, mode=e.mode,
              tolerance=a.cluster_tolerance, tail_fraction=a.tail_fraction, burn_in=a.burn_in)
    kw.update(over)
    return cfg, sysm, run_ensemble(sysm, **kw)


@pytest.fixture(scope="module")
def g2():
    t0 = time.perf_counter()
    cfg, sysm, ens = ensemble_for("doubling")
    obs = observable_set_estimate(sysm, ens)
    leb = observability_size(sysm, ProbMeasure.lebesgue(CIRCLE), DEFAULT_EPS_GRID, ensemble=ens)
    i = 0
    orb = E.BirkhoffOrbit(ens.raw_points[i], ens.n_max, ens.point_seed(i), ens.mode)
    typ = E.ply_residual(sysm, orb, k=12, kind="lebesgue", label="typical")
    return dict(cfg=cfg, sys=sysm, ens=ens, obs=obs, leb=leb, typ=typ,
                elapsed=time.perf_counter() - t0)


@pytest.fixture(scope="module")
def bowen_osc():
    cfg, sysm, ens = ensemble_for("bowen_oscillating")
    return cfg, sysm, ens, A.decompose(sysm, ens)


@pytest.fixture(scope="module")
def bowen_phys():
    cfg, sysm, ens = ensemble_for("bowen_physical")
    return cfg, sysm, ens, A.decompose(sysm, ens)


@pytest.fixture(scope="module")
def gradient():
    cfg, sysm, ens = ensemble_for("gradient_sinks")
    return cfg, sysm, ens, A.decompose(sysm, ens)


@pytest.fixture(scope="module")
def product():
    return ensemble_for("product_halving")


# ---------------------------------------------------------------- 1


def test_c1_weak_star_metric():
    rng = np.random.default_rng(1)
    spaces = [CIRCLE, INTERVAL, SQUARE, TORUS]
    bases = {sp: TestFunctionBasis(sp) for sp in spaces}
    worst_sym = worst_tri = worst_oracle = 0.0
    elapsed = 0.0
    for _ in range(1000):
        sp = spaces[rng.integers(4)]
        ms = []
        for _ in range(3):
            m = int(rng.integers(1, 6))
            ms.append((rng.random((m, sp.dimension)), rng.dirichlet(np.ones(m))))
        mu = [ProbMeasure.atoms(sp, p, w) for p, w in ms]
        b = bases[sp]
        t0 = time.perf_counter()
        dab = weak_star_dist(mu[0], mu[1], b)
        dba = weak_star_dist(mu[1], mu[0], b)
        dbc = weak_star_dist(mu[1], mu[2], b)
        dac = weak_star_dist(mu[0], mu[2], b)
        elapsed += time.perf_counter() - t0
        worst_sym = max(worst_sym, abs(dab - dba))
        worst_tri = max(worst_tri, dac - dab - dbc)
        worst_oracle = max(worst_oracle, abs(dab - oracle_dist(sp, *ms[0], *ms[1])))
    ok = worst_sym <= 1e-12 and worst_tri <= 1e-12 and worst_oracle <= 1e-12 and elapsed < 10
    record_criterion(1, ok, f"symmetry {worst_sym:.1e}, triangle excess {worst_tri:.1e}, "
                            f"oracle {worst_oracle:.1e}, {elapsed:.2f} s")
    assert ok


# ---------------------------------------------------------------- 2


def test_c2_consecutive_gap():
    worst = 0.0
    checked = 0
    for name in PRESETS:
        sysm = preset(name).system.build()
        n_max = min(preset(name).ensemble.n_max, 10**5)
        starts = sample_points(sysm, 20, 7)
        for seed in range(20):
            seq = empirical_sequence(sysm, starts[seed], n_max, seed=seed, mode="typical")
            ratio = consecutive_gap(seq) * seq.checkpoints
            worst = max(worst, float(ratio.max()))
            checked += seq.checkpoints.size
    ok = worst <= 1.0
    record_criterion(2, ok, f"max n * dist(mu_n, mu_n+1) = {worst:.6f} over {checked} checkpoints, "
                            f"{len(PRESETS)} systems x 20 seeds")
    assert ok


# ---------------------------------------------------------------- 3


def test_c3_doubling(g2):
    obs, leb, typ = g2["obs"], g2["leb"], g2["typ"]
    basis = g2["ens"].basis
    d = float(basis.moment_distance(obs.moments[0], ProbMeasure.lebesgue(CIRCLE).moments(basis)))
    ok = (len(obs) == 1 and d <= TOL and bool(np.all(leb.o >= 0.99))
          and abs(typ.V) <= 0.05 and g2["elapsed"] < 300)
    record_criterion(3, ok, f"{len(obs)} cluster at {d:.2e} from Lebesgue, min o = {leb.o.min():.3f}, "
                            f"|V| = {abs(typ.V):.4f} (k = 12), {g2['elapsed']:.0f} s")
    assert ok


# ---------------------------------------------------------------- 4


def test_c4_product(product):
    cfg, sysm, ens = product
    basis = ens.basis
    worst = 0.0
    single = True
    for i, p in enumerate(ens.pomega):
        ref = ProbMeasure.dirac(SQUARE, [0.0, ens.points[i, 1]]).moments(basis)
        single = single and p.n_clusters == 1
        worst = max(worst, p.cluster_distance_to(ref, basis))
    mid = ProbMeasure.dirac(SQUARE, [0.0, 0.5])
    eps = DEFAULT_EPS_GRID
    prof = observability_size(sysm, mid, eps, ensemble=ens)
    # oracle: pω(x, y) = {delta_(0, y)}; o(eps) is the length of {y : D(y) < eps}
    ys = (np.arange(100_000) + 0.5) / 100_000
    m = basis.evaluate(np.column_stack([np.zeros_like(ys), ys]))
    D = basis.moment_distance(m, mid.moments(basis))
    width = np.array([np.mean(D < e) for e in prof.epsilons])
    ciw = prof.ci_high - prof.ci_low
    dev = np.abs(prof.o - width) / ciw
    ok = single and worst <= TOL and bool(np.all(dev <= 2.0))
    record_criterion(4, ok, f"single clusters {single}, max dist to delta_(0,y0) {worst:.2e}, "
                            f"max |o - strip| / CI width = {dev.max():.2f}")
    assert ok


# ---------------------------------------------------------------- 5


def test_c5_bowen_oscillating(bowen_osc):
    cfg, sysm, ens, dec = bowen_osc
    conv = ens.converged()
    amp = np.array([p.oscillation_amplitude for p in ens.pomega])
    frac_nc = float(np.mean(~conv))
    frac_amp = float(np.mean(amp > 0.1))
    cl = cfg.analysis.convexlike
    seq = empirical_sequence(sysm, ens.raw_points[0], ens.n_max, seed=ens.point_seed(0), mode=ens.mode)
    p0 = ens.pomega[0]
    i, j = p0.extremes
    mu, nu = p0.tail_moments[i], p0.tail_moments[j]
    found = [convexlike_search(seq, mu, nu, lam, 0.05, cl.K, cl.budget).found
             for lam in np.round(np.arange(11) / 10, 1)]
    pos = [r for r in dec.records if r.diameter > 0]
    big = [r for r in pos if r.size >= 1.0 - dec.independence_tolerance]
    verdict = A.cochain_cover_check(dec).verdict
    ok = (frac_nc >= 0.95 and frac_amp >= 0.95 and all(found) and len(dec) == 1 and len(big) == 1
          and verdict == "cover-without-physical")
    record_criterion(5, ok, f"not converged {frac_nc:.3f}, amplitude > 0.1 for {frac_amp:.3f} "
                            f"(median {np.median(amp):.3f}), convex-like {sum(found)}/11, "
                            f"{len(dec)} record(s) diameter {dec.records[0].diameter:.3f} "
                            f"size {dec.records[0].size:.3f}, {verdict}")
    assert ok


# ---------------------------------------------------------------- 6


def test_c6_bowen_physical(bowen_phys):
    cfg, sysm, ens, dec = bowen_phys
    target = ProbMeasure.atoms(SQUARE, [sysm.A, sysm.B], [0.5, 0.5])
    d = ens.distances_to(target)[:, -1]
    frac = float(np.mean(d < 0.05))
    ok = frac >= 0.90
    record_criterion(6, ok, f"{frac:.3f} of points within 0.05 of (dA + dB)/2 at n = {ens.n_max} "
                            f"(median {np.median(d):.4f})")
    assert ok


# ---------------------------------------------------------------- 7


def test_c7_gradient(gradient):
    cfg, sysm, ens, dec = gradient
    basis = ens.basis
    sinks = np.asarray(s_to_x(sysm.sinks_s), dtype=float)
    matched = []
    for r in dec.records:
        if r.diameter != 0.0:
            continue
        x = A.dirac_location(r.cluster_moments[0], basis)[0]
        e = np.abs(sinks - x)
        err = float(np.min(np.minimum(e, 1.0 - e)))
        if err <= 1e-6:
            matched.append((r, err))
    total = dec.size_total
    d0 = observability_size(sysm, ProbMeasure.dirac(CIRCLE, [0.0]), cfg.analysis.epsilons, ensemble=ens)
    k02 = list(d0.epsilons).index(0.2)
    observable02 = d0.ci_low[k02] > 0
    ok = len(matched) >= 3 and total >= 0.95 and observable02 and not d0.physical
    worst = max(e for _, e in matched) if matched else float("nan")
    record_criterion(7, ok, f"{len(matched)} Dirac records at sinks (max error {worst:.1e}), "
                            f"sizes sum {total:.3f}, o_delta0(0.2) = {d0.o[k02]:.3f} "
                            f"(CI low {d0.ci_low[k02]:.3f}), physical {d0.physical}")
    assert ok


# ---------------------------------------------------------------- 8 / 9


def periodic_pool(sysm, code, max_len, k):
    pool, seen = [], set()
    for w in lyndon_words(sysm.degree, max_len):
        orbit = code.periodic_orbit(w)
        key = tuple(np.sort(np.round(orbit, 12) % 1.0))
        if key in seen:
            continue
        seen.add(key)
        mu = ProbMeasure.atoms(CIRCLE, orbit[:, None])
        pool.append(E.ply_residual(sysm, mu, k=k, kind="atomic", label="periodic " + "".join(map(str, w))))
    return pool


@pytest.fixture(scope="module")
def ruelle_pool():
    cfg = preset("perturbed_expanding")
    sysm = cfg.system.build()
    code = E.build_conjugacy(sysm)
    pool = periodic_pool(sysm, code, 5, 12)
    pts = sample_points(sysm, 3, 99)
    typical = []
    for i, x0 in enumerate(pts):
        orb = E.BirkhoffOrbit(float(x0[0]), 10**6, i, "typical")
        typical.append(E.ply_residual(sysm, orb, k=12, code=code, kind="lebesgue", label=f"typical {i}"))
    for i, p in enumerate(pool[:4]):
        pool.append(E.combine(sysm, [typical[i % 3], p], [0.5, 0.5], label="mix " + p.label))
    pool += typical
    return sysm, pool


def test_c8_ruelle(ruelle_pool):
    sysm, pool = ruelle_pool
    holds = all(p.ruelle_holds for p in pool)
    maxV, arg = E.pressure(pool)
    ok = len(pool) >= 20 and holds and abs(maxV) <= arg.V_err and arg.kind == "lebesgue"
    record_criterion(8, ok, f"pool {len(pool)}, h <= L + error for all: {holds}, max V = {maxV:.4f} "
                            f"+- {arg.V_err:.4f} at {arg.label} ({arg.kind})")
    assert ok


def test_c9_periodic_measures(ruelle_pool, g2):
    sysm, pool = ruelle_pool
    rows = []
    for system, atoms in ((sysm, [p for p in pool if p.kind == "atomic"]),):
        bound = -float(np.min(system.log_derivative(np.linspace(0, 1, 100_001))))
        rows += [(p.V, p.V_err, bound) for p in atoms]
    # doubling: periodic atoms against the evaluated ensemble's observability
    g2sys, ens = g2["sys"], g2["ens"]
    code = E.build_conjugacy(g2sys)
    flags = []
    for p in periodic_pool(g2sys, code, 5, 12):
        rows.append((p.V, p.V_err, -math.log(2)))
    for w in lyndon_words(2, 5):
        orbit = code.periodic_orbit(w)
        mu = ProbMeasure.atoms(CIRCLE, orbit[:, None])
        prof = observability_size(g2sys, mu, DEFAULT_EPS_GRID, ensemble=ens)
        # observable: o(eps) > 0 (Wilson lower bound) at every eps of the grid
        flags.append(bool(np.all(prof.ci_low > 0)))
    v_ok = all(V <= b + err and b + err < 0 for V, err, b in rows)
    ok = v_ok and not any(flags)
    worst = max(V - b - err for V, err, b in rows)
    record_criterion(9, ok, f"{len(rows)} periodic measures, max V - (-min log f' + error) = {worst:.2e}, "
                            f"observable flags {sum(flags)}")
    assert ok


# ---------------------------------------------------------------- 10


def test_c10_dilworth(g2, bowen_osc, bowen_phys, product):
    rng = np.random.default_rng(10)
    cases, worst_t = 0, 0.0
    ok = True
    for _ in range(200):
        n = int(rng.integers(1, 11))
        sets = [frozenset(rng.choice(n, int(rng.integers(1, min(n, 4) + 1)), replace=False).tolist())
                for _ in range(int(rng.integers(1, 400)))]
        t0 = time.perf_counter()
        res = A.lattice_analysis(n, sets)
        worst_t = max(worst_t, time.perf_counter() - t0)
        ok = ok and res.k == res.h == res.brute_k == res.brute_h
        cases += 1
    cfg, sysm, ens = product
    decs = [A.decompose(g2["sys"], g2["ens"]), bowen_osc[3], bowen_phys[3],
            A.decompose(sysm, ens, physical_check=False)]
    for dec in decs:
        assert len(dec) <= 10
        t0 = time.perf_counter()
        res = A.chain_cochain_analysis(dec)
        worst_t = max(worst_t, time.perf_counter() - t0)
        ok = ok and res.dilworth_holds and res.brute_k is not None
        cases += 1
    ok = ok and worst_t < 1.0
    record_criterion(10, ok, f"k = h = brute force on {cases} lattices, slowest {worst_t:.3f} s")
    assert ok


# ---------------------------------------------------------------- 11


def test_c11_attraction_in_mean(bowen_phys, gradient):
    eps = 0.05
    rows = []
    cfg, sysm, ens, dec = bowen_phys
    r = max(dec.records, key=lambda r: r.size)
    res = A.attraction_in_mean(sysm, r, eps, ens, subset=r.basin[:100])
    rows.append(("bowen physical", res))
    cfg, sysm, ens, dec = gradient
    for r in sorted(dec.records, key=lambda r: -r.size)[:3]:
        rows.append((f"gradient record {r.index}", A.attraction_in_mean(sysm, r, eps, ens)))
    ok = all(m.passed and m.N is not None and m.pass_fraction[-1] >= 1 - eps for _, m in rows)
    detail = "; ".join(f"{name}: N = {m.N}, share {m.pass_fraction[-1]:.3f}" for name, m in rows)
    record_criterion(11, ok, detail)
    assert ok


# ---------------------------------------------------------------- 12


def reduced(name):
    data = yaml.safe_load(preset_text(name))
    data = copy.deepcopy(data)
    e = data.setdefault("ensemble", {})
    e["size"] = 100
    e["n_max"] = min(e.get("n_max", 10**6), 20_000)
    a = data.setdefault("analysis", {})
    a["attraction_records"] = 1
    if "equilibrium" in data.get("commands", []):
        a.update(entropy_order=8, periodic_max_period=2, typical_orbits=1)
    if "convexlike" in a:
        a["convexlike"] = dict(a["convexlike"], budget=200_000, lambdas=[0.0, 0.5, 1.0])
    if "feigenbaum_generations" in a:
        a["feigenbaum_generations"] = [2, 4]
    return validate(data)


def test_c12_worker_determinism(tmp_path):
    bad = []
    for name in PRESETS:
        cfg = reduced(name)
        blobs = []
        for w in (1, 4, 8):
            d = tmp_path / f"{name}_{w}"
            assert run(cfg, list(cfg.commands), str(d), workers=w) == EXIT_OK
            blobs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
        if not (blobs[0] == blobs[1] == blobs[2]):
            bad.append(name)
    ok = not bad
    record_criterion(12, ok, f"{len(PRESETS)} presets (reduced size) byte-identical at workers 1, 4, 8"
                             + (f"; differing: {bad}" if bad else ""))
    assert ok
