"""Command pipelines: each writes its CSV / JSON / PNG outputs into an OutputDir."""

from __future__ import annotations

import math
from itertools import product
from typing import Optional

import numpy as np

from obslab.errors import LatticeTooLarge
from obslab.measure_core import CIRCLE, ProbMeasure, TestFunctionBasis, read_measure
from obslab.dynamics.orbit import OrbitStream
from obslab.dynamics.systems import BowenSaddles, QuadraticFeigenbaum, feigenbaum_reference
from obslab.empirical import (
    checkpoint_csv,
    consecutive_gap,
    convexlike_search,
    empirical_sequence,
    pomega_estimate,
)
from obslab.observability import (
    observability_size,
    observable_set_estimate,
    point_seed,
    run_ensemble,
    sample_points,
)
from obslab import attractors as A
from obslab import equilibrium as E
from obslab.cli.config import ExperimentConfig
from obslab.cli.output import OutputDir
from obslab.cli import plots


class Context:
    """Shared state of one run: the system, the basis and a cached ensemble."""

    def __init__(self, cfg: ExperimentConfig, out: OutputDir, workers: Optional[int] = None):
        self.cfg = cfg
        self.out = out
        self.workers = workers
        self.system = cfg.system.build()
        self.basis = TestFunctionBasis(self.system.space, cfg.metric.imax)
        self._ensemble = None
        self._observable = None
        self._refs = None

    @property
    def resolution(self):
        r = self.cfg.analysis.resolution
        return tuple(r) if r else tuple(self.system.space.default_resolution)

    @property
    def references(self) -> dict:
        if self._refs is None:
            self._refs = {r.name: build_reference(r, self.system) for r in self.cfg.analysis.references}
        return self._refs

    @property
    def ensemble(self):
        if self._ensemble is None:
            e, a = self.cfg.ensemble, self.cfg.analysis
            self._ensemble = run_ensemble(
                self.system, e.size, e.seed, e.n_max, basis=self.basis, ratio=e.ratio,
                tolerance=a.cluster_tolerance, tail_fraction=a.tail_fraction, burn_in=a.burn_in,
                resolution=self.resolution, mode=e.mode, workers=self.workers,
            )
        return self._ensemble

    @property
    def observable(self):
        if self._observable is None:
            self._observable = observable_set_estimate(self.system, self.ensemble,
                                                       self.cfg.analysis.cluster_tolerance)
        return self._observable


def build_reference(ref, system) -> ProbMeasure:
    space = system.space
    if ref.kind == "lebesgue":
        return ProbMeasure.lebesgue(space)
    if ref.kind == "dirac":
        return ProbMeasure.dirac(space, ref.point)
    if ref.kind == "atoms":
        return ProbMeasure.atoms(space, ref.points, ref.weights)
    if ref.kind == "file":
        return read_measure(ref.path)
    if ref.kind == "saddles":
        return ProbMeasure.atoms(space, [system.A, system.B], [ref.weight_A, 1.0 - ref.weight_A])
    return feigenbaum_reference(ref.generation, system).measure


def _ref_distances(basis, moments, refs: dict) -> dict:
    return {k: float(basis.moment_distance(moments, v.moments(basis))) for k, v in refs.items()}


# ---------------------------------------------------------------- pomega


def run_pomega(ctx: Context) -> dict:
    cfg, sysm, out = ctx.cfg, ctx.system, ctx.out
    e, a = cfg.ensemble, cfg.analysis
    if a.orbits:
        starts = [np.asarray(x, dtype=float) for x in a.orbits]
    else:
        starts = list(sample_points(sysm, a.n_orbits, e.seed))
    refs = ctx.references
    rows, seqs = [], []
    for i, x0 in enumerate(starts):
        seq = empirical_sequence(sysm, x0, e.n_max, e.ratio, basis=ctx.basis,
                                 seed=point_seed(e.seed, i), mode=e.mode,
                                 resolution=ctx.resolution, with_logd=sysm.derivative_available)
        pom = pomega_estimate(seq, a.tail_fraction, a.cluster_tolerance, a.burn_in)
        hist_name = out.write_measure(f"orbit_{i}_final.txt", seq.final_measure())
        out.write_text(f"orbit_{i}_trace.csv", checkpoint_csv(seq, refs, hist_name, out.hash))
        gaps = consecutive_gap(seq)
        row = {
            "orbit": i,
            "x0": np.atleast_1d(np.asarray(x0, dtype=float)).tolist(),
            "pomega": pom.summary(),
            "max_n_times_gap": float(np.max(gaps * seq.checkpoints)),
            "gap_bound_violations": int(np.sum(gaps > 1.0 / seq.checkpoints)),
            "final_distance": _ref_distances(ctx.basis, seq.moments[-1], refs),
            "cluster_distance": {k: pom.cluster_distance_to(v.moments(ctx.basis), ctx.basis)
                                 for k, v in refs.items()},
        }
        if seq.logd_sums is not None:
            row["lyapunov_average"] = float(seq.lyapunov_averages()[-1])
        rows.append(row)
        seqs.append((seq, pom))
    report = {"system": sysm.name, "orbits": rows}
    if a.convexlike is not None:
        cl = a.convexlike
        seq, pom = seqs[min(cl.orbit, len(seqs) - 1)]
        i, j = pom.extremes
        mu, nu = pom.tail_moments[i], pom.tail_moments[j]
        results = []
        for lam in cl.lambdas:
            r = convexlike_search(seq, mu, nu, lam, cl.epsilon, cl.K, cl.budget)
            results.append({"lambda": float(lam), "found": r.found, "h": r.h,
                            "error": r.best_error, "scanned": r.scanned})
        report["convexlike"] = {"epsilon": cl.epsilon, "K": cl.K, "budget": cl.budget,
                                "distance_mu_nu": float(ctx.basis.moment_distance(mu, nu)),
                                "results": results,
                                "all_found": all(r["found"] for r in results)}
    if isinstance(sysm, QuadraticFeigenbaum) and a.feigenbaum_generations:
        report["feigenbaum"] = feigenbaum_checks(ctx, starts, seqs)
    out.write_json("pomega.json", report)
    out.write_png("pomega_trace.png", plots.trace_figure(seqs, refs, ctx.basis))
    return report


def feigenbaum_checks(ctx: Context, starts, seqs) -> list:
    """Reference masses 2^-n per K_{i,n}, and orbit visit frequencies against them."""
    sysm, e = ctx.system, ctx.cfg.ensemble
    n = min(e.n_max, 10**6)
    pts = [OrbitStream(sysm, x0, n, seed=point_seed(e.seed, i), mode=e.mode).points()[:, 0]
           for i, x0 in enumerate(starts)]
    rows = []
    for g in ctx.cfg.analysis.feigenbaum_generations:
        ref = feigenbaum_reference(g, sysm)
        masses = ref.masses(ref.measure)
        # skip the transient: the first 1% of iterates
        freq = []
        for p in pts:
            tail = p[n // 100:]
            idx = ref.interval_of(tail)
            freq.append(np.bincount(idx[idx >= 0], minlength=2**g) / tail.size)
        freq = np.array(freq)
        rows.append({
            "generation": g,
            "intervals": int(2**g),
            "max_reference_mass_error": float(np.max(np.abs(masses - 2.0**-g))),
            "max_visit_frequency_error": float(np.max(np.abs(freq - 2.0**-g))),
            "outside_fraction": float(1.0 - freq.sum(axis=1).min()),
            "orbit_distances": [float(seq.distances_to(ref.measure)[-1]) for seq, _ in seqs],
        })
    return rows


# ---------------------------------------------------------------- observability


def run_observability(ctx: Context) -> dict:
    cfg, sysm, out = ctx.cfg, ctx.system, ctx.out
    ens = ctx.ensemble
    profiles = {}
    for name, mu in ctx.references.items():
        prof = observability_size(sysm, mu, cfg.analysis.epsilons, ensemble=ens)
        out.write_csv(f"observability_{name}.csv", ["epsilon", "o", "ci_low", "ci_high"], prof.rows())
        profiles[name] = prof
    obs = ctx.observable
    reps = []
    for r in obs:
        d = r.as_dict()
        d["distance"] = _ref_distances(ctx.basis, r.moments, ctx.references)
        reps.append(d)
    out.write_csv("observable_representatives.csv",
                  ["atom", "mass"] + [f"m{i + 1}" for i in range(ctx.basis.imax)],
                  ([r.atom, r.mass] + [float(v) for v in r.moments] for r in obs))
    amp = np.array([p.oscillation_amplitude for p in ens.pomega])
    report = {
        "system": sysm.name,
        "ensemble": {"size": ens.size, "seed": ens.seed, "n_max": ens.n_max,
                     "converged_fraction": float(ens.converged().mean()),
                     "amplitude_median": float(np.median(amp)), "amplitude_max": float(amp.max())},
        "profiles": {k: dict(p.summary(), o=[float(v) for v in p.o],
                             epsilons=[float(v) for v in p.epsilons]) for k, p in profiles.items()},
        "observable_set": {"size": len(obs), "tolerance": obs.tolerance, "representatives": reps},
    }
    out.write_json("observability.json", report)
    if profiles:
        out.write_png("observability.png", plots.observability_figure(profiles))
    return report


# ---------------------------------------------------------------- decompose


def run_decompose(ctx: Context) -> dict:
    cfg, sysm, out = ctx.cfg, ctx.system, ctx.out
    a = cfg.analysis
    ens = ctx.ensemble
    dec = A.decompose(sysm, ens, a.cluster_tolerance, a.independence_tolerance,
                      observable=ctx.observable)
    try:
        chains = A.chain_cochain_analysis(dec, a.lattice_cap)
        chain_note = ""
    except LatticeTooLarge as exc:
        chains, chain_note = None, str(exc)
    cover = A.cochain_cover_check(dec)
    files = {}
    for r in dec.records:
        sname = out.write_csv(f"record_{r.index}_support.csv", ["bin"],
                              ([int(b)] for b in np.flatnonzero(r.support)))
        cname = out.write_csv(f"record_{r.index}_clusters.csv",
                              ["atom"] + [f"m{i + 1}" for i in range(ctx.basis.imax)],
                              ([int(at)] + [float(v) for v in m] for at, m in zip(r.atoms, r.cluster_moments)))
        files[r.index] = {"support": sname, "clusters": [cname]}
    report = A.decomposition_report(dec, chains, cover, files)
    if chains is None:
        report["chain_analysis"] = {"skipped": chain_note}
    for rec, r in zip(report["records"], dec.records):
        if r.diameter == 0.0:
            rec["location"] = A.dirac_location(r.cluster_moments[0], ctx.basis).tolist()
    biggest = sorted(dec.records, key=lambda r: (-r.size, r.index))[: a.attraction_records]
    attraction = []
    for r in biggest:
        res = A.attraction_in_mean(sysm, r, a.attraction_epsilon, ens)
        attraction.append(dict(res.as_dict(), record=r.index))
    report["attraction_in_mean"] = attraction
    report["system"] = sysm.name
    out.write_json("decomposition.json", report)
    out.write_png("decomposition.png", plots.decomposition_figure(dec))
    return report


# ---------------------------------------------------------------- equilibrium


def lyndon_words(d: int, max_len: int):
    """One word per periodic cycle of the full d-shift, up to period max_len."""
    words = []
    for n in range(1, max_len + 1):
        for w in product(range(d), repeat=n):
            rot = [w[i:] + w[:i] for i in range(n)]
            if w == min(rot) and len(set(rot)) == n:
                words.append(list(w))
    return words


def run_equilibrium(ctx: Context) -> dict:
    cfg, sysm, out = ctx.cfg, ctx.system, ctx.out
    a, e = cfg.analysis, cfg.ensemble
    code = E.build_conjugacy(sysm)
    k = a.entropy_order
    pool = []
    seen = set()
    for w in lyndon_words(sysm.degree, a.periodic_max_period):
        orbit = code.periodic_orbit(w)
        # 0... and (d-1)... code the same fixed point
        key = tuple(np.sort(np.round(orbit, 12) % 1.0))
        if key in seen:
            continue
        seen.add(key)
        mu = ProbMeasure.atoms(CIRCLE, orbit[:, None])
        pool.append(E.ply_residual(sysm, mu, k=k, r_grid=a.r_grid, kind="atomic",
                                   label="periodic " + "".join(map(str, w))))
    typical = []
    pts = sample_points(sysm, a.typical_orbits, e.seed + 1)
    for i, x0 in enumerate(pts):
        orb = E.BirkhoffOrbit(float(x0[0]) if np.ndim(x0) else float(x0), e.n_max,
                              point_seed(e.seed + 1, i), e.mode)
        an = E.ply_residual(sysm, orb, k=k, r_grid=a.r_grid, code=code, kind="lebesgue",
                            label=f"lebesgue-typical {i}")
        typical.append(an)
        pool.append(an)
    for i, p in enumerate(pool[: len(pool) - len(typical)][:2]):
        pool.append(E.combine(sysm, [typical[0], p], [0.5, 0.5], label=f"mix lebesgue/{p.label}",
                              r_grid=a.r_grid))
    Pmax, arg = E.pressure(pool)
    tests = []
    for p in pool:
        if p.kind == "atomic":
            tests.append(ProbMeasure.atoms(CIRCLE, code.periodic_orbit([0])[:, None]))
            break
    report_eq = E.observable_subset_of_equilibrium(sysm, ctx.observable, ctx.ensemble, k=k,
                                                    tests=tests, r_grid=a.r_grid)
    ld = E.large_deviation_probe(sysm, a.large_deviation.r, a.large_deviation.radius,
                                 ctx.ensemble, pool)
    ent = typical[0].entropy
    out.write_csv("entropy_blocks.csv", ["k", "H_k", "slope"],
                  ([int(r[0]), float(r[1]), float(r[2])] for r in ent.table))
    report = {
        "system": sysm.name,
        "conjugacy": {"degree": code.d, "fixed_point": code.p, "cuts": code.cuts.tolist(),
                      "monotone": code.monotone(), "residual": code.residual(),
                      "residual_bound": code.residual_bound},
        "pool": [p.as_dict() for p in pool],
        "ruelle_holds": all(p.ruelle_holds for p in pool),
        "pressure": {"max_V": Pmax, "argmax": arg.label, "argmax_kind": arg.kind,
                     "within_error": bool(abs(Pmax) <= arg.V_err)},
        "observable_subset": report_eq.as_dict(),
        "large_deviation": ld.as_dict(),
        "analysis": typical[0].as_dict(),
    }
    out.write_json("equilibrium.json", report)
    out.write_png("equilibrium.png", plots.equilibrium_figure(pool, ent))
    return report


PIPELINES = {
    "pomega": run_pomega,
    "observability": run_observability,
    "decompose": run_decompose,
    "equilibrium": run_equilibrium,
}
