"""Lyapunov integrals, PLY residuals V = h - L, K_r sets and large deviations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from obslab.errors import DomainError, UnsupportedOperation
from obslab.dynamics.orbit import OrbitStream
from obslab.dynamics.systems import LinearExpanding, SystemSpec
from obslab.empirical import accumulate_orbit, as_moments
from obslab.measure_core.basis import TestFunctionBasis
from obslab.measure_core.measure import ProbMeasure, pushforward, weak_star_dist
from obslab.equilibrium.conjugacy import ConjugacyCode, build_conjugacy
from obslab.equilibrium.entropy import (
    BlockCounts,
    EntropyEstimate,
    atomic_exact,
    entropy_from_counts,
)

DEFAULT_ORDER = 12
DEFAULT_R_GRID = (0.0, 0.05, 0.1, 0.2, 0.5, 1.0)
INVARIANCE_TOL = 0.02
BATCHES = 50


@dataclass(frozen=True)
class BirkhoffOrbit:
    """A measure given as the Birkhoff average along the orbit of x0."""

    x0: object
    n: int = 10**6
    seed: object = 0
    mode: str = "typical"

    def stream(self, system: SystemSpec) -> OrbitStream:
        return OrbitStream(system, self.x0, self.n, seed=self.seed, mode=self.mode)


def _need_circle(system: SystemSpec):
    if not system.is_circle_expanding:
        raise UnsupportedOperation(f"{system.name} is not an expanding circle map")


@dataclass
class LyapunovIntegral:
    value: float
    error: float
    method: str
    warning: str = ""
    moments: Optional[np.ndarray] = field(default=None, repr=False)


def _invariance_warning(system, nu: ProbMeasure, tol: float) -> str:
    basis = TestFunctionBasis(system.space)
    d = weak_star_dist(pushforward(nu, system), nu, basis)
    if d > tol:
        return f"measure is not invariant: dist(f_* nu, nu) = {d:.4g} > {tol}"
    return ""


def lyapunov_integral(system: SystemSpec, nu, *, invariance_tol: float = INVARIANCE_TOL,
                      basis: Optional[TestFunctionBasis] = None) -> LyapunovIntegral:
    """L = integral of log f' over nu: quadrature for measures, Birkhoff average for orbits."""
    _need_circle(system)
    basis = basis or TestFunctionBasis(system.space)
    if isinstance(nu, BirkhoffOrbit):
        stream = nu.stream(system)
        cps = np.unique(np.linspace(0, nu.n, BATCHES + 1).astype(np.int64)[1:])
        acc = accumulate_orbit(stream, basis, cps, with_logd=True)
        S = acc.obs_sums
        val = float(S[-1] / cps[-1])
        if isinstance(system, LinearExpanding):
            return LyapunovIntegral(math.log(system.d), 0.0, "orbit", "", acc.sums[-1] / cps[-1])
        seg = np.diff(np.concatenate([[0.0], S])) / np.diff(np.concatenate([[0], cps]))
        err = 2.0 * float(np.std(seg, ddof=1) / math.sqrt(seg.size)) if seg.size > 1 else 0.0
        return LyapunovIntegral(val, err, "orbit", "", acc.sums[-1] / cps[-1])
    if not isinstance(nu, ProbMeasure):
        raise DomainError("nu must be a ProbMeasure or a BirkhoffOrbit")
    f = lambda pts: system.log_derivative(np.asarray(pts)[:, 0])
    warn = _invariance_warning(system, nu, invariance_tol)
    if nu.is_atomic:
        return LyapunovIntegral(nu.integrate(f), 0.0, "quadrature", warn, nu.moments(basis))
    coarse, fine = nu.integrate(f, 8), nu.integrate(f, 16)
    return LyapunovIntegral(fine, abs(fine - coarse), "quadrature", warn, nu.moments(basis))


def orbit_counts(system: SystemSpec, orbit: BirkhoffOrbit, k: int,
                 code: Optional[ConjugacyCode] = None) -> BlockCounts:
    """Word counts of the branch itinerary along the orbit."""
    stream = orbit.stream(system)
    bc = BlockCounts(system.degree, k + 1)
    if isinstance(system, LinearExpanding):
        sym = stream.symbols()
        bc.update(sym)
        return bc.end()
    code = code or build_conjugacy(system)
    for ch in stream.chunks():
        if ch.constant:
            bc.update(np.full(ch.end - ch.j0, code.symbol(ch.pts[0])[0]))
        else:
            bc.update(code.symbol(ch.pts[:, 0]))
    return bc.end()


def entropy_estimate(system: SystemSpec, nu, method: Optional[str] = None, k: int = DEFAULT_ORDER,
                     code: Optional[ConjugacyCode] = None, seed=0, n: int = 10**6) -> EntropyEstimate:
    """Entropy of nu: 0 for finitely supported measures, else block-entropy slope.

    A non-atomic ProbMeasure is represented by the orbit of a point drawn
    from it (seeded), which is nu-typical when nu is ergodic and invariant.
    """
    _need_circle(system)
    if method is None:
        method = "atomic_exact" if isinstance(nu, ProbMeasure) and nu.is_atomic else "symbolic_block"
    if method == "atomic_exact":
        if not isinstance(nu, ProbMeasure):
            raise DomainError("atomic_exact needs a ProbMeasure")
        return atomic_exact(nu)
    if method != "symbolic_block":
        raise DomainError(f"unknown entropy method {method!r}")
    orbit = nu if isinstance(nu, BirkhoffOrbit) else BirkhoffOrbit(sample_from(nu, seed), n, seed)
    return entropy_from_counts(orbit_counts(system, orbit, k, code), k)


def sample_from(nu: ProbMeasure, seed) -> float:
    rng = np.random.default_rng(seed)
    if nu.is_atomic:
        return float(nu.points[rng.choice(nu.weights.size, p=nu.weights), 0])
    w = nu.weights.reshape(-1)
    b = rng.choice(w.size, p=w / w.sum())
    return float((b + rng.random()) / w.size)


@dataclass
class ExpandingAnalysis:
    system: str
    label: str
    entropy: EntropyEstimate
    L: float
    L_err: float
    V: float
    V_err: float
    K_r: dict
    candidate: bool
    warnings: list = field(default_factory=list)
    moments: Optional[np.ndarray] = field(default=None, repr=False)
    kind: str = ""

    @property
    def h(self) -> float:
        return self.entropy.h

    @property
    def h_err(self) -> float:
        return self.entropy.error

    @property
    def ruelle_holds(self) -> bool:
        return self.h <= self.L + self.h_err + self.L_err

    def as_dict(self) -> dict:
        return {
            "label": self.label, "h": self.h, "h_err": self.h_err, "L": self.L,
            "L_err": self.L_err, "V": self.V, "V_err": self.V_err,
            "K_r_flags": {repr(float(r)): bool(v) for r, v in self.K_r.items()},
            "equilibrium_candidate": bool(self.candidate),
            "method": self.entropy.as_dict(), "warnings": list(self.warnings),
        }


def _finish(system, label, ent, L, L_err, r_grid, warnings, moments, kind) -> ExpandingAnalysis:
    V = ent.h - L
    V_err = ent.error + L_err
    flags = {float(r): bool(V + V_err >= -float(r)) for r in r_grid}
    return ExpandingAnalysis(system.name, label, ent, float(L), float(L_err), float(V),
                             float(V_err), flags, bool(abs(V) <= V_err), warnings, moments, kind)


def ply_residual(system: SystemSpec, nu, *, k: int = DEFAULT_ORDER, r_grid=DEFAULT_R_GRID,
                 label: str = "", seed=0, n: int = 10**6, code: Optional[ConjugacyCode] = None,
                 kind: str = "") -> ExpandingAnalysis:
    """V = h - L with error h_err + L_err; candidate when |V| <= error, K_r when V >= -r."""
    _need_circle(system)
    if isinstance(nu, ProbMeasure) and not nu.is_atomic:
        nu = BirkhoffOrbit(sample_from(nu, seed), n, seed)
    ent = entropy_estimate(system, nu, k=k, code=code)
    li = lyapunov_integral(system, nu)
    warnings = [li.warning] if li.warning else []
    if not ent.monotone:
        warnings.append("block-entropy slopes are not monotone")
    kind = kind or ("atomic" if isinstance(nu, ProbMeasure) else "orbit")
    return _finish(system, label, ent, li.value, li.error, r_grid, warnings, li.moments, kind)


def combine(system: SystemSpec, parts: Sequence[ExpandingAnalysis], weights: Sequence[float],
            label: str = "", r_grid=DEFAULT_R_GRID) -> ExpandingAnalysis:
    """Convex combination: entropy and Lyapunov integral are affine in the measure."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise DomainError("weights must be a probability vector")
    h = float(sum(wi * p.h for wi, p in zip(w, parts)))
    he = float(sum(wi * p.h_err for wi, p in zip(w, parts)))
    L = float(sum(wi * p.L for wi, p in zip(w, parts)))
    Le = float(sum(wi * p.L_err for wi, p in zip(w, parts)))
    ent = EntropyEstimate(h, he, "convex_combination", max(p.entropy.k for p in parts))
    mom = None
    if all(p.moments is not None for p in parts):
        mom = sum(wi * p.moments for wi, p in zip(w, parts))
    return _finish(system, label, ent, L, Le, r_grid, [], mom, "combination")


def pressure(pool: Sequence[ExpandingAnalysis]):
    """max over the pool of h - L (the pressure of -log f' restricted to the pool)."""
    j = int(np.argmax([a.V for a in pool]))
    return pool[j].V, pool[j]


# ---------------------------------------------------------------- observable vs equilibrium


@dataclass
class EquilibriumReport:
    rows: list  # ExpandingAnalysis per observable representative / pair / test measure
    roles: list  # "observable", "pair" or "test"
    violations: list

    @property
    def consistent(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {"rows": [dict(a.as_dict(), role=r) for a, r in zip(self.rows, self.roles)],
                "violations": self.violations, "consistent": self.consistent}


def observable_subset_of_equilibrium(system: SystemSpec, observable, ensemble, *,
                                     k: int = DEFAULT_ORDER, tests: Sequence = (),
                                     r_grid=DEFAULT_R_GRID) -> EquilibriumReport:
    """Every observable representative (and pair average) should satisfy |V| <= error;
    test measures are reported with their verdict, and observable test measures
    that fail the PLY equality count as violations."""
    _need_circle(system)
    rows, roles, viol = [], [], []
    reps = []
    for rep in observable:
        i = int(rep.members[0])
        raw = ensemble.raw_points[i] if ensemble.raw_points else ensemble.points[i, 0]
        orb = BirkhoffOrbit(raw, ensemble.n_max, ensemble.point_seed(i), ensemble.mode)
        a = ply_residual(system, orb, k=k, r_grid=r_grid, label=f"observable[{rep.atom}]",
                         kind="observable")
        reps.append(a)
        rows.append(a)
        roles.append("observable")
        if not a.candidate:
            viol.append({"label": a.label, "V": a.V, "V_err": a.V_err})
    for i in range(len(reps)):
        for j in range(i, len(reps)):
            c = combine(system, [reps[i], reps[j]], [0.5, 0.5],
                        label=f"pair[{i},{j}]", r_grid=r_grid)
            rows.append(c)
            roles.append("pair")
            if not c.candidate:
                viol.append({"label": c.label, "V": c.V, "V_err": c.V_err})
    basis = ensemble.basis
    for t, nu in enumerate(tests):
        a = ply_residual(system, nu, k=k, r_grid=r_grid, label=f"test[{t}]", kind="test")
        rows.append(a)
        roles.append("test")
        mom = a.moments if a.moments is not None else as_moments(nu, basis)
        near = [basis.moment_distance(r.moments, mom) < observable.tolerance for r in observable]
        if any(near) and not a.candidate:
            viol.append({"label": a.label, "V": a.V, "V_err": a.V_err, "observable": True})
    return EquilibriumReport(rows, roles, viol)


# ---------------------------------------------------------------- large deviations


@dataclass
class LargeDeviation:
    r: float
    radius: float
    checkpoints: np.ndarray
    escape_fraction: np.ndarray
    slope: Optional[float]
    consistent: bool
    verdict: str  # "all-in-neighborhood", "decay-consistent", "decay-too-slow", "unmeasurable"

    def as_dict(self) -> dict:
        return {"r": self.r, "radius": self.radius, "slope": self.slope,
                "consistent": self.consistent, "verdict": self.verdict}


def large_deviation_probe(system: SystemSpec, r: float, radius: float, ensemble,
                          pool: Sequence[ExpandingAnalysis], schedule=None,
                          slack: float = 0.05, min_count: int = 5) -> LargeDeviation:
    """Fraction of points whose mu_n lies farther than `radius` from K_r (the pool
    members with V >= -r); its log-slope in n should be <= -r + slack."""
    _need_circle(system)
    basis = ensemble.basis
    members = np.array([a.moments for a in pool if a.K_r.get(float(r), a.V + a.V_err >= -r)])
    cps = ensemble.checkpoints
    sel = np.arange(cps.size) if schedule is None else np.searchsorted(cps, np.asarray(schedule))
    sel = sel[sel < cps.size]
    N = ensemble.size
    if members.size == 0:
        frac = np.ones(sel.size)
    else:
        mom = ensemble.moments[:, sel, :]  # (N, s, imax)
        d = basis.moment_distance(mom[:, :, None, :], members[None, None, :, :]).min(axis=-1)
        frac = (d > radius).mean(axis=0)
    ns = cps[sel].astype(float)
    if not np.any(frac > 0):
        return LargeDeviation(float(r), float(radius), cps[sel], frac, None, True, "all-in-neighborhood")
    ok = frac * N >= min_count
    if ok.sum() < 2:
        return LargeDeviation(float(r), float(radius), cps[sel], frac, None, True, "unmeasurable")
    slope = float(np.polyfit(ns[ok], np.log(frac[ok]), 1)[0])
    # a persisting fraction (slope ~ 0 up to the last checkpoint) is inconsistent
    good = slope <= -r + slack if frac[-1] * N >= min_count else True
    verdict = "decay-consistent" if good else "decay-too-slow"
    return LargeDeviation(float(r), float(radius), cps[sel], frac, slope, bool(good), verdict)
