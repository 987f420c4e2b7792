"""Ensembles of Lebesgue-sampled initial points, observability profiles and
the estimated set of observable measures."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from statsmodels.stats.proportion import proportion_confint

from obslab.errors import DiagnosticError, DomainError
from obslab.measure_core.basis import TestFunctionBasis
from obslab.measure_core.measure import ProbMeasure
from obslab.dynamics.systems import SystemSpec
from obslab.empirical import (
    DEFAULT_BURN_IN,
    DEFAULT_TAIL,
    DEFAULT_TOL,
    PomegaEstimate,
    as_moments,
    consecutive_gap,
    empirical_sequence,
    geometric_schedule,
    pomega_from_moments,
)

DEFAULT_EPS_GRID = (0.2, 0.1, 0.05, 0.02, 0.01)
MIN_ENSEMBLE = 100
FLAT_RATIO = 0.75
WORKERS_ENV = "OBSLAB_WORKERS"


def wilson(count: int, total: int, alpha: float = 0.05):
    lo, hi = proportion_confint(count, total, alpha=alpha, method="wilson")
    # endpoints are exact at 0 and N; the closed form rounds them off by an ulp
    p = count / total
    return min(float(lo), p), max(float(hi), p)


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise DomainError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


# ---------------------------------------------------------------- ensembles


@dataclass
class PointResult:
    checkpoints: np.ndarray
    moments: np.ndarray  # (ncp, imax)
    gaps: np.ndarray  # (ncp,) dist(mu_n, mu_{n+1})
    hist: np.ndarray  # final counts, flat
    lyap: Optional[np.ndarray]  # (ncp,) Birkhoff averages of log f'


def _run_point(system, x0, n_max, ratio, basis, seed, mode, resolution):
    seq = empirical_sequence(system, x0, n_max, ratio, basis=basis, seed=seed, mode=mode,
                             resolution=resolution, with_logd=system.derivative_available,
                             min_n=1)
    lyap = seq.lyapunov_averages() if seq.logd_sums is not None else None
    return PointResult(seq.checkpoints, seq.moments, consecutive_gap(seq),
                       seq.hist_counts.reshape(-1).astype(np.int32), lyap)


def _run_block(system, points, seeds, n_max, ratio, basis, mode, resolution):
    return [_run_point(system, x0, n_max, ratio, basis, s, mode, resolution)
            for x0, s in zip(points, seeds)]


@dataclass
class InitialEnsemble:
    """Sampled initial points with their per-point pω estimates."""

    system: SystemSpec
    points: np.ndarray  # (N, dim) float coordinates
    seed: int
    n_max: int
    basis: TestFunctionBasis
    resolution: tuple
    checkpoints: np.ndarray
    moments: np.ndarray  # (N, ncp, imax)
    gaps: np.ndarray  # (N, ncp)
    hists: np.ndarray  # (N, nbins) int32
    lyap: Optional[np.ndarray]  # (N, ncp)
    pomega: list
    tolerance: float
    tail_fraction: float
    raw_points: list = field(default_factory=list, repr=False)
    mode: str = "typical"

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    def __len__(self):
        return self.size

    @property
    def final_moments(self) -> np.ndarray:
        return self.moments[:, -1, :]

    def final_measure(self, i: int) -> ProbMeasure:
        return ProbMeasure.from_counts(self.basis.space, self.hists[i].reshape(self.resolution))

    def mean_histogram(self, indices) -> ProbMeasure:
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size == 0:
            raise DomainError("empty index set")
        w = (self.hists[idx] / float(self.n_max)).mean(axis=0)
        return ProbMeasure.histogram(self.basis.space, (w / w.sum()).reshape(self.resolution))

    def converged(self) -> np.ndarray:
        return np.array([p.converged for p in self.pomega])

    def subset(self, indices) -> "InitialEnsemble":
        idx = np.asarray(indices, dtype=np.int64)
        return InitialEnsemble(
            self.system, self.points[idx], self.seed, self.n_max, self.basis, self.resolution,
            self.checkpoints, self.moments[idx], self.gaps[idx], self.hists[idx],
            None if self.lyap is None else self.lyap[idx], [self.pomega[i] for i in idx],
            self.tolerance, self.tail_fraction,
            [self.raw_points[i] for i in idx] if self.raw_points else [], self.mode,
        )

    def point_seed(self, i: int):
        return point_seed(self.seed, i)

    def distances_to(self, ref) -> np.ndarray:
        """(N, ncp) distances of every checkpoint measure to a reference."""
        return self.basis.moment_distance(self.moments, as_moments(ref, self.basis))

    def pomega_distances(self, ref) -> np.ndarray:
        """Distance from each point's estimated pω set (tail checkpoints) to ref."""
        m = as_moments(ref, self.basis)
        return np.array([p.distance_to(m, self.basis) for p in self.pomega])


def point_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(index)])


def sample_points(system: SystemSpec, size: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5A4D]))
    return rng.random((size, system.space.dimension))


def run_ensemble(system: SystemSpec, size: int = 400, seed: int = 0, n_max: int = 10**6, *,
                 points: Optional[Sequence] = None, basis: Optional[TestFunctionBasis] = None,
                 ratio: float = 1.1, tolerance: float = DEFAULT_TOL,
                 tail_fraction: float = DEFAULT_TAIL, burn_in: float = DEFAULT_BURN_IN,
                 resolution=None, mode: str = "typical", workers: Optional[int] = None,
                 min_size: int = MIN_ENSEMBLE) -> InitialEnsemble:
    """Evaluate pω estimates for `size` uniform points (or the given points).

    Per-point randomness comes from SeedSequence([seed, index]); blocks of
    indices run in a process pool whose size is read from OBSLAB_WORKERS
    (the only knob), and results are merged in index order, so the outcome
    does not depend on the worker count.
    """
    basis = basis or TestFunctionBasis(system.space)
    resolution = tuple(resolution or system.space.default_resolution)
    if points is None:
        raw = list(sample_points(system, size, seed))
    else:
        raw = list(points)
    if len(raw) < min_size:
        raise DomainError(f"ensembles need at least {min_size} points")
    coords = np.array([[float(c) for c in np.atleast_1d(np.asarray(p, dtype=object))]
                       for p in raw], dtype=float)
    system.space.check(coords)
    seeds = [point_seed(seed, i) for i in range(len(raw))]
    workers = worker_count() if workers is None else workers
    args = (n_max, ratio, basis, mode, resolution)
    if workers <= 1 or len(raw) < 2 * workers:
        results = _run_block(system, raw, seeds, *args)
    else:
        nblk = workers * 4
        bounds = np.linspace(0, len(raw), nblk + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_run_block, system, raw[a:b], seeds[a:b], *args)
                    for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
            results = [r for f in futs for r in f.result()]
    cps = results[0].checkpoints
    moments = np.stack([r.moments for r in results])
    gaps = np.stack([r.gaps for r in results])
    hists = np.stack([r.hist for r in results])
    lyap = np.stack([r.lyap for r in results]) if results[0].lyap is not None else None
    pom = [pomega_from_moments(cps, moments[i], basis, tail_fraction, tolerance, burn_in)
           for i in range(len(raw))]
    return InitialEnsemble(system, coords, int(seed), int(n_max), basis, resolution, cps,
                           moments, gaps, hists, lyap, pom, float(tolerance),
                           float(tail_fraction), raw, mode)


# ---------------------------------------------------------------- observability size


@dataclass
class ObservabilityProfile:
    measure_moments: np.ndarray
    epsilons: np.ndarray  # decreasing
    counts: np.ndarray
    total: int
    o: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    basin: np.ndarray  # indices whose pω is a single converged cluster within eps_min
    basin_fraction: float
    basin_ci: tuple
    physical: bool
    basins: list  # per-eps sampled index sets A_eps

    @property
    def eps_min(self) -> float:
        return float(self.epsilons[-1])

    def rows(self):
        for e, o, lo, hi in zip(self.epsilons, self.o, self.ci_low, self.ci_high):
            yield float(e), float(o), float(lo), float(hi)

    def summary(self) -> dict:
        return {
            "physical": bool(self.physical),
            "basin_fraction": float(self.basin_fraction),
            "basin_ci": [float(self.basin_ci[0]), float(self.basin_ci[1])],
            "eps_floor": self.eps_min,
        }


def observability_size(system: SystemSpec, mu, epsilons=DEFAULT_EPS_GRID,
                       ensemble: Optional[InitialEnsemble] = None,
                       flat_ratio: float = FLAT_RATIO) -> ObservabilityProfile:
    """o_mu(eps): fraction of points having a pω element within eps of mu.

    Physical flag (a finite-grid surrogate for lim_{eps->0} o > 0): the
    Wilson lower bound of o(eps_min) is positive, the profile is flat over
    the two smallest eps (o(eps_min) >= flat_ratio * o(eps_2)), and some
    sampled point has pω = {mu} up to eps_min.
    """
    if ensemble is None:
        raise DomainError("observability needs an evaluated ensemble")
    if ensemble.system.space != system.space:
        raise DomainError("ensemble and system live on different phase spaces")
    if isinstance(mu, ProbMeasure) and mu.space != system.space:
        raise DomainError("measure and system live on different phase spaces")
    m = as_moments(mu, ensemble.basis)
    eps = np.array(sorted({float(e) for e in epsilons}, reverse=True))
    if eps.size < 2 or eps[-1] <= 0:
        raise DomainError("need at least two positive epsilon values")
    N = ensemble.size
    d = ensemble.pomega_distances(m)
    basins = [np.nonzero(d < e)[0] for e in eps]
    counts = np.array([b.size for b in basins])
    ci = np.array([wilson(int(c), N) for c in counts])
    single = np.array([p.converged and p.cluster_distance_to(m, ensemble.basis) < eps[-1]
                       for p in ensemble.pomega])
    basin = np.nonzero(single)[0]
    bci = wilson(int(basin.size), N)
    o = counts / N
    flat = o[-1] >= flat_ratio * o[-2] if o[-2] > 0 else False
    physical = bool(ci[-1, 0] > 0 and flat and basin.size > 0)
    return ObservabilityProfile(m, eps, counts, N, o, ci[:, 0], ci[:, 1], basin,
                                basin.size / N, bci, physical, basins)


# ---------------------------------------------------------------- observable set


@dataclass
class ObservableRepresentative:
    moments: np.ndarray
    members: np.ndarray  # indices of points whose pω touches this atom
    mass: float
    ci: tuple
    atom: int
    n_pooled: int  # number of pooled pω clusters merged into the atom
    diameter: float  # complete-linkage diameter of the merged clusters

    def as_dict(self) -> dict:
        return {"mass": self.mass, "ci": list(self.ci), "members": int(self.members.size),
                "pooled": self.n_pooled, "diameter": self.diameter}


@dataclass
class ObservableSet:
    representatives: list
    pool_moments: np.ndarray  # all pooled clusters
    pool_owner: np.ndarray  # point index of each pooled cluster
    pool_atom: np.ndarray  # atom label of each pooled cluster
    point_atoms: list  # per point: sorted atom labels touched
    tolerance: float
    size: int

    def __len__(self):
        return len(self.representatives)

    def __iter__(self):
        return iter(self.representatives)

    @property
    def moments(self) -> np.ndarray:
        return np.array([r.moments for r in self.representatives])


def complete_linkage(scaled: np.ndarray, tol: float) -> np.ndarray:
    if scaled.shape[0] == 1:
        return np.zeros(1, dtype=np.int64)
    Z = linkage(scaled, method="complete", metric="cityblock")
    return fcluster(Z, t=tol, criterion="distance").astype(np.int64) - 1


def _thin(rows: np.ndarray, basis: TestFunctionBasis, radius: float) -> list:
    kept = [rows[0]]
    for r in rows[1:]:
        if np.min(basis.moment_distance(np.array(kept), r)) > radius:
            kept.append(r)
    return kept


def observable_set_estimate(system: SystemSpec, ensemble: InitialEnsemble,
                            cluster_tolerance: Optional[float] = None) -> ObservableSet:
    """Pool pω clusters over the ensemble and re-cluster them into atoms.

    Complete linkage keeps every atom of diameter below the tolerance, so
    a continuum of limit measures (e.g. Diracs on a line of fixed points)
    is cut into small pieces rather than chained into one.  Each atom's
    mass is the fraction of points whose pω touches it.  The result is
    never empty.
    """
    tol = ensemble.tolerance if cluster_tolerance is None else float(cluster_tolerance)
    basis = ensemble.basis
    pool, owner = [], []
    for i, p in enumerate(ensemble.pomega):
        for c in p.clusters:
            if c.radius <= 0.5 * tol:
                pool.append(c.moments)
                owner.append(i)
                continue
            # an extended cluster (a non-converged tail) is pooled through its
            # members, thinned to a tol/2-net, so the atoms it touches span its hull
            rows = p.tail_moments[np.isin(p.tail_ns, c.members)]
            for r in _thin(rows, basis, 0.5 * tol):
                pool.append(r)
                owner.append(i)
    pool = np.array(pool)
    owner = np.array(owner, dtype=np.int64)
    labels = complete_linkage(basis.scaled(pool), tol)
    # relabel atoms by first appearance for stable output order
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first, kind="stable")
    remap = np.empty(labels.max() + 1, dtype=np.int64)
    remap[np.unique(labels)[order]] = np.arange(order.size)
    labels = remap[labels]
    N = ensemble.size
    reps = []
    for a in range(labels.max() + 1):
        sel = labels == a
        members = np.unique(owner[sel])
        mom = pool[sel].mean(axis=0)
        if sel.sum() > 1:
            sub = basis.scaled(pool[sel])
            diam = float(np.max(np.sum(np.abs(sub[:, None, :] - sub[None, :, :]), axis=-1)))
        else:
            diam = 0.0
        reps.append(ObservableRepresentative(mom, members, members.size / N,
                                             wilson(int(members.size), N), a, int(sel.sum()), diam))
    point_atoms = [np.unique(labels[owner == i]) for i in range(N)]
    return ObservableSet(reps, pool, owner, labels, point_atoms, tol, N)


# ---------------------------------------------------------------- minimality


@dataclass
class MinimalityVerdict:
    verdict: str  # "full-basin" or "escaping"
    escaping_fraction: float
    ci: tuple
    escaping: np.ndarray
    outside_representatives: list

    def __bool__(self):
        return self.verdict == "full-basin"


def minimality_check(system: SystemSpec, ensemble: InitialEnsemble, K: Sequence,
                     radius: float, observable: Optional[ObservableSet] = None) -> MinimalityVerdict:
    """Does the candidate compact set K (finite net + covering radius) catch every pω?

    A point escapes when one of its pω clusters lies farther than `radius`
    from every element of K.
    """
    basis = ensemble.basis
    net = np.array([as_moments(k, basis) for k in K])
    if net.size == 0:
        raise DomainError("candidate set is empty")
    esc = []
    for i, p in enumerate(ensemble.pomega):
        cm = p.cluster_moments
        d = basis.moment_distance(cm[:, None, :], net[None, :, :]).min(axis=1)
        if np.any(d > radius):
            esc.append(i)
    esc = np.array(esc, dtype=np.int64)
    outside = []
    if observable is not None:
        for r in observable.representatives:
            if basis.moment_distance(net, r.moments).min() > radius:
                outside.append(r.atom)
    N = ensemble.size
    frac = esc.size / N
    return MinimalityVerdict("full-basin" if esc.size == 0 else "escaping", frac,
                             wilson(int(esc.size), N), esc, outside)


# ---------------------------------------------------------------- uniform convergence


@dataclass
class UniformVerdict:
    passed: bool
    schedule: np.ndarray
    sup_distance: np.ndarray
    n_uniform: Optional[int]  # first schedule n after which the sup stays below tolerance
    tolerance: float
    max_increase: float  # largest rise of the sup between consecutive schedule points

    def __bool__(self):
        return self.passed


def uniform_convergence_check(system: SystemSpec, candidate: Sequence,
                              ensemble: InitialEnsemble, subset=None, schedule=None,
                              tolerance: float = 0.05) -> UniformVerdict:
    """sup_{x in K} dist(mu_{n,x}, candidate set) along a schedule of n.

    Passes when the sup falls below `tolerance` at some schedule point and
    stays below it for the rest of the schedule.
    """
    basis = ensemble.basis
    net = np.array([as_moments(k, basis) for k in candidate])
    idx = np.arange(ensemble.size) if subset is None else np.asarray(subset, dtype=np.int64)
    cps = ensemble.checkpoints
    if schedule is None:
        sel = np.arange(cps.size)
    else:
        sel = np.searchsorted(cps, np.asarray(schedule, dtype=np.int64))
        if np.any(sel >= cps.size) or np.any(cps[sel] != np.asarray(schedule)):
            raise DomainError("schedule values must be ensemble checkpoints")
    mom = ensemble.moments[idx][:, sel, :]  # (k, s, imax)
    d = basis.moment_distance(mom[:, :, None, :], net[None, None, :, :]).min(axis=2)
    sup = d.max(axis=0)
    below = sup < tolerance
    n_uniform = None
    if below[-1]:
        k = below.size - 1
        while k > 0 and below[k - 1]:
            k -= 1
        n_uniform = int(cps[sel][k])
    inc = float(np.max(np.diff(sup), initial=0.0))
    return UniformVerdict(bool(below[-1]), cps[sel], sup, n_uniform, float(tolerance), inc)
