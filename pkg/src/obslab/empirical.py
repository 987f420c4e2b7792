"""Empirical measure sequences mu_n = (1/n) sum_{j<n} delta_{f^j x} and pω estimates.

Checkpoint measures are carried by their exact moment vectors against the
test-function basis (the metric only sees moments); the final empirical
measure is also kept as a histogram.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import pdist, squareform

from obslab.errors import DiagnosticError, DomainError
from obslab.measure_core.basis import TestFunctionBasis
from obslab.measure_core.kernels import accumulate_chunk, basis_args, distance_trace_chunk, moments_of_points
from obslab.measure_core.measure import ProbMeasure
from obslab.dynamics.orbit import CHUNK, OrbitStream
from obslab.dynamics.systems import SystemSpec

DEFAULT_RATIO = 1.1
DEFAULT_TOL = 0.02
DEFAULT_TAIL = 0.9
DEFAULT_BURN_IN = 0.01
MIN_TAIL_CHECKPOINTS = 20


def geometric_schedule(n_max: int, ratio: float = DEFAULT_RATIO, start: int = 1) -> np.ndarray:
    """Checkpoints start, ~start*ratio, ~start*ratio^2, ..., n_max (deduplicated)."""
    if ratio <= 1.0:
        raise DomainError("checkpoint ratio must exceed 1")
    if n_max < start:
        raise DomainError("n_max below the first checkpoint")
    kmax = int(math.ceil(math.log(n_max / start) / math.log(ratio))) + 1
    ns = np.unique(np.ceil(start * ratio ** np.arange(kmax + 1) - 1e-9).astype(np.int64))
    ns = ns[(ns >= start) & (ns <= n_max)]
    if ns[-1] != n_max:
        ns = np.append(ns, n_max)
    return ns


def as_moments(ref, basis: TestFunctionBasis) -> np.ndarray:
    if isinstance(ref, ProbMeasure):
        return ref.moments(basis)
    arr = np.asarray(ref, dtype=float)
    if arr.shape != (basis.imax,):
        raise DomainError("reference moments do not match the basis")
    return arr


# ---------------------------------------------------------------- accumulation


@dataclass
class OrbitAccumulation:
    checkpoints: np.ndarray
    sums: np.ndarray  # (ncp, imax): S_n
    next_values: np.ndarray  # (ncp, imax): g(x_n)
    hist: Optional[np.ndarray]  # counts of x_j, j < n_max
    mask_counts: Optional[np.ndarray]  # (ncp,): #{j < n : x_j in mask}
    obs_sums: Optional[np.ndarray]  # (ncp,): sum_{j<n} obs(x_j)


def accumulate_orbit(stream: OrbitStream, basis: TestFunctionBasis, checkpoints: np.ndarray,
                     resolution: Optional[Sequence[int]] = None, mask: Optional[np.ndarray] = None,
                     with_logd: bool = False) -> OrbitAccumulation:
    """Single pass over iterates 0..n_max of the stream (n_max = last checkpoint)."""
    if basis.space != stream.system.space:
        raise DomainError("basis and system live on different phase spaces")
    cps = np.ascontiguousarray(checkpoints, dtype=np.int64)
    n_max = int(cps[-1])
    fam, pa, pb, ta, tb = basis_args(basis)
    imax = basis.imax
    ncp = cps.size
    S = np.zeros(imax)
    cp_S = np.zeros((ncp, imax))
    cp_next = np.zeros((ncp, imax))
    dim = basis.space.dimension
    res = tuple(resolution) if resolution is not None else None
    if res is None and mask is not None:
        res = tuple(mask.shape)
    r0 = res[0] if res else 1
    r1 = res[1] if res and len(res) > 1 else 1
    hist = np.zeros(int(np.prod(res)) if resolution is not None else 0, dtype=np.int64)
    no_hist = np.zeros(0, dtype=np.int64)
    flat_mask = (np.ascontiguousarray(mask.reshape(-1), dtype=np.bool_) if mask is not None
                 else np.zeros(0, dtype=np.bool_))
    no_mask = np.zeros(0, dtype=np.bool_)
    mask_count = np.zeros(1, dtype=np.int64)
    cp_mask = np.zeros(ncp, dtype=np.int64)
    obs_sum = np.zeros(1)
    cp_obs = np.zeros(ncp)
    no_obs = np.zeros(0)
    pos = 0
    total = n_max + 1

    def fold(pts, j0, logd, last):
        nonlocal pos
        h = no_hist if (last or hist.size == 0) else hist
        mk = no_mask if (last or flat_mask.size == 0) else flat_mask
        ob = np.ascontiguousarray(logd) if (with_logd and not last) else no_obs
        pos = accumulate_chunk(np.ascontiguousarray(pts), j0, fam, pa, pb, ta, tb, S, cps, pos,
                               cp_S, cp_next, h, r0, r1, mk, mask_count, cp_mask,
                               ob, obs_sum, cp_obs)

    for ch in stream.chunks(total):
        if ch.constant:
            x = ch.pts[:1]
            g = moments_of_points(np.ascontiguousarray(x), fam, pa, pb, ta, tb)[0]
            rest = np.nonzero(cps >= ch.j0)[0]
            k = (cps[rest] - ch.j0).astype(float)
            cp_S[rest] = S[None, :] + k[:, None] * g[None, :]
            cp_next[rest] = g[None, :]
            inside = 0
            b = None
            if res is not None:
                b = int(basis.space.bin_index(x, res)[0])
            if flat_mask.size and flat_mask[b]:
                inside = 1
            cp_mask[rest] = mask_count[0] + inside * (cps[rest] - ch.j0)
            cp_obs[rest] = obs_sum[0] + (ch.logd[0] * k if with_logd else 0.0)
            cnt = n_max - ch.j0
            if hist.size and cnt > 0:
                hist[b] += cnt
            S += (total - ch.j0) * g
            mask_count[0] += inside * max(cnt, 0)
            if with_logd:
                obs_sum[0] += ch.logd[0] * max(cnt, 0)
            pos = ncp
            break
        stop = ch.stop
        if stop > n_max:
            cut = n_max - ch.j0
            if cut > 0:
                fold(ch.pts[:cut], ch.j0, ch.logd[:cut], False)
            fold(ch.pts[cut:cut + 1], n_max, ch.logd[cut:cut + 1], True)
        else:
            fold(ch.pts, ch.j0, ch.logd, False)
    return OrbitAccumulation(
        cps, cp_S, cp_next,
        hist.reshape(res) if hist.size else None,
        cp_mask if mask is not None else None,
        cp_obs if with_logd else None,
    )


# ---------------------------------------------------------------- sequences


@dataclass
class EmpiricalSequence:
    """Checkpointed empirical measures of one orbit."""

    system: SystemSpec
    x0: np.ndarray
    basis: TestFunctionBasis
    checkpoints: np.ndarray
    sums: np.ndarray
    next_values: np.ndarray
    hist_counts: Optional[np.ndarray]
    seed: object = None
    mode: str = "exact"
    logd_sums: Optional[np.ndarray] = None
    x0_exact: Optional[Fraction] = None

    @property
    def start(self):
        """Start point as given: the rational itself when the orbit was exact."""
        return self.x0_exact if self.x0_exact is not None else self.x0

    @property
    def n_max(self) -> int:
        return int(self.checkpoints[-1])

    @property
    def moments(self) -> np.ndarray:
        """Moment vectors of mu_n at every checkpoint, shape (ncp, imax)."""
        return self.sums / self.checkpoints[:, None]

    @property
    def next_moments(self) -> np.ndarray:
        """Moment vectors of mu_{n+1} at every checkpoint."""
        return (self.sums + self.next_values) / (self.checkpoints[:, None] + 1.0)

    def masses(self) -> np.ndarray:
        # g_1 = 1, so the first moment is the total mass
        return self.moments[:, 0]

    def index_of(self, n: int) -> int:
        i = int(np.searchsorted(self.checkpoints, n))
        if i >= self.checkpoints.size or self.checkpoints[i] != n:
            raise DomainError(f"n = {n} is not a checkpoint")
        return i

    def moments_at(self, n: int) -> np.ndarray:
        return self.moments[self.index_of(n)]

    def final_measure(self) -> ProbMeasure:
        if self.hist_counts is None:
            raise DomainError("sequence was run without a histogram")
        return ProbMeasure.from_counts(self.basis.space, self.hist_counts)

    def distances_to(self, ref) -> np.ndarray:
        return self.basis.moment_distance(self.moments, as_moments(ref, self.basis))

    def lyapunov_averages(self) -> np.ndarray:
        if self.logd_sums is None:
            raise DomainError("sequence was run without log-derivative sums")
        return self.logd_sums / self.checkpoints

    def stream(self, n: Optional[int] = None) -> OrbitStream:
        """Replay the identical orbit (same seed, same digits)."""
        return OrbitStream(self.system, self.start, n or self.n_max + 1, seed=self.seed, mode=self.mode)


def empirical_sequence(system: SystemSpec, x0, n_max: int, schedule=None, *, basis=None,
                       seed=None, mode: Optional[str] = None, resolution=None,
                       with_logd: bool = False, min_n: int = 1000) -> EmpiricalSequence:
    """Run the orbit once and record mu_n at the checkpoint schedule.

    `schedule` is a ratio (float) or an explicit array of checkpoints.
    """
    if n_max < min_n:
        raise DomainError(f"n_max must be >= {min_n}")
    basis = basis or TestFunctionBasis(system.space)
    if schedule is None or np.isscalar(schedule):
        cps = geometric_schedule(n_max, float(schedule or DEFAULT_RATIO))
    else:
        cps = np.unique(np.asarray(schedule, dtype=np.int64))
        if cps[0] < 1 or cps[-1] != n_max:
            raise DomainError("explicit schedule must lie in [1, n_max] and end at n_max")
    if resolution is None:
        resolution = system.space.default_resolution
    with_logd = with_logd and system.derivative_available
    stream = OrbitStream(system, x0, n_max + 1, seed=seed, mode=mode)
    acc = accumulate_orbit(stream, basis, cps, resolution=resolution, with_logd=with_logd)
    return EmpiricalSequence(system, stream.x0, basis, cps, acc.sums, acc.next_values, acc.hist,
                             seed=seed, mode=stream.mode, logd_sums=acc.obs_sums,
                             x0_exact=stream.x0_exact)


def consecutive_gap(seq: EmpiricalSequence, n: Optional[int] = None):
    """dist(mu_n, mu_{n+1}) at checkpoint n (or at all checkpoints)."""
    gaps = seq.basis.moment_distance(seq.moments, seq.next_moments)
    if n is None:
        return gaps
    return float(gaps[seq.index_of(n)])


# ---------------------------------------------------------------- pω estimate


@dataclass
class ClusterMeasure:
    """A cluster of tail checkpoints; its representative is their average measure."""

    moments: np.ndarray
    members: np.ndarray  # checkpoint values n
    radius: float

    def distance(self, other_moments, basis: TestFunctionBasis) -> float:
        return float(basis.moment_distance(self.moments, other_moments))


@dataclass
class PomegaEstimate:
    clusters: list
    cluster_radius: float
    tail_window: tuple
    oscillation_amplitude: float
    converged: bool
    tolerance: float
    tail_moments: np.ndarray
    tail_ns: np.ndarray
    extremes: tuple  # indices (into tail) of the most distant checkpoint pair
    final_moments: np.ndarray

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def cluster_moments(self) -> np.ndarray:
        return np.array([c.moments for c in self.clusters])

    def hull(self) -> np.ndarray:
        """Tail checkpoint moments: the reported hull when not converged."""
        return self.tail_moments

    def distance_to(self, ref_moments, basis: TestFunctionBasis) -> float:
        """Smallest distance from a reference to any tail checkpoint."""
        return float(np.min(basis.moment_distance(self.tail_moments, ref_moments)))

    def cluster_distance_to(self, ref_moments, basis: TestFunctionBasis) -> float:
        return float(np.min(basis.moment_distance(self.cluster_moments, ref_moments)))

    def summary(self) -> dict:
        return {
            "clusters": self.n_clusters,
            "cluster_radius": self.cluster_radius,
            "tail_window": [int(self.tail_window[0]), int(self.tail_window[1])],
            "oscillation_amplitude": self.oscillation_amplitude,
            "converged": bool(self.converged),
            "tolerance": self.tolerance,
        }


def burned_moments(ns: np.ndarray, moments: np.ndarray, burn_in: float) -> np.ndarray:
    """Averages over iterates b <= j < n, b the last checkpoint <= burn_in * n_max.

    Removes the transient from every later checkpoint measure; checkpoints
    up to b are returned unchanged.
    """
    k = int(np.searchsorted(ns, burn_in * ns[-1], side="right")) - 1
    if burn_in <= 0 or k < 0:
        return moments
    b = float(ns[k])
    out = moments.copy()
    later = ns > b
    n = ns[later].astype(float)[:, None]
    out[later] = (n * moments[later] - b * moments[k]) / (n - b)
    return out


def tail_indices(checkpoints: np.ndarray, tail_fraction: float, burn_in: float) -> np.ndarray:
    n_max = checkpoints[-1]
    lo = max((1.0 - tail_fraction) * n_max, burn_in * n_max)
    return np.nonzero(checkpoints >= lo)[0]


def single_linkage(scaled: np.ndarray, tol: float) -> np.ndarray:
    """Single-linkage labels (0-based) under the cityblock metric on scaled moments."""
    if scaled.shape[0] == 1:
        return np.zeros(1, dtype=np.int64)
    Z = linkage(scaled, method="single", metric="cityblock")
    return fcluster(Z, t=tol, criterion="distance").astype(np.int64) - 1


def pomega_from_moments(ns: np.ndarray, moments: np.ndarray, basis: TestFunctionBasis,
                        tail_fraction: float = DEFAULT_TAIL, tolerance: float = DEFAULT_TOL,
                        burn_in: float = DEFAULT_BURN_IN,
                        min_checkpoints: int = MIN_TAIL_CHECKPOINTS) -> PomegaEstimate:
    if not 0.0 < tail_fraction < 1.0:
        raise DomainError("tail fraction must lie in (0, 1)")
    idx = tail_indices(ns, tail_fraction, burn_in)
    if idx.size < min_checkpoints:
        raise DiagnosticError(
            f"only {idx.size} tail checkpoints (need {min_checkpoints}); "
            "increase n_max, the tail fraction or the checkpoint density"
        )
    tm = burned_moments(ns, moments, burn_in)[idx]
    scaled = basis.scaled(tm)
    D = squareform(pdist(scaled, metric="cityblock"))
    i, j = np.unravel_index(int(np.argmax(D)), D.shape)
    amp = float(D[i, j])
    labels = single_linkage(scaled, tolerance)
    clusters = []
    radius = 0.0
    for lab in range(labels.max() + 1):
        sel = labels == lab
        rep = tm[sel].mean(axis=0)
        r = float(np.max(basis.moment_distance(tm[sel], rep)))
        radius = max(radius, r)
        clusters.append(ClusterMeasure(rep, ns[idx][sel], r))
    return PomegaEstimate(
        clusters, radius, (int(ns[idx[0]]), int(ns[idx[-1]])), amp, amp < tolerance,
        float(tolerance), tm, ns[idx], (int(i), int(j)), moments[-1].copy(),
    )


def pomega_estimate(seq: EmpiricalSequence, tail_fraction: float = DEFAULT_TAIL,
                    cluster_tolerance: float = DEFAULT_TOL, burn_in: float = DEFAULT_BURN_IN,
                    min_checkpoints: int = MIN_TAIL_CHECKPOINTS) -> PomegaEstimate:
    return pomega_from_moments(seq.checkpoints, seq.moments, seq.basis, tail_fraction,
                               cluster_tolerance, burn_in, min_checkpoints)


# ---------------------------------------------------------------- convex-like search


@dataclass
class SearchResult:
    found: bool
    h: Optional[int]
    value: float  # dist(mu_h, mu) at the returned / best h
    target: float
    best_h: int
    best_error: float
    window_start: Optional[int]  # first m > K with mu_m near mu
    visited_nu: bool  # whether mu_n came near nu before h
    scanned: int

    def __bool__(self):
        return self.found


def convexlike_search(seq: EmpiricalSequence, mu, nu, lam: float, eps: float, K: int,
                      budget: int = 10**7) -> SearchResult:
    """Find h > K with |dist(mu_h, mu) - lam dist(nu, mu)| <= eps.

    Streams the orbit once.  First it waits for a window start m > K with
    dist(mu_m, mu) < eps, then scans forward: since consecutive averages
    move by less than 1/n and mu_n later comes near nu, h -> dist(mu_h, mu)
    must cross every intermediate level.
    """
    if not 0.0 <= lam <= 1.0:
        raise DomainError("lambda must lie in [0, 1]")
    basis = seq.basis
    m_mu = as_moments(mu, basis)
    m_nu = as_moments(nu, basis)
    target = lam * float(basis.moment_distance(m_nu, m_mu))
    fam, pa, pb, ta, tb = basis_args(basis)
    S = np.zeros(basis.imax)
    w = np.ascontiguousarray(basis.weights)
    stream = OrbitStream(seq.system, seq.start, budget, seed=seq.seed, mode=seq.mode)
    window = None
    visited = False
    best_h, best_err, best_val = -1, np.inf, np.nan
    scanned = 0
    for ch in stream.chunks(budget):
        pieces = []
        if ch.constant:
            j0 = ch.j0
            while j0 < ch.end:
                m = min(CHUNK, ch.end - j0)
                pieces.append((j0, np.repeat(ch.pts[:1], m, axis=0)))
                j0 += m
        else:
            pieces.append((ch.j0, ch.pts))
        for j0, pts in pieces:
            m = pts.shape[0]
            da = np.empty(m)
            db = np.empty(m)
            distance_trace_chunk(np.ascontiguousarray(pts), j0, fam, pa, pb, ta, tb, S, w,
                                 m_mu, m_nu, da, db)
            hs = j0 + np.arange(1, m + 1)
            scanned = int(hs[-1])
            ok = hs > K
            if window is None:
                near = np.nonzero(ok & (da < eps))[0]
                if near.size == 0:
                    err = np.abs(da - target)
                    err[~ok] = np.inf
                    k = int(np.argmin(err))
                    if err[k] < best_err:
                        best_h, best_err, best_val = int(hs[k]), float(err[k]), float(da[k])
                    continue
                window = int(hs[near[0]])
                ok = hs >= window
            err = np.abs(da - target)
            err[~ok] = np.inf
            hit = np.nonzero(err <= eps)[0]
            if hit.size:
                k = int(hit[0])
                visited = visited or bool(np.any(db[: k + 1][ok[: k + 1]] < eps))
                return SearchResult(True, int(hs[k]), float(da[k]), target, int(hs[k]),
                                    float(err[k]), window, visited, scanned)
            visited = visited or bool(np.any(db[ok] < eps))
            k = int(np.argmin(err))
            if err[k] < best_err:
                best_h, best_err, best_val = int(hs[k]), float(err[k]), float(da[k])
    return SearchResult(False, None, best_val, target, best_h, best_err, window, visited, scanned)


# ---------------------------------------------------------------- checkpoint dump


def checkpoint_rows(seq: EmpiricalSequence, references: dict):
    names = list(references)
    dists = {k: seq.distances_to(v) for k, v in references.items()}
    for i, n in enumerate(seq.checkpoints):
        yield [int(n)] + [float(dists[k][i]) for k in names]


def checkpoint_csv(seq: EmpiricalSequence, references: dict, histogram_file: str = "",
                   manifest_hash: Optional[str] = None) -> str:
    buf = io.StringIO()
    if manifest_hash:
        buf.write(f"# manifest: {manifest_hash}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["n"] + [f"dist_{k}" for k in references] + ["histogram_file"])
    for row in checkpoint_rows(seq, references):
        wr.writerow([row[0]] + [repr(v) for v in row[1:]] + [histogram_file if row[0] == seq.n_max else ""])
    return buf.getvalue()
