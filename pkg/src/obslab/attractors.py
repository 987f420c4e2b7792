"""Generalized attractors: decomposition into basins, independence,
chains / co-chains with a Dilworth check, and attraction in mean."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from obslab.errors import DiagnosticError, DomainError, LatticeTooLarge
from obslab.measure_core.measure import ProbMeasure, dilate_mask, support_estimate
from obslab.dynamics.orbit import OrbitStream
from obslab.empirical import accumulate_orbit, as_moments, geometric_schedule
from obslab.observability import (
    InitialEnsemble,
    ObservableSet,
    observability_size,
    observable_set_estimate,
    wilson,
)

LATTICE_CAP = 10
SUPPORT_THRESHOLD = 0.01


@dataclass
class AttractorRecord:
    index: int
    atoms: np.ndarray  # atom labels of the observable-set estimate
    cluster_moments: np.ndarray  # (k, imax), one row per atom
    basin: np.ndarray  # sample point indices
    diameter: float
    size: float
    ci: tuple
    irreducible: bool
    support: np.ndarray  # boolean bin mask, shape = ensemble resolution
    physical: Optional[bool] = None

    @property
    def n_clusters(self) -> int:
        return int(self.atoms.size)

    def as_dict(self) -> dict:
        return {
            "index": self.index,
            "diameter": float(self.diameter),
            "size": float(self.size),
            "ci": [float(self.ci[0]), float(self.ci[1])],
            "irreducible": bool(self.irreducible),
            "clusters": int(self.atoms.size),
            "basin_points": int(self.basin.size),
            "support_bins": int(self.support.sum()),
            "physical": None if self.physical is None else bool(self.physical),
        }


@dataclass
class Decomposition:
    records: list
    unassigned: float
    overlap: np.ndarray  # (r, r) basin-intersection fractions
    ensemble: InitialEnsemble = field(repr=False)
    observable: ObservableSet = field(repr=False)
    independence_tolerance: float = 0.05
    cluster_tolerance: float = 0.02

    def __len__(self):
        return len(self.records)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([r.size for r in self.records])

    @property
    def size_total(self) -> float:
        return float(self.sizes.sum())

    def point_atoms(self, i: int) -> np.ndarray:
        return self.observable.point_atoms[i]

    def reduction(self, atoms) -> "AttractorRecord":
        """The reduction spanned by a set of atoms: its basin is every point
        whose pω estimate touches only atoms of the set."""
        atoms = np.unique(np.asarray(atoms, dtype=np.int64))
        N = self.ensemble.size
        basin = np.array([i for i in range(N) if np.isin(self.point_atoms(i), atoms).all()],
                         dtype=np.int64)
        reps = self.observable.moments[atoms]
        diam = _diameter(reps, self.ensemble.basis)
        supp = _support(self.ensemble, basin) if basin.size else np.zeros(self.ensemble.resolution, bool)
        return AttractorRecord(-1, atoms, reps, basin, diam, basin.size / N,
                               wilson(int(basin.size), N), atoms.size == 1, supp)


def _diameter(reps: np.ndarray, basis) -> float:
    if reps.shape[0] < 2:
        return 0.0
    s = basis.scaled(reps)
    return float(np.max(np.abs(s[:, None, :] - s[None, :, :]).sum(axis=-1)))


def _support(ens: InitialEnsemble, indices) -> np.ndarray:
    """Union of per-point supports carrying 99% of each final empirical measure."""
    mask = np.zeros(int(np.prod(ens.resolution)), dtype=bool)
    for i in indices:
        mu = ens.final_measure(int(i))
        mask[support_estimate(mu, SUPPORT_THRESHOLD).indices] = True
    return mask.reshape(ens.resolution)


def _record_components(obs: ObservableSet, basis, tol: float, N: int):
    """Connected components of points: two points are joined when pω clusters
    of theirs lie within `tol` of each other (single linkage) ."""
    from obslab.empirical import single_linkage

    labels = single_linkage(basis.scaled(obs.pool_moments), tol)
    # bipartite graph points <-> single-linkage groups
    nlab = labels.max() + 1
    rows = obs.pool_owner
    cols = N + labels
    A = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(N + nlab, N + nlab))
    ncomp, comp = connected_components(A, directed=False)
    pts = comp[:N]
    # renumber components by first point index
    _, first = np.unique(pts, return_index=True)
    order = np.argsort(first)
    remap = np.empty(ncomp, dtype=np.int64)
    remap[np.unique(pts)[order]] = np.arange(order.size)
    return remap[pts]


def decompose(system, ensemble: InitialEnsemble, cluster_tolerance: Optional[float] = None,
              independence_tolerance: Optional[float] = None, *,
              observable: Optional[ObservableSet] = None,
              physical_check: bool = True) -> Decomposition:
    """Group sample points into generalized attractors.

    Two points share a record when their pω clusters merge under single
    linkage at the tolerance.  A record's clusters are the complete-linkage
    atoms of the observable-set estimate that its points touch, so its
    diameter is exactly 0 for a single atom.  A record is reducible when a
    significant fraction (above the independence tolerance) of its points
    have pω estimates missing a part of the record farther than twice the
    tolerance from what they do touch.
    """
    tol = ensemble.tolerance if cluster_tolerance is None else float(cluster_tolerance)
    N = ensemble.size
    itol = 1.0 / math.sqrt(N) if independence_tolerance is None else float(independence_tolerance)
    obs = observable or observable_set_estimate(system, ensemble, tol)
    basis = ensemble.basis
    comp = _record_components(obs, basis, tol, N)
    records = []
    reps_all = obs.moments
    for r in range(comp.max() + 1):
        basin = np.nonzero(comp == r)[0]
        atoms = np.unique(np.concatenate([obs.point_atoms[i] for i in basin]))
        reps = reps_all[atoms]
        diam = _diameter(reps, basis)
        irreducible = True
        if atoms.size > 1:
            thr = 2.0 * tol
            far = 0
            for i in basin:
                t = obs.point_atoms[i]
                d = basis.moment_distance(reps[:, None, :], reps_all[t][None, :, :]).min(axis=1)
                if d.max() > thr:
                    far += 1
            irreducible = far / basin.size <= itol
        supp = _support(ensemble, basin)
        rec = AttractorRecord(r, atoms, reps, basin, diam, basin.size / N,
                              wilson(int(basin.size), N), irreducible, supp)
        if physical_check:
            rec.physical = bool(atoms.size == 1 and
                                observability_size(system, reps[0], ensemble=ensemble).physical)
        records.append(rec)
    nr = len(records)
    overlap = np.zeros((nr, nr))
    for a in range(nr):
        for b in range(nr):
            overlap[a, b] = np.intersect1d(records[a].basin, records[b].basin).size / N
    assigned = np.unique(np.concatenate([r.basin for r in records]))
    return Decomposition(records, 1.0 - assigned.size / N, overlap, ensemble, obs, itol, tol)


@dataclass
class IndependenceResult:
    independent: bool
    overlap: float

    def __bool__(self):
        return self.independent


def independence(a: AttractorRecord, b: AttractorRecord, total: int,
                 tolerance: Optional[float] = None) -> IndependenceResult:
    """Basins of a and b intersect in a fraction below tolerance."""
    tol = 1.0 / math.sqrt(total) if tolerance is None else tolerance
    ov = np.intersect1d(a.basin, b.basin).size / total
    return IndependenceResult(ov < tol, float(ov))


# ---------------------------------------------------------------- chains and co-chains


@dataclass
class ChainAnalysis:
    k: int
    h: int
    units: str  # "atoms" or "records"
    n_units: int
    minimal: list  # minimal reductions (lists of unit indices)
    cochain: list  # witness co-chain
    chains: list  # witness pairwise independent chains (lists of reductions)
    brute_k: Optional[int] = None
    brute_h: Optional[int] = None
    n_reductions: Optional[int] = None
    h_chain_length: Optional[int] = None

    @property
    def dilworth_holds(self) -> bool:
        ok = self.k == self.h
        if self.brute_k is not None:
            ok = ok and self.brute_k == self.k
        if self.brute_h is not None:
            ok = ok and self.brute_h == self.h
        return ok

    def as_dict(self) -> dict:
        return {"k": self.k, "h": self.h, "units": self.units, "n_units": self.n_units,
                "minimal": self.minimal, "chains": self.chains, "brute_k": self.brute_k,
                "brute_h": self.brute_h, "n_reductions": self.n_reductions,
                "dilworth_holds": self.dilworth_holds}


def lattice_units(dec: Decomposition, cap: int = LATTICE_CAP):
    """Per-point unit sets for the reduction lattice.

    Units are the observable-set atoms when there are at most `cap`;
    otherwise whole records (a coarsening) when those fit; otherwise the
    lattice is too large.
    """
    n_atoms = len(dec.observable)
    used = sorted({int(a) for r in dec.records for a in r.atoms})
    if len(used) <= cap:
        index = {a: j for j, a in enumerate(used)}
        sets = [frozenset(index[int(a)] for a in dec.point_atoms(i)) for i in range(dec.ensemble.size)]
        return "atoms", len(used), sets
    if len(dec.records) <= cap:
        owner = np.empty(dec.ensemble.size, dtype=np.int64)
        for r in dec.records:
            owner[r.basin] = r.index
        return "records", len(dec.records), [frozenset([int(owner[i])]) for i in range(dec.ensemble.size)]
    raise LatticeTooLarge(
        f"{n_atoms} atoms and {len(dec.records)} records exceed the lattice cap of {cap}; "
        "use a coarser cluster tolerance or restrict the ensemble"
    )


def chain_cochain_analysis(dec: Decomposition, cap: int = LATTICE_CAP,
                           brute_force: bool = True) -> ChainAnalysis:
    """k (longest co-chain) and h (most pairwise independent chains).

    Constructive part: the minimal reductions are pairwise independent, and
    every co-chain element contains one of them, no two sharing one; so
    k = #minimal, and the single-element chains {T} give h >= k while the
    argument that intersections of independent chain elements stay in the
    chain gives h <= k.  With `brute_force` the finite lattice of all
    reductions is enumerated and k, h recomputed by exhaustive clique
    search.
    """
    units, n, sets = lattice_units(dec, cap)
    return lattice_analysis(n, sets, units, brute_force)


def lattice_analysis(n: int, sets, units: str = "atoms", brute_force: bool = True) -> ChainAnalysis:
    """k and h on the reduction lattice generated by per-point unit sets."""
    if n > 0 and any(not s or max(s) >= n for s in sets):
        raise DomainError("unit sets must be non-empty subsets of range(n)")
    distinct = sorted(set(sets), key=lambda s: (len(s), sorted(s)))
    minimal = [s for s in distinct if not any(o < s for o in distinct)]
    others = set(range(n)) - set().union(*minimal) if minimal else set()
    chains = []
    for m in minimal:
        ch = [sorted(m)]
        ext = (set(m) | others)
        if ext != set(m) and _has_basin_set(ext, distinct):
            ch.append(sorted(ext))
        chains.append(ch)
    res = ChainAnalysis(len(minimal), len(chains), units, n, [sorted(m) for m in minimal],
                        [sorted(m) for m in minimal], chains)
    if brute_force:
        bk, bh, nred, clen = brute_force_k_h(n, sets)
        res.brute_k, res.brute_h, res.n_reductions, res.h_chain_length = bk, bh, nred, clen
    return res


def _has_basin_set(U, distinct) -> bool:
    return any(t <= U for t in distinct)


def _masks(n: int, sets) -> np.ndarray:
    """has_basin[mask]: some sample pω touches only units in mask."""
    size = 1 << n
    has = np.zeros(size, dtype=bool)
    for s in set(sets):
        m = 0
        for u in s:
            m |= 1 << u
        has[m] = True
    # superset closure (sum over subsets)
    for b in range(n):
        bit = 1 << b
        idx = np.arange(size)
        sel = (idx & bit) != 0
        has[idx[sel]] |= has[idx[sel] ^ bit]
    return has


def max_clique(adj: list) -> int:
    """Exact maximum clique size; adj[i] is a bitset (int) of neighbours."""
    best = 0
    nodes = list(range(len(adj)))

    def colour_bound(cand: int):
        # greedy colouring gives an upper bound per vertex order
        order, bounds = [], []
        colour = 0
        rest = cand
        while rest:
            colour += 1
            q = rest
            while q:
                v = (q & -q).bit_length() - 1
                q &= ~(1 << v)
                q &= ~adj[v]
                rest &= ~(1 << v)
                order.append(v)
                bounds.append(colour)
        return order, bounds

    def expand(size: int, cand: int):
        nonlocal best
        order, bounds = colour_bound(cand)
        for v, b in zip(reversed(order), reversed(bounds)):
            if size + b <= best:
                return
            new = cand & adj[v]
            if new:
                expand(size + 1, new)
            elif size + 1 > best:
                best = size + 1
            cand &= ~(1 << v)

    if nodes:
        expand(0, (1 << len(nodes)) - 1)
    return best


def _bitsets(adj: np.ndarray) -> list:
    packed = np.packbits(adj, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


def brute_force_k_h(n: int, sets, chain_len_limit: int = 2, pair_budget: int = 4000):
    """Exhaustive k and h on the lattice of all reductions over n units.

    k: maximum clique of the independence graph over all reductions.
    h: maximum family of pairwise independent chains, enumerating every
    chain of length up to `chain_len_limit` (chains of length two only when
    their number stays within `pair_budget`).
    """
    has = _masks(n, sets)
    reds = np.nonzero(has[1:])[0] + 1
    R = int(reds.size)
    # independent: the intersection carries no basin
    I = ~has[reds[:, None] & reds[None, :]]
    k = max_clique(_bitsets(I))
    # chains as (lower, upper) index pairs; singletons have lower == upper
    lo, up = np.arange(R), np.arange(R)
    clen = 1
    if chain_len_limit >= 2:
        sub = ((reds[:, None] & reds[None, :]) == reds[:, None]) & ~np.eye(R, dtype=bool)
        pa, pb = np.nonzero(sub)
        if pa.size + R <= pair_budget:
            lo, up = np.concatenate([lo, pa]), np.concatenate([up, pb])
            clen = 2
    # two chains are independent when some pair of their elements is
    cadj = I[lo[:, None], lo[None, :]] | I[lo[:, None], up[None, :]]
    cadj |= I[up[:, None], lo[None, :]] | I[up[:, None], up[None, :]]
    np.fill_diagonal(cadj, False)
    h = max_clique(_bitsets(cadj))
    return k, h, R, clen


# ---------------------------------------------------------------- cover check


@dataclass
class CoverVerdict:
    cover: bool
    size_total: float
    ci: tuple
    all_physical: bool
    verdict: str
    n_records: int
    physical_records: int
    unresolved_mass: float
    consistent_with_observability: bool

    def as_dict(self) -> dict:
        return {"cover": self.cover, "size_total": self.size_total, "ci": list(self.ci),
                "all_physical": self.all_physical, "verdict": self.verdict,
                "records": self.n_records, "physical_records": self.physical_records,
                "unresolved_mass": self.unresolved_mass,
                "consistent_with_observability": self.consistent_with_observability}


def cochain_cover_check(dec: Decomposition) -> CoverVerdict:
    """Sizes of the records (a co-chain) sum to one; diameters decide physicality.

    Records below the independence tolerance in size do not enter the
    all-physical decision; their total is reported as unresolved mass
    (e.g. sinks accumulating faster than the cluster tolerance resolves).
    """
    N = dec.ensemble.size
    total = dec.size_total
    lo, hi = wilson(int(round(total * N)), N)
    cover = hi >= 1.0 - 1e-12 and total + dec.unassigned >= 1.0 - 1e-12
    big = [r for r in dec.records if r.size > dec.independence_tolerance]
    small_mass = float(sum(r.size for r in dec.records if r.size <= dec.independence_tolerance
                           and r.diameter > 0))
    all_phys = bool(big) and all(r.diameter == 0.0 for r in big) and small_mass <= dec.independence_tolerance
    nphys = sum(1 for r in dec.records if r.diameter == 0.0)
    consistent = all((r.physical is None) or (r.physical == (r.diameter == 0.0)) for r in big)
    if cover and all_phys:
        verdict = "all-physical"
    elif cover:
        verdict = "cover-without-physical" if nphys == 0 else "cover-partially-physical"
    else:
        verdict = "no-cover"
    return CoverVerdict(cover, total, (lo, hi), all_phys, verdict, len(dec.records), nphys,
                        small_mass, consistent)


@dataclass
class ChainLimit:
    radii: np.ndarray
    diameters: np.ndarray
    sizes: np.ndarray
    ci_low: np.ndarray
    physical_by_chain_limit: bool


def chain_limit_diagnostic(dec: Decomposition, center, radii=(0.2, 0.1, 0.05, 0.02, 0.01),
                           diameter_tol: Optional[float] = None) -> ChainLimit:
    """Finite truncation of a decreasing chain of reductions around `center`.

    U_r = atoms within r of center.  Triggers when the diameters fall below
    `diameter_tol` while the sizes stay bounded away from zero.
    """
    basis = dec.ensemble.basis
    c = as_moments(center, basis)
    reps = dec.observable.moments
    d = basis.moment_distance(reps, c)
    radii = np.array(sorted(radii, reverse=True))
    diams, sizes, lows = [], [], []
    N = dec.ensemble.size
    for r in radii:
        atoms = np.nonzero(d < r)[0]
        if atoms.size == 0:
            diams.append(0.0)
            sizes.append(0.0)
            lows.append(0.0)
            continue
        red = dec.reduction(atoms)
        diams.append(red.diameter)
        sizes.append(red.size)
        lows.append(red.ci[0])
    diams, sizes, lows = np.array(diams), np.array(sizes), np.array(lows)
    dt = dec.cluster_tolerance if diameter_tol is None else diameter_tol
    flag = bool(diams[-1] <= dt and lows[-1] > 0 and sizes[-1] >= 0.75 * sizes[-2])
    return ChainLimit(radii, diams, sizes, lows, flag)


# ---------------------------------------------------------------- attraction in mean


@dataclass
class MeanAttraction:
    passed: bool
    N: Optional[int]
    epsilon: float
    checkpoints: np.ndarray
    pass_fraction: np.ndarray  # per checkpoint: share of points with in-fraction > 1 - eps
    fractions: np.ndarray  # (points, checkpoints) iterate fractions inside the neighbourhood
    best_fraction: float

    def as_dict(self) -> dict:
        return {"passed": self.passed, "N": self.N, "epsilon": self.epsilon,
                "best_pass_fraction": self.best_fraction}


def neighbourhood_mask(support: np.ndarray, eps: float, periodic: bool) -> np.ndarray:
    """Bins within eps of the support (dilation by ceil(eps / bin width))."""
    radius = int(math.ceil(eps * max(support.shape)))
    return dilate_mask(support, radius, periodic)


def attraction_in_mean(system, record: AttractorRecord, epsilon: float,
                       ensemble: InitialEnsemble, subset=None, n_max: Optional[int] = None,
                       support: Optional[np.ndarray] = None) -> MeanAttraction:
    """Fraction of the first n iterates in the eps-neighbourhood of the support.

    N is the first checkpoint from which, at every later checkpoint, more
    than 1 - eps of the basin points spend more than 1 - eps of their time
    inside the neighbourhood.
    """
    supp = record.support if support is None else support
    if not supp.any():
        raise DiagnosticError("record has an empty support")
    mask = neighbourhood_mask(supp, epsilon, system.space.periodic)
    idx = record.basin if subset is None else np.asarray(subset, dtype=np.int64)
    if idx.size == 0:
        raise DiagnosticError("empty basin subset")
    n_max = n_max or ensemble.n_max
    cps = geometric_schedule(n_max, 1.1)
    fr = np.empty((idx.size, cps.size))
    for r, i in enumerate(idx):
        raw = ensemble.raw_points[i] if ensemble.raw_points else ensemble.points[i]
        stream = OrbitStream(system, raw, n_max + 1, seed=ensemble.point_seed(int(i)),
                             mode=ensemble.mode)
        acc = accumulate_orbit(stream, ensemble.basis, cps, mask=mask)
        fr[r] = acc.mask_counts / cps
    ok = (fr > 1.0 - epsilon).mean(axis=0)
    good = ok >= 1.0 - epsilon
    N = None
    if good[-1]:
        k = good.size - 1
        while k > 0 and good[k - 1]:
            k -= 1
        N = int(cps[k])
    return MeanAttraction(bool(good[-1]), N, float(epsilon), cps, ok, fr, float(ok.max()))


def dirac_location(moments, basis) -> np.ndarray:
    """Point x with delta_x matching the first-order moments (exact for a Dirac)."""
    m = np.asarray(moments, dtype=float)
    pairs = basis.pairs
    out = []
    for axis in range(basis.space.dimension):
        def idx(order):
            want = [0, 0]
            want[axis] = order
            if basis.space.dimension == 1:
                return order
            return int(np.nonzero((pairs[:, 0] == want[0]) & (pairs[:, 1] == want[1]))[0][0])
        if basis.family == "trig":
            out.append((math.atan2(m[idx(2)], m[idx(1)]) / (2.0 * math.pi)) % 1.0)
        else:
            out.append(min(max(0.5 * (m[idx(1)] + 1.0), 0.0), 1.0))
    return np.array(out)


# ---------------------------------------------------------------- report


def decomposition_report(dec: Decomposition, analysis: Optional[ChainAnalysis],
                         cover: CoverVerdict, files: Optional[dict] = None) -> dict:
    recs = []
    for r in dec.records:
        d = r.as_dict()
        f = (files or {}).get(r.index, {})
        d["support_bins_file"] = f.get("support", "")
        d["cluster_files"] = f.get("clusters", [])
        recs.append(d)
    out = {
        "records": recs,
        "unassigned": float(dec.unassigned),
        "k": None if analysis is None else analysis.k,
        "h": None if analysis is None else analysis.h,
        "verdicts": cover.as_dict(),
    }
    if analysis is not None:
        out["chain_analysis"] = analysis.as_dict()
    return out
