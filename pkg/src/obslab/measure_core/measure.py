"""Probability measures: finite atom lists and histograms on a fixed grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from obslab.errors import DomainError, NormalizationError, ValidationError
from obslab.measure_core.basis import TestFunctionBasis
from obslab.measure_core.space import PhaseSpace

MASS_TOL = 1e-12


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ProbMeasure:
    """A Borel probability measure in one of two representations.

    ``repr == "atoms"``: `points` has shape (m, dim) and `weights` shape (m,).
    ``repr == "histogram"``: `weights` has shape `resolution`; the measure has
    uniform density inside each bin.
    """

    space: PhaseSpace
    repr: str
    weights: np.ndarray
    points: Optional[np.ndarray] = None
    _moment_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if self.repr == "atoms":
            if self.points is None:
                raise ValidationError("atom measure requires points")
            pts = self.space.as_points(self.points)
            if pts.shape[0] != w.size:
                raise ValidationError("atom points and weights differ in length")
            if not self.space.contains(pts).all():
                raise DomainError(f"atom outside {self.space.kind.value}")
            object.__setattr__(self, "points", _frozen(pts))
            w = w.reshape(-1)
        elif self.repr == "histogram":
            if w.ndim != self.space.dimension:
                raise ValidationError(
                    f"histogram of rank {w.ndim} on a {self.space.dimension}-d space"
                )
            object.__setattr__(self, "points", None)
        else:
            raise ValidationError(f"unknown representation {self.repr!r}")
        if w.size == 0:
            raise ValidationError("empty measure")
        if not np.isfinite(w).all():
            raise ValidationError("non-finite weight")
        if (w < 0).any():
            raise ValidationError("negative weight")
        total = float(w.sum())
        if abs(total - 1.0) > MASS_TOL:
            raise NormalizationError(f"weights sum to {total!r}, not 1")
        object.__setattr__(self, "weights", _frozen(w))

    # constructors ---------------------------------------------------------

    @classmethod
    def atoms(cls, space, points, weights=None) -> "ProbMeasure":
        space = PhaseSpace.parse(space)
        pts = space.as_points(points)
        if weights is None:
            weights = np.full(pts.shape[0], 1.0 / pts.shape[0])
        return cls(space, "atoms", np.asarray(weights, dtype=float), pts)

    @classmethod
    def dirac(cls, space, point) -> "ProbMeasure":
        return cls.atoms(space, [point] if np.ndim(point) == 1 else point, [1.0])

    @classmethod
    def histogram(cls, space, weights) -> "ProbMeasure":
        return cls(PhaseSpace.parse(space), "histogram", np.asarray(weights, dtype=float))

    @classmethod
    def from_counts(cls, space, counts) -> "ProbMeasure":
        counts = np.asarray(counts, dtype=float)
        return cls.histogram(space, counts / counts.sum())

    @classmethod
    def lebesgue(cls, space, resolution=None) -> "ProbMeasure":
        space = PhaseSpace.parse(space)
        res = tuple(resolution or space.default_resolution)
        size = int(np.prod(res))
        return cls.histogram(space, np.full(res, 1.0 / size))

    # queries ----------------------------------------------------------------

    @property
    def is_atomic(self) -> bool:
        return self.repr == "atoms"

    @property
    def resolution(self) -> tuple[int, ...]:
        if self.repr != "histogram":
            raise ValidationError("atom measures have no resolution")
        return tuple(self.weights.shape)

    def bin_widths(self) -> tuple[float, ...]:
        return tuple(1.0 / n for n in self.resolution)

    def bin_centers(self) -> np.ndarray:
        """Centres of all bins, flat row-major order, shape (nbins, dim)."""
        axes = [(np.arange(n) + 0.5) / n for n in self.resolution]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([g.reshape(-1) for g in grids])

    def moments(self, basis: TestFunctionBasis) -> np.ndarray:
        if basis.space != self.space:
            raise DomainError("basis and measure live on different phase spaces")
        key = (basis.space.kind, basis.imax)
        cached = self._moment_cache.get(key)
        if cached is None:
            if self.repr == "atoms":
                cached = basis.atom_moments(self.points, self.weights)
            else:
                cached = basis.histogram_moments(self.weights)
            cached.setflags(write=False)
            self._moment_cache[key] = cached
        return cached

    def integrate(self, func, subsamples: int = 8) -> float:
        """∫ func dμ; histogram bins use a midpoint rule with `subsamples` per axis."""
        if self.repr == "atoms":
            return float(np.dot(self.weights, func(self.points)))
        res = self.resolution
        offs = (np.arange(subsamples) + 0.5) / subsamples
        if len(res) == 1:
            pts = ((np.arange(res[0])[:, None] + offs[None, :]) / res[0]).reshape(-1, 1)
            vals = func(pts).reshape(res[0], subsamples).mean(axis=1)
            return float(np.dot(self.weights, vals))
        # 2-d: subsample each bin on a subsamples x subsamples grid
        cx = self.bin_centers()
        total = 0.0
        wx, wy = self.bin_widths()
        for ox in offs:
            for oy in offs:
                pts = cx + np.array([(ox - 0.5) * wx, (oy - 0.5) * wy])
                total += float(np.dot(self.weights.reshape(-1), func(pts)))
        return total / subsamples**2

    def same_as(self, other: "ProbMeasure") -> bool:
        if self.space != other.space or self.repr != other.repr:
            return False
        if self.weights.shape != other.weights.shape:
            return False
        if self.repr == "atoms" and not np.array_equal(self.points, other.points):
            return False
        return bool(np.array_equal(self.weights, other.weights))

    def __repr__(self):
        if self.repr == "atoms":
            return f"ProbMeasure(atoms, {self.space.kind.value}, m={self.weights.size})"
        return f"ProbMeasure(histogram, {self.space.kind.value}, res={self.resolution})"


def weak_star_dist(a: ProbMeasure, b: ProbMeasure, basis: TestFunctionBasis) -> float:
    """Truncated weak* distance sum_{i<=imax} 2^-i |∫g_i da - ∫g_i db|."""
    if not (a.space == b.space == basis.space):
        raise DomainError("measures and basis must share one phase space")
    return float(basis.moment_distance(a.moments(basis), b.moments(basis)))


def convex_combine(lam: float, a: ProbMeasure, b: ProbMeasure) -> ProbMeasure:
    """The measure lam*a + (1-lam)*b."""
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"convex weight {lam} outside [0, 1]")
    if a.space != b.space:
        raise DomainError("cannot combine measures on different phase spaces")
    if lam == 1.0:
        return a
    if lam == 0.0:
        return b
    if a.repr == "histogram" and b.repr == "histogram" and a.resolution == b.resolution:
        w = lam * a.weights + (1.0 - lam) * b.weights
        return ProbMeasure.histogram(a.space, w / w.sum())
    pa, wa = _as_atoms(a)
    pb, wb = _as_atoms(b)
    pts = np.vstack([pa, pb])
    w = np.concatenate([lam * wa, (1.0 - lam) * wb])
    pts, w = merge_atoms(pts, w)
    return ProbMeasure.atoms(a.space, pts, w / w.sum())


def _as_atoms(mu: ProbMeasure):
    if mu.repr == "atoms":
        return mu.points, mu.weights
    raise DomainError("mixing a histogram with an atom measure is not supported")


def merge_atoms(points: np.ndarray, weights: np.ndarray):
    """Merge exactly coincident atoms, keeping first-occurrence order."""
    _, first, inverse = np.unique(points, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    merged = np.zeros(first.size)
    np.add.at(merged, inverse, weights)
    order = np.argsort(first, kind="stable")
    return points[first[order]], merged[order]


@dataclass(frozen=True)
class Support:
    """Smallest set of atoms or bins carrying at least 1 - threshold of the mass."""

    measure: ProbMeasure
    indices: np.ndarray  # atom indices or flat bin indices, by decreasing weight
    mass: float
    covering_measure: float  # Lebesgue measure of the covering set

    @property
    def size(self) -> int:
        return int(self.indices.size)

    def points(self) -> np.ndarray:
        if self.measure.repr == "atoms":
            return self.measure.points[self.indices]
        return self.measure.bin_centers()[self.indices]

    def mask(self) -> np.ndarray:
        """Boolean bin mask of shape `resolution` (histograms only)."""
        m = np.zeros(int(np.prod(self.measure.resolution)), dtype=bool)
        m[self.indices] = True
        return m.reshape(self.measure.resolution)


def support_estimate(mu: ProbMeasure, mass_threshold: float) -> Support:
    if not 0.0 < mass_threshold < 1.0:
        raise DomainError("mass threshold must lie in (0, 1)")
    w = mu.weights.reshape(-1)
    order = np.argsort(-w, kind="stable")
    cum = np.cumsum(w[order])
    need = 1.0 - mass_threshold - MASS_TOL
    count = int(np.searchsorted(cum, need, side="left")) + 1
    count = min(count, w.size)
    idx = np.sort(order[:count])
    if mu.repr == "atoms":
        cover = 0.0
    else:
        cover = count / w.size
    return Support(mu, idx, float(w[idx].sum()), cover)


def dilate_mask(mask: np.ndarray, radius_bins: int, periodic: bool) -> np.ndarray:
    """Grow a boolean bin mask by `radius_bins` in the sup-norm over bins."""
    out = mask.copy()
    if radius_bins <= 0:
        return out
    for axis in range(mask.ndim):
        grown = out.copy()
        n = mask.shape[axis]
        for shift in range(1, radius_bins + 1):
            for sgn in (1, -1):
                rolled = np.roll(out, sgn * shift, axis=axis)
                if not periodic:
                    sl = [slice(None)] * mask.ndim
                    if sgn > 0:
                        sl[axis] = slice(0, min(shift, n))
                    else:
                        sl[axis] = slice(max(n - shift, 0), n)
                    rolled[tuple(sl)] = False
                grown |= rolled
        out = grown
    return out


def pushforward(mu: ProbMeasure, system, subsamples: Optional[int] = None) -> ProbMeasure:
    """Image measure f_* mu under the system's map.

    Atoms map pointwise.  A histogram bin is split into `subsamples` equal
    sub-cells per axis; each sub-cell centre carries an equal share of the
    bin mass to the bin containing its image.
    """
    if system.space != mu.space:
        raise DomainError("measure and system live on different phase spaces")
    if mu.repr == "atoms":
        return ProbMeasure.atoms(mu.space, system.map(mu.points), mu.weights)
    res = mu.resolution
    if subsamples is None:
        subsamples = 16 if len(res) == 1 else 4
    offs = (np.arange(subsamples) + 0.5) / subsamples
    flat_w = mu.weights.reshape(-1)
    nonzero = np.nonzero(flat_w)[0]
    centers = mu.bin_centers()[nonzero]
    widths = np.array(mu.bin_widths())
    out = np.zeros(flat_w.size)
    share = flat_w[nonzero] / subsamples ** len(res)
    grids = np.meshgrid(*([offs] * len(res)), indexing="ij")
    for sub in zip(*[g.reshape(-1) for g in grids]):
        pts = centers + (np.array(sub) - 0.5) * widths
        img = system.map(pts)
        np.add.at(out, mu.space.bin_index(img, res), share)
    out = out.reshape(res)
    return ProbMeasure.histogram(mu.space, out / out.sum())
