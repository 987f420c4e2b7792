"""Test-function families defining the truncated weak* metric.

The metric is ``dist(a, b) = sum_i 2**-i |∫g_i da - ∫g_i db|`` for a fixed
ordered family ``g_1, g_2, ...`` with ``|g_i| <= 1``.  Measures enter the
metric only through their *moment vectors* ``(∫g_1 dμ, ..., ∫g_imax dμ)``,
so everything downstream (orbit accumulators, clustering) works on those.

Families, per phase space:

* Circle: ``1, cos 2πx, sin 2πx, cos 4πx, sin 4πx, ...``
* Interval01: ``T_0(2x-1), T_1(2x-1), ...`` (Chebyshev polynomials)
* Square01 / Torus2: products of the 1-D families of each axis, enumerated
  along anti-diagonals of the index pair ``(a, b)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from obslab.errors import DomainError
from obslab.measure_core.space import SPACE_CODES, PhaseSpace, SpaceKind

DEFAULT_IMAX = 64


def diagonal_pairs(count: int) -> np.ndarray:
    """First `count` index pairs (a, b) ordered by a + b, then by b."""
    pairs = []
    s = 0
    while len(pairs) < count:
        for b in range(s + 1):
            pairs.append((s - b, b))
            if len(pairs) == count:
                break
        s += 1
    return np.array(pairs, dtype=np.int64)


def _family_1d(kind: SpaceKind) -> str:
    if kind in (SpaceKind.CIRCLE, SpaceKind.TORUS):
        return "trig"
    return "cheb"


def trig_values(x: np.ndarray, top: int) -> np.ndarray:
    """Values of the trigonometric family c_0..c_top at points x, shape (n, top+1)."""
    x = np.asarray(x, dtype=float)
    out = np.empty((x.size, top + 1))
    out[:, 0] = 1.0
    kmax = (top + 1) // 2
    if kmax:
        ks = np.arange(1, kmax + 1)
        ang = 2.0 * np.pi * np.outer(x, ks)
        c, s = np.cos(ang), np.sin(ang)
        for k in range(1, kmax + 1):
            if 2 * k - 1 <= top:
                out[:, 2 * k - 1] = c[:, k - 1]
            if 2 * k <= top:
                out[:, 2 * k] = s[:, k - 1]
    return out


def cheb_values(x: np.ndarray, top: int) -> np.ndarray:
    """Values of T_0..T_top at 2x-1, shape (n, top+1)."""
    u = 2.0 * np.asarray(x, dtype=float) - 1.0
    out = np.empty((u.size, top + 1))
    out[:, 0] = 1.0
    if top >= 1:
        out[:, 1] = u
    for n in range(2, top + 1):
        out[:, n] = 2.0 * u * out[:, n - 1] - out[:, n - 2]
    return out


def trig_bin_averages(edges: np.ndarray, top: int) -> np.ndarray:
    """Average of c_0..c_top over each interval [edges[j], edges[j+1]]."""
    lo, hi = edges[:-1], edges[1:]
    width = hi - lo
    out = np.empty((lo.size, top + 1))
    out[:, 0] = 1.0
    for a in range(1, top + 1):
        k = (a + 1) // 2
        w = 2.0 * np.pi * k
        if a % 2 == 1:
            out[:, a] = (np.sin(w * hi) - np.sin(w * lo)) / (w * width)
        else:
            out[:, a] = -(np.cos(w * hi) - np.cos(w * lo)) / (w * width)
    return out


def _cheb_antiderivative(u: np.ndarray, n: int, tvals: np.ndarray) -> np.ndarray:
    if n == 0:
        return u
    if n == 1:
        return 0.5 * u * u
    return tvals[:, n + 1] / (2.0 * (n + 1)) - tvals[:, n - 1] / (2.0 * (n - 1))


def cheb_bin_averages(edges: np.ndarray, top: int) -> np.ndarray:
    """Average of T_n(2x-1), n=0..top, over each interval of `edges`."""
    u = 2.0 * np.asarray(edges, dtype=float) - 1.0
    tv = cheb_values(edges, top + 1)
    prim = np.column_stack([_cheb_antiderivative(u, n, tv) for n in range(top + 1)])
    du = (u[1:] - u[:-1])[:, None]
    return (prim[1:] - prim[:-1]) / du


@dataclass(frozen=True)
class TestFunctionBasis:
    """Ordered family {g_i}, i = 1..imax, with sup-norm at most one."""

    __test__ = False  # not a pytest class

    space: PhaseSpace
    imax: int = DEFAULT_IMAX
    _pairs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.imax < 1:
            raise DomainError("truncation order must be >= 1")
        if self.space.dimension == 1:
            pairs = np.column_stack(
                [np.arange(self.imax, dtype=np.int64), np.zeros(self.imax, dtype=np.int64)]
            )
        else:
            pairs = diagonal_pairs(self.imax)
        pairs.setflags(write=False)
        object.__setattr__(self, "_pairs", pairs)

    @property
    def pairs(self) -> np.ndarray:
        return self._pairs

    @property
    def family(self) -> str:
        return _family_1d(self.space.kind)

    @property
    def space_code(self) -> int:
        return SPACE_CODES[self.space.kind]

    @cached_property
    def weights(self) -> np.ndarray:
        w = 0.5 ** np.arange(1, self.imax + 1)
        w.setflags(write=False)
        return w

    @property
    def truncation_error(self) -> float:
        """Upper bound on the metric mass discarded by truncation."""
        return 2.0 * 0.5**self.imax

    @property
    def top(self) -> tuple[int, int]:
        return int(self._pairs[:, 0].max()), int(self._pairs[:, 1].max())

    def _values_1d(self, x, top):
        return trig_values(x, top) if self.family == "trig" else cheb_values(x, top)

    def _averages_1d(self, edges, top):
        if self.family == "trig":
            return trig_bin_averages(edges, top)
        return cheb_bin_averages(edges, top)

    def evaluate(self, points) -> np.ndarray:
        """Matrix G with G[j, i-1] = g_i(points[j])."""
        pts = self.space.as_points(points)
        ta, tb = self.top
        va = self._values_1d(pts[:, 0], ta)
        if self.space.dimension == 1:
            return va[:, self._pairs[:, 0]]
        vb = self._values_1d(pts[:, 1], tb)
        return va[:, self._pairs[:, 0]] * vb[:, self._pairs[:, 1]]

    def function(self, i: int):
        """The single function g_i (1-based) as a callable on points."""
        if not 1 <= i <= self.imax:
            raise DomainError(f"basis index {i} outside 1..{self.imax}")

        def g(points):
            return self.evaluate(points)[:, i - 1]

        return g

    def atom_moments(self, points, weights) -> np.ndarray:
        return np.asarray(weights, dtype=float) @ self.evaluate(points)

    def histogram_moments(self, weights: np.ndarray) -> np.ndarray:
        """Moments of a histogram measure, uniform density inside each bin."""
        ta, tb = self.top
        w = np.asarray(weights, dtype=float)
        fa = self._averages_1d(np.linspace(0.0, 1.0, w.shape[0] + 1), ta)
        if self.space.dimension == 1:
            return (w @ fa)[self._pairs[:, 0]]
        fb = self._averages_1d(np.linspace(0.0, 1.0, w.shape[1] + 1), tb)
        full = fa.T @ w @ fb
        return full[self._pairs[:, 0], self._pairs[:, 1]]

    def lebesgue_moments(self) -> np.ndarray:
        ta, tb = self.top
        edges = np.array([0.0, 1.0])
        fa = self._averages_1d(edges, ta)[0]
        if self.space.dimension == 1:
            return fa[self._pairs[:, 0]].copy()
        fb = self._averages_1d(edges, tb)[0]
        return fa[self._pairs[:, 0]] * fb[self._pairs[:, 1]]

    def moment_distance(self, ma, mb) -> np.ndarray:
        """Weighted L1 distance between moment vectors (broadcasts over leading axes)."""
        diff = np.abs(np.asarray(ma, dtype=float) - np.asarray(mb, dtype=float))
        return diff @ self.weights

    def scaled(self, moments) -> np.ndarray:
        """Moments multiplied by the metric weights; the metric is then cityblock."""
        return np.asarray(moments, dtype=float) * self.weights


def default_basis(space: PhaseSpace, imax: int = DEFAULT_IMAX) -> TestFunctionBasis:
    return TestFunctionBasis(space, imax)
