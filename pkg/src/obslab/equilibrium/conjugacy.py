"""Symbolic coding of an expanding circle map by its d branches."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from obslab.errors import ConstructionError, DomainError, UnsupportedOperation
from obslab.dynamics.systems import LinearExpanding, SystemSpec


def _wrap(v: float) -> float:
    # v % 1.0 can round up to 1.0 for tiny negative v
    v = v % 1.0
    return 0.0 if v >= 1.0 else v


@dataclass
class ConjugacyCode:
    """Branch partition [q_i, q_{i+1}) (arcs measured from the fixed point p = q_0)
    and the itinerary coding h(x) = sum_j a_j d^{-(j+1)}, with h(p) = 0."""

    system: SystemSpec
    d: int
    p: float
    cuts: np.ndarray  # q_i - p mod 1, increasing, cuts[0] = 0
    depth: int = 20
    grid: np.ndarray = field(default=None, repr=False)
    h_grid: np.ndarray = field(default=None, repr=False)

    @property
    def branches(self) -> np.ndarray:
        """Branch endpoints on the circle, q_0 = p first."""
        return (self.p + self.cuts) % 1.0

    def symbol(self, x) -> np.ndarray:
        rel = (np.asarray(x, dtype=float).reshape(-1) - self.p) % 1.0
        s = np.searchsorted(self.cuts, rel, side="right") - 1
        return np.clip(s, 0, self.d - 1).astype(np.int64)

    def itinerary(self, x, k: int) -> np.ndarray:
        """(len(x), k) symbols of x, f(x), ..., f^{k-1}(x)."""
        x = np.asarray(x, dtype=float).reshape(-1)
        out = np.empty((x.size, k), dtype=np.int64)
        y = x.copy()
        for j in range(k):
            out[:, j] = self.symbol(y)
            y = self.system.map(y)[:, 0]
        return out

    def encode(self, x, k=None) -> np.ndarray:
        """h_k(x) = sum_{j<k} a_j d^{-(j+1)}."""
        k = self.depth if k is None else int(k)
        it = self.itinerary(x, k)
        w = float(self.d) ** -(np.arange(k) + 1.0)
        return it @ w

    def inverse_branch(self, i: int, y: float) -> float:
        """The preimage of y lying in branch i."""
        F = self.system.lift
        Fp = float(F(np.array([self.p]))[0])
        a = self.p + self.cuts[i]
        b = self.p + (self.cuts[i + 1] if i + 1 < self.d else 1.0)
        target = Fp + i + ((y - self.p) % 1.0)
        g = lambda t: float(F(np.array([t]))[0]) - target
        if g(a) > 0 or g(b) < 0:
            raise ConstructionError("branch inverse out of range")
        return brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps) % 1.0

    def periodic_orbit(self, word: Sequence[int], sweeps: int = 200) -> np.ndarray:
        """The periodic orbit with repeating itinerary `word` (inverse branches contract)."""
        word = [int(a) for a in word]
        if not word or any(a < 0 or a >= self.d for a in word):
            raise DomainError("word symbols must lie in 0..d-1")
        if isinstance(self.system, LinearExpanding):
            # exact: the base-d expansion 0.(word)(word)...
            d, p = self.d, len(word)
            val = sum(a * d ** (p - 1 - j) for j, a in enumerate(word)) / (d**p - 1)
            orbit = [_wrap(val)]
            for _ in range(p - 1):
                orbit.append((orbit[-1] * d) % 1.0)
            return np.array(orbit)
        x = self.p
        for _ in range(sweeps):
            y = x
            for a in reversed(word):
                y = self.inverse_branch(a, y)
            if abs(((y - x + 0.5) % 1.0) - 0.5) < 1e-15:
                x = y
                break
            x = y
        orbit = [x]
        for _ in range(len(word) - 1):
            orbit.append(float(self.system.map(np.array([orbit[-1]]))[0, 0]))
        return np.array([_wrap(v) for v in orbit])

    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.h_grid) >= 0))

    def residual(self) -> float:
        """max over the grid of the circle distance |h(f x) - g_d(h x)|."""
        fx = self.system.map(self.grid)[:, 0]
        hf = self.encode(fx)
        gh = (self.d * self.h_grid) % 1.0
        e = np.abs(hf - gh) % 1.0
        return float(np.max(np.minimum(e, 1.0 - e)))

    @property
    def residual_bound(self) -> float:
        return self.d * float(self.d) ** -self.depth


def build_conjugacy(system: SystemSpec, depth: int = 20, grid_size: int = 4096) -> ConjugacyCode:
    if not system.is_circle_expanding:
        raise UnsupportedOperation("conjugacy coding needs an expanding circle map")
    d = system.winding_number()
    if d != system.degree:
        raise ConstructionError(f"winding number {d} differs from declared degree {system.degree}")
    system.verify_expanding()
    F = system.lift
    f1 = lambda t: float(F(np.array([t]))[0])
    # fixed point of the lift: F(p) - p = j, G = F - id increases by d - 1 over a turn
    j = int(np.ceil(f1(0.0) - 1e-15))
    G = lambda t: f1(t) - t - j
    if abs(G(0.0)) <= 1e-15:
        p = 0.0
    else:
        p = brentq(G, 0.0, 1.0, xtol=1e-15)
    Fp = f1(p)
    cuts = [0.0]
    for i in range(1, d):
        cuts.append(brentq(lambda t: f1(p + t) - Fp - i, 0.0, 1.0, xtol=1e-15))
    code = ConjugacyCode(system, d, p, np.array(cuts), depth)
    # grid starting at the fixed point, so h runs over [0, 1)
    grid = (p + np.arange(grid_size) / grid_size) % 1.0
    code.grid = grid
    code.h_grid = code.encode(grid)
    return code
