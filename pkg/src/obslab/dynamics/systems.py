"""The gallery of concrete systems.

Every system exposes ``map`` (vectorised, points -> points) and a streaming
orbit source used by the orbit engine.  Circle expanding maps additionally
provide ``derivative``/``log_derivative``, a lift and a degree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from obslab.errors import ConstructionError, DomainError, UnsupportedOperation
from obslab.measure_core.space import CIRCLE, INTERVAL, SQUARE, PhaseSpace
from obslab.dynamics import kernels as K

# digits kept in the integer window of g_d; d**WINDOW must fit in int64
WINDOW = {2: 62, 3: 39, 4: 31, 5: 27, 6: 24, 7: 22, 8: 20}


class SystemSpec:
    """Base class for gallery systems (immutable after construction)."""

    family: str = "abstract"
    space: PhaseSpace
    derivative_available: bool = False
    engine: str = "float"

    @property
    def params(self) -> dict:
        return {}

    @property
    def name(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{self.family}({args})"

    def __repr__(self):
        return self.name

    def map(self, points) -> np.ndarray:
        raise NotImplementedError

    # circle-map API ----------------------------------------------------------
    def derivative(self, x) -> np.ndarray:
        raise UnsupportedOperation(f"{self.family} has no circle-map derivative")

    def log_derivative(self, x) -> np.ndarray:
        return np.log(self.derivative(x))

    @property
    def is_circle_expanding(self) -> bool:
        return False

    # float engine hooks --------------------------------------------------------
    @property
    def kernel_code(self) -> int:
        raise NotImplementedError

    @property
    def kernel_params(self) -> np.ndarray:
        raise NotImplementedError

    def chart(self, point) -> np.ndarray:
        """Internal orbit state of a phase-space point."""
        return self.space.check(point)[0].copy()

    fix_tol: float = 0.0

    def spec_dict(self) -> dict:
        return {"family": self.family, **{k: v for k, v in self.params.items()}}


class CircleExpanding(SystemSpec):
    space = CIRCLE
    derivative_available = True

    @property
    def is_circle_expanding(self) -> bool:
        return True

    degree: int

    def lift(self, x) -> np.ndarray:
        raise NotImplementedError

    def map(self, points) -> np.ndarray:
        x = self.space.as_points(points)
        return self.space.wrap(self.lift(x))

    def verify_expanding(self, grid_size: int = 10_000) -> float:
        """Minimum of f' on a uniform grid; raises if it is not above one."""
        grid = np.arange(grid_size) / grid_size
        mn = float(np.min(self.derivative(grid)))
        if not mn > 1.0:
            raise ConstructionError(f"{self.name} is not expanding (min f' = {mn})")
        return mn

    def winding_number(self, grid_size: int = 10_000) -> int:
        """Degree computed from the lift across one turn.

        The lift is required to be increasing on the grid, so its total
        increase over [0, 1] counts the turns.
        """
        grid = np.linspace(0.0, 1.0, grid_size + 1)
        F = np.asarray(self.lift(grid), dtype=float).reshape(-1)
        if np.any(np.diff(F) <= 0):
            raise ConstructionError(f"lift of {self.name} is not increasing")
        total = F[-1] - F[0]
        w = int(round(total))
        if abs(total - w) > 1e-9:
            raise ConstructionError(f"lift of {self.name} increases by {total}, not an integer")
        return w


@dataclass(frozen=True, repr=False, eq=True)
class LinearExpanding(CircleExpanding):
    """g_d(x) = d x mod 1 with exact base-d digit-window iteration."""

    d: int = 2
    family = "LinearExpanding"
    engine = "digits"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ConstructionError("g_d needs an integer degree d >= 2")
        if self.d not in WINDOW:
            raise ConstructionError(f"digit window not configured for d = {self.d}")

    @property
    def params(self):
        return {"d": int(self.d)}

    @property
    def degree(self) -> int:
        return int(self.d)

    @property
    def window(self) -> int:
        return WINDOW[self.d]

    def lift(self, x):
        return self.d * np.asarray(x, dtype=float)

    def derivative(self, x):
        return np.full(np.shape(np.asarray(x, dtype=float).reshape(-1)), float(self.d))

    def map(self, points):
        x = self.space.as_points(points).copy()
        # d*x is exact in binary for d a power of two; otherwise one rounding
        return self.space.wrap(self.d * x)


@dataclass(frozen=True, repr=False, eq=True)
class PerturbedExpanding(CircleExpanding):
    """f(x) = d x + eps sin(2 pi m x) / (2 pi m) mod 1; expanding iff eps < d - 1."""

    d: int = 2
    eps: float = 0.3
    m: int = 1
    family = "PerturbedExpanding"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ConstructionError("degree must be an integer >= 2")
        if int(self.m) != self.m or self.m < 1:
            raise ConstructionError("perturbation frequency m must be a positive integer")
        if not abs(self.eps) < self.d - 1:
            raise ConstructionError(f"|eps| = {abs(self.eps)} must be < d - 1 for expansion")

    @property
    def params(self):
        return {"d": int(self.d), "eps": float(self.eps), "m": int(self.m)}

    @property
    def degree(self) -> int:
        return int(self.d)

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        w = 2.0 * np.pi * self.m
        return self.d * x + self.eps * np.sin(w * x) / w

    def derivative(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return self.d + self.eps * np.cos(2.0 * np.pi * self.m * x)

    @property
    def kernel_code(self):
        return K.FAM_PERTURBED

    @property
    def kernel_params(self):
        return np.array([float(self.d), float(self.eps), float(self.m)])


@dataclass(frozen=True, repr=False, eq=True)
class ProductHalving(SystemSpec):
    """f(x, y) = (x / 2, y) on the unit square."""

    family = "ProductHalving"
    space = SQUARE

    def map(self, points):
        p = self.space.check(points).copy()
        p[:, 0] *= 0.5
        return p

    @property
    def kernel_code(self):
        return K.FAM_PRODUCT

    @property
    def kernel_params(self):
        return np.zeros(1)


# ---------------------------------------------------------------- gradient flow


def grad_field(s) -> np.ndarray:
    """phi'(s) = 4 s^3 sin(1/s) - s^2 cos(1/s), with phi'(0) = 0."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    nz = s != 0
    r = 1.0 / s[nz]
    out[nz] = 4.0 * s[nz] ** 3 * np.sin(r) - s[nz] ** 2 * np.cos(r)
    return out


HALF = 1.0 / np.pi  # s ranges over [-1/pi, 1/pi)
S_TO_X = np.pi / 2.0  # circle coordinate x = (pi/2) s mod 1


def s_to_x(s):
    return CIRCLE.wrap(S_TO_X * np.asarray(s, dtype=float)).reshape(np.shape(s))


def x_to_s(x):
    x = np.asarray(x, dtype=float)
    xc = np.where(x >= 0.5, x - 1.0, x)
    return xc / S_TO_X


@dataclass(frozen=True, repr=False, eq=True)
class GradientTimeOne(SystemSpec):
    """Time-one map of ds/dt = phi'(s), phi(s) = s^4 sin(1/s), by fixed-step RK4.

    The interval [-1/pi, 1/pi] has its ends identified and is rescaled to
    the unit circle by x = (pi/2) s mod 1.  Sinks are the zeros of phi'
    where it changes sign from + to -; they accumulate at s = 0.
    """

    substeps: int = 1000
    family = "GradientTimeOne"
    space = CIRCLE
    fix_tol = 1e-14

    def __post_init__(self):
        if int(self.substeps) != self.substeps or self.substeps < 100:
            raise ConstructionError("gradient time-one map needs substeps >= 100")

    @property
    def params(self):
        return {"substeps": int(self.substeps)}

    @property
    def h(self) -> float:
        return 1.0 / self.substeps

    @cached_property
    def _vmax(self) -> float:
        grid = np.linspace(-HALF, HALF, 200_001)
        return float(np.max(np.abs(grad_field(grid))))

    @property
    def kernel_code(self):
        return K.FAM_GRADIENT

    @property
    def kernel_params(self):
        return np.array([self.h, float(self.substeps), HALF, self._vmax * 1.01])

    def chart(self, point):
        x = self.space.check(point)[0, 0]
        return np.array([float(x_to_s(x))])

    def step_s(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.array([K.grad_step(v, self.h, int(self.substeps), HALF, self._vmax * 1.01) for v in s])
        return out

    def map(self, points):
        x = self.space.check(points)[:, 0]
        s = self.step_s(x_to_s(x))
        if not np.all(np.isfinite(s)):
            from obslab.errors import OrbitError

            raise OrbitError("RK4 step instability in the gradient time-one map")
        return s_to_x(s).reshape(-1, 1)

    @cached_property
    def critical_points(self):
        """Zeros of phi' found by sign changes on a grid of 10*substeps points.

        Returns (s_values, kinds) with kind +1 for sinks and -1 for sources.
        The grid resolution, hence the number of resolved zeros, grows with
        `substeps`.
        """
        return critical_points(10 * int(self.substeps))

    @property
    def sinks_s(self) -> np.ndarray:
        s, kinds = self.critical_points
        return s[kinds > 0]

    @property
    def sources_s(self) -> np.ndarray:
        s, kinds = self.critical_points
        return s[kinds < 0]

    @property
    def sinks(self) -> np.ndarray:
        """Sink positions in the circle coordinate."""
        return s_to_x(self.sinks_s)

    def basin_intervals(self):
        """For each resolved sink, its basin (s_lo, s_hi) between the neighbouring
        zeros, wrapping cyclically (s is defined mod 2/pi).  The interval next to
        0 also holds the unresolved zeros accumulating there."""
        s, kinds = self.critical_points
        n = len(s)
        out = []
        for i, k in enumerate(kinds):
            if k <= 0:
                continue
            lo = s[i - 1] if i > 0 else s[-1] - 2 * HALF
            hi = s[i + 1] if i + 1 < n else s[0] + 2 * HALF
            out.append((s[i], lo, hi))
        return out


def critical_points(grid_size: int):
    """Sign changes of phi' on a uniform grid of [-1/pi, 1/pi], refined by brentq.

    Zeros at 0 itself are excluded (0 is the accumulation point).  A zero
    of the circle field at the identified endpoint cannot occur since
    phi'(+-1/pi) = 1/pi^2.
    """
    def f(v):
        return float(grad_field(np.array([v]))[0])

    grid = np.linspace(-HALF, HALF, grid_size + 1)
    vals = grad_field(grid)
    roots, kinds = [], []
    for i in range(grid_size):
        a, b = vals[i], vals[i + 1]
        if grid[i] == 0.0 or grid[i + 1] == 0.0:
            continue
        if (grid[i] < 0.0) != (grid[i + 1] < 0.0):
            continue
        if a > 0 and b < 0:
            kinds.append(1)
        elif a < 0 and b > 0:
            kinds.append(-1)
        else:
            continue
        roots.append(brentq(f, grid[i], grid[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps))
    return np.array(roots), np.array(kinds, dtype=np.int64)


# ---------------------------------------------------------------- Bowen model


@dataclass(frozen=True, repr=False, eq=True)
class BowenSaddles(SystemSpec):
    """Two saddles A = (0,0), B = (1,1) joined by the boundary of the square.

    Closed-form piecewise chart (no numerical integration).  The square is
    cut into quadrants:

    * bottom-left: linear saddle at A, X = 2x, Y = 2y, X' = e_A X, Y' = -c_A Y;
    * top-right: linear saddle at B, P = 2(1-x), Q = 2(1-y), same form;
    * bottom-right / top-left: transit regions foliated by L-shaped paths.
      A box exit at height v is carried in time tau to a box entrance at
      u = v (kappa + (1 - kappa) v) on the next saddle's incoming side.

    W^u(A) = W^s(B) is the bottom and right edges, W^u(B) = W^s(A) the top
    and left edges; the centre (1/2, 1/2) acts as the repelling source.

    Passage-time analysis.  Entering a box at log-distance L = log(1/u)
    the orbit stays L/e there and leaves at log-distance (c/e) L.  Hence the
    logs of successive entrance distances at A grow by gamma = rho_A rho_B
    per turn (rho = c/e), up to additive log(1/kappa) terms.  For gamma > 1
    the fraction of time spent near A oscillates between
    (1/e_A) / (1/e_A + rho_A/e_B) and (gamma/e_A) / (gamma/e_A + rho_A/e_B),
    so the time averages do not converge.  For gamma = 1 and kappa < 1 the
    logs grow linearly and the averages converge to lam delta_A +
    (1 - lam) delta_B with lam = 1 / (1 + c_A / e_B).
    """

    e_A: float = 1.0
    c_A: float = 2.0
    e_B: float = 1.0
    c_B: float = 2.0
    kappa: float = 0.5
    tau: float = 1.0
    family = "BowenSaddles"
    space = SQUARE

    def __post_init__(self):
        vals = (self.e_A, self.c_A, self.e_B, self.c_B)
        if not all(np.isfinite(v) and v > 0 for v in vals):
            raise ConstructionError("saddle exponents must be positive and finite")
        if not (0.0 < self.kappa <= 1.0):
            raise ConstructionError("transit contraction kappa must lie in (0, 1]")
        if not (self.tau > 0.0 and np.isfinite(self.tau)):
            raise ConstructionError("transit time must be positive")

    @property
    def params(self):
        return {
            "lambda_u_A": math.exp(self.e_A),
            "lambda_s_A": math.exp(-self.c_A),
            "lambda_u_B": math.exp(self.e_B),
            "lambda_s_B": math.exp(-self.c_B),
            "kappa": float(self.kappa),
            "tau": float(self.tau),
        }

    @property
    def A(self):
        return np.array([0.0, 0.0])

    @property
    def B(self):
        return np.array([1.0, 1.0])

    @property
    def C(self):
        return np.array([0.5, 0.5])

    @property
    def gamma(self) -> float:
        return (self.c_A / self.e_A) * (self.c_B / self.e_B)

    @property
    def eigenvalues(self) -> dict:
        return {
            "A": (math.exp(-self.c_A), math.exp(self.e_A)),
            "B": (math.exp(-self.c_B), math.exp(self.e_B)),
        }

    def time_at_A_bounds(self):
        """Liminf / limsup of the fraction of time near A (gamma >= 1)."""
        rho_a = self.c_A / self.e_A
        lo = (1 / self.e_A) / (1 / self.e_A + rho_a / self.e_B)
        hi = (self.gamma / self.e_A) / (self.gamma / self.e_A + rho_a / self.e_B)
        return lo, hi

    @property
    def physical_weight(self) -> float:
        return 1.0 / (1.0 + self.c_A / self.e_B)

    @property
    def kernel_code(self):
        return K.FAM_BOWEN

    @property
    def kernel_params(self):
        return np.array([self.e_A, self.c_A, self.e_B, self.c_B, self.kappa, self.tau])

    def _u(self, v):
        return v * (self.kappa + (1.0 - self.kappa) * v)

    def _v_from_u(self, u):
        k = self.kappa
        if k == 1.0:
            return u
        return (-k + np.sqrt(k * k + 4.0 * (1.0 - k) * u)) / (2.0 * (1.0 - k))

    def chart(self, point) -> np.ndarray:
        """(seg, a, b) chart state of a point of the square."""
        x, y = (float(c) for c in self.space.check(point)[0])
        with np.errstate(divide="ignore"):
            if x <= 0.5 and y <= 0.5:
                return np.array([0.0, np.log(2 * x), np.log(2 * y)])
            if x >= 0.5 and y >= 0.5:
                return np.array([2.0, np.log(2 * (1 - x)), np.log(2 * (1 - y))])
            if x >= 0.5:  # bottom-right transit A -> B
                seg, p, q = 1.0, 2 * x - 1, 2 * y
            else:  # top-left transit B -> A
                seg, p, q = 3.0, 1 - 2 * x, 2 * (1 - y)
            v = q
            if p > 1.0 - self._u(q):
                v = float(self._v_from_u(1.0 - p))
                v = min(v, q)
            u = self._u(v)
            total = (1.0 - u) + (1.0 - v)
            sig = p if v == q else (1.0 - u) + (q - v)
            s = 0.0 if total <= 0 else self.tau * min(sig / total, 1.0)
            if s >= self.tau:
                s = np.nextafter(self.tau, 0.0)
            return np.array([seg, np.log(v), s])

    def embed(self, state) -> np.ndarray:
        out = np.empty(2)
        K.bowen_embed(int(state[0]), float(state[1]), float(state[2]), self.kernel_params, out)
        return out

    def step_state(self, state) -> np.ndarray:
        st = np.array(state, dtype=float)
        K.bowen_step(st, self.kernel_params)
        return st

    def map(self, points):
        pts = self.space.check(points)
        out = np.empty_like(pts)
        for i, p in enumerate(pts):
            out[i] = self.embed(self.step_state(self.chart(p)))
        return out

    def manifold_points(self, count: int = 200):
        """Sample points of W^u(A) = W^s(B): the bottom and right edges."""
        t = (np.arange(count) + 0.5) / count
        bottom = np.column_stack([t, np.zeros(count)])
        right = np.column_stack([np.ones(count), t])
        return np.vstack([bottom, right])


def build_bowen(target: str, lambda_params: Optional[dict] = None, **extra) -> BowenSaddles:
    """Bowen two-saddle map for a target regime.

    `lambda_params` gives saddle eigenvalues {lambda_s_A, lambda_u_A,
    lambda_s_B, lambda_u_B}; missing entries fall back to the regime's
    defaults.  Defaults:

    * oscillating: lambda_u = e, lambda_s = e^-2 at both saddles
      (gamma = 4), kappa = 1/2; the time at A swings between 1/3 and 2/3.
    * physical: lambda_u_A = e, lambda_s_A = e^-1.5, lambda_u_B = e^1.5,
      lambda_s_B = e^-1 (gamma = 1), kappa = 0.4; averages converge to
      (delta_A + delta_B) / 2.
    """
    defaults = {
        "oscillating": dict(lambda_u_A=math.e, lambda_s_A=math.exp(-2.0),
                            lambda_u_B=math.e, lambda_s_B=math.exp(-2.0), kappa=0.5),
        "physical": dict(lambda_u_A=math.e, lambda_s_A=math.exp(-1.5),
                         lambda_u_B=math.exp(1.5), lambda_s_B=math.exp(-1.0), kappa=0.4),
    }
    if target not in defaults:
        raise ConstructionError(f"unknown Bowen target {target!r}")
    p = dict(defaults[target])
    for src in (lambda_params or {}), extra:
        for k, v in src.items():
            if k not in p and k != "tau":
                raise ConstructionError(f"unknown Bowen parameter {k!r}")
            p[k] = float(v)
    for side in "AB":
        lu, ls = p[f"lambda_u_{side}"], p[f"lambda_s_{side}"]
        if not (lu > 1.0 > ls > 0.0):
            raise ConstructionError(
                f"saddle {side} needs unstable > 1 > stable > 0, got {lu}, {ls}"
            )
    sysm = BowenSaddles(
        e_A=math.log(p["lambda_u_A"]),
        c_A=-math.log(p["lambda_s_A"]),
        e_B=math.log(p["lambda_u_B"]),
        c_B=-math.log(p["lambda_s_B"]),
        kappa=p["kappa"],
        tau=p.get("tau", 1.0),
    )
    if target == "oscillating" and not sysm.gamma > 1.0 + 1e-9:
        raise ConstructionError(f"oscillation needs rho_A rho_B > 1, got {sysm.gamma}")
    if target == "physical":
        if abs(sysm.gamma - 1.0) > 1e-9:
            raise ConstructionError(f"physical variant needs rho_A rho_B = 1, got {sysm.gamma}")
        if not sysm.kappa < 1.0:
            raise ConstructionError("physical variant needs kappa < 1")
    _check_bowen_geometry(sysm)
    return sysm


def _check_bowen_geometry(sysm: BowenSaddles, count: int = 64) -> None:
    """A, B fixed; W^u(A) carried into W^s(B) and vice versa."""
    for P in (sysm.A, sysm.B):
        img = sysm.map(P)[0]
        if np.max(np.abs(img - P)) > 1e-9:
            raise ConstructionError(f"saddle {P} is not fixed (image {img})")
    t = (np.arange(count) + 0.5) / count
    edge_a = np.column_stack([t * 0.5, np.zeros(count)])
    edge_b = np.column_stack([1.0 - 0.5 * t, np.ones(count)])
    for pts, on in ((edge_a, _on_wu_a), (edge_b, _on_wu_b)):
        img = sysm.map(pts)
        if not np.all(on(img)):
            raise ConstructionError("saddle connection broken by the chart")


def _on_wu_a(p):
    return (np.abs(p[:, 1]) <= 1e-6) | (np.abs(p[:, 0] - 1.0) <= 1e-6)


def _on_wu_b(p):
    return (np.abs(p[:, 1] - 1.0) <= 1e-6) | (np.abs(p[:, 0]) <= 1e-6)


# ---------------------------------------------------------------- Feigenbaum

T_INFINITY = 3.569945671870944901842


@dataclass(frozen=True, repr=False, eq=True)
class QuadraticFeigenbaum(SystemSpec):
    """Logistic map f(x) = t x (1 - x) on [0, 1]."""

    t: float = T_INFINITY
    family = "QuadraticFeigenbaum"
    space = INTERVAL

    def __post_init__(self):
        if not 0.0 < self.t <= 4.0:
            raise ConstructionError("logistic parameter must lie in (0, 4]")

    @property
    def params(self):
        return {"t": float(self.t)}

    def map(self, points):
        x = self.space.check(points)
        return np.clip(self.t * x * (1.0 - x), 0.0, 1.0)

    @property
    def kernel_code(self):
        return K.FAM_LOGISTIC

    @property
    def kernel_params(self):
        return np.array([float(self.t)])

    def critical_orbit(self, length: int) -> np.ndarray:
        out = np.empty(length)
        x = 0.5
        for j in range(length):
            out[j] = x
            x = self.t * x * (1.0 - x)
        return out


@dataclass(frozen=True)
class FeigenbaumReference:
    """Generation-n approximation of the measure on the Feigenbaum Cantor set."""

    generation: int
    intervals: np.ndarray  # (2^n, 2): K_{i,n} = [lo, hi], indexed by orbit residue i
    measure: "object"  # ProbMeasure with one atom c_i in each K_{i,n}

    def interval_of(self, x) -> np.ndarray:
        """Index i with x in K_{i,n}, or -1."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.full(x.size, -1, dtype=np.int64)
        for i, (lo, hi) in enumerate(self.intervals):
            out[(x >= lo) & (x <= hi)] = i
        return out

    def masses(self, mu) -> np.ndarray:
        """mu(K_{i,n}) for an atom measure mu."""
        idx = self.interval_of(mu.points[:, 0])
        out = np.zeros(len(self.intervals))
        np.add.at(out, idx[idx >= 0], mu.weights[idx >= 0])
        return out


def feigenbaum_reference(generation: int, system: Optional[QuadraticFeigenbaum] = None,
                         periods: int = 64) -> FeigenbaumReference:
    """Build K_{i,n} from the critical orbit c_j = f^j(1/2).

    K_{i,n} is the hull of {c_j : j = i mod 2^n} over `periods` turns; the
    intervals must come out pairwise disjoint with f(K_{i,n}) near
    K_{i+1,n}.  The measure puts mass 2^-n at c_i in K_{i,n}.
    """
    from obslab.measure_core.measure import ProbMeasure

    if not 1 <= generation <= 12:
        raise DomainError("generation must lie in 1..12")
    system = system or QuadraticFeigenbaum()
    q = 2**generation
    orbit = system.critical_orbit(q * periods)
    groups = orbit.reshape(periods, q)
    lo = groups.min(axis=0)
    hi = groups.max(axis=0)
    order = np.argsort(lo)
    if np.any(lo[order][1:] <= hi[order][:-1]):
        raise ConstructionError(f"generation-{generation} intervals overlap")
    intervals = np.column_stack([lo, hi])
    mu = ProbMeasure.atoms(INTERVAL, orbit[:q], np.full(q, 1.0 / q))
    return FeigenbaumReference(generation, intervals, mu)


# ---------------------------------------------------------------- exact digits


def rational_digits(x: Fraction, d: int, count: int) -> np.ndarray:
    """First `count` base-d digits of the rational x in [0, 1).

    The remainder sequence is eventually periodic; once a remainder repeats
    the cycle is tiled instead of continued.
    """
    p, q = x.numerator, x.denominator
    if not 0 <= p < q:
        raise DomainError(f"{x} is not in [0, 1)")
    out = np.empty(count, dtype=np.uint8)
    seen: dict[int, int] = {}
    track = q < (1 << 24)
    j = 0
    while j < count:
        if track:
            if p in seen:
                start = seen[p]
                cycle = out[start:j].copy()
                rest = count - j
                reps = -(-rest // len(cycle))
                out[j:] = np.tile(cycle, reps)[:rest]
                return out
            seen[p] = j
        p *= d
        out[j] = p // q
        p %= q
        j += 1
        if p == 0:
            out[j:] = 0
            return out
    return out


def float_as_fraction(x: float) -> Fraction:
    return Fraction(float(x))


def window_state(digits: np.ndarray, d: int, K_: int) -> int:
    s = 0
    for dig in digits[:K_]:
        s = s * d + int(dig)
    return s
