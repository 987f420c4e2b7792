"""Orbit engine: streaming chunks of f^j(x0) and materialised orbits."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional

import numpy as np

from obslab.errors import DomainError, OrbitError, UnsupportedOperation
from obslab.dynamics import kernels as K
from obslab.dynamics.systems import (
    LinearExpanding,
    SystemSpec,
    rational_digits,
    window_state,
)

CHUNK = 1 << 16
MATERIALIZE_LIMIT = 5_000_000


@dataclass
class Chunk:
    """Iterates j0 .. j0+len-1, or, when `constant`, iterates j0 .. end-1 all equal to pts[0]."""

    j0: int
    pts: np.ndarray
    logd: np.ndarray
    constant: bool = False
    end: int = 0

    @property
    def stop(self) -> int:
        return self.end if self.constant else self.j0 + self.pts.shape[0]


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class OrbitStream:
    """Replayable stream over the first `n` iterates of x0.

    Linear maps g_d run on an integer window of base-d digits.  In
    ``mode="exact"`` the digits are those of the rational number x0 (floats
    are dyadic rationals), so e.g. dyadic points of g_2 reach 0 exactly.
    In ``mode="typical"`` the digits beyond the window are drawn from the
    seeded generator: x0 then stands for a Lebesgue-random real in its
    window cell, which is the right model for ensemble sampling.
    Other systems iterate in double precision (Bowen in its log chart).
    """

    def __init__(self, system: SystemSpec, x0, n: int, seed=None, mode: Optional[str] = None,
                 chunk: int = CHUNK):
        if n < 1:
            raise DomainError("orbit length must be >= 1")
        self.system = system
        self.n = int(n)
        self.seed = seed
        self.chunk = int(chunk)
        if isinstance(x0, Fraction):
            self.x0_exact = x0
            x0 = float(x0)
            mode = "exact"  # rationals are always iterated exactly
        else:
            self.x0_exact = None
        self.mode = mode or "exact"
        if self.mode not in ("exact", "typical"):
            raise DomainError(f"unknown orbit mode {self.mode!r}")
        self.x0 = system.space.check(x0)[0].copy()

    # -- digit engine ---------------------------------------------------------
    def _digit_source(self, total):
        d = self.system.d
        Kw = self.system.window
        if self.mode == "exact":
            frac = self.x0_exact if self.x0_exact is not None else Fraction(float(self.x0[0]))
            digs = rational_digits(frac, d, total + Kw)
            lead, tail = digs[:Kw], digs[Kw:]
            state = window_state(lead, d, Kw)

            def tails(start, count):
                return tail[start:start + count]
        else:
            frac = Fraction(float(self.x0[0]))
            state = int(frac * d**Kw)
            rng = _as_rng(self.seed)

            def tails(start, count):
                return rng.integers(0, d, size=count, dtype=np.uint8)
        return state, tails

    def _digit_chunks(self, total) -> Iterator[Chunk]:
        d = self.system.d
        Kw = self.system.window
        s0, tails = self._digit_source(total)
        state = np.array([s0], dtype=np.int64)
        j0 = 0
        while j0 < total:
            m = min(self.chunk, total - j0)
            digs = np.ascontiguousarray(tails(j0, m), dtype=np.uint8)
            out = np.empty((m, 1))
            logd = np.empty(m)
            K.digits_chunk(state, d, Kw, digs, 0, out, logd, m)
            yield Chunk(j0, out, logd)
            j0 += m

    def symbols(self, total: Optional[int] = None) -> np.ndarray:
        """Leading base-d digit of each iterate (g_d only)."""
        if not isinstance(self.system, LinearExpanding):
            raise UnsupportedOperation("leading-digit itineraries exist only for g_d")
        total = total or self.n
        d = self.system.d
        Kw = self.system.window
        s0, tails = self._digit_source(total)
        state = np.array([s0], dtype=np.int64)
        out = np.empty(total, dtype=np.int64)
        j0 = 0
        while j0 < total:
            m = min(self.chunk, total - j0)
            digs = np.ascontiguousarray(tails(j0, m), dtype=np.uint8)
            K.leading_digits(state, d, Kw, digs, 0, out[j0:j0 + m], m)
            j0 += m
        return out

    # -- float engine --------------------------------------------------------------
    def _float_chunks(self, total) -> Iterator[Chunk]:
        sysm = self.system
        code = sysm.kernel_code
        params = np.ascontiguousarray(sysm.kernel_params, dtype=float)
        state = np.array(sysm.chart(self.x0), dtype=float)
        dim = sysm.space.dimension
        j0 = 0
        while j0 < total:
            m = min(self.chunk, total - j0)
            out = np.empty((m, dim))
            logd = np.empty(m)
            cnt, fixed, err = K.float_chunk(code, params, state, out, logd, m, sysm.fix_tol)
            if err:
                raise OrbitError(
                    f"{sysm.name}: iterate {j0 + cnt - 1} left the phase space or the "
                    f"integrator became unstable"
                )
            if fixed:
                if cnt > 1:
                    yield Chunk(j0, out[: cnt - 1], logd[: cnt - 1])
                j0 += cnt - 1
                yield Chunk(j0, out[cnt - 1:cnt].copy(), logd[cnt - 1:cnt].copy(), True, total)
                return
            yield Chunk(j0, out, logd)
            j0 += m

    def chunks(self, total: Optional[int] = None) -> Iterator[Chunk]:
        """Iterates 0..total-1 (default n).  Re-callable: replays from x0."""
        total = self.n if total is None else int(total)
        if isinstance(self.system, LinearExpanding):
            return self._digit_chunks(total)
        return self._float_chunks(total)

    def points(self, total: Optional[int] = None) -> np.ndarray:
        total = self.n if total is None else int(total)
        if total > MATERIALIZE_LIMIT:
            raise DomainError(f"refusing to materialise {total} iterates; stream instead")
        out = np.empty((total, self.system.space.dimension))
        for ch in self.chunks(total):
            if ch.constant:
                out[ch.j0:ch.end] = ch.pts[0]
            else:
                out[ch.j0:ch.stop] = ch.pts
        return out

    def log_derivatives(self, total: Optional[int] = None) -> np.ndarray:
        if not self.system.derivative_available:
            raise UnsupportedOperation(f"{self.system.family} has no circle-map derivative")
        total = self.n if total is None else int(total)
        out = np.empty(total)
        for ch in self.chunks(total):
            if ch.constant:
                out[ch.j0:ch.end] = ch.logd[0]
            else:
                out[ch.j0:ch.stop] = ch.logd
        return out


@dataclass
class Orbit:
    """An orbit of length n: materialised iterates, or a re-playable stream."""

    system: SystemSpec
    x0: np.ndarray
    n: int
    stream: OrbitStream
    iterates: Optional[np.ndarray] = None

    @property
    def materialized(self) -> bool:
        return self.iterates is not None

    def __len__(self):
        return self.n

    def __getitem__(self, j):
        if self.iterates is None:
            raise DomainError("streaming orbit: use .stream.chunks()")
        return self.iterates[j]


def iterate(system: SystemSpec, x0, n: int, *, seed=None, mode: Optional[str] = None,
            materialize: bool = True) -> Orbit:
    """Orbit x0, f(x0), ..., f^{n-1}(x0).

    With ``materialize=False`` only a bounded chunk window is ever held.
    """
    stream = OrbitStream(system, x0, n, seed=seed, mode=mode)
    pts = stream.points() if materialize else None
    if pts is not None and not system.space.contains(pts).all():
        raise OrbitError("orbit left the phase space")
    return Orbit(system, stream.x0, stream.n, stream, pts)


def log_derivative(system: SystemSpec, x) -> np.ndarray:
    """log f'(x) for circle maps with a derivative."""
    if not system.derivative_available:
        raise UnsupportedOperation(f"log_derivative is not provided by {system.family}")
    pts = system.space.check(x)
    return system.log_derivative(pts[:, 0])
