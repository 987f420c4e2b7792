"""Compact phase spaces supported by the laboratory."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from obslab.errors import DomainError


class SpaceKind(str, enum.Enum):
    CIRCLE = "Circle"
    INTERVAL = "Interval01"
    SQUARE = "Square01"
    TORUS = "Torus2"


_DIMENSION = {
    SpaceKind.CIRCLE: 1,
    SpaceKind.INTERVAL: 1,
    SpaceKind.SQUARE: 2,
    SpaceKind.TORUS: 2,
}


@dataclass(frozen=True)
class PhaseSpace:
    """One of the four compact phase spaces.

    Circle and torus coordinates are wrapped into [0, 1); interval and
    square coordinates live in the closed unit interval/square.
    """

    kind: SpaceKind

    @property
    def dimension(self) -> int:
        return _DIMENSION[self.kind]

    @property
    def periodic(self) -> bool:
        return self.kind in (SpaceKind.CIRCLE, SpaceKind.TORUS)

    @property
    def default_resolution(self) -> tuple[int, ...]:
        return (1024,) if self.dimension == 1 else (128, 128)

    @classmethod
    def parse(cls, name) -> "PhaseSpace":
        if isinstance(name, PhaseSpace):
            return name
        try:
            return cls(SpaceKind(name))
        except ValueError:
            raise DomainError(f"unknown phase space {name!r}") from None

    def as_points(self, points) -> np.ndarray:
        """Return `points` as a float array of shape (m, dimension)."""
        arr = np.asarray(points, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1) if self.dimension == 1 else arr.reshape(1, -1)
        if arr.shape[1] != self.dimension:
            raise DomainError(
                f"points of dimension {arr.shape[1]} do not belong to {self.kind.value}"
            )
        return arr

    def wrap(self, points) -> np.ndarray:
        arr = self.as_points(points)
        if self.periodic:
            # floor-based reduction; x - floor(x) can round up to 1.0
            arr = arr - np.floor(arr)
            arr[arr >= 1.0] = 0.0
        return arr

    def contains(self, points) -> np.ndarray:
        arr = self.as_points(points)
        ok = np.isfinite(arr).all(axis=1)
        if self.periodic:
            ok &= ((arr >= 0.0) & (arr < 1.0)).all(axis=1)
        else:
            ok &= ((arr >= 0.0) & (arr <= 1.0)).all(axis=1)
        return ok

    def check(self, points) -> np.ndarray:
        arr = self.as_points(points)
        if not self.contains(arr).all():
            raise DomainError(f"point(s) outside {self.kind.value}")
        return arr

    def bin_index(self, points, resolution) -> np.ndarray:
        """Flat histogram bin index of each point (row-major over axes)."""
        arr = self.as_points(points)
        idx = np.zeros(arr.shape[0], dtype=np.int64)
        for axis, nb in enumerate(resolution):
            k = np.floor(arr[:, axis] * nb).astype(np.int64)
            np.clip(k, 0, nb - 1, out=k)
            idx = idx * nb + k
        return idx


CIRCLE = PhaseSpace(SpaceKind.CIRCLE)
INTERVAL = PhaseSpace(SpaceKind.INTERVAL)
SQUARE = PhaseSpace(SpaceKind.SQUARE)
TORUS = PhaseSpace(SpaceKind.TORUS)

SPACE_CODES = {
    SpaceKind.CIRCLE: 0,
    SpaceKind.INTERVAL: 1,
    SpaceKind.SQUARE: 2,
    SpaceKind.TORUS: 3,
}
