from obslab.measure_core.space import CIRCLE, INTERVAL, SQUARE, TORUS, PhaseSpace, SpaceKind
from obslab.measure_core.basis import TestFunctionBasis, default_basis
from obslab.measure_core.measure import (
    ProbMeasure,
    Support,
    convex_combine,
    pushforward,
    support_estimate,
    weak_star_dist,
)
from obslab.measure_core.io import measure_io, read_measure, write_measure

__all__ = [
    "CIRCLE", "INTERVAL", "SQUARE", "TORUS", "PhaseSpace", "SpaceKind",
    "TestFunctionBasis", "default_basis", "ProbMeasure", "Support",
    "convex_combine", "pushforward", "support_estimate", "weak_star_dist",
    "measure_io", "read_measure", "write_measure",
]
