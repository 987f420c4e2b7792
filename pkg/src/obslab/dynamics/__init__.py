from obslab.dynamics.systems import (
    BowenSaddles,
    GradientTimeOne,
    LinearExpanding,
    PerturbedExpanding,
    ProductHalving,
    QuadraticFeigenbaum,
    SystemSpec,
    build_bowen,
    feigenbaum_reference,
)
from obslab.dynamics.orbit import Orbit, OrbitStream, iterate, log_derivative


def gradient_time_one(substeps: int = 1000) -> GradientTimeOne:
    return GradientTimeOne(substeps=substeps)


__all__ = [
    "BowenSaddles", "GradientTimeOne", "LinearExpanding", "PerturbedExpanding",
    "ProductHalving", "QuadraticFeigenbaum", "SystemSpec", "build_bowen",
    "feigenbaum_reference", "gradient_time_one", "Orbit", "OrbitStream",
    "iterate", "log_derivative",
]
