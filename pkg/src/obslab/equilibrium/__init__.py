"""Equilibrium states of expanding circle maps: entropy, Lyapunov integrals, PLY residuals."""

from obslab.equilibrium.conjugacy import ConjugacyCode, build_conjugacy
from obslab.equilibrium.entropy import BlockCounts, EntropyEstimate, entropy_from_counts
from obslab.equilibrium.analysis import (
    BirkhoffOrbit,
    EquilibriumReport,
    ExpandingAnalysis,
    LargeDeviation,
    LyapunovIntegral,
    combine,
    entropy_estimate,
    large_deviation_probe,
    lyapunov_integral,
    observable_subset_of_equilibrium,
    ply_residual,
    pressure,
)

__all__ = [
    "ConjugacyCode", "build_conjugacy", "BlockCounts", "EntropyEstimate",
    "entropy_from_counts", "BirkhoffOrbit", "EquilibriumReport", "ExpandingAnalysis",
    "LargeDeviation", "LyapunovIntegral", "combine", "entropy_estimate",
    "large_deviation_probe", "lyapunov_integral", "observable_subset_of_equilibrium",
    "ply_residual", "pressure",
]
