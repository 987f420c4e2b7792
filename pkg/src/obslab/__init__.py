"""obslab: statistical attractors, observable measures and equilibrium residuals."""

__version__ = "0.1.0"
