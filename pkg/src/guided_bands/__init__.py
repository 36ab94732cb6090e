"""Spectra of discrete Schrödinger operators with guided potentials on periodic graphs."""

__version__ = "0.1.0"

from .graph import (CylinderModel, GuidedPotential, PeriodicGraphSpec, betti_and_stats,  # noqa: E402
                    build_cylinder, connectivity_check, load_and_validate, load_file)
from .numerics import TorusGrid, eigh, minimize_on_torus, union_measure  # noqa: E402
from .spectra import (ConvergencePolicy, compute_guided_bands, essential_floor,  # noqa: E402
                      gap_states, guided_eigenvalues, h0_spectrum, mu_spectrum)
from .theorems import (asymptotics_probe, bandwidth_sum_check, check_bridge_bound,  # noqa: E402
                       check_envelope, delta_profile)

__all__ = [
    "CylinderModel", "GuidedPotential", "PeriodicGraphSpec", "betti_and_stats", "build_cylinder",
    "connectivity_check", "load_and_validate", "load_file", "TorusGrid", "eigh", "minimize_on_torus",
    "union_measure", "ConvergencePolicy", "compute_guided_bands", "essential_floor", "gap_states",
    "guided_eigenvalues", "h0_spectrum", "mu_spectrum", "asymptotics_probe", "bandwidth_sum_check",
    "check_bridge_bound", "check_envelope", "delta_profile",
]
