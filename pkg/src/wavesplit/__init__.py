"""Partially explicit time stepping for wave propagation in high-contrast
media, on a constraint-energy-minimizing two-component coarse space."""

from .grid import TwoLevelMesh, LocalRegion, build_mesh, oversample
from .media import CoefficientField, SourceConfig, load_field, synth_channels
from .spaces import (AuxSpace, Projection, SpacePair, build_aux_space,
                     build_cem_basis, build_v2_choice1, build_v2_choice2,
                     build_lumped_pair, make_pair, orthogonalize_pair)
from .integrators import (SchemeConfig, SplitBlocks, EnergyTrace, run,
                          splitting_energy, weighted_energy, AppendixEnergy)
from .stability import StabilityReport, certify, certify_pair, compute_alpha, \
    compute_gammas
from .diagnostics import ErrorSeries, compare
from .config import ExperimentConfig, run_experiment, sweep

__all__ = [
    "TwoLevelMesh", "LocalRegion", "build_mesh", "oversample",
    "CoefficientField", "SourceConfig", "load_field", "synth_channels",
    "AuxSpace", "Projection", "SpacePair", "build_aux_space",
    "build_cem_basis", "build_v2_choice1", "build_v2_choice2",
    "build_lumped_pair", "make_pair", "orthogonalize_pair",
    "SchemeConfig", "SplitBlocks", "EnergyTrace", "run",
    "splitting_energy", "weighted_energy", "AppendixEnergy",
    "StabilityReport", "certify", "certify_pair", "compute_alpha",
    "compute_gammas", "ErrorSeries", "compare",
    "ExperimentConfig", "run_experiment", "sweep",
]
__version__ = "0.1.0"
