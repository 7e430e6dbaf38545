"""Multislice electron ptychography: forward simulation and layer-wise /
sparse-decomposition reconstruction of per-slice transmission functions."""

from .estimators import LayerwiseReconstructor, ProbeReconstructor, SparseMatrixDecomposition
from .forward import (Dataset4D, ScanPlan, assemble_scattering_matrix, multislice_exit_wave,
                      simulate_dataset)
from .physics import BeamParameters, SamplingGeometry, electron_wavelength, make_probe
from .specimen import SliceStack, builtin_crystal, random_phantom, render_slices

__version__ = "0.1.0"

__all__ = [
    "LayerwiseReconstructor", "ProbeReconstructor", "SparseMatrixDecomposition", "Dataset4D",
    "ScanPlan", "assemble_scattering_matrix", "multislice_exit_wave", "simulate_dataset",
    "BeamParameters", "SamplingGeometry", "electron_wavelength", "make_probe", "SliceStack",
    "builtin_crystal", "random_phantom", "render_slices",
]
