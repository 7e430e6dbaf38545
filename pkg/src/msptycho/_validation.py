"""Input checks used by the estimators."""

import numpy as np

from .errors import DimensionMismatch
from .forward import Dataset4D


def check_dataset(data):
    if not isinstance(data, Dataset4D):
        raise TypeError(f"expected a Dataset4D, got {type(data).__name__}")
    if not np.all(np.isfinite(data.intensities)):
        raise ValueError("dataset contains non-finite intensities")
    return data


def check_probe_matrix(probes, n, n_positions=None):
    probes = np.asarray(probes, dtype=complex)
    if probes.ndim == 3:
        probes = probes.reshape(probes.shape[0], -1).T
    if probes.ndim != 2 or probes.shape[0] != n * n:
        raise DimensionMismatch(f"probe matrix must be (n*n, S) with n={n}, got {probes.shape}")
    if n_positions is not None and probes.shape[1] != n_positions:
        raise DimensionMismatch(f"{probes.shape[1]} probes for {n_positions} scan positions")
    return probes


def check_square_matrix(a, size=None):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if size is not None and a.shape[0] != size:
        raise DimensionMismatch(f"expected a {size}x{size} matrix, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite entries")
    return a


def check_slices(slices, n, m=None):
    out = [np.asarray(s, dtype=complex).reshape(-1) for s in slices]
    if m is not None and len(out) != m:
        raise DimensionMismatch(f"expected {m} slices, got {len(out)}")
    for k, s in enumerate(out):
        if s.size != n * n:
            raise DimensionMismatch(f"slice {k} has {s.size} entries, expected {n * n}")
    return out
