"""Reconstruction and measurement error metrics."""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateProjectionWarning, DimensionMismatch, ZeroData, ZeroNormSlice
from .numerics import fft_cols, side_length


@dataclass
class ErrorReport:
    iteration: int
    relative_measurement_error: float
    relative_reconstruction_error: float = float("nan")
    aligned_reconstruction_error: float = float("nan")
    per_slice_errors: list = field(default_factory=list)

    def row(self):
        return [self.iteration, self.relative_measurement_error, self.relative_reconstruction_error,
                self.aligned_reconstruction_error, *self.per_slice_errors]


def _diag_list(slices):
    return [np.asarray(s, dtype=complex).reshape(-1) for s in slices]


def per_slice_errors(truth, est):
    truth, est = _diag_list(truth), _diag_list(est)
    if len(truth) != len(est):
        raise DimensionMismatch(f"{len(truth)} true slices vs {len(est)} estimated")
    out = []
    for m, (o, o_hat) in enumerate(zip(truth, est)):
        if o.shape != o_hat.shape:
            raise DimensionMismatch(f"slice {m}: {o.shape} vs {o_hat.shape}")
        norm = np.linalg.norm(o)
        if norm == 0:
            raise ZeroNormSlice(f"ground-truth slice {m} has zero norm")
        out.append(float(np.linalg.norm(o - o_hat) / norm))
    return out


def relative_reconstruction_error(truth, est):
    """Mean over slices of ``||O_m - O_hat_m||_F / ||O_m||_F``."""
    return float(np.mean(per_slice_errors(truth, est)))


def align_global(est, truth):
    """Scale each estimated slice by the complex factor that best matches the truth."""
    est, truth = _diag_list(est), _diag_list(truth)
    if len(est) != len(truth):
        raise DimensionMismatch(f"{len(est)} estimated slices vs {len(truth)} true")
    aligned = []
    for m, (o_hat, o) in enumerate(zip(est, truth)):
        denom = np.vdot(o_hat, o_hat).real
        if denom == 0:
            warnings.warn(f"slice {m} estimate is zero; alignment factor set to 0",
                          DegenerateProjectionWarning, stacklevel=2)
            aligned.append(np.zeros_like(o_hat))
            continue
        aligned.append(o_hat * (np.vdot(o_hat, o) / denom))
    return aligned


def aligned_reconstruction_error(truth, est):
    return relative_reconstruction_error(truth, align_global(est, truth))


def measurement_error_from_amplitudes(sqrt_i, predicted):
    denom = np.linalg.norm(sqrt_i)
    if denom == 0:
        raise ZeroData("measured intensities are identically zero")
    return float(np.linalg.norm(sqrt_i - predicted) / denom)


def relative_measurement_error(data, a_hat, probes):
    """``||sqrt(I) - |F A_hat P|||_F / ||sqrt(I)||_F``.

    ``data`` is a :class:`~msptycho.forward.Dataset4D` or an ``(n*n, S)``
    array of intensities; ``probes`` is the ``(n*n, S)`` probe matrix.
    """
    intens = data.intensities.reshape(len(data.scan), -1).T if hasattr(data, "intensities") else np.asarray(data)
    a_hat = np.asarray(a_hat)
    probes = np.asarray(probes)
    if a_hat.shape[1] != probes.shape[0] or intens.shape != (a_hat.shape[0], probes.shape[1]):
        raise DimensionMismatch(f"data {intens.shape}, A {a_hat.shape}, probes {probes.shape}")
    n = side_length(a_hat.shape[0])
    return measurement_error_from_amplitudes(np.sqrt(intens), np.abs(fft_cols(a_hat @ probes, n)))


def write_history_csv(path, reports):
    n_slices = max((len(r.per_slice_errors) for r in reports), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "relative_measurement_error", "relative_reconstruction_error_raw",
                    "relative_reconstruction_error_aligned"] + [f"slice_{m + 1}" for m in range(n_slices)])
        for r in reports:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r.row()])
