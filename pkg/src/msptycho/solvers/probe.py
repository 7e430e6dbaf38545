"""Probe recovery from the centre diffraction pattern given an estimated ``A``."""

import numpy as np

from ..errors import DimensionMismatch
from ..numerics import fft_cols, side_length
from .amplitude_flow import AmplitudeFlowProblem, af_minimize


def probe_problem(center_intensity, a_hat):
    a_hat = np.asarray(a_hat, dtype=complex)
    amps = np.sqrt(np.asarray(center_intensity, dtype=float).reshape(-1))
    if amps.size != a_hat.shape[0]:
        raise DimensionMismatch(f"pattern of {amps.size} pixels vs A {a_hat.shape}")
    n = side_length(a_hat.shape[0])

    def apply_q(p):
        return fft_cols((a_hat @ p)[:, None], n)[:, 0]

    def apply_q_adjoint(y):
        return a_hat.conj().T @ (np.fft.ifft2(y.reshape(n, n)).reshape(-1) * (n * n))

    return AmplitudeFlowProblem(apply_q, apply_q_adjoint, amps, a_hat.shape[1])


def reconstruct_probe(center_intensity, a_hat, p0, cfg, n_steps=None):
    """Amplitude Flow on ``Q = F A_hat`` starting from ``p0``; returns the probe vector.

    The result is defined up to a global phase factor.
    """
    prob = probe_problem(center_intensity, a_hat)
    return af_minimize(prob, np.asarray(p0, dtype=complex).reshape(-1), cfg, n_steps=n_steps).z
