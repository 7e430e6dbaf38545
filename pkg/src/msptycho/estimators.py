"""scikit-learn style front ends for the reconstruction algorithms.

``fit`` takes a :class:`~msptycho.forward.Dataset4D`; probes default to the
Airy-disk probe of the dataset's beam shifted to every scan position, and
propagators are built from ``fresnel_distance`` (metres) and the beam
wavelength. Hyper-parameters follow the usual convention and are exposed via
``get_params`` / ``set_params``.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_dataset, check_probe_matrix, check_slices, check_square_matrix
from .forward import (apply_factors, assemble_scattering_matrix, chain_factors, probe_matrix,
                      propagators_for)
from .metrics import relative_measurement_error
from .numerics import fft_cols
from .physics import make_probe
from .solvers import (ReconstructionState, SolverConfig, layerwise_reconstruct, reconstruct_probe,
                      sparse_matrix_decomposition)


class _SliceReconstructor(BaseEstimator):

    def _config(self):
        return SolverConfig(outer_iters=self.n_iter, inner_gradient_steps=self.n_grad_steps,
                            stop_tol=self.stop_tol, seed=self.random_state,
                            learning_rate_safety=self.learning_rate_safety, patience=self.patience)

    def _prepare(self, data, probes, init):
        data = check_dataset(data)
        n = data.n
        if probes is None:
            probes = probe_matrix(make_probe(data.beam, data.geom), data.scan)
        probes = check_probe_matrix(probes, n, len(data.scan))
        distance = self.fresnel_distance
        if distance is None:
            distance = data.distances[0] if data.distances else 0.0
        kernels = propagators_for(data.geom, data.beam.wavelength, [distance] * (self.n_slices - 1))
        if init is None:
            init = ReconstructionState.vacuum(n, self.n_slices)
        elif not isinstance(init, ReconstructionState):
            init = ReconstructionState(check_slices(init, n, self.n_slices))
        return data.amplitude_columns(), probes, kernels, init

    def _store(self, state, kernels, n):
        self.state_ = state
        self.kernels_ = kernels
        self.slices_ = [s.reshape(n, n) for s in state.slices]
        self.history_ = list(state.history)
        self.n_iter_ = state.n_iter
        self.n_ = n

    def scattering_matrix(self):
        """Dense operator product of the fitted slices."""
        check_is_fitted(self, "slices_")
        return assemble_scattering_matrix(self.slices_, self.kernels_, allow_large=True)

    def predict(self, probes):
        """Diffraction intensities ``(S, n, n)`` for a probe matrix or stack of probes."""
        check_is_fitted(self, "slices_")
        n = self.n_
        probes = check_probe_matrix(probes, n)
        waves = apply_factors(probes, chain_factors(self.slices_, self.kernels_), n)
        return (np.abs(fft_cols(waves, n)) ** 2).T.reshape(-1, n, n)

    def score(self, data, probes=None):
        """Negative relative measurement error (higher is better)."""
        check_is_fitted(self, "slices_")
        data = check_dataset(data)
        if probes is None:
            probes = probe_matrix(make_probe(data.beam, data.geom), data.scan)
        probes = check_probe_matrix(probes, data.n, len(data.scan))
        return -relative_measurement_error(data, self.scattering_matrix(), probes)


class LayerwiseReconstructor(_SliceReconstructor):
    """Layer-wise Amplitude Flow reconstruction of ``n_slices`` phase gratings.

    Parameters
    ----------
    n_slices : int
        Number of slices to reconstruct.
    fresnel_distance : float or None
        Inter-slice distance in metres; ``None`` takes the dataset's value.
    n_iter : int
        Outer sweeps over all slices.
    n_grad_steps : int
        Amplitude Flow steps per slice and sweep.
    stop_tol : float
        Relative change of the measurement error below which ``patience``
        consecutive sweeps stop the run.
    learning_rate_safety : float
        Multiplier on the ``1 / ||Q||^2`` step.
    patience : int
    random_state : int

    Attributes
    ----------
    slices_ : list of ndarray
    history_ : list of float
        Relative measurement error before the first and after every sweep.
    n_iter_ : int
    """

    def __init__(self, n_slices=1, fresnel_distance=None, n_iter=20, n_grad_steps=10, stop_tol=1e-6,
                 learning_rate_safety=1.0, patience=5, random_state=0):
        self.n_slices = n_slices
        self.fresnel_distance = fresnel_distance
        self.n_iter = n_iter
        self.n_grad_steps = n_grad_steps
        self.stop_tol = stop_tol
        self.learning_rate_safety = learning_rate_safety
        self.patience = patience
        self.random_state = random_state

    def fit(self, data, probes=None, init=None, callback=None):
        amps, probes, kernels, init = self._prepare(data, probes, init)
        state = layerwise_reconstruct(amps, probes, kernels, init, self._config(), callback=callback)
        self._store(state, kernels, data.n)
        return self


class SparseMatrixDecomposition(_SliceReconstructor):
    """Two-stage reconstruction: estimate the scattering matrix, then factor it.

    Takes the parameters of :class:`LayerwiseReconstructor`, with
    ``n_grad_steps`` the scattering-matrix steps per outer iteration, plus
    ``n_decomp_steps`` proximal steps per slice and ``norm_estimate``
    (``"bound"`` or ``"power"``) for the proximal step size.

    Attributes
    ----------
    slices_ : list of ndarray
        Slices with the fidelity scale distributed over them.
    fidelity_scale_ : float
    scattering_matrix_ : ndarray
        Last unconstrained estimate ``A_hat``.
    history_ : list of float
    """

    def __init__(self, n_slices=1, fresnel_distance=None, n_iter=20, n_grad_steps=10, stop_tol=1e-6,
                 learning_rate_safety=1.0, patience=5, random_state=0, n_decomp_steps=1,
                 norm_estimate="bound"):
        self.n_slices = n_slices
        self.fresnel_distance = fresnel_distance
        self.n_iter = n_iter
        self.n_grad_steps = n_grad_steps
        self.stop_tol = stop_tol
        self.learning_rate_safety = learning_rate_safety
        self.patience = patience
        self.random_state = random_state
        self.n_decomp_steps = n_decomp_steps
        self.norm_estimate = norm_estimate

    def fit(self, data, probes=None, init=None, callback=None):
        amps, probes, kernels, init = self._prepare(data, probes, init)
        state = sparse_matrix_decomposition(amps, probes, kernels, init, self._config(),
                                            n_decomp_steps=self.n_decomp_steps,
                                            norm_estimate=self.norm_estimate, callback=callback)
        self._store(state, kernels, data.n)
        self.fidelity_scale_ = state.fidelity_scale
        self.scattering_matrix_ = state.a_estimate
        return self


class ProbeReconstructor(BaseEstimator):
    """Amplitude Flow estimate of the centred probe from one diffraction pattern.

    ``fit(center_intensity, a_hat, p0)``; the fitted ``probe_`` is defined up
    to a global phase.
    """

    def __init__(self, n_steps=500, stop_tol=0.0, learning_rate_safety=1.0):
        self.n_steps = n_steps
        self.stop_tol = stop_tol
        self.learning_rate_safety = learning_rate_safety

    def fit(self, center_intensity, a_hat, p0):
        center_intensity = np.asarray(center_intensity, dtype=float)
        n = center_intensity.shape[-1]
        a_hat = check_square_matrix(a_hat, center_intensity.size)
        cfg = SolverConfig(outer_iters=1, inner_gradient_steps=max(1, self.n_steps), stop_tol=self.stop_tol,
                           learning_rate_safety=self.learning_rate_safety)
        self.probe_ = reconstruct_probe(center_intensity, a_hat, p0, cfg).reshape(n, n)
        self.a_hat_ = a_hat
        return self

    def predict(self, probe=None):
        check_is_fitted(self, "probe_")
        p = self.probe_ if probe is None else np.asarray(probe)
        n = p.shape[-1]
        return np.abs(np.fft.fft2((self.a_hat_ @ p.reshape(-1)).reshape(n, n))) ** 2
