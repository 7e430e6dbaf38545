"""Layer-wise alternating minimisation: one slice at a time by Amplitude Flow."""

import logging

import numpy as np

from ..errors import DimensionMismatch, IndexOutOfRange
from ..forward import ChainOperator, _kernel_array, apply_factors, chain_factors
from ..metrics import measurement_error_from_amplitudes
from ..numerics import fft_cols, fft_cols_adjoint
from .amplitude_flow import AmplitudeFlowProblem, af_minimize

logger = logging.getLogger(__name__)


def prefix_suffix(slices, kernels, ell):
    """Operators ``R`` and ``S`` with ``R diag(o_ell) S = A_M`` (``ell`` is 1-based).

    ``R = O_M G_{M-1} ... O_{ell+1} G_ell`` and ``S = G_{ell-1} O_{ell-1} ... G_1 O_1``.
    """
    m = len(slices)
    if not 1 <= ell <= m:
        raise IndexOutOfRange(f"slice index {ell} outside 1..{m}")
    n = int(round(np.sqrt(np.asarray(slices[0]).size)))
    diags = [np.asarray(o).reshape(-1) for o in slices]
    s_factors = []
    for k in range(ell - 1):
        s_factors.append(("o", diags[k]))
        s_factors.append(("g", _kernel_array(kernels[k])))
    r_factors = []
    for k in range(ell, m):
        r_factors.append(("g", _kernel_array(kernels[k - 1])))
        r_factors.append(("o", diags[k]))
    return ChainOperator(r_factors, n), ChainOperator(s_factors, n)


def single_layer_problem(r_op, illum, amplitudes):
    """Stacked problem for one slice: rows ``F R diag(S p^s)``, one block per position.

    ``illum`` holds ``S p^s`` as columns ``(n*n, S)``; ``amplitudes`` the
    matching ``sqrt(i^s)`` columns.
    """
    n = r_op.n
    n2, n_pos = illum.shape

    def apply_q(o):
        return fft_cols(r_op.apply(illum * o[:, None]), n).T.reshape(-1)

    def apply_q_adjoint(y):
        back = r_op.apply_adjoint(fft_cols_adjoint(y.reshape(n_pos, n2).T, n))
        return np.sum(illum.conj() * back, axis=1)

    return AmplitudeFlowProblem(apply_q, apply_q_adjoint, amplitudes.T.reshape(-1), n2)


def _measurement_error(slices, kernels, probes, amplitudes):
    n = int(round(np.sqrt(probes.shape[0])))
    exit_waves = apply_factors(probes, chain_factors(slices, kernels), n)
    return measurement_error_from_amplitudes(amplitudes, np.abs(fft_cols(exit_waves, n)))


def _stalled(history, stop_tol, patience):
    if stop_tol <= 0 or len(history) <= patience:
        return False
    recent = history[-(patience + 1):]
    floor = 4 * np.finfo(float).eps  # errors at rounding level count as converged
    for prev, cur in zip(recent[:-1], recent[1:]):
        if abs(prev - cur) > stop_tol * abs(prev) and max(prev, cur) > floor:
            return False
    return True


def layerwise_reconstruct(amplitudes, probes, kernels, init, cfg, callback=None):
    """Reconstruct slices one at a time by Amplitude Flow, sweeping over the stack.

    Parameters
    ----------
    amplitudes : ndarray, shape (n*n, S)
        Measured ``sqrt(I)`` columns.
    probes : ndarray, shape (n*n, S)
        Probe matrix (shifted probes as columns, same order).
    kernels : list
        ``M - 1`` Fresnel kernels.
    init : ReconstructionState
        Starting slices; not modified.
    cfg : SolverConfig
    callback : callable, optional
        Called as ``callback(iteration, slices, error)`` for the initial
        state (iteration 0) and after every sweep.

    Returns
    -------
    ReconstructionState
        Updated slices with ``history`` holding the relative measurement error
        before the first and after every outer iteration.
    """
    if amplitudes.shape != probes.shape:
        raise DimensionMismatch(f"amplitudes {amplitudes.shape} vs probes {probes.shape}")
    state = init.copy()
    if state.slices[0].size != probes.shape[0]:
        raise DimensionMismatch("slice size does not match probe length")
    if len(kernels) < len(state.slices) - 1:
        raise DimensionMismatch(f"{len(state.slices)} slices need {len(state.slices) - 1} kernels")
    state.history = [_measurement_error(state.slices, kernels, probes, amplitudes)]
    if callback is not None:
        callback(0, state.slices, state.history[0])
    for t in range(cfg.outer_iters):
        for ell in range(1, len(state.slices) + 1):
            r_op, s_op = prefix_suffix(state.slices, kernels, ell)
            prob = single_layer_problem(r_op, s_op.apply(probes), amplitudes)
            res = af_minimize(prob, state.slices[ell - 1], cfg, n_steps=cfg.inner_gradient_steps)
            state.slices[ell - 1] = res.z
        state.history.append(_measurement_error(state.slices, kernels, probes, amplitudes))
        state.n_iter = t + 1
        logger.debug("layerwise iteration %d: error %.3e", t + 1, state.history[-1])
        if callback is not None:
            callback(t + 1, state.slices, state.history[-1])
        if _stalled(state.history, cfg.stop_tol, cfg.patience):
            break
    return state
