"""Sparse matrix decomposition: estimate ``A`` from intensities, then factor it
into normalised diagonal slices interleaved with the fixed propagators."""

import logging
import warnings

import numpy as np

from ..errors import DegenerateProjectionWarning, DimensionMismatch, ZeroDenominator
from ..forward import apply_factors, chain_factors
from ..metrics import measurement_error_from_amplitudes
from ..numerics import fft_cols, fft_cols_adjoint, matrix_spectral_norm, side_length, spectral_norm
from .amplitude_flow import phase_of
from .layerwise import _stalled, prefix_suffix

logger = logging.getLogger(__name__)

C_FLOOR = 1e-12


def matrix_objective(a, probes, amplitudes):
    """``1/2 ||sqrt(I) - |F A P|||_F^2``."""
    n = side_length(a.shape[0])
    return 0.5 * float(np.sum((amplitudes - np.abs(fft_cols(a @ probes, n))) ** 2))


def scattering_gradient(a, probes, amplitudes):
    """``F^H ((|FAP| - sqrt(I)) * FAP/|FAP|) P^H``."""
    n = side_length(a.shape[0])
    w = fft_cols(a @ probes, n)
    return fft_cols_adjoint(w - phase_of(w) * amplitudes, n) @ probes.conj().T


def estimate_scattering(amplitudes, probes, a0, cfg, n_steps=None, probe_norm=None):
    """Gradient descent on the dense scattering matrix with step ``1 / (n^2 ||P||^2)``.

    Returns ``(a_hat, objectives)`` where ``objectives`` starts with the value at ``a0``.
    """
    a0 = np.asarray(a0, dtype=complex)
    if not np.all(np.isfinite(a0)):
        raise ValueError("initial scattering matrix is not finite")
    if a0.shape[1] != probes.shape[0] or amplitudes.shape != (a0.shape[0], probes.shape[1]):
        raise DimensionMismatch(f"A {a0.shape}, probes {probes.shape}, data {amplitudes.shape}")
    n = side_length(a0.shape[0])
    n_steps = cfg.inner_gradient_steps if n_steps is None else n_steps
    if probe_norm is None:
        probe_norm = matrix_spectral_norm(probes)
    mu = cfg.learning_rate_safety / (n * n * probe_norm**2)
    a = a0.copy()
    objectives = [matrix_objective(a, probes, amplitudes)]
    for _ in range(n_steps):
        a = a - mu * scattering_gradient(a, probes, amplitudes)
        objectives.append(matrix_objective(a, probes, amplitudes))
    return a, objectives


def project_diag_normalized(x):
    """Keep the diagonal of ``x`` (a square matrix or a diagonal vector), scaled to unit norm.

    An all-zero diagonal maps to zeros with a :class:`DegenerateProjectionWarning`.
    """
    x = np.asarray(x)
    if x.ndim == 2:
        if x.shape[0] != x.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got {x.shape}")
        d = np.diag(x).astype(complex)
    else:
        d = x.astype(complex).reshape(-1)
    norm = np.linalg.norm(d)
    if norm == 0:
        warnings.warn("projection of a matrix with zero diagonal", DegenerateProjectionWarning, stacklevel=2)
        return np.zeros_like(d)
    return d / norm


def decomposition_objective(a_hat, slices, kernels, scale):
    """``1/2 ||A_hat - scale * O_M G ... G O_1||_F^2``."""
    n = side_length(a_hat.shape[0])
    a_tilde = apply_factors(np.eye(n * n, dtype=complex), chain_factors(slices, kernels), n)
    return 0.5 * float(np.linalg.norm(a_hat - scale * a_tilde) ** 2)


def prox_gradient(a_hat, slices, kernels, ell, scale):
    """Diagonal of ``scale * R^H (scale * R O S - A_hat) S^H`` for slice ``ell`` (1-based).

    This is ``dF/d(Re o) + i dF/d(Im o)`` of ``F = 1/2 ||A_hat - scale R diag(o) S||_F^2``.
    Only the diagonal is formed; ``R^H D`` is applied column-wise and contracted
    against ``conj(S)`` row by row.
    """
    r_op, s_op = prefix_suffix(slices, kernels, ell)
    n2 = a_hat.shape[0]
    s_mat = s_op.apply(np.eye(n2, dtype=complex))
    o = np.asarray(slices[ell - 1]).reshape(-1)
    resid = scale * r_op.apply(o[:, None] * s_mat) - a_hat
    return scale * np.sum(r_op.apply_adjoint(resid) * s_mat.conj(), axis=1), r_op, s_op


def sparse_decompose(a_hat, kernels, init, cfg=None, n_steps=1, norm_estimate="bound"):
    """One sweep over the slices of projected (proximal) gradient steps.

    The step is ``1/c`` with ``c = (scale ||R|| ||S||)^2``. With
    ``norm_estimate="bound"`` the operator norms are bounded by the product of
    the factors' largest diagonal moduli (exact for pure-phase slices);
    ``"power"`` uses power iteration instead.

    Returns ``(state, objectives)``; ``objectives`` holds the decomposition
    objective before the sweep and after every slice update.
    """
    a_hat = np.asarray(a_hat, dtype=complex)
    state = init.copy()
    scale = state.fidelity_scale
    n2 = a_hat.shape[0]
    if a_hat.shape != (n2, n2) or state.slices[0].size != n2:
        raise DimensionMismatch(f"A_hat {a_hat.shape} vs slice length {state.slices[0].size}")
    objectives = [decomposition_objective(a_hat, state.slices, kernels, scale)]
    for ell in range(1, len(state.slices) + 1):
        for _ in range(n_steps):
            grad, r_op, s_op = prox_gradient(a_hat, state.slices, kernels, ell, scale)
            if norm_estimate == "power":
                r_norm = spectral_norm(r_op.apply, r_op.apply_adjoint, n2)
                s_norm = spectral_norm(s_op.apply, s_op.apply_adjoint, n2)
            else:
                r_norm, s_norm = r_op.norm_bound(), s_op.norm_bound()
            c = max((scale * r_norm * s_norm) ** 2, C_FLOOR)
            state.slices[ell - 1] = project_diag_normalized(state.slices[ell - 1] - grad / c)
        objectives.append(decomposition_objective(a_hat, state.slices, kernels, scale))
    return state, objectives


def update_fidelity_scale(a_hat, a_tilde):
    """Real least-squares scale ``Re Tr(A_hat^H A_tilde) / Tr(A_tilde^H A_tilde)``."""
    a_hat = np.asarray(a_hat)
    a_tilde = np.asarray(a_tilde)
    if a_hat.shape != a_tilde.shape:
        raise DimensionMismatch(f"{a_hat.shape} vs {a_tilde.shape}")
    denom = float(np.vdot(a_tilde, a_tilde).real)
    if denom == 0:
        raise ZeroDenominator("A_tilde is identically zero")
    num = np.vdot(a_hat, a_tilde)
    logger.debug("fidelity scale imaginary residue %.3e", abs(num.imag) / denom)
    return float(num.real / denom)


def distribute_scale(slices, scale):
    """Spread ``scale`` over ``M`` slices as ``scale**(1/M)``; a negative sign goes to slice 1."""
    m = len(slices)
    root = abs(scale) ** (1.0 / m)
    out = [root * np.asarray(s) for s in slices]
    if scale < 0:
        out[0] = -out[0]
    return out


def sparse_matrix_decomposition(amplitudes, probes, kernels, init, cfg, n_decomp_steps=1,
                                norm_estimate="bound", callback=None):
    """Alternate scattering-matrix estimation and sparse decomposition.

    ``init.slices`` are the (unnormalised) starting slices ``O_m^0``; the
    starting matrix is their operator product. The slices are normalised and
    the fidelity scale set to the product of their norms so that the
    normalised factorisation reproduces the starting matrix.

    Returns a state whose slices carry the distributed scale, with
    ``fidelity_scale`` the final scale and ``a_estimate`` the last ``A_hat``.
    ``callback(iteration, slices, error)`` receives scale-distributed slices.
    """
    n2 = probes.shape[0]
    n = side_length(n2)
    eye = np.eye(n2, dtype=complex)
    norms = [np.linalg.norm(s) for s in init.slices]
    state = init.copy()
    state.slices = [project_diag_normalized(s) for s in init.slices]
    state.fidelity_scale = float(np.prod(norms))
    a = state.fidelity_scale * apply_factors(eye, chain_factors(state.slices, kernels), n)
    probe_norm = matrix_spectral_norm(probes)

    def error(mat):
        return measurement_error_from_amplitudes(amplitudes, np.abs(fft_cols(mat @ probes, n)))

    state.history = [error(a)]
    state.a_estimate = a
    if callback is not None:
        callback(0, distribute_scale(state.slices, state.fidelity_scale), state.history[0])
    for t in range(cfg.outer_iters):
        a_hat, _ = estimate_scattering(amplitudes, probes, a, cfg, probe_norm=probe_norm)
        state, _ = sparse_decompose(a_hat, kernels, state, cfg, n_steps=n_decomp_steps,
                                    norm_estimate=norm_estimate)
        a_tilde = apply_factors(eye, chain_factors(state.slices, kernels), n)
        state.fidelity_scale = update_fidelity_scale(a_hat, a_tilde)
        a = state.fidelity_scale * a_tilde
        state.a_estimate = a_hat
        state.history.append(error(a))
        state.n_iter = t + 1
        logger.debug("sparse iteration %d: error %.3e, scale %.4g", t + 1, state.history[-1],
                     state.fidelity_scale)
        if callback is not None:
            callback(t + 1, distribute_scale(state.slices, state.fidelity_scale), state.history[-1])
        if _stalled(state.history, cfg.stop_tol, cfg.patience):
            break
    state.slices = distribute_scale(state.slices, state.fidelity_scale)
    return state
