"""FFT conventions, vectorisation helpers and power iteration.

Grids are plain ``(n, n)`` complex arrays indexed ``[y, x]``. ``vec`` is the
row-major flattening, so a batch of vectorised fields is an ``(n*n, k)``
array whose columns reshape to ``(n, n)`` grids without transposes.

The forward DFT is unnormalised and the inverse carries ``1/n**2``; with this
choice the operator norm of the 2-D Fourier matrix is exactly ``n``.
"""

import logging
import warnings

import numpy as np

from .errors import DimensionMismatch, NonConvergenceWarning

logger = logging.getLogger(__name__)

#: seed of the power-iteration start vector
POWER_ITERATION_SEED = 20240611


def dft2_forward(g):
    return np.fft.fft2(g, axes=(-2, -1))


def dft2_inverse(g):
    return np.fft.ifft2(g, axes=(-2, -1))


def vec(grid):
    return np.asarray(grid).reshape(-1)


def unvec(v, n):
    return np.asarray(v).reshape(n, n)


def side_length(dim):
    """Return ``n`` for a vector length ``n*n``."""
    n = int(round(np.sqrt(dim)))
    if n * n != dim:
        raise DimensionMismatch(f"length {dim} is not a square number")
    return n


def fft_cols(x, n):
    """Apply the 2-D Fourier matrix to every column of ``x`` (shape ``(n*n, k)``)."""
    k = x.shape[1]
    return np.fft.fft2(x.reshape(n, n, k), axes=(0, 1)).reshape(n * n, k)


def ifft_cols(x, n):
    k = x.shape[1]
    return np.fft.ifft2(x.reshape(n, n, k), axes=(0, 1)).reshape(n * n, k)


def fft_cols_adjoint(x, n):
    """Conjugate transpose of the unnormalised Fourier matrix, i.e. ``n**2 * ifft``."""
    return ifft_cols(x, n) * (n * n)


def hadamard_as_diag(a, b):
    """Return ``vec(a * b)``, the vector ``diag(vec(a)) @ vec(b)``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"grid shapes differ: {a.shape} vs {b.shape}")
    return vec(a) * vec(b)


def spectral_norm(apply, apply_adjoint, dim, iters=1000, tol=1e-10, seed=POWER_ITERATION_SEED):
    """Largest singular value of a linear operator by power iteration on ``A^H A``.

    Parameters
    ----------
    apply, apply_adjoint : callable
        Consistent adjoint pair acting on 1-D complex arrays; ``apply`` takes
        vectors of length ``dim``.
    dim : int
        Length of the operator's input vectors.
    iters : int
        Iteration budget.
    tol : float
        Relative change of the estimate at which iteration stops.
    seed : int
        Seed of the pseudo-random start vector.

    Returns
    -------
    float
        The estimate. If the budget runs out before ``tol`` is met, the best
        estimate is returned and a :class:`NonConvergenceWarning` is issued.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    x /= np.linalg.norm(x)
    sigma = 0.0
    for it in range(iters):
        y = apply(x)
        new_sigma = float(np.linalg.norm(y))
        if new_sigma == 0.0:
            return 0.0
        x = apply_adjoint(y)
        nx = np.linalg.norm(x)
        if nx == 0.0:
            return new_sigma
        x = x / nx
        if it > 0 and abs(new_sigma - sigma) <= tol * new_sigma:
            sigma = new_sigma
            break
        sigma = new_sigma
    else:
        warnings.warn(
            f"power iteration did not reach tol={tol} in {iters} iterations "
            f"(estimate {sigma:.6g})",
            NonConvergenceWarning,
            stacklevel=2,
        )
        return sigma
    # one more application with the converged vector is always at least as good
    return max(sigma, float(np.linalg.norm(apply(x))))


def matrix_spectral_norm(a, **kwargs):
    """:func:`spectral_norm` of a dense matrix."""
    a = np.asarray(a)
    return spectral_norm(lambda v: a @ v, lambda v: a.conj().T @ v, a.shape[1], **kwargs)
