"""Dense reference constructions shared by the tests.

Everything here is built from explicit sums and matrices, independent of the
FFT-based code paths under test.
"""

import numpy as np
import pytest

from msptycho.physics import BeamParameters, SamplingGeometry


def dft_matrix_1d(n):
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def dft_matrix_2d(n):
    """Unnormalised 2-D DFT acting on row-major vectorised grids."""
    f = dft_matrix_1d(n)
    return np.kron(f, f)


def naive_dft2(g):
    n = g.shape[0]
    out = np.zeros((n, n), dtype=complex)
    for u in range(n):
        for v in range(n):
            for y in range(n):
                for x in range(n):
                    out[u, v] += g[y, x] * np.exp(-2j * np.pi * (u * y + v * x) / n)
    return out


def dense_propagator(kernel_h):
    n = kernel_h.shape[0]
    f = dft_matrix_2d(n)
    return np.conj(f.T) @ np.diag(kernel_h.reshape(-1)) @ f / n**2


def dense_chain(slices, kernels_h):
    """``O_M G_{M-1} ... G_1 O_1`` from dense factors."""
    a = np.diag(np.asarray(slices[0]).reshape(-1))
    for s, h in zip(slices[1:], kernels_h):
        a = np.diag(np.asarray(s).reshape(-1)) @ dense_propagator(h) @ a
    return a


def random_phase_slices(rng, n, m, scale=1.0):
    return [np.exp(1j * scale * rng.uniform(-np.pi, np.pi, (n, n))) for _ in range(m)]


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def beam200():
    return BeamParameters(200e3, 32e-3)


@pytest.fixture
def geom8():
    return SamplingGeometry(8, 0.03e-9)


# ---------------------------------------------------------------- acceptance summary

ACCEPTANCE_RESULTS = {}


def record_acceptance(number, passed, detail):
    ACCEPTANCE_RESULTS[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
