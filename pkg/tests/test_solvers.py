import numpy as np
import pytest

from conftest import crandn, dense_chain, random_phase_slices
from msptycho.errors import DegenerateProjectionWarning, DimensionMismatch, IndexOutOfRange, ZeroDenominator
from msptycho.forward import (ScanPlan, assemble_scattering_matrix, multislice_exit_wave, probe_matrix,
                              propagators_for)
from msptycho.numerics import vec
from msptycho.physics import SamplingGeometry, propagate
from msptycho.solvers import (AmplitudeFlowProblem, ReconstructionState, SolverConfig, af_gradient,
                              af_minimize, decomposition_objective, distribute_scale, estimate_scattering,
                              layerwise_reconstruct, matrix_objective, prefix_suffix, project_diag_normalized,
                              prox_gradient, reconstruct_probe, single_layer_problem, sparse_decompose,
                              sparse_matrix_decomposition, update_fidelity_scale)
from msptycho.solvers.probe import probe_problem


def dense_problem(q, amps):
    return AmplitudeFlowProblem(lambda z: q @ z, lambda y: q.conj().T @ y, amps, q.shape[1])


def fd_gradient(f, z, h=1e-6):
    """Central differences of a real function over real and imaginary parts: df/dRe + i df/dIm."""
    g = np.zeros(z.size, dtype=complex)
    for k in range(z.size):
        e = np.zeros(z.size, dtype=complex)
        e[k] = h
        g[k] = (f(z + e) - f(z - e)) / (2 * h) + 1j * (f(z + 1j * e) - f(z - 1j * e)) / (2 * h)
    return g


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def kernels_for(n, m, distance=2e-9, px=0.05e-9):
    return propagators_for(SamplingGeometry(n, px), 2.5e-12, [distance] * (m - 1))


# ---------------------------------------------------------------- Amplitude Flow

def test_gradient_vanishes_on_consistent_data(rng):
    q = crandn(rng, 6, 4)
    z = crandn(rng, 4)
    assert np.linalg.norm(af_gradient(dense_problem(q, np.abs(q @ z)), z)) < 1e-12
    assert np.linalg.norm(af_gradient(dense_problem(np.eye(4), np.abs(z)), z)) < 1e-14


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    q = crandn(rng, 6, 4)
    prob = dense_problem(q, np.abs(crandn(rng, 6)))
    z = crandn(rng, 4)
    assert rel(af_gradient(prob, z), fd_gradient(prob.objective, z)) < 1e-5


def test_gradient_zero_ratio_convention():
    prob = dense_problem(np.eye(2), np.array([1.0, 2.0]))
    np.testing.assert_array_equal(af_gradient(prob, np.zeros(2, dtype=complex)), np.zeros(2))


def test_problem_rejects_negative_targets():
    with pytest.raises(ValueError):
        dense_problem(np.eye(2), np.array([-1.0, 1.0]))


def test_minimiser_is_fixed_point(rng):
    q = crandn(rng, 8, 3)
    z = crandn(rng, 3)
    res = af_minimize(dense_problem(q, np.abs(q @ z)), z, SolverConfig(inner_gradient_steps=10, stop_tol=0))
    np.testing.assert_allclose(res.z, z, atol=1e-13)


def test_scalar_problem_converges():
    prob = dense_problem(np.array([[2.0]]), np.array([4.0]))
    res = af_minimize(prob, np.array([1.0 + 0j]), SolverConfig(inner_gradient_steps=200, stop_tol=0))
    assert abs(abs(res.z[0]) - 2) < 1e-6
    assert res.objective < 1e-12
    assert res.step_size == pytest.approx(0.25)


def test_objective_is_monotone(rng):
    for _ in range(5):
        prob = dense_problem(crandn(rng, 16, 8), np.abs(crandn(rng, 16)))
        res = af_minimize(prob, crandn(rng, 8), SolverConfig(inner_gradient_steps=100, stop_tol=0))
        assert np.all(np.diff(res.history) <= 1e-9)


def test_stop_tol_ends_early():
    prob = dense_problem(np.array([[2.0]]), np.array([4.0]))
    res = af_minimize(prob, np.array([1.0 + 0j]), SolverConfig(inner_gradient_steps=500, stop_tol=1e-3))
    assert res.n_steps < 500


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(inner_gradient_steps=0)
    with pytest.raises(ValueError):
        SolverConfig(stop_tol=-1)
    with pytest.raises(ValueError):
        SolverConfig(learning_rate_safety=1.5)


# ---------------------------------------------------------------- layer-wise

def test_prefix_suffix_single_slice(rng):
    r, s = prefix_suffix([crandn(rng, 16)], [], 1)
    v = crandn(rng, 16)
    np.testing.assert_array_equal(r(v), v)
    np.testing.assert_array_equal(s(v), v)


def test_prefix_suffix_reassembles_chain(rng):
    slices = [crandn(rng, 4, 4) for _ in range(3)]
    kernels = kernels_for(4, 3)
    a = dense_chain(slices, [k.h for k in kernels])
    r, s = prefix_suffix(slices, kernels, 2)
    v = crandn(rng, 16, 4)
    np.testing.assert_allclose(r(vec(slices[1])[:, None] * s(v)), a @ v, atol=1e-11)


def test_prefix_suffix_last_slice(rng):
    slices = [crandn(rng, 4, 4) for _ in range(3)]
    kernels = kernels_for(4, 3)
    r, s = prefix_suffix(slices, kernels, 3)
    p = crandn(rng, 4, 4)
    np.testing.assert_array_equal(r(vec(p)), vec(p))
    expected = propagate(multislice_exit_wave(p, slices[:2], kernels), kernels[1])
    np.testing.assert_allclose(s(vec(p)), vec(expected), atol=1e-12)


def test_prefix_suffix_index_checked(rng):
    with pytest.raises(IndexOutOfRange):
        prefix_suffix([crandn(rng, 16)], [], 2)


def _layer_setup(rng, n=4, m=2, s=5):
    slices = [crandn(rng, n, n) for _ in range(m)]
    kernels = kernels_for(n, m)
    probes = crandn(rng, n * n, s)
    amps = np.abs(crandn(rng, n * n, s))
    return slices, kernels, probes, amps


def test_single_layer_operator_is_adjoint_consistent(rng):
    slices, kernels, probes, amps = _layer_setup(rng)
    for ell in (1, 2):
        r, s = prefix_suffix(slices, kernels, ell)
        assert single_layer_problem(r, s(probes), amps).adjoint_mismatch() <= 1e-10


def test_single_layer_gradient_matches_finite_differences(rng):
    slices, kernels, probes, amps = _layer_setup(rng)
    for ell in (1, 2):
        r, s = prefix_suffix(slices, kernels, ell)
        prob = single_layer_problem(r, s(probes), amps)
        o = vec(slices[ell - 1])

        def full_objective(x):
            trial = list(slices)
            trial[ell - 1] = x
            a = assemble_scattering_matrix(trial, kernels)
            return matrix_objective(a, probes, amps)

        assert rel(af_gradient(prob, o), fd_gradient(full_objective, o.astype(complex))) < 1e-5


def test_layerwise_vacuum_fixed_point(geom8, beam200):
    probes = probe_matrix(np.fft.ifft2(np.ones((8, 8))) * 8, ScanPlan.raster(2, 2, step=3))
    amps = np.abs(np.fft.fft2(probes.T.reshape(-1, 8, 8))).reshape(4, -1).T
    init = ReconstructionState.vacuum(8, 1)
    state = layerwise_reconstruct(amps, probes, [], init, SolverConfig(outer_iters=3, inner_gradient_steps=5))
    np.testing.assert_allclose(state.slices[0], 1, atol=1e-14)
    assert max(state.history) < 1e-14


def _single_slice_data(beam, geom, phase=0.1, seed=0):
    from msptycho.physics import make_probe
    from msptycho.specimen import random_phantom
    truth = random_phantom(geom, 1, phase, seed=seed).slices
    probes = probe_matrix(make_probe(beam, geom), ScanPlan.raster(8, 8))
    amps = np.abs(np.fft.fft2((vec(truth[0])[:, None] * probes).T.reshape(-1, 8, 8))).reshape(64, -1).T
    return truth, probes, amps


def _oracle_single_slice(probes, amps, steps):
    """Plain gradient descent on the dense stacked operator [F diag(p^s)]_s."""
    n2, n_pos = probes.shape
    f = np.fft.fft(np.eye(8), axis=0)
    f2 = np.kron(f, f)
    q = np.vstack([f2 @ np.diag(probes[:, s]) for s in range(n_pos)])
    y = amps.T.reshape(-1)
    mu = 1 / np.linalg.norm(q, 2) ** 2
    o = np.ones(n2, dtype=complex)
    for _ in range(steps):
        w = q @ o
        ph = np.where(np.abs(w) > 0, w / np.where(np.abs(w) > 0, np.abs(w), 1), 0)
        o = o - mu * q.conj().T @ (w - ph * y)
    return np.linalg.norm(y - np.abs(q @ o)) / np.linalg.norm(y)


def test_layerwise_single_slice_matches_oracle(beam200, geom8):
    _, probes, amps = _single_slice_data(beam200, geom8)
    cfg = SolverConfig(outer_iters=10, inner_gradient_steps=10, stop_tol=0)
    state = layerwise_reconstruct(amps, probes, [], ReconstructionState.vacuum(8, 1), cfg)
    ref = _oracle_single_slice(probes, amps, 100)
    assert state.history[-1] < 0.05
    assert state.history[-1] <= 2 * ref + 1e-12


def test_layerwise_history_and_callback(beam200, geom8):
    _, probes, amps = _single_slice_data(beam200, geom8)
    seen = []
    cfg = SolverConfig(outer_iters=3, inner_gradient_steps=2, stop_tol=0)
    state = layerwise_reconstruct(amps, probes, [], ReconstructionState.vacuum(8, 1), cfg,
                                  callback=lambda t, s, e: seen.append((t, e)))
    assert [t for t, _ in seen] == [0, 1, 2, 3]
    assert [e for _, e in seen] == state.history
    zero = layerwise_reconstruct(amps, probes, [], ReconstructionState.vacuum(8, 1), SolverConfig(outer_iters=0))
    assert len(zero.history) == 1
    np.testing.assert_array_equal(zero.slices[0], np.ones(64))


def test_layerwise_stop_tol_fires(beam200, geom8):
    truth, probes, amps = _single_slice_data(beam200, geom8)
    init = ReconstructionState([truth[0]])
    cfg = SolverConfig(outer_iters=50, inner_gradient_steps=1, stop_tol=1e-6, patience=5)
    assert layerwise_reconstruct(amps, probes, [], init, cfg).n_iter < 50


def test_layerwise_dimension_checks(rng):
    with pytest.raises(DimensionMismatch):
        layerwise_reconstruct(np.ones((16, 3)), np.ones((16, 4)), [], ReconstructionState.vacuum(4, 1),
                              SolverConfig())
    with pytest.raises(DimensionMismatch):
        layerwise_reconstruct(np.ones((16, 4)), np.ones((16, 4)), [], ReconstructionState.vacuum(4, 2),
                              SolverConfig())


# ---------------------------------------------------------------- sparse decomposition

def _matrix_setup(rng, n=4, m=2, phase=0.5):
    slices = random_phase_slices(rng, n, m, scale=phase / np.pi)
    kernels = kernels_for(n, m)
    a = assemble_scattering_matrix(slices, kernels)
    probes = crandn(rng, n * n, n * n)
    amps = np.abs(np.fft.fft2((a @ probes).T.reshape(-1, n, n))).reshape(n * n, -1).T
    return slices, kernels, a, probes, amps


def test_estimate_scattering_fixed_point(rng):
    _, _, a, probes, amps = _matrix_setup(rng)
    a_hat, objs = estimate_scattering(amps, probes, a, SolverConfig(inner_gradient_steps=5))
    np.testing.assert_allclose(a_hat, a, atol=1e-12)
    assert objs[0] < 1e-24


def test_estimate_scattering_monotone_and_reduces_error(rng):
    slices, kernels, a, probes, amps = _matrix_setup(rng)
    a0 = np.eye(16, dtype=complex)
    a_hat, objs = estimate_scattering(amps, probes, a0, SolverConfig(inner_gradient_steps=200))
    assert np.all(np.diff(objs) <= 1e-9)

    def err(mat):
        return np.linalg.norm(amps - np.abs(np.fft.fft2((mat @ probes).T.reshape(-1, 4, 4))).reshape(16, -1).T)

    assert err(a_hat) <= err(a0) / 10


def test_estimate_scattering_rejects_bad_input(rng):
    _, _, a, probes, amps = _matrix_setup(rng)
    with pytest.raises(ValueError):
        estimate_scattering(amps, probes, np.full_like(a, np.nan), SolverConfig())
    with pytest.raises(DimensionMismatch):
        estimate_scattering(amps[:, :3], probes, a, SolverConfig())


def test_projection_cases():
    np.testing.assert_allclose(project_diag_normalized(np.diag([3.0, 4.0])), [0.6, 0.8])
    with pytest.warns(DegenerateProjectionWarning):
        out = project_diag_normalized(np.array([[0.0, 7.0], [7.0, 0.0]]))
    assert not np.any(out)
    d = np.array([0.6, 0.8j])
    np.testing.assert_allclose(project_diag_normalized(d), d)
    with pytest.raises(DimensionMismatch):
        project_diag_normalized(np.ones((2, 3)))


def test_sparse_decompose_fixed_point_single_slice(rng):
    o = crandn(rng, 16)
    o /= np.linalg.norm(o)
    init = ReconstructionState([o], fidelity_scale=2.5)
    state, objs = sparse_decompose(2.5 * np.diag(o), [], init)
    np.testing.assert_allclose(state.slices[0], o, atol=1e-14)
    assert objs[-1] < 1e-26


@pytest.mark.parametrize("seed", range(3))
def test_prox_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    slices = [crandn(rng, 3, 3) for _ in range(2)]
    kernels = propagators_for(SamplingGeometry(3, 0.05e-9), 2.5e-12, [2e-9])
    a_hat = crandn(rng, 9, 9)
    for ell in (1, 2):
        grad, _, _ = prox_gradient(a_hat, slices, kernels, ell, 1.7)

        def f(x):
            trial = list(slices)
            trial[ell - 1] = x
            return decomposition_objective(a_hat, trial, kernels, 1.7)

        assert rel(grad, fd_gradient(f, vec(slices[ell - 1]).astype(complex))) < 1e-5


@pytest.mark.parametrize("estimate", ["bound", "power"])
def test_sparse_decompose_monotone(rng, estimate):
    slices = [project_diag_normalized(vec(s)) for s in random_phase_slices(rng, 4, 3)]
    kernels = kernels_for(4, 3)
    a_hat = 8 * assemble_scattering_matrix(random_phase_slices(rng, 4, 3), kernels) + 0.1 * crandn(rng, 16, 16)
    state = ReconstructionState(slices, fidelity_scale=5.0)
    for _ in range(5):
        state, objs = sparse_decompose(a_hat, kernels, state, n_steps=3, norm_estimate=estimate)
        assert np.all(np.diff(objs) <= 1e-9)
        for s in state.slices:
            assert np.linalg.norm(s) == pytest.approx(1.0, rel=1e-12)


def test_fidelity_scale_cases(rng):
    a = crandn(rng, 4, 4)
    assert update_fidelity_scale(a, a) == pytest.approx(1.0)
    assert update_fidelity_scale(a, 2 * a) == pytest.approx(0.5)
    with pytest.raises(ZeroDenominator):
        update_fidelity_scale(a, np.zeros((4, 4)))
    with pytest.raises(DimensionMismatch):
        update_fidelity_scale(a, np.ones((3, 3)))


def test_distribute_scale_sign():
    out = distribute_scale([np.ones(2), np.ones(2)], -4.0)
    np.testing.assert_allclose(out[0], -2.0)
    np.testing.assert_allclose(out[1], 2.0)


def test_sparse_vacuum(geom8, beam200):
    probes = probe_matrix(np.fft.ifft2(np.ones((8, 8))) * 8, ScanPlan.raster(2, 2, step=3))
    amps = np.abs(np.fft.fft2(probes.T.reshape(-1, 8, 8))).reshape(4, -1).T
    state = sparse_matrix_decomposition(amps, probes, [make_zero_kernel(geom8, beam200)],
                                        ReconstructionState.vacuum(8, 2), SolverConfig(outer_iters=2))
    assert state.fidelity_scale == pytest.approx(64.0, rel=1e-12)  # product of the two slice norms
    for s in state.slices:
        np.testing.assert_allclose(s, 1.0, atol=1e-12)
    assert max(state.history) < 1e-12


def make_zero_kernel(geom, beam):
    return propagators_for(geom, beam.wavelength, [0.0])[0]


def test_sparse_self_consistency(rng):
    slices, kernels, _, probes, amps = _matrix_setup(rng, m=2)
    state = sparse_matrix_decomposition(amps, probes, kernels, ReconstructionState.vacuum(4, 2),
                                        SolverConfig(outer_iters=5, inner_gradient_steps=5, stop_tol=0))
    a_tilde = assemble_scattering_matrix(state.slices, kernels)  # scale already distributed
    unit = [project_diag_normalized(s) for s in state.slices]
    scaled = state.fidelity_scale * assemble_scattering_matrix(unit, kernels)
    np.testing.assert_allclose(a_tilde, scaled, atol=1e-12)
    residual = np.linalg.norm(state.a_estimate - a_tilde)
    assert residual == pytest.approx(np.sqrt(2 * decomposition_objective(
        state.a_estimate, unit, kernels, state.fidelity_scale)), rel=1e-9)


def test_sparse_single_slice_matches_oracle(beam200, geom8):
    _, probes, amps = _single_slice_data(beam200, geom8)
    cfg = SolverConfig(outer_iters=10, inner_gradient_steps=9, stop_tol=0)
    state = sparse_matrix_decomposition(amps, probes, [], ReconstructionState.vacuum(8, 1), cfg)
    ref = _oracle_single_slice(probes, amps, 100)
    assert state.history[-1] < 0.05
    assert state.history[-1] <= 2 * ref + 0.01


# ---------------------------------------------------------------- probe

def _probe_setup(rng):
    from msptycho.physics import make_probe
    geom = SamplingGeometry(8, 0.03e-9)
    from msptycho.physics import BeamParameters
    p = make_probe(BeamParameters(200e3), geom)
    slices = random_phase_slices(rng, 8, 2, scale=0.1)
    a = assemble_scattering_matrix(slices, propagators_for(geom, 2.5e-12, [1e-9]))
    i_c = np.abs(np.fft.fft2((a @ vec(p)).reshape(8, 8))) ** 2
    return p, a, i_c


def test_probe_fixed_point(rng):
    p, a, i_c = _probe_setup(rng)
    out = reconstruct_probe(i_c, a, p, SolverConfig(inner_gradient_steps=20, stop_tol=0))
    np.testing.assert_allclose(out, vec(p), atol=1e-12)


def test_probe_global_phase_invariance(rng):
    p, a, i_c = _probe_setup(rng)
    prob = probe_problem(i_c, a)
    z = vec(p) + 0.05 * crandn(rng, 64)
    for phi in (0.3, 2.0, -1.1):
        assert prob.objective(np.exp(1j * phi) * z) == pytest.approx(prob.objective(z), rel=1e-12)
    assert prob.adjoint_mismatch() < 1e-10


def test_probe_dimension_check(rng):
    with pytest.raises(DimensionMismatch):
        probe_problem(np.ones((4, 4)), np.eye(64))


def test_probe_not_identifiable_from_single_pattern(rng):
    """One pattern gives n^2 magnitudes for n^2 complex unknowns: a generic start fits the
    data exactly yet converges to a different probe."""
    from msptycho.physics import BeamParameters, make_probe
    p, a, i_c = _probe_setup(rng)
    p0 = vec(make_probe(BeamParameters(200e3, 20e-3), SamplingGeometry(8, 0.03e-9)))
    p0 = p0 / np.abs(p0).max()
    prob = probe_problem(i_c, a)
    z = reconstruct_probe(i_c, a, p0, SolverConfig(inner_gradient_steps=2000, stop_tol=0))
    z = z * np.exp(-1j * np.angle(np.vdot(z, vec(p))))
    assert prob.objective(z) < 1e-20 * prob.objective(p0)
    assert np.linalg.norm(z - vec(p)) / np.linalg.norm(p) > 0.01
