"""Amplitude Flow: gradient descent on ``1/2 || sqrt(y) - |Q z| ||^2``."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..numerics import spectral_norm


@dataclass
class SolverConfig:
    outer_iters: int = 50
    inner_gradient_steps: int = 10
    stop_tol: float = 1e-6
    seed: int = 0
    learning_rate_safety: float = 1.0
    patience: int = 5

    def __post_init__(self):
        if self.outer_iters < 0 or self.inner_gradient_steps < 1:
            raise ValueError("need outer_iters >= 0 and inner_gradient_steps >= 1")
        if self.stop_tol < 0:
            raise ValueError("stop_tol must be >= 0")
        if not 0 < self.learning_rate_safety <= 1:
            raise ValueError("learning_rate_safety must lie in (0, 1]")


@dataclass
class AmplitudeFlowProblem:
    apply_q: object
    apply_q_adjoint: object
    target_amplitudes: np.ndarray
    dim: int

    def __post_init__(self):
        self.target_amplitudes = np.asarray(self.target_amplitudes, dtype=float)
        if np.any(self.target_amplitudes < 0):
            raise ValueError("target amplitudes must be nonnegative")

    def objective(self, z):
        return 0.5 * float(np.sum((self.target_amplitudes - np.abs(self.apply_q(z))) ** 2))

    def adjoint_mismatch(self, n_probes=20, seed=0):
        """Largest ``|<Qu, v> - <u, Q^H v>| / (||u|| ||v||)`` over random probes."""
        rng = np.random.default_rng(seed)
        m = self.target_amplitudes.size
        worst = 0.0
        for _ in range(n_probes):
            u = rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim)
            v = rng.standard_normal(m) + 1j * rng.standard_normal(m)
            lhs = np.vdot(v, self.apply_q(u))
            rhs = np.vdot(self.apply_q_adjoint(v), u)
            worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(u) * np.linalg.norm(v)))
        return worst

    def operator_norm(self, **kwargs):
        return spectral_norm(self.apply_q, self.apply_q_adjoint, self.dim, **kwargs)


def phase_of(w):
    """``w / |w|`` with 0 where ``w == 0``."""
    mag = np.abs(w)
    out = np.zeros_like(w)
    nz = mag > 0
    out[nz] = w[nz] / mag[nz]
    return out


def af_gradient(prob, z):
    """Wirtinger gradient ``Q^H (Qz - Qz/|Qz| * sqrt(y))``.

    This is ``dA/d(Re z) + i dA/d(Im z)`` for the halved objective
    ``A = 1/2 ||sqrt(y) - |Qz|||^2`` (equivalently ``dA'/d conj(z)`` of the
    unhalved one).
    """
    w = prob.apply_q(z)
    return prob.apply_q_adjoint(w - phase_of(w) * prob.target_amplitudes)


@dataclass
class AmplitudeFlowResult:
    z: np.ndarray
    objective: float
    history: list = field(default_factory=list)
    step_size: float = 0.0
    n_steps: int = 0


def af_minimize(prob, z0, cfg, n_steps=None, step_size=None):
    """Run up to ``n_steps`` (default ``cfg.inner_gradient_steps``) gradient steps.

    The step is ``safety / ||Q||^2`` unless ``step_size`` is given. Iteration
    stops early once the relative objective change drops below ``cfg.stop_tol``.
    """
    n_steps = cfg.inner_gradient_steps if n_steps is None else n_steps
    if step_size is None:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            norm = prob.operator_norm()
        for w in caught:
            warnings.warn(w.message, w.category, stacklevel=2)
        step_size = cfg.learning_rate_safety / norm**2 if norm > 0 else 0.0
    z = np.array(z0, dtype=complex, copy=True)
    f = prob.objective(z)
    history = [f]
    done = 0
    for _ in range(n_steps):
        z = z - step_size * af_gradient(prob, z)
        f_new = prob.objective(z)
        history.append(f_new)
        done += 1
        converged = abs(f - f_new) <= cfg.stop_tol * max(abs(f), np.finfo(float).tiny)
        f = f_new
        if converged:
            break
    return AmplitudeFlowResult(z=z, objective=f, history=history, step_size=step_size, n_steps=done)
