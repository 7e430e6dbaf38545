"""Forward multislice model in real-space and operator form, and 4D-STEM synthesis.

Operators that are products of slice transmissions ``O_m = diag(o_m)`` and
Fresnel propagators ``G_m = F^-1 diag(h_m) F`` are represented as a list of
factors in application order: ``("o", diag)`` or ``("g", kernel)``. They act
on batches of vectorised fields (shape ``(n*n, k)``) without ever being
materialised.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, TooLarge
from .numerics import dft2_forward, fft_cols, ifft_cols, side_length, vec
from .physics import PropagatorKernel, make_probe, make_propagator, propagate, shift_probe


@dataclass(frozen=True)
class ScanPlan:
    positions: tuple  # ((x_s, y_s), ...)
    shape: tuple = None  # (scan_y, scan_x) for raster scans

    def __post_init__(self):
        if len(self.positions) < 1:
            raise ValueError("a scan needs at least one position")
        object.__setattr__(self, "positions", tuple((int(x), int(y)) for x, y in self.positions))

    @classmethod
    def raster(cls, scan_y, scan_x, step=1, offset=(0, 0)):
        ox, oy = offset
        pos = [(ox + ix * step, oy + iy * step) for iy in range(scan_y) for ix in range(scan_x)]
        return cls(tuple(pos), (scan_y, scan_x))

    def __len__(self):
        return len(self.positions)

    def wrapped(self, n):
        return tuple((x % n, y % n) for x, y in self.positions)

    def center_index(self):
        """Index of the position nearest the raster centre (``floor(dims / 2)``)."""
        if self.shape is None:
            return len(self.positions) // 2
        sy, sx = self.shape
        return (sy // 2) * sx + sx // 2


@dataclass
class Dataset4D:
    geom: object
    scan: ScanPlan
    intensities: np.ndarray  # (S, n, n)
    beam: object = None
    distances: list = field(default_factory=list)

    def __post_init__(self):
        self.intensities = np.asarray(self.intensities, dtype=float)
        s, n = len(self.scan), self.geom.n
        if self.intensities.shape != (s, n, n):
            raise DimensionMismatch(f"intensities {self.intensities.shape} != {(s, n, n)}")
        if np.any(self.intensities < 0):
            raise ValueError("intensities must be nonnegative")

    @property
    def n(self):
        return self.geom.n

    def amplitude_columns(self):
        """``sqrt(I)`` as an ``(n*n, S)`` matrix of vectorised patterns."""
        return np.sqrt(self.intensities).reshape(len(self.scan), -1).T


def propagators_for(geom, wavelength, distances, tilt=(0.0, 0.0)):
    return [make_propagator(geom, wavelength, d, tilt) for d in distances]


def scan_probes(probe, scan):
    """Shifted probes stacked as ``(S, n, n)``."""
    return np.stack([shift_probe(probe, x, y) for x, y in scan.positions])


def probe_matrix(probe, scan):
    """The probe matrix with columns ``vec(P^s)``, shape ``(n*n, S)``."""
    return scan_probes(probe, scan).reshape(len(scan), -1).T


def _kernel_array(k):
    return k.h if isinstance(k, PropagatorKernel) else np.asarray(k)


def multislice_exit_wave(probe, slices, kernels):
    """Exit wave after the last slice; ``probe`` may be a batch ``(..., n, n)``.

    ``kernels`` holds the ``M - 1`` propagators between consecutive slices; no
    propagation follows the final slice.
    """
    if len(kernels) < len(slices) - 1:
        raise DimensionMismatch(f"{len(slices)} slices need {len(slices) - 1} propagators")
    e = np.asarray(probe, dtype=complex)
    for m, x in enumerate(slices):
        if np.shape(x) != e.shape[-2:]:
            raise DimensionMismatch(f"slice {m} shape {np.shape(x)} vs field {e.shape[-2:]}")
        if m > 0:
            e = propagate(e, kernels[m - 1])
        e = e * x
    return e


def intensity(e):
    return np.abs(dft2_forward(e)) ** 2


def simulate_dataset(stack, beam, geom, scan, kernels=None, n_jobs=1):
    """Noiseless diffraction intensities for every scan position (in scan order)."""
    if stack.n != geom.n:
        raise DimensionMismatch(f"stack n={stack.n} vs geometry n={geom.n}")
    if kernels is None:
        kernels = propagators_for(geom, beam.wavelength, stack.distances[: stack.n_slices - 1])
    probe = make_probe(beam, geom)
    probes = scan_probes(probe, scan)

    def run(chunk):
        return intensity(multislice_exit_wave(chunk, stack.slices, kernels))

    if n_jobs > 1 and len(scan) > 1:
        chunks = np.array_split(probes, min(n_jobs, len(scan)))
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            data = np.concatenate(list(pool.map(run, chunks)))
    else:
        data = run(probes)
    return Dataset4D(geom=geom, scan=scan, intensities=data, beam=beam,
                     distances=list(stack.distances[: stack.n_slices - 1]))


# ---------------------------------------------------------------- operator form

def chain_factors(diags, kernels):
    """Factors of ``O_M G_{M-1} ... G_1 O_1`` in application order."""
    factors = []
    for m, o in enumerate(diags):
        if m > 0:
            factors.append(("g", _kernel_array(kernels[m - 1])))
        factors.append(("o", np.asarray(o).reshape(-1)))
    return factors


def apply_factors(x, factors, n):
    """Apply a factor list to the columns of ``x`` (``(n*n, k)`` or a single vector)."""
    single = np.ndim(x) == 1
    y = np.asarray(x, dtype=complex)
    if single:
        y = y[:, None]
    for kind, f in factors:
        if kind == "o":
            y = f[:, None] * y
        else:
            y = ifft_cols(fft_cols(y, n) * f.reshape(-1)[:, None], n)
    return y[:, 0] if single else y


def apply_factors_adjoint(x, factors, n):
    single = np.ndim(x) == 1
    y = np.asarray(x, dtype=complex)
    if single:
        y = y[:, None]
    for kind, f in reversed(factors):
        if kind == "o":
            y = f.conj()[:, None] * y
        else:
            y = ifft_cols(fft_cols(y, n) * f.conj().reshape(-1)[:, None], n)
    return y[:, 0] if single else y


def assemble_scattering_matrix(slices, kernels, max_n=64, allow_large=False):
    """Dense ``A_M`` built column by column from the operator chain."""
    diags = [vec(s) for s in slices]
    n = side_length(diags[0].size)
    if n > max_n and not allow_large:
        raise TooLarge(f"n={n} exceeds the dense guard max_n={max_n}")
    return apply_factors(np.eye(n * n, dtype=complex), chain_factors(diags, kernels), n)


def apply_scattering(a, p):
    a = np.asarray(a)
    p = np.asarray(p)
    if a.shape[1] != p.shape[0]:
        raise DimensionMismatch(f"matrix {a.shape} vs vector {p.shape}")
    return a @ p


def predicted_amplitudes(a, probes_cols):
    """``|F A P|`` for a dense ``a`` and probe matrix ``(n*n, S)``."""
    n = side_length(a.shape[0])
    return np.abs(fft_cols(a @ probes_cols, n))


class ChainOperator:
    """Matrix-free product of diagonal and propagator factors on ``n*n`` vectors."""

    def __init__(self, factors, n):
        self.factors = list(factors)
        self.n = n

    def apply(self, x):
        return apply_factors(x, self.factors, self.n)

    def apply_adjoint(self, x):
        return apply_factors_adjoint(x, self.factors, self.n)

    __call__ = apply

    def dense(self):
        return self.apply(np.eye(self.n * self.n, dtype=complex))

    def norm_bound(self):
        """Upper bound on the spectral norm: propagators are unitary, diagonals give max modulus."""
        bound = 1.0
        for kind, f in self.factors:
            if kind == "o":
                bound *= float(np.max(np.abs(f)))
        return bound
