"""Electron-optical quantities: wavelength, probe and Fresnel propagator."""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import j1

from .errors import DimensionMismatch, InvalidVoltage
from .numerics import dft2_forward, dft2_inverse

# CODATA 2018 (h, c, e exact since the 2019 SI redefinition)
PLANCK = 6.62607015e-34
SPEED_OF_LIGHT = 299792458.0
ELEMENTARY_CHARGE = 1.602176634e-19
ELECTRON_MASS = 9.1093837015e-31


def electron_wavelength(voltage):
    """Relativistic electron wavelength in metres for an acceleration voltage in volts."""
    if not voltage > 0:
        raise InvalidVoltage(f"voltage must be positive, got {voltage!r}")
    e, m, c = ELEMENTARY_CHARGE, ELECTRON_MASS, SPEED_OF_LIGHT
    eu = e * voltage
    return PLANCK * c / np.sqrt(eu * eu + 2.0 * eu * m * c * c)


def interaction_constant(voltage):
    """Interaction constant ``2 pi m e lambda / h**2`` in rad/(V m), relativistic mass."""
    lam = electron_wavelength(voltage)
    m_rel = ELECTRON_MASS * (1.0 + ELEMENTARY_CHARGE * voltage / (ELECTRON_MASS * SPEED_OF_LIGHT**2))
    return 2.0 * np.pi * m_rel * ELEMENTARY_CHARGE * lam / PLANCK**2


@dataclass(frozen=True)
class BeamParameters:
    voltage: float
    semiconv_angle: float = 32e-3
    wavelength: float = field(init=False)
    q_max: float = field(init=False)

    def __post_init__(self):
        lam = electron_wavelength(self.voltage)
        if not self.semiconv_angle > 0:
            raise ValueError("semiconv_angle must be positive")
        object.__setattr__(self, "wavelength", float(lam))
        object.__setattr__(self, "q_max", float(np.sin(self.semiconv_angle) / lam))


@dataclass(frozen=True)
class SamplingGeometry:
    n: int
    pixel_size: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.pixel_size > 0:
            raise ValueError("pixel_size must be positive")

    @property
    def q_step(self):
        return 1.0 / (self.n * self.pixel_size)

    def wrapped_offsets(self):
        """Signed pixel offsets ``k`` (``k >= n/2`` mapped to ``k - n``) in DFT order."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n)

    def frequencies(self):
        """Reciprocal-space coordinates ``k / (n * pixel_size)`` in DFT order."""
        return np.fft.fftfreq(self.n, d=self.pixel_size)


@dataclass(frozen=True)
class PropagatorKernel:
    h: np.ndarray
    distance: float
    tilt: tuple = (0.0, 0.0)


def make_probe(beam, geom, normalize=True):
    """Aberration-free probe ``pi q^2 * 2 J1(2 pi q r) / (2 pi q r)`` centred on pixel (0, 0).

    ``r`` uses wrapped pixel offsets times the pixel size. With ``normalize``
    the result is rescaled to unit energy.
    """
    off = geom.wrapped_offsets() * geom.pixel_size
    r = np.hypot(off[:, None], off[None, :])
    t = 2.0 * np.pi * beam.q_max * r
    ratio = np.ones_like(t)
    nz = t > 0
    ratio[nz] = 2.0 * j1(t[nz]) / t[nz]
    p = (np.pi * beam.q_max**2 * ratio).astype(complex)
    if normalize:
        p /= np.linalg.norm(p)
    return p


def shift_probe(p, xs, ys):
    """Cyclic shift so that ``out[y, x] = p[y - ys, x - xs]``."""
    return np.roll(p, (int(ys), int(xs)), axis=(0, 1))


def make_propagator(geom, wavelength, distance, tilt=(0.0, 0.0)):
    if distance < 0:
        raise ValueError("distance must be >= 0")
    theta_x, theta_y = tilt
    q = geom.frequencies()
    qy, qx = q[:, None], q[None, :]
    phase = (qy**2 + qx**2) + 2.0 * (qx * np.sin(theta_x) / wavelength + qy * np.sin(theta_y) / wavelength)
    h = np.exp(-1j * np.pi * distance * wavelength * phase)
    return PropagatorKernel(h=h, distance=float(distance), tilt=(float(theta_x), float(theta_y)))


def propagate(e, kernel):
    h = kernel.h if isinstance(kernel, PropagatorKernel) else kernel
    if np.shape(e)[-2:] != h.shape:
        raise DimensionMismatch(f"field {np.shape(e)} vs kernel {h.shape}")
    return dft2_inverse(dft2_forward(e) * h)
