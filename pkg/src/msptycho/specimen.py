"""Toy phase-grating specimens.

Atoms are Gaussian phase bumps, not scattering-factor potentials. The site
lists below are the conventional-cell motifs with each site assigned to one
of three slices per cell by ``floor(3 * z)``; this slice partition is an
approximation chosen for the toolkit.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryTooCoarse, UnknownCrystal
from .physics import interaction_constant

NM = 1e-9
REFERENCE_VOLTAGE = 200e3


@dataclass(frozen=True)
class AtomSite:
    x: float
    y: float
    slice_index: int
    strength: float
    width: float  # nm


@dataclass(frozen=True)
class CrystalSpec:
    name: str
    unit_cell: tuple  # (a, b, c) in nm
    supercell: tuple = (2, 2)
    atom_sites: tuple = ()
    slices_per_cell: int = 3
    fresnel_distance: float = 0.1  # nm

    def __post_init__(self):
        na, nb = self.supercell
        if na < 1 or nb < 1:
            raise ValueError("supercell repetitions must be >= 1")
        for s in self.atom_sites:
            if not (0 <= s.x < 1 and 0 <= s.y < 1):
                raise ValueError(f"fractional coordinates out of [0, 1): {s}")
            if s.strength < 0:
                raise ValueError(f"negative strength: {s}")
            if not 0 <= s.slice_index < self.slices_per_cell:
                raise ValueError(f"slice index out of range: {s}")

    @property
    def extent(self):
        """Supercell size (y, x) in nm; x runs along ``a``."""
        return (self.unit_cell[1] * self.supercell[1], self.unit_cell[0] * self.supercell[0])

    def translated(self, dx, dy):
        """Copy with every site shifted by fractional ``(dx, dy)`` (wrapped)."""
        sites = tuple(
            AtomSite((s.x + dx) % 1.0, (s.y + dy) % 1.0, s.slice_index, s.strength, s.width)
            for s in self.atom_sites
        )
        return CrystalSpec(self.name, self.unit_cell, self.supercell, sites,
                           self.slices_per_cell, self.fresnel_distance)


@dataclass
class SliceStack:
    slices: list
    distances: list
    geom: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.slices) == 0:
            raise ValueError("a slice stack needs at least one slice")
        self.slices = [np.asarray(s, dtype=complex) for s in self.slices]
        self.distances = [float(d) for d in self.distances]
        if len(self.distances) not in (len(self.slices) - 1, len(self.slices)):
            raise ValueError("need M-1 (or M) Fresnel distances for M slices")

    @property
    def n_slices(self):
        return len(self.slices)

    @property
    def n(self):
        return self.slices[0].shape[0]


# relative phase strengths ~ Z**0.67, scaled so Ga gives 0.2 rad at 200 kV
def _strength(z):
    return 0.2 * (z / 31.0) ** 0.67


_WIDTH = 0.08  # nm


def _sites(motif):
    return tuple(AtomSite(x, y, int(np.floor(3 * z)) % 3, _strength(zn), _WIDTH)
                 for (x, y, z, zn) in motif)


_GAAS = [(0, 0, 0, 31), (0.5, 0.5, 0, 31), (0.5, 0, 0.5, 31), (0, 0.5, 0.5, 31),
         (0.25, 0.25, 0.25, 33), (0.75, 0.75, 0.25, 33), (0.75, 0.25, 0.75, 33), (0.25, 0.75, 0.75, 33)]
_SRTIO3 = [(0, 0, 0, 38), (0.5, 0.5, 0.5, 22),
           (0.5, 0.5, 0, 8), (0.5, 0, 0.5, 8), (0, 0.5, 0.5, 8)]
# 2H-MoS2 in the orthogonal (a, sqrt(3) a) setting
_MOS2 = [(0, 1 / 3, 0.25, 42), (0.5, 5 / 6, 0.25, 42), (0.5, 1 / 6, 0.75, 42), (0, 2 / 3, 0.75, 42),
         (0, 1 / 3, 0.621, 16), (0.5, 5 / 6, 0.621, 16), (0, 1 / 3, 0.879, 16), (0.5, 5 / 6, 0.879, 16),
         (0.5, 1 / 6, 0.121, 16), (0, 2 / 3, 0.121, 16), (0.5, 1 / 6, 0.379, 16), (0, 2 / 3, 0.379, 16)]

_BUILTIN = {
    "GaAs": ((0.56533, 0.56533, 0.56533), 0.1413, _GAAS),
    "SrTiO3": ((0.3905, 0.3905, 0.3905), 0.1952, _SRTIO3),
    "MoS2": ((0.3161, 0.54750, 1.2295), 0.1561, _MOS2),
}


def builtin_crystal(name):
    try:
        cell, dz, motif = _BUILTIN[name]
    except KeyError:
        raise UnknownCrystal(f"unknown crystal {name!r}; choose from {sorted(_BUILTIN)}") from None
    return CrystalSpec(name=name, unit_cell=cell, supercell=(2, 2), atom_sites=_sites(motif),
                       slices_per_cell=3, fresnel_distance=dz)


def scale_strengths(spec, voltage):
    """Rescale site strengths from the 200 kV reference by the interaction-constant ratio."""
    ratio = interaction_constant(voltage) / interaction_constant(REFERENCE_VOLTAGE)
    sites = tuple(AtomSite(s.x, s.y, s.slice_index, s.strength * ratio, s.width) for s in spec.atom_sites)
    return CrystalSpec(spec.name, spec.unit_cell, spec.supercell, sites, spec.slices_per_cell,
                       spec.fresnel_distance)


def render_slices(spec, geom, n_cells_depth=1):
    """Render phase gratings ``exp(i * phi)`` for ``slices_per_cell * n_cells_depth`` slices.

    Sites are placed in the supercell (fractional unit-cell coordinates
    replicated ``Na x Nb`` times); distances wrap with the grid's field of view.
    """
    if n_cells_depth < 1:
        raise ValueError("n_cells_depth must be >= 1")
    px_nm = geom.pixel_size / NM
    fov = geom.n * px_nm
    ext_y, ext_x = spec.extent
    if fov + 1e-9 < max(ext_y, ext_x):
        raise GeometryTooCoarse(f"field of view {fov:.4g} nm does not cover supercell {ext_y:.4g} x {ext_x:.4g} nm")
    for s in spec.atom_sites:
        if px_nm > s.width:
            raise GeometryTooCoarse(f"pixel size {px_nm:.4g} nm exceeds atom width {s.width:.4g} nm")

    coords = np.arange(geom.n) * px_nm
    na, nb = spec.supercell
    a, b = spec.unit_cell[0], spec.unit_cell[1]
    phases = np.zeros((spec.slices_per_cell, geom.n, geom.n))
    for s in spec.atom_sites:
        for i in range(na):
            for j in range(nb):
                x0 = (s.x + i) * a
                y0 = (s.y + j) * b
                dx = (coords - x0 + fov / 2) % fov - fov / 2
                dy = (coords - y0 + fov / 2) % fov - fov / 2
                d2 = dy[:, None] ** 2 + dx[None, :] ** 2
                phases[s.slice_index] += s.strength * np.exp(-d2 / (2 * s.width**2))

    cell = [np.exp(1j * phi) for phi in phases]
    slices = cell * n_cells_depth
    dz = spec.fresnel_distance * NM
    return SliceStack(slices=slices, distances=[dz] * (len(slices) - 1), geom=geom,
                      meta={"crystal": spec.name})


def random_phantom(geom, m, phase_scale, seed=0, distance=0.0, smoothness=2.0):
    """Smooth random pure-phase slices with ``max |phase| == phase_scale``.

    Phases are white noise low-pass filtered by a Gaussian of ``smoothness``
    pixels (cyclically), then rescaled.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if phase_scale < 0:
        raise ValueError("phase_scale must be >= 0")
    rng = np.random.default_rng(seed)
    n = geom.n
    f = np.fft.fftfreq(n)
    lowpass = np.exp(-2 * (np.pi * smoothness) ** 2 * (f[:, None] ** 2 + f[None, :] ** 2))
    slices = []
    for _ in range(m):
        noise = rng.standard_normal((n, n))
        phi = np.real(np.fft.ifft2(np.fft.fft2(noise) * lowpass))
        peak = np.max(np.abs(phi))
        phi = phi * (phase_scale / peak) if peak > 0 and phase_scale > 0 else np.zeros_like(phi)
        slices.append(np.exp(1j * phi))
    return SliceStack(slices=slices, distances=[distance] * (m - 1), geom=geom, meta={"phantom_seed": seed})
