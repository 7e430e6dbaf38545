"""Line-based ``section.key = value`` run configuration.

Blank lines and lines starting with ``#`` are ignored. ``crystal.site`` may
repeat; every other key may appear once. Lengths are given in nm, the
voltage in kV and the semi-convergence angle in mrad; :class:`RunConfig`
stores SI units.

Recognised keys::

    specimen.kind             crystal | phantom | vacuum
    specimen.crystal          GaAs | SrTiO3 | MoS2 | custom
    specimen.cells_depth      unit cells along the beam (crystal)
    specimen.slices           slice count (phantom, vacuum)
    specimen.phase_scale      max phase in rad (phantom)
    specimen.fresnel_distance_nm   slice spacing (phantom, vacuum)
    crystal.name, crystal.unit_cell_nm = a,b,c, crystal.supercell = Na,Nb,
    crystal.slices_per_cell, crystal.fresnel_distance_nm,
    crystal.site = x,y,slice,strength_rad,width_nm
    geometry.n, geometry.pixel_size_nm
    beam.voltage_kv, beam.semiconv_mrad
    scan.ny, scan.nx, scan.step, scan.offset_x, scan.offset_y
    inversion.slices, inversion.fresnel_distance_nm
    solver.T, solver.K, solver.stop_tol, solver.safety, solver.seed,
    solver.patience, solver.decomp_steps, solver.probe_steps
    ingest.scan_y, ingest.scan_x, ingest.det_n, ingest.dtype,
    ingest.endianness, ingest.crop, ingest.bin
    paths.data, paths.truth, paths.out, paths.a_hat, paths.raw, paths.slices
"""

from dataclasses import dataclass, field

from .errors import ConfigError
from .specimen import NM, AtomSite, CrystalSpec, builtin_crystal

SUPPORTED_N = {4, 8, 16, 32, 40, 64, 128, 256}

_KNOWN = {
    "specimen": {"kind", "crystal", "cells_depth", "slices", "phase_scale", "fresnel_distance_nm"},
    "crystal": {"name", "unit_cell_nm", "supercell", "slices_per_cell", "fresnel_distance_nm", "site"},
    "geometry": {"n", "pixel_size_nm"},
    "beam": {"voltage_kv", "semiconv_mrad"},
    "scan": {"ny", "nx", "step", "offset_x", "offset_y"},
    "inversion": {"slices", "fresnel_distance_nm"},
    "solver": {"T", "K", "stop_tol", "safety", "seed", "patience", "decomp_steps", "probe_steps"},
    "ingest": {"scan_y", "scan_x", "det_n", "dtype", "endianness", "crop", "bin"},
    "paths": {"data", "truth", "out", "a_hat", "raw", "slices"},
}


@dataclass
class RunConfig:
    specimen_kind: str = "phantom"
    crystal: object = None  # CrystalSpec
    cells_depth: int = 1
    slices: int = 1
    phase_scale: float = 0.1
    specimen_distance: float = 0.0
    n: int = None
    pixel_size: float = None
    voltage: float = 200e3
    semiconv_angle: float = 32e-3
    scan_ny: int = None
    scan_nx: int = None
    scan_step: int = 1
    scan_offset: tuple = (0, 0)
    inv_slices: int = None
    inv_distance: float = None
    T: int = 20
    K: int = 10
    stop_tol: float = 1e-6
    safety: float = 1.0
    seed: int = 0
    patience: int = 5
    decomp_steps: int = 1
    probe_steps: int = 500
    ingest: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)


def parse_lines(lines):
    """Raw ``{key: value}`` mapping; repeated ``crystal.site`` keys are collected in a list."""
    out = {}
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        section, _, name = key.partition(".")
        if section not in _KNOWN or name not in _KNOWN[section]:
            raise ConfigError(key, "unknown key")
        if key == "crystal.site":
            out.setdefault(key, []).append(value)
        elif key in out:
            raise ConfigError(key, "given more than once")
        else:
            out[key] = value
    return out


def _num(raw, key, kind, lo=None, default=None):
    if key not in raw:
        return default
    try:
        v = kind(raw[key])
    except ValueError:
        raise ConfigError(key, f"not a valid {kind.__name__}: {raw[key]!r}") from None
    if lo is not None and v < lo:
        raise ConfigError(key, f"must be >= {lo}, got {v}")
    return v


def _tuple(raw, key, kind, length):
    parts = [p.strip() for p in raw[key].split(",")]
    if len(parts) != length:
        raise ConfigError(key, f"expected {length} comma-separated values")
    try:
        return tuple(kind(p) for p in parts)
    except ValueError:
        raise ConfigError(key, f"bad value list {raw[key]!r}") from None


def _custom_crystal(raw):
    for key in ("crystal.unit_cell_nm", "crystal.fresnel_distance_nm"):
        if key not in raw:
            raise ConfigError(key, "required for a custom crystal")
    sites = []
    for text in raw.get("crystal.site", []):
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 5:
            raise ConfigError("crystal.site", f"expected x,y,slice,strength,width, got {text!r}")
        try:
            sites.append(AtomSite(float(parts[0]), float(parts[1]), int(parts[2]), float(parts[3]),
                                  float(parts[4])))
        except ValueError:
            raise ConfigError("crystal.site", f"bad site {text!r}") from None
    try:
        return CrystalSpec(
            name=raw.get("crystal.name", "custom"),
            unit_cell=_tuple(raw, "crystal.unit_cell_nm", float, 3),
            supercell=_tuple(raw, "crystal.supercell", int, 2) if "crystal.supercell" in raw else (2, 2),
            atom_sites=tuple(sites),
            slices_per_cell=_num(raw, "crystal.slices_per_cell", int, 1, 3),
            fresnel_distance=_num(raw, "crystal.fresnel_distance_nm", float, 0.0),
        )
    except ValueError as exc:
        raise ConfigError("crystal.site", str(exc)) from None


def build_config(raw):
    cfg = RunConfig()
    cfg.specimen_kind = raw.get("specimen.kind", "phantom")
    if cfg.specimen_kind not in ("crystal", "phantom", "vacuum"):
        raise ConfigError("specimen.kind", f"expected crystal, phantom or vacuum, got {cfg.specimen_kind!r}")
    if cfg.specimen_kind == "crystal":
        name = raw.get("specimen.crystal")
        if name is None:
            raise ConfigError("specimen.crystal", "required when specimen.kind = crystal")
        if name == "custom":
            cfg.crystal = _custom_crystal(raw)
        else:
            try:
                cfg.crystal = builtin_crystal(name)
            except KeyError:
                raise ConfigError("specimen.crystal", f"unknown crystal {name!r}") from None
    cfg.cells_depth = _num(raw, "specimen.cells_depth", int, 1, 1)
    cfg.slices = _num(raw, "specimen.slices", int, 1, 1)
    cfg.phase_scale = _num(raw, "specimen.phase_scale", float, 0.0, 0.1)
    cfg.specimen_distance = _num(raw, "specimen.fresnel_distance_nm", float, 0.0, 0.0) * NM

    cfg.n = _num(raw, "geometry.n", int, 1)
    if cfg.n is not None and cfg.n not in SUPPORTED_N:
        raise ConfigError("geometry.n", f"unsupported grid size {cfg.n}; choose from {sorted(SUPPORTED_N)}")
    px = _num(raw, "geometry.pixel_size_nm", float)
    if px is not None:
        if px <= 0:
            raise ConfigError("geometry.pixel_size_nm", "must be positive")
        cfg.pixel_size = px * NM
    cfg.voltage = _num(raw, "beam.voltage_kv", float, default=200.0) * 1e3
    if cfg.voltage <= 0:
        raise ConfigError("beam.voltage_kv", "must be positive")
    cfg.semiconv_angle = _num(raw, "beam.semiconv_mrad", float, default=32.0) * 1e-3
    if cfg.semiconv_angle <= 0:
        raise ConfigError("beam.semiconv_mrad", "must be positive")

    cfg.scan_ny = _num(raw, "scan.ny", int, 1)
    cfg.scan_nx = _num(raw, "scan.nx", int, 1)
    cfg.scan_step = _num(raw, "scan.step", int, 1, 1)
    cfg.scan_offset = (_num(raw, "scan.offset_x", int, default=0), _num(raw, "scan.offset_y", int, default=0))

    cfg.inv_slices = _num(raw, "inversion.slices", int, 1)
    d = _num(raw, "inversion.fresnel_distance_nm", float, 0.0)
    cfg.inv_distance = None if d is None else d * NM

    cfg.T = _num(raw, "solver.T", int, 0, 20)
    cfg.K = _num(raw, "solver.K", int, 1, 10)
    cfg.stop_tol = _num(raw, "solver.stop_tol", float, 0.0, 1e-6)
    cfg.safety = _num(raw, "solver.safety", float, default=1.0)
    if not 0 < cfg.safety <= 1:
        raise ConfigError("solver.safety", "must lie in (0, 1]")
    cfg.seed = _num(raw, "solver.seed", int, default=0)
    cfg.patience = _num(raw, "solver.patience", int, 1, 5)
    cfg.decomp_steps = _num(raw, "solver.decomp_steps", int, 1, 1)
    cfg.probe_steps = _num(raw, "solver.probe_steps", int, 1, 500)

    cfg.ingest = {k.split(".", 1)[1]: v for k, v in raw.items() if k.startswith("ingest.")}
    cfg.paths = {k.split(".", 1)[1]: v for k, v in raw.items() if k.startswith("paths.")}
    values = list(cfg.paths.values())
    if len(values) != len(set(values)):
        raise ConfigError("paths", "referenced paths must be distinct")
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    return build_config(parse_lines(lines))
