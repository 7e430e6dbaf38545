"""Binary containers, raw detector ingestion and phase-map output.

All multi-byte values are little-endian.

MS4D dataset container::

    4s   magic "MS4D"
    u32  version block (bits 0-15 format version, 16-23 bin factor of ingested
         data, bit 24 set for data ingested from a raw detector file)
    u32  n, scan_y, scan_x
    f64  voltage (V), pixel size (m), Fresnel distance (m)
    f64  scan_y * scan_x * n * n intensities ordered [scan_y][scan_x][y][x]

Slice files (magic "MS4S": ground-truth sidecars and reconstructions)::

    4s magic, u32 version, u32 n, u32 m, f64 voltage, f64 pixel size,
    f64 Fresnel distance, then n*n probe values and m*n*n slice values, each
    complex stored as (real, imag) f64 pairs

Scattering-matrix artifacts (magic "MS4A")::

    4s magic, u32 version, u32 n, then (n*n)**2 complex values, row-major
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContainerError, DimensionMismatch, MissingArtifact, SizeMismatch

FORMAT_VERSION = 1
INGESTED_FLAG = 1 << 24

_MS4D = struct.Struct("<4sIIIIddd")
_MS4S = struct.Struct("<4sIIIddd")
_MS4A = struct.Struct("<4sII")


@dataclass
class MS4DContainer:
    n: int
    scan_y: int
    scan_x: int
    voltage: float
    pixel_size: float
    fresnel_distance: float
    intensities: np.ndarray  # (scan_y, scan_x, n, n)
    version: int = FORMAT_VERSION

    @property
    def format_version(self):
        return self.version & 0xFFFF

    @property
    def bin_factor(self):
        return (self.version >> 16) & 0xFF

    @property
    def ingested(self):
        return bool(self.version & INGESTED_FLAG)


def _read_bytes(path):
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except FileNotFoundError:
        raise MissingArtifact(f"no such file: {path}") from None


def write_ms4d(path, c):
    data = np.ascontiguousarray(c.intensities, dtype="<f8")
    if data.shape != (c.scan_y, c.scan_x, c.n, c.n):
        raise DimensionMismatch(f"payload {data.shape} does not match header")
    with open(path, "wb") as fh:
        fh.write(_MS4D.pack(b"MS4D", c.version, c.n, c.scan_y, c.scan_x,
                            c.voltage, c.pixel_size, c.fresnel_distance))
        fh.write(data.tobytes())


def read_ms4d(path):
    raw = _read_bytes(path)
    if len(raw) < _MS4D.size:
        raise ContainerError(f"{path}: truncated header")
    magic, version, n, sy, sx, volt, px, dz = _MS4D.unpack_from(raw)
    if magic != b"MS4D":
        raise ContainerError(f"{path}: bad magic {magic!r}")
    expected = _MS4D.size + 8 * sy * sx * n * n
    if len(raw) != expected:
        raise SizeMismatch(expected, len(raw))
    data = np.frombuffer(raw, dtype="<f8", offset=_MS4D.size).reshape(sy, sx, n, n).astype(float)
    if np.any(data < 0) or not np.all(np.isfinite(data)):
        raise ContainerError(f"{path}: negative or non-finite intensities")
    return MS4DContainer(n, sy, sx, volt, px, dz, data, version)


def _complex_bytes(z):
    z = np.asarray(z, dtype=complex).reshape(-1)
    pairs = np.empty(2 * z.size, dtype="<f8")
    pairs[0::2] = z.real
    pairs[1::2] = z.imag
    return pairs.tobytes()


def _complex_from(raw, offset, count):
    pairs = np.frombuffer(raw, dtype="<f8", count=2 * count, offset=offset)
    return pairs[0::2] + 1j * pairs[1::2]


@dataclass
class SliceFile:
    n: int
    probe: np.ndarray  # (n, n)
    slices: list  # m arrays (n, n)
    voltage: float = 0.0
    pixel_size: float = 0.0
    fresnel_distance: float = 0.0


def write_slices(path, sf):
    with open(path, "wb") as fh:
        fh.write(_MS4S.pack(b"MS4S", FORMAT_VERSION, sf.n, len(sf.slices), sf.voltage, sf.pixel_size,
                            sf.fresnel_distance))
        fh.write(_complex_bytes(sf.probe))
        for s in sf.slices:
            fh.write(_complex_bytes(s))


def read_slices(path):
    raw = _read_bytes(path)
    if len(raw) < _MS4S.size:
        raise ContainerError(f"{path}: truncated header")
    magic, _version, n, m, volt, px, dz = _MS4S.unpack_from(raw)
    if magic != b"MS4S":
        raise ContainerError(f"{path}: bad magic {magic!r}")
    n2 = n * n
    expected = _MS4S.size + 16 * n2 * (m + 1)
    if len(raw) != expected:
        raise SizeMismatch(expected, len(raw))
    off = _MS4S.size
    probe = _complex_from(raw, off, n2).reshape(n, n)
    slices = [_complex_from(raw, off + 16 * n2 * (k + 1), n2).reshape(n, n) for k in range(m)]
    return SliceFile(n, probe, slices, volt, px, dz)


def write_matrix(path, a):
    a = np.asarray(a, dtype=complex)
    n = int(round(np.sqrt(a.shape[0])))
    if a.shape != (n * n, n * n):
        raise DimensionMismatch(f"expected an (n^2, n^2) matrix, got {a.shape}")
    with open(path, "wb") as fh:
        fh.write(_MS4A.pack(b"MS4A", FORMAT_VERSION, n))
        fh.write(_complex_bytes(a))


def read_matrix(path):
    raw = _read_bytes(path)
    if len(raw) < _MS4A.size:
        raise ContainerError(f"{path}: truncated header")
    magic, _version, n = _MS4A.unpack_from(raw)
    if magic != b"MS4A":
        raise ContainerError(f"{path}: bad magic {magic!r}")
    n2 = n * n
    expected = _MS4A.size + 16 * n2 * n2
    if len(raw) != expected:
        raise SizeMismatch(expected, len(raw))
    return _complex_from(raw, _MS4A.size, n2 * n2).reshape(n2, n2)


# ---------------------------------------------------------------- raw ingestion

_DTYPES = {"u8": "u1", "u16": "u2", "u32": "u4", "uint8": "u1", "uint16": "u2", "uint32": "u4"}


def center_crop(frames, size):
    """Central ``size x size`` window of the last two axes."""
    det = frames.shape[-1]
    if size > det:
        raise ValueError(f"crop {size} larger than detector {det}")
    if size & (size - 1):
        raise ValueError(f"crop size {size} is not a power of two")
    off = (det - size) // 2
    return frames[..., off:off + size, off:off + size]


def bin_frames(frames, k):
    """Sum-pool the last two axes in ``k x k`` blocks."""
    det = frames.shape[-1]
    if det % k:
        raise ValueError(f"detector size {det} not divisible by bin factor {k}")
    shape = frames.shape[:-2] + (det // k, k, det // k, k)
    return frames.reshape(shape).sum(axis=(-3, -1))


def ingest_raw(path, scan_y, scan_x, det_n, dtype="u16", endianness="little", crop=None, bin_factor=1,
               voltage=0.0, pixel_size=0.0, fresnel_distance=0.0):
    """Read a headerless stack of unsigned-integer frames into an MS4D container."""
    try:
        code = _DTYPES[dtype]
    except KeyError:
        raise ValueError(f"unsupported dtype {dtype!r}") from None
    dt = np.dtype(("<" if endianness == "little" else ">") + code)
    raw = _read_bytes(path)
    expected = scan_y * scan_x * det_n * det_n * dt.itemsize
    if len(raw) != expected:
        raise SizeMismatch(expected, len(raw))
    frames = np.frombuffer(raw, dtype=dt).reshape(scan_y, scan_x, det_n, det_n).astype(float)
    if crop is not None:
        frames = center_crop(frames, crop)
    if bin_factor > 1:
        frames = bin_frames(frames, bin_factor)
    version = FORMAT_VERSION | ((bin_factor & 0xFF) << 16) | INGESTED_FLAG
    return MS4DContainer(frames.shape[-1], scan_y, scan_x, voltage, pixel_size, fresnel_distance,
                         np.ascontiguousarray(frames), version)


# ---------------------------------------------------------------- phase maps

def render_phase_map(diag, out_stem):
    """Write ``arg(diag)`` as ``<stem>.pgm`` (8-bit, min..max stretch) and ``<stem>.csv``.

    Returns the ``(pgm_path, csv_path)`` pair.
    """
    d = np.asarray(diag, dtype=complex)
    n = int(round(np.sqrt(d.size)))
    return write_map(np.angle(d).reshape(n, n), out_stem, "phase", "rad")


def write_map(values, out_stem, label="value", unit="", extra_comments=()):
    """Grayscale PGM plus full-precision CSV of a real ``(n, n)`` map."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    pixels = np.zeros((n, n), dtype=np.uint8) if span == 0 else \
        np.round((values - lo) / span * 255).astype(np.uint8)
    pgm, csv_path = f"{out_stem}.pgm", f"{out_stem}.csv"
    try:
        with open(pgm, "wb") as fh:
            header = f"P5\n# {label} range {lo!r} {hi!r} {unit} (span {span!r})\n"
            header += "".join(f"# {c}\n" for c in extra_comments)
            fh.write(f"{header}{n} {n}\n255\n".encode())
            fh.write(pixels.tobytes())
        np.savetxt(csv_path, values, delimiter=",", fmt="%.17g")
    except OSError as exc:
        raise OSError(f"cannot write phase map {out_stem}: {exc}") from exc
    return pgm, csv_path


def read_pgm(path):
    """Minimal P5 reader returning ``(pixels, comment_lines)``."""
    raw = _read_bytes(path)
    tokens, comments, pos = [], [], 0
    while len(tokens) < 4:
        end = raw.index(b"\n", pos)
        line = raw[pos:end].decode()
        pos = end + 1
        if line.startswith("#"):
            comments.append(line[1:].strip())
        else:
            tokens += line.split()
    if tokens[0] != "P5":
        raise ContainerError(f"{path}: not a binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    return np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w), comments
