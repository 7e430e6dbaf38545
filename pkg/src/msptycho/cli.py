"""Command-line workflows: ``msptycho <command> --config run.cfg``.

Exit codes: 0 ok, 2 configuration error, 3 data error (unreadable,
corrupt or inconsistent inputs, missing artifacts), 4 solver failure.
Default file names inside the output directory are ``dataset.ms4d``,
``truth.ms4s``, ``reconstruction.ms4s``, ``a_hat.ms4a`` and ``history.csv``;
``paths.*`` keys override them.
"""

import argparse
import os
import sys

import numpy as np

from . import io
from .config import SUPPORTED_N, load_config
from .errors import ConfigError, ContainerError, DimensionMismatch, MissingArtifact
from .estimators import LayerwiseReconstructor, ProbeReconstructor, SparseMatrixDecomposition
from .forward import (Dataset4D, ScanPlan, assemble_scattering_matrix, probe_matrix, propagators_for,
                      shift_probe, simulate_dataset)
from .metrics import (ErrorReport, aligned_reconstruction_error, per_slice_errors, relative_measurement_error,
                      write_history_csv)
from .physics import BeamParameters, SamplingGeometry, make_probe
from .specimen import NM, SliceStack, random_phantom, render_slices, scale_strengths

DENSE_LIMIT = 32  # largest n for which a dense A_hat is written after a layer-wise run


class DataError(Exception):
    pass


class SolverFailure(Exception):
    pass


def _path(cfg, args, key, default_name):
    if key in cfg.paths:
        return cfg.paths[key]
    return os.path.join(_out_dir(cfg, args), default_name)


def _out_dir(cfg, args):
    return args.out or cfg.paths.get("out", "out")


def _beam(cfg, voltage=None):
    try:
        return BeamParameters(voltage if voltage is not None else cfg.voltage, cfg.semiconv_angle)
    except ValueError as exc:
        raise ConfigError("beam.voltage_kv", str(exc)) from None


# ---------------------------------------------------------------- simulate

def _specimen(cfg, seed):
    n = cfg.n
    if n is None:
        raise ConfigError("geometry.n", "required for simulation")
    if cfg.specimen_kind == "crystal":
        spec = scale_strengths(cfg.crystal, cfg.voltage)
        px = cfg.pixel_size
        if px is None:
            px = max(spec.extent) * NM / n
        geom = SamplingGeometry(n, px)
        try:
            stack = render_slices(spec, geom, cfg.cells_depth)
        except ValueError as exc:
            raise ConfigError("geometry", str(exc)) from None
        return geom, stack
    if cfg.pixel_size is None:
        raise ConfigError("geometry.pixel_size_nm", "required for phantom and vacuum specimens")
    geom = SamplingGeometry(n, cfg.pixel_size)
    dz = cfg.specimen_distance
    if cfg.specimen_kind == "vacuum":
        stack = SliceStack([np.ones((n, n), dtype=complex)] * cfg.slices, [dz] * (cfg.slices - 1), geom)
    else:
        stack = random_phantom(geom, cfg.slices, cfg.phase_scale, seed=seed, distance=dz)
    return geom, stack


def _scan(cfg, n):
    ny = cfg.scan_ny if cfg.scan_ny is not None else n
    nx = cfg.scan_nx if cfg.scan_nx is not None else n
    return ScanPlan.raster(ny, nx, cfg.scan_step, cfg.scan_offset)


def cmd_simulate(cfg, args):
    seed = args.seed if args.seed is not None else cfg.seed
    geom, stack = _specimen(cfg, seed)
    beam = _beam(cfg)
    scan = _scan(cfg, geom.n)
    data = simulate_dataset(stack, beam, geom, scan, n_jobs=args.threads)
    dz = stack.distances[0] if stack.distances else cfg.specimen_distance
    sy, sx = scan.shape
    out = _path(cfg, args, "data", "dataset.ms4d")
    truth = _path(cfg, args, "truth", "truth.ms4s")
    for p in (out, truth):
        os.makedirs(os.path.dirname(p) or ".", exist_ok=True)
    io.write_ms4d(out, io.MS4DContainer(geom.n, sy, sx, beam.voltage, geom.pixel_size, dz,
                                        data.intensities.reshape(sy, sx, geom.n, geom.n)))
    io.write_slices(truth, io.SliceFile(geom.n, make_probe(beam, geom), stack.slices, beam.voltage,
                                        geom.pixel_size, dz))
    print(f"S={len(scan)} N={geom.n} M={stack.n_slices} total_intensity={data.intensities.sum():.12g}")
    return 0


# ---------------------------------------------------------------- reconstruct

def _load_dataset(cfg, args):
    path = _path(cfg, args, "data", "dataset.ms4d")
    c = io.read_ms4d(path)
    if cfg.n is not None and cfg.n != c.n:
        raise DataError(f"grid size mismatch: config geometry.n={cfg.n} but container {path} has n={c.n}")
    if c.n not in SUPPORTED_N:
        raise DataError(f"container grid size n={c.n} is not supported")
    if c.pixel_size <= 0:
        raise DataError(f"{path}: pixel size must be positive, got {c.pixel_size}")
    geom = SamplingGeometry(c.n, c.pixel_size)
    beam = _beam(cfg, c.voltage if c.voltage > 0 else None)
    scan = ScanPlan.raster(c.scan_y, c.scan_x, cfg.scan_step, cfg.scan_offset)
    data = Dataset4D(geom, scan, c.intensities.reshape(-1, c.n, c.n), beam, [c.fresnel_distance])
    if not np.any(data.intensities):
        raise DataError(f"{path}: all intensities are zero")
    return data


def _load_truth(cfg, args, n):
    path = _path(cfg, args, "truth", "truth.ms4s")
    if not os.path.exists(path):
        return None
    sf = io.read_slices(path)
    if sf.n != n:
        raise DataError(f"truth sidecar {path} has n={sf.n}, dataset has n={n}")
    return sf


def _report(iteration, slices, error, truth):
    rep = ErrorReport(iteration, float(error))
    if truth is not None and len(truth.slices) == len(slices):
        errs = per_slice_errors(truth.slices, slices)
        rep.relative_reconstruction_error = float(np.mean(errs))
        rep.aligned_reconstruction_error = aligned_reconstruction_error(truth.slices, slices)
        rep.per_slice_errors = errs
    return rep


def _write_outputs(out, slices, kernels, a_hat, reports, dz, data):
    os.makedirs(out, exist_ok=True)
    n = data.n
    for m, s in enumerate(slices, 1):
        io.render_phase_map(s, os.path.join(out, f"slice_{m}"))
    write_history_csv(os.path.join(out, "history.csv"), reports)
    probe = make_probe(data.beam, data.geom)
    io.write_slices(os.path.join(out, "reconstruction.ms4s"),
                    io.SliceFile(n, probe, [np.reshape(s, (n, n)) for s in slices], data.beam.voltage,
                                 data.geom.pixel_size, dz))
    if a_hat is None and n <= DENSE_LIMIT:
        a_hat = assemble_scattering_matrix(slices, kernels)
    if a_hat is not None:
        io.write_matrix(os.path.join(out, "a_hat.ms4a"), a_hat)


def cmd_reconstruct(cfg, args, algorithm):
    data = _load_dataset(cfg, args)
    truth = _load_truth(cfg, args, data.n)
    out = _out_dir(cfg, args)
    probes = probe_matrix(make_probe(data.beam, data.geom), data.scan)

    if args.debug_truth_a:
        if truth is None:
            raise MissingArtifact("--debug-truth-a needs the ground-truth sidecar")
        kernels = propagators_for(data.geom, data.beam.wavelength, [truth.fresnel_distance] * (len(truth.slices) - 1))
        a_hat = assemble_scattering_matrix(truth.slices, kernels, allow_large=True)
        err = relative_measurement_error(data, a_hat, probes)
        reports = [_report(0, truth.slices, err, truth)]
        _write_outputs(out, truth.slices, kernels, a_hat, reports, truth.fresnel_distance, data)
        print(f"relative_measurement_error={err:.6e} (ground-truth A bypass)")
        return 0

    m = cfg.inv_slices or 1
    dz = cfg.inv_distance if cfg.inv_distance is not None else data.distances[0]
    params = dict(n_slices=m, fresnel_distance=dz, n_iter=cfg.T, n_grad_steps=cfg.K, stop_tol=cfg.stop_tol,
                  learning_rate_safety=cfg.safety, patience=cfg.patience,
                  random_state=args.seed if args.seed is not None else cfg.seed)
    if algorithm == "layerwise":
        est = LayerwiseReconstructor(**params)
    else:
        est = SparseMatrixDecomposition(n_decomp_steps=cfg.decomp_steps, **params)
    reports = []
    try:
        with np.errstate(invalid="raise", over="raise"):
            est.fit(data, probes, callback=lambda t, s, e: reports.append(_report(t, s, e, truth)))
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        raise SolverFailure(f"{algorithm} solver failed: {exc}") from exc
    slices = [s.reshape(-1) for s in est.slices_]
    if not all(np.all(np.isfinite(s)) for s in slices):
        raise SolverFailure(f"{algorithm} solver produced non-finite slices")
    a_hat = getattr(est, "scattering_matrix_", None)
    _write_outputs(out, slices, est.kernels_, a_hat, reports, dz, data)
    last = reports[-1]
    line = f"iterations={est.n_iter_} relative_measurement_error={last.relative_measurement_error:.6e}"
    if not np.isnan(last.aligned_reconstruction_error):
        line += f" aligned_reconstruction_error={last.aligned_reconstruction_error:.6e}"
    print(line)
    return 0


# ---------------------------------------------------------------- probe

def cmd_reconstruct_probe(cfg, args):
    data = _load_dataset(cfg, args)
    a_path = _path(cfg, args, "a_hat", "a_hat.ms4a")
    a_hat = io.read_matrix(a_path)
    n = data.n
    if a_hat.shape[0] != n * n:
        raise DataError(f"A_hat in {a_path} is for n={int(round(np.sqrt(a_hat.shape[0])))}, dataset has n={n}")
    c = data.scan.center_index()
    x, y = data.scan.positions[c]
    # peak-normalised Airy disk at the centre position
    p0 = make_probe(data.beam, data.geom)
    p0 = shift_probe(p0 / np.abs(p0).max(), x % n, y % n)
    est = ProbeReconstructor(n_steps=cfg.probe_steps).fit(data.intensities[c], a_hat, p0)
    probe = np.roll(est.probe_, (n // 2 - y % n, n // 2 - x % n), axis=(0, 1))
    peak = np.unravel_index(np.argmax(np.abs(probe)), probe.shape)
    offset = float(np.angle(probe[peak]))
    probe = probe * np.exp(-1j * offset)
    out = _out_dir(cfg, args)
    os.makedirs(out, exist_ok=True)
    note = [f"scan position {c} (x={x}, y={y}) rolled to grid centre",
            f"global phase offset {offset!r} rad removed (phase zero at amplitude peak)"]
    io.write_map(np.abs(probe) / np.abs(probe).max(), os.path.join(out, "probe_amplitude"), "amplitude",
                 "normalised", note)
    io.write_map(np.angle(probe), os.path.join(out, "probe_phase"), "phase", "rad", note)
    io.write_slices(os.path.join(out, "probe.ms4s"),
                    io.SliceFile(n, probe, [], data.beam.voltage, data.geom.pixel_size, data.distances[0]))
    pred = est.predict()
    err = np.linalg.norm(np.sqrt(pred) - np.sqrt(data.intensities[c])) / np.linalg.norm(np.sqrt(data.intensities[c]))
    print(f"centre_index={c} pattern_error={err:.6e} global_phase={offset:.6f}")
    return 0


# ---------------------------------------------------------------- ingest / metrics

def cmd_ingest(cfg, args):
    opts = cfg.ingest
    for key in ("scan_y", "scan_x", "det_n"):
        if key not in opts:
            raise ConfigError(f"ingest.{key}", "required for ingestion")
    if "raw" not in cfg.paths:
        raise ConfigError("paths.raw", "required for ingestion")
    try:
        sy, sx, det = int(opts["scan_y"]), int(opts["scan_x"]), int(opts["det_n"])
        crop = int(opts["crop"]) if "crop" in opts else None
        k = int(opts.get("bin", 1))
    except ValueError as exc:
        raise ConfigError("ingest", str(exc)) from None
    endian = opts.get("endianness", "little")
    if endian not in ("little", "big"):
        raise ConfigError("ingest.endianness", "expected little or big")
    try:
        c = io.ingest_raw(cfg.paths["raw"], sy, sx, det, opts.get("dtype", "u16"), endian, crop, k, cfg.voltage,
                          cfg.pixel_size or 0.0, cfg.specimen_distance)
    except ContainerError:
        raise
    except ValueError as exc:
        raise ConfigError("ingest", str(exc)) from None
    out = _path(cfg, args, "data", "dataset.ms4d")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    io.write_ms4d(out, c)
    print(f"S={sy * sx} N={c.n} bin={k} total_intensity={c.intensities.sum():.12g}")
    return 0


def cmd_metrics(cfg, args):
    data = _load_dataset(cfg, args)
    truth = _load_truth(cfg, args, data.n)
    probes = probe_matrix(make_probe(data.beam, data.geom), data.scan)
    rec_path = _path(cfg, args, "slices", "reconstruction.ms4s")
    rec = io.read_slices(rec_path)
    if rec.n != data.n:
        raise DataError(f"reconstruction {rec_path} has n={rec.n}, dataset has n={data.n}")
    a_path = cfg.paths.get("a_hat")
    if a_path is not None:
        a_hat = io.read_matrix(a_path)
    else:
        kernels = propagators_for(data.geom, data.beam.wavelength, [rec.fresnel_distance] * (len(rec.slices) - 1))
        a_hat = assemble_scattering_matrix(rec.slices, kernels, allow_large=True)
    rep = _report(0, rec.slices, relative_measurement_error(data, a_hat, probes), truth)
    print(f"relative_measurement_error={rep.relative_measurement_error:.6e}")
    if rep.per_slice_errors:
        print(f"relative_reconstruction_error={rep.relative_reconstruction_error:.6e}")
        print(f"aligned_reconstruction_error={rep.aligned_reconstruction_error:.6e}")
    return 0


# ---------------------------------------------------------------- entry point

COMMANDS = {
    "simulate": cmd_simulate,
    "reconstruct-layerwise": lambda cfg, args: cmd_reconstruct(cfg, args, "layerwise"),
    "reconstruct-sparse": lambda cfg, args: cmd_reconstruct(cfg, args, "sparse"),
    "reconstruct-probe": cmd_reconstruct_probe,
    "ingest": cmd_ingest,
    "metrics": cmd_metrics,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="msptycho", description="Multislice ptychography toolkit.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="key=value run configuration")
    parser.add_argument("--out", help="output directory (overrides paths.out)")
    parser.add_argument("--seed", type=int, help="overrides solver.seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for simulation")
    parser.add_argument("--debug-truth-a", action="store_true",
                        help="skip the solver and use the ground-truth scattering matrix")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ContainerError, MissingArtifact, DimensionMismatch) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
