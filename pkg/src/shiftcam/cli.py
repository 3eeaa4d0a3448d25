"""Command-line entry point.

Subcommands: ``psf`` (kernel computation and export), ``acquire`` (single-shot
physical simulation), ``reconstruct`` (recovery from a measurement artifact),
``table`` (the full comparative experiment). Exit codes: 0 ok, 2 configuration
or input error, 3 numerical failure, 4 acceptance check failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import artifacts
from .config import CONFIG_SCHEMA, load_config
from .errors import (
    ConfigError,
    ImageFormatError,
    ProvenanceError,
    QuadratureError,
    ShiftcamError,
    SolverDivergenceError,
)
from .harness import CAMERAS, ExperimentConfig, replicate, run_experiment
from .image_io import ImagePlane, load_image, save_image
from .optics import compute_psf
from .sensing import (
    convert_measurements,
    generate_pattern,
    i_total_from_b,
    make_operator,
)
from .solver import reconstruct

log = logging.getLogger("shiftcam")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CHECK_FAILED = 4

GRID_COLUMNS = ("classic_full", "classic_half", "sequential_ci", "parallel_A", "parallel_B")

CSV_COLUMNS = (
    "image",
    "camera",
    "trial",
    "seed",
    "normalized_mse",
    "mse",
    "residual",
    "i_total_rel_err",
    "wall_ms",
    "shots",
)


def _add_config_flags(parser):
    parser.add_argument("--config", metavar="FILE", help="key=value configuration file")
    for key in CONFIG_SCHEMA:
        parser.add_argument(f"--{key}", dest=_dest(key), metavar="VALUE", help=argparse.SUPPRESS)


def _dest(key: str) -> str:
    return "cfgkey__" + key.replace(".", "__")


def _collect_overrides(args) -> dict:
    out = {}
    for key in CONFIG_SCHEMA:
        raw = getattr(args, _dest(key), None)
        if raw is not None:
            parser, _ = CONFIG_SCHEMA[key]
            try:
                out[key] = parser(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for --{key}: {raw!r} ({exc})") from exc
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shiftcam", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p_psf = sub.add_parser("psf", help="compute and export the diffraction kernel")
    _add_config_flags(p_psf)
    p_psf.add_argument("--out", default=".", metavar="DIR")
    p_psf.add_argument("--radius", type=int, help="shorthand for --optics.kernel_radius")
    p_psf.add_argument("--distance", type=float, help="shorthand for --optics.propagation_distance")

    p_acq = sub.add_parser("acquire", help="simulate one physical acquisition")
    _add_config_flags(p_acq)
    p_acq.add_argument("image", help="input image (PGM or PNG)")
    p_acq.add_argument("--arch", choices=("full", "A", "B"), default="B")
    p_acq.add_argument("--seed", type=int, default=0)
    p_acq.add_argument("--out", default=".", metavar="DIR")
    p_acq.add_argument("--no-psf", action="store_true", help="skip diffraction blur")

    p_rec = sub.add_parser("reconstruct", help="recover an image from a measurement artifact")
    _add_config_flags(p_rec)
    p_rec.add_argument("measurements", help="measurement artifact from 'acquire'")
    p_rec.add_argument("--out", default=".", metavar="DIR")
    p_rec.add_argument("--trace", metavar="FILE", help="write iteration trace CSV")

    p_tab = sub.add_parser("table", help="run the comparative camera experiment")
    _add_config_flags(p_tab)
    p_tab.add_argument("--images", nargs="+", required=True, metavar="PATH")
    p_tab.add_argument("--out", default=".", metavar="DIR")
    p_tab.add_argument("--trials", type=int, help="shorthand for --experiment.trials")
    p_tab.add_argument("--seed-base", type=int, help="shorthand for --experiment.seed_base")
    p_tab.add_argument("--size", type=int, help="shorthand for --experiment.target_size")
    p_tab.add_argument("--cameras", default=",".join(CAMERAS), metavar="LIST")
    p_tab.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p_tab.add_argument("--timings", action="store_true", help="fill the wall_ms column (non-deterministic)")
    p_tab.add_argument("--check", action="store_true", help="exit 4 unless A and B beat classic_half")
    return parser


def _load_global_config(args, extra_overrides=None):
    overrides = _collect_overrides(args)
    if extra_overrides:
        overrides.update(extra_overrides)
    return load_config(file_path=args.config, overrides=overrides)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def cmd_psf(args) -> int:
    extra = {}
    if args.radius is not None:
        extra["optics.kernel_radius"] = args.radius
    if args.distance is not None:
        extra["optics.propagation_distance"] = args.distance
    cfg = _load_global_config(args, extra)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    psf, report = compute_psf(cfg.optics(), return_report=True)

    csv_path = out / "psf.csv"
    with csv_path.open("w") as fh:
        for row in psf.kernel:
            fh.write(",".join(_fmt(v) for v in row) + "\n")

    heat = psf.kernel / psf.kernel.max()
    save_image(replicate(ImagePlane(heat), 16), out / "psf.png")

    digest = artifacts.psf_hash(psf)
    kernel_sum = _fmt(psf.kernel.sum())
    with (out / "psf_convergence.txt").open("w") as fh:
        fh.write(f"kernel_side={psf.kernel.shape[0]}\n")
        fh.write(f"kernel_sum={kernel_sum}\n")
        fh.write(f"center_entry={_fmt(psf.kernel[psf.radius, psf.radius])}\n")
        fh.write(f"psf_hash={digest}\n")
        for oversampling, change in report:
            fh.write(f"oversampling={oversampling} max_entry_change={change:.3e}\n")
        fh.write("converged=true\n")
    print(f"psf: {psf.kernel.shape[0]}x{psf.kernel.shape[0]} kernel, sum={kernel_sum}, "
          f"written to {out}")
    return EXIT_OK


def _psf_for(cfg, skip: bool):
    if skip:
        return None, artifacts.NO_PSF_HASH
    psf = compute_psf(cfg.optics())
    return psf, artifacts.psf_hash(psf)


def cmd_acquire(args) -> int:
    cfg = _load_global_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    img = load_image(args.image)
    m, n = img.shape
    if m % 2 or n % 2:
        raise ConfigError(f"image dimensions must be even for acquisition, got {m}x{n}")
    pattern = generate_pattern(m, n, args.seed)
    psf, digest = _psf_for(cfg, args.no_psf)
    operator = make_operator(pattern, psf=psf, mode="raw01", architecture=args.arch)
    raw = operator.forward(img)
    if args.arch == "A":
        # architecture A cannot derive I_total in-band: simulate the second,
        # all-open acquisition and record it with the measurements
        raw = dataclasses.replace(raw, i_total=float(img.values.sum()))
    stem = Path(args.image).stem
    meas_path = out / f"{stem}_{args.arch}_seed{args.seed}.meas"
    artifacts.write_measurements(meas_path, raw, pattern_seed=args.seed, psf_digest=digest)
    artifacts.write_pattern(out / f"{stem}_pattern_seed{args.seed}.pgm", pattern)
    print(f"acquire: {len(raw)} raw measurements ({args.arch}) -> {meas_path}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    cfg = _load_global_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meas, header = artifacts.read_measurements(args.measurements)
    m = int(header["image_rows"])
    n = int(header["image_cols"])
    pattern = generate_pattern(m, n, int(header["pattern_seed"]))
    skip_psf = header.get("psf_hash", artifacts.NO_PSF_HASH) == artifacts.NO_PSF_HASH
    psf, digest = _psf_for(cfg, skip_psf)
    if digest != header.get("psf_hash"):
        raise ProvenanceError(
            f"psf hash mismatch: artifact was acquired with {header.get('psf_hash')}, "
            f"current optics give {digest}"
        )
    in_band = False
    if meas.stage == "raw":
        if meas.architecture == "A":
            if meas.i_total is None:
                raise ProvenanceError("architecture A artifact lacks the recorded i_total shot")
            i_total = meas.i_total
        else:
            i_total = i_total_from_b(meas, pattern)
            in_band = True
        meas = convert_measurements(meas, i_total)
    operator = make_operator(
        pattern, psf=psf, mode="bipolar", architecture=meas.architecture,
        in_band_correction=in_band,
    )
    result = reconstruct(operator, meas, cfg.solver())
    stem = Path(args.measurements).stem
    img_path = out / f"{stem}_recon.png"
    save_image(result.image, img_path)
    with (out / f"{stem}_metrics.txt").open("w") as fh:
        fh.write(f"iterations={result.iterations}\n")
        fh.write(f"residual={_fmt(result.final_residual)}\n")
        fh.write(f"architecture={meas.architecture}\n")
        fh.write(f"pattern_seed={header['pattern_seed']}\n")
        fh.write(f"psf_hash={header.get('psf_hash')}\n")
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write("iteration,objective,residual\n")
            for i, (obj, res) in enumerate(zip(result.objective_trace, result.residual_trace), 1):
                fh.write(f"{i},{_fmt(obj)},{_fmt(res)}\n")
    print(f"reconstruct: {result.iterations} iterations, residual {result.final_residual:.3e} "
          f"-> {img_path}")
    return EXIT_OK


def cmd_table(args) -> int:
    extra = {}
    if args.trials is not None:
        extra["experiment.trials"] = args.trials
    if args.seed_base is not None:
        extra["experiment.seed_base"] = args.seed_base
    if args.size is not None:
        extra["experiment.target_size"] = args.size
    cfg = _load_global_config(args, extra)
    cameras = tuple(c.strip() for c in args.cameras.split(",") if c.strip())
    size = cfg["experiment.target_size"]
    exp = ExperimentConfig(
        image_paths=tuple(args.images),
        target_dims=(size, size),
        trials=cfg["experiment.trials"],
        seed_base=cfg["experiment.seed_base"],
        cameras=cameras,
        optics=cfg.optics(),
        solver=cfg.solver(),
        mse_reference=cfg["experiment.mse_reference"],
        apply_psf=cfg["experiment.apply_psf"],
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, records, grids = run_experiment(exp, jobs=args.jobs, keep_timings=args.timings)

    csv_path = out / "results.csv"
    with csv_path.open("w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in records:
            fh.write(
                ",".join(
                    (
                        r.image,
                        r.camera,
                        str(r.trial),
                        str(r.seed),
                        _fmt(r.normalized_mse),
                        _fmt(r.mse),
                        _fmt(r.residual),
                        _fmt(r.i_total_rel_err),
                        _fmt(r.wall_ms),
                        str(r.shots),
                    )
                )
                + "\n"
            )

    for image, recons in grids.items():
        _write_grid(out, image, recons, rows)

    for row in rows:
        print(
            f"{row.image:>16}  {row.camera:<14} "
            f"{row.mean_normalized_mse:7.3f} ({row.std_normalized_mse:.3f})"
        )
    print(f"table: {len(records)} records -> {csv_path}")

    if args.check and not _ordering_holds(rows):
        print("check FAILED: parallel A/B do not both beat classic_half", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def _ordering_holds(rows) -> bool:
    by_image = {}
    for row in rows:
        by_image.setdefault(row.image, {})[row.camera] = row.mean_normalized_mse
    for image, values in by_image.items():
        half = values.get("classic_half")
        if half is None:
            continue
        for camera in ("parallel_A", "parallel_B"):
            if camera in values and values[camera] > half:
                log.warning("%s: %s %.3f exceeds classic_half %.3f", image, camera, values[camera], half)
                return False
    return True


def _write_grid(out: Path, image: str, recons: dict, rows) -> int:
    panels = [recons[c].values for c in GRID_COLUMNS if c in recons]
    if not panels:
        return 0
    height = max(p.shape[0] for p in panels)
    sep = np.ones((height, 2))
    padded = []
    for p in panels:
        if p.shape[0] != height:
            p = np.pad(p, ((0, height - p.shape[0]), (0, 0)), constant_values=1.0)
        padded.append(np.clip(p, 0.0, 1.0))
    strip = np.hstack([arr for pair in zip(padded, [sep] * len(padded)) for arr in pair][:-1])
    save_image(ImagePlane(strip), out / f"grid_{image}.png")
    with (out / f"grid_{image}_caption.txt").open("w") as fh:
        fh.write(f"columns: {', '.join(c for c in GRID_COLUMNS if c in recons)}\n")
        for row in rows:
            if row.image == image:
                fh.write(
                    f"{row.camera}: normalized_mse={_fmt(row.mean_normalized_mse)} "
                    f"(std {_fmt(row.std_normalized_mse)})\n"
                )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose >= 2 else logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s %(levelname)s %(message)s",
    )
    handlers = {
        "psf": cmd_psf,
        "acquire": cmd_acquire,
        "reconstruct": cmd_reconstruct,
        "table": cmd_table,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, ProvenanceError, ImageFormatError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"shiftcam: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuadratureError, SolverDivergenceError, FloatingPointError) as exc:
        print(f"shiftcam: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ShiftcamError as exc:
        print(f"shiftcam: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
