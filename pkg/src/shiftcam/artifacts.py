"""On-disk artifact formats with full provenance.

Measurement files are a plain-text header of key=value lines terminated by
one blank line, followed by a little-endian float64 payload whose length is
declared in the header. Patterns are exported as 0/255 PGM plus a sidecar
text header. Both regenerate bit-exactly from their recorded seeds.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .errors import ProvenanceError
from .image_io import ImagePlane, load_image, save_image
from .optics import Psf
from .sensing import MeasurementSet, ModulatorPattern, GENERATOR_NAME

MEASUREMENT_FORMAT = "shiftcam-measurements-v1"


def psf_hash(psf: Psf) -> str:
    """Stable identity of a kernel: sha256 over shape and raw little-endian bytes."""
    h = hashlib.sha256()
    h.update(np.asarray(psf.kernel.shape, dtype="<i8").tobytes())
    h.update(psf.kernel.astype("<f8").tobytes())
    return h.hexdigest()


NO_PSF_HASH = "none"


def write_measurements(path, meas: MeasurementSet, pattern_seed: int, psf_digest: str,
                       extra: dict | None = None) -> None:
    path = Path(path)
    m, n = meas.image_dims
    header = {
        "format": MEASUREMENT_FORMAT,
        "count": str(len(meas)),
        "dtype": "float64-le",
        "architecture": meas.architecture,
        "stage": meas.stage,
        "image_rows": str(m),
        "image_cols": str(n),
        "pattern_seed": str(pattern_seed),
        "generator": GENERATOR_NAME,
        "psf_hash": psf_digest,
    }
    if meas.i_total is not None:
        header["i_total"] = repr(float(meas.i_total))
    if extra:
        header.update({k: str(v) for k, v in extra.items()})
    lines = "".join(f"{k}={v}\n" for k, v in header.items())
    path.write_bytes(lines.encode("utf-8") + b"\n" + meas.values.astype("<f8").tobytes())


def read_measurements(path):
    """Returns (MeasurementSet, header dict)."""
    path = Path(path)
    data = path.read_bytes()
    sep = data.find(b"\n\n")
    if sep < 0:
        raise ProvenanceError(f"{path}: missing blank line terminating the header")
    header = {}
    for lineno, line in enumerate(data[:sep].decode("utf-8").splitlines(), start=1):
        if "=" not in line:
            raise ProvenanceError(f"{path}:{lineno}: malformed header line {line!r}")
        key, _, value = line.partition("=")
        header[key] = value
    if header.get("format") != MEASUREMENT_FORMAT:
        raise ProvenanceError(f"{path}: unknown format {header.get('format')!r}")
    required = ("count", "architecture", "stage", "image_rows", "image_cols", "pattern_seed")
    missing = [k for k in required if k not in header]
    if missing:
        raise ProvenanceError(f"{path}: header missing keys {missing}")
    try:
        count = int(header["count"])
        m = int(header["image_rows"])
        n = int(header["image_cols"])
    except ValueError as exc:
        raise ProvenanceError(f"{path}: non-integer header field ({exc})") from exc
    payload = data[sep + 2 :]
    if len(payload) != 8 * count:
        raise ProvenanceError(f"{path}: payload is {len(payload)} bytes, expected {8 * count}")
    values = np.frombuffer(payload, dtype="<f8")
    i_total = float(header["i_total"]) if "i_total" in header else None
    try:
        meas = MeasurementSet(
            values=values,
            architecture=header["architecture"],
            stage=header["stage"],
            image_dims=(m, n),
            i_total=i_total,
        )
    except ValueError as exc:
        raise ProvenanceError(f"{path}: inconsistent header ({exc})") from exc
    return meas, header


def write_pattern(path, pattern: ModulatorPattern) -> None:
    """Export the grid as a 0/255 PGM with a sidecar .txt provenance header."""
    path = Path(path)
    save_image(ImagePlane(pattern.grid.astype(np.float64)), path)
    sidecar = path.with_suffix(path.suffix + ".txt")
    sidecar.write_text(
        f"m={pattern.base_rows}\n"
        f"n={pattern.base_cols}\n"
        f"seed={pattern.seed}\n"
        f"generator={GENERATOR_NAME}\n"
        "tiled=true\n"
    )


def read_pattern(path) -> ModulatorPattern:
    """Rebuild a pattern from its PGM export and sidecar header."""
    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".txt")
    if not sidecar.exists():
        raise ProvenanceError(f"{path}: missing sidecar header {sidecar.name}")
    fields = {}
    for line in sidecar.read_text().splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    missing = [k for k in ("m", "n", "seed") if k not in fields]
    if missing:
        raise ProvenanceError(f"{sidecar}: header missing keys {missing}")
    img = load_image(path)
    grid = img.values
    if not np.isin(grid, (0.0, 1.0)).all():
        raise ProvenanceError(f"{path}: pattern PGM is not a 0/255 binary image")
    try:
        return ModulatorPattern(
            base_rows=int(fields["m"]),
            base_cols=int(fields["n"]),
            grid=grid.astype(np.uint8),
            seed=int(fields["seed"]),
        )
    except ValueError as exc:
        raise ProvenanceError(f"{path}: inconsistent pattern export ({exc})") from exc
