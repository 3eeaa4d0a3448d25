"""Grayscale image I/O, block downsampling, and synthetic test phantoms.

Images are carried as :class:`ImagePlane` objects holding a 2-D float64
intensity grid. Intensities are dimensionless irradiance values; files are
loaded as ``raw / 255`` exactly and written back by clamping to [0, 1],
scaling by 255 and rounding half away from zero, so byte-valued images
round-trip bit-exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ImageFormatError

PHANTOM_KINDS = ("flat", "quadrants", "disk")


@dataclass(frozen=True)
class ImagePlane:
    """Immutable 2-D intensity grid.

    Values are finite float64. Images produced by the loaders and phantoms
    lie in [0, 1]; reconstructions may transiently carry values outside that
    range (clamping happens only on export).
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"image grid must be 2-D and non-empty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image grid contains non-finite values")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape


def load_image(path) -> ImagePlane:
    """Load an 8-bit grayscale PGM (binary P5) or PNG file.

    Values are ``raw / 255`` exactly. Color images, palettes, and bit depths
    other than 8 raise :class:`ImageFormatError` rather than being converted
    silently.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image file not found: {path}")
    data = path.read_bytes()
    if data[:2] == b"P5":
        raw = _parse_pgm(data, path)
    else:
        raw = _load_png(path)
    return ImagePlane(raw.astype(np.float64) / 255.0)


def _parse_pgm(data: bytes, path) -> np.ndarray:
    # P5 header: magic, width, height, maxval as whitespace-separated tokens,
    # '#' comments allowed, then a single whitespace byte before the raster.
    pos = 2
    fields = []
    while len(fields) < 3:
        m = re.compile(rb"\s*(?:#[^\n\r]*[\n\r])*\s*(\d+)").match(data, pos)
        if m is None:
            raise ImageFormatError(f"{path}: malformed PGM header")
        fields.append(int(m.group(1)))
        pos = m.end()
    width, height, maxval = fields
    if maxval != 255:
        raise ImageFormatError(f"{path}: only 8-bit PGM supported (maxval 255, got {maxval})")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise ImageFormatError(f"{path}: truncated PGM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width)


def _load_png(path) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover
        raise ImageFormatError("PNG support requires pillow") from exc
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise ImageFormatError(f"{path}: unsupported format {im.format!r} (want PGM or PNG)")
            if im.mode != "L":
                raise ImageFormatError(
                    f"{path}: unsupported PNG mode {im.mode!r} (want 8-bit grayscale 'L')"
                )
            return np.asarray(im, dtype=np.uint8)
    except ImageFormatError:
        raise
    except Exception as exc:
        raise ImageFormatError(f"{path}: not a readable image ({exc})") from exc


def save_image(img: ImagePlane, path) -> None:
    """Write as 8-bit grayscale, clamping to [0, 1] and rounding half away from zero.

    The format is chosen by extension: ``.pgm`` (binary P5) or ``.png``.
    """
    path = Path(path)
    clamped = np.clip(img.values, 0.0, 1.0)
    # floor(x + 0.5) is round-half-away-from-zero for non-negative x
    bytes_ = np.floor(clamped * 255.0 + 0.5).astype(np.uint8)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        header = f"P5\n{img.cols} {img.rows}\n255\n".encode("ascii")
        path.write_bytes(header + bytes_.tobytes())
    elif suffix == ".png":
        from PIL import Image

        Image.fromarray(bytes_, mode="L").save(path, format="PNG")
    else:
        raise ImageFormatError(f"unsupported output extension {suffix!r} (want .pgm or .png)")


def block_average(img: ImagePlane, factor: int) -> ImagePlane:
    """Downsample by averaging disjoint factor x factor pixel blocks.

    ``factor`` must divide both dimensions.
    """
    if factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor}")
    m, n = img.shape
    if m % factor or n % factor:
        raise ValueError(f"factor {factor} does not divide image dimensions {m}x{n}")
    v = img.values.reshape(m // factor, factor, n // factor, factor)
    return ImagePlane(v.mean(axis=(1, 3)))


def make_phantom(kind: str, m: int, n: int) -> ImagePlane:
    """Deterministic piecewise-constant test images.

    kinds:
      flat      - constant 0.5
      quadrants - four rectangles valued {0, 1/3, 2/3, 1}; the split sits one
                  pixel past the midpoint so block averaging at any even
                  factor never aligns exactly with the edges
      disk      - centered circle of 1 on 0, radius min(m, n)/4
    """
    if kind not in PHANTOM_KINDS:
        raise ValueError(f"unknown phantom kind {kind!r}, expected one of {PHANTOM_KINDS}")
    if m < 8 or n < 8:
        raise ValueError(f"phantom dimensions must be at least 8x8, got {m}x{n}")
    if kind == "flat":
        return ImagePlane(np.full((m, n), 0.5))
    if kind == "quadrants":
        img = np.zeros((m, n))
        sr, sc = m // 2 + 1, n // 2 + 1
        img[:sr, sc:] = 1.0 / 3.0
        img[sr:, :sc] = 2.0 / 3.0
        img[sr:, sc:] = 1.0
        return ImagePlane(img)
    rr, cc = np.mgrid[0:m, 0:n]
    cy, cx = (m - 1) / 2.0, (n - 1) / 2.0
    radius = min(m, n) / 4.0
    return ImagePlane(((rr - cy) ** 2 + (cc - cx) ** 2 <= radius**2).astype(np.float64))
