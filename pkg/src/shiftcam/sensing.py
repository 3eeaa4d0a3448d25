"""Shift-based sensing: tiled patterns, forward/adjoint operators, measurement
conversion, and the explicit-matrix verification path.

The physical acquisition correlates the image with shifted windows of a
(2m) x (2n) modulator pattern: detector (i, j), 1-based, reads

    D(i, j) = sum_{p=1..m} sum_{q=1..n} pattern(i+p-1, j+q-1) * img(p, q)

for 1 <= i <= m, 1 <= j <= n, i.e. a valid 2-D cross-correlation. The
operator is applied with FFTs (the pattern spectrum is cached); the adjoint
is the same correlation with detector values in place of the image, so the
transpose pair is exact by symmetry of the bilinear form.

Undersampling architectures over the full m x n detector grid:

    A - keep detectors with both indices odd (low-fill-factor array)
    B - sum disjoint 2x2 detector blocks (detector with 2x larger pixels)

Patterns tile one m x n Bernoulli(0.5) quadrant four times, which makes
every image pixel enter the full measurement sum with the same total weight;
that is what allows the total unmodulated irradiance to be recovered from
the measurements themselves (architecture B) and the raw 0/1 readings to be
mapped exactly onto +-1 compressive-sensing measurements.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.fft import irfft2, rfft2

from .errors import ArchitectureError
from .image_io import ImagePlane
from .optics import Psf, blur_pattern

ARCHITECTURES = ("full", "A", "B")
MODES = ("raw01", "bipolar")
STAGES = ("raw", "converted")

GENERATOR_NAME = "philox4x64"  # pinned PRNG family; seeds reproduce bit-exactly

EXPLICIT_MATRIX_MAX_PIXELS = 4096


def pattern_rng(seed: int) -> np.random.Generator:
    """The package-wide counter-based generator for all random draws."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class ModulatorPattern:
    """Binary (2m) x (2n) transmittance grid with quadrant tiling."""

    base_rows: int
    base_cols: int
    grid: np.ndarray
    seed: int

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=np.uint8)
        m, n = self.base_rows, self.base_cols
        if g.shape != (2 * m, 2 * n):
            raise ValueError(f"grid shape {g.shape} does not match 2*({m},{n})")
        if not np.isin(g, (0, 1)).all():
            raise ValueError("grid entries must be 0 or 1")
        base = g[:m, :n]
        if not (
            np.array_equal(base, g[m:, :n])
            and np.array_equal(base, g[:m, n:])
            and np.array_equal(base, g[m:, n:])
        ):
            raise ValueError("grid does not satisfy quadrant tiling")
        g = g.copy()
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)

    @property
    def base(self) -> np.ndarray:
        return self.grid[: self.base_rows, : self.base_cols]

    @property
    def density(self) -> float:
        return float(self.base.mean())


def generate_pattern(m: int, n: int, seed: int) -> ModulatorPattern:
    """Draw an m x n Bernoulli(0.5) base quadrant and tile it 2x2.

    Dimensions must be even (required by architectures A and B). For base
    sizes of 256 pixels or more the empirical density is sanity-checked
    against [0.35, 0.65].
    """
    if m < 2 or n < 2 or m % 2 or n % 2:
        raise ValueError(f"pattern base dimensions must be even positive integers, got {m}x{n}")
    base = pattern_rng(seed).integers(0, 2, size=(m, n), dtype=np.uint8)
    if m * n >= 256:
        density = base.mean()
        if not 0.35 <= density <= 0.65:
            raise ValueError(
                f"pattern density {density:.3f} outside Bernoulli(0.5) sanity band "
                f"[0.35, 0.65] for seed {seed}"
            )
    grid = np.block([[base, base], [base, base]])
    return ModulatorPattern(base_rows=m, base_cols=n, grid=grid, seed=seed)


@dataclass(frozen=True)
class MeasurementSet:
    """Detector readings plus provenance.

    ``values`` are vectorized row-wise over the detector grid, length m*n
    for the full architecture and m*n/4 for A and B.
    """

    values: np.ndarray
    architecture: str
    stage: str
    image_dims: tuple
    i_total: Optional[float] = None

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        v = np.asarray(self.values, dtype=np.float64).ravel()
        m, n = self.image_dims
        expected = m * n if self.architecture == "full" else (m * n) // 4
        if v.size != expected:
            raise ValueError(
                f"{self.architecture} measurement set over {m}x{n} image must have "
                f"{expected} values, got {v.size}"
            )
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


def _as_grid(img) -> np.ndarray:
    if isinstance(img, ImagePlane):
        return img.values
    return np.asarray(img, dtype=np.float64)


class SensingOperator:
    """Implicit linear map equivalent to the explicit shift matrix.

    Holds the final operating pattern grid (binary, blurred, or bipolar);
    use :func:`make_operator` to build one from a :class:`ModulatorPattern`
    with the bipolar mapping and diffraction blur applied. An optional
    rank-one correction term (``correction_weights`` c with
    ``correction_scale`` s) adds s*<c, x> to every measurement; it models
    conversions whose subtracted total was estimated in-band rather than
    measured. Immutable after construction; forward/adjoint are pure and
    reentrant.
    """

    def __init__(self, pattern_grid: np.ndarray, image_dims: tuple, mode: str, architecture: str,
                 correction_weights: Optional[np.ndarray] = None, correction_scale: float = 1.0):
        grid = np.asarray(pattern_grid, dtype=np.float64)
        m, n = image_dims
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {architecture!r}")
        if grid.shape != (2 * m, 2 * n):
            raise ValueError(f"pattern grid {grid.shape} does not match 2*({m},{n})")
        grid = grid.copy()
        grid.setflags(write=False)
        self.pattern_grid = grid
        self.image_dims = (int(m), int(n))
        self.mode = mode
        self.architecture = architecture
        if correction_weights is not None:
            correction_weights = np.asarray(correction_weights, dtype=np.float64).copy()
            if correction_weights.shape != (m, n):
                raise ValueError(
                    f"correction weights {correction_weights.shape} do not match image {m}x{n}"
                )
            correction_weights.setflags(write=False)
        self.correction_weights = correction_weights
        self.correction_scale = float(correction_scale)
        # cached pattern spectrum; shifts stay below (m, n) so the circular
        # correlation over the (2m, 2n) grid never wraps
        self._spectrum = rfft2(grid)

    @property
    def n_measurements(self) -> int:
        m, n = self.image_dims
        return m * n if self.architecture == "full" else (m * n) // 4

    def _correlate(self, x: np.ndarray) -> np.ndarray:
        padded = np.zeros(self.pattern_grid.shape)
        padded[: x.shape[0], : x.shape[1]] = x
        out = irfft2(self._spectrum * np.conj(rfft2(padded)), s=self.pattern_grid.shape)
        m, n = self.image_dims
        return out[:m, :n]

    def forward(self, img) -> MeasurementSet:
        """Apply the sensing map; the result stage reflects the operator mode."""
        x = _as_grid(img)
        if x.shape != tuple(self.image_dims):
            raise ValueError(f"image shape {x.shape} does not match operator dims {self.image_dims}")
        full = MeasurementSet(
            values=self._correlate(x).ravel(),
            architecture="full",
            stage="raw" if self.mode == "raw01" else "converted",
            image_dims=self.image_dims,
        )
        if self.architecture == "A":
            out = downsample_a(full)
        elif self.architecture == "B":
            out = downsample_b(full)
        else:
            out = full
        if self.correction_weights is not None:
            shift = self.correction_scale * float((self.correction_weights * x).sum())
            out = MeasurementSet(
                values=out.values + shift,
                architecture=out.architecture,
                stage=out.stage,
                image_dims=out.image_dims,
            )
        return out

    def adjoint(self, meas: Union[MeasurementSet, np.ndarray]) -> np.ndarray:
        """Exact transpose of :meth:`forward`, returning an image-shaped grid."""
        m, n = self.image_dims
        values = meas.values if isinstance(meas, MeasurementSet) else np.asarray(meas, dtype=np.float64)
        if isinstance(meas, MeasurementSet) and meas.architecture != self.architecture:
            raise ArchitectureError(
                f"adjoint of {self.architecture!r} operator applied to "
                f"{meas.architecture!r} measurements"
            )
        if values.size != self.n_measurements:
            raise ValueError(
                f"expected {self.n_measurements} measurement values, got {values.size}"
            )
        if self.architecture == "full":
            grid = values.reshape(m, n)
        elif self.architecture == "A":
            grid = np.zeros((m, n))
            grid[0::2, 0::2] = values.reshape(m // 2, n // 2)
        else:  # B: each grouped value feeds its whole 2x2 block
            grid = np.repeat(np.repeat(values.reshape(m // 2, n // 2), 2, axis=0), 2, axis=1)
        back = self._correlate(grid)
        if self.correction_weights is not None:
            back = back + self.correction_scale * float(values.sum()) * self.correction_weights
        return back


class DenseOperator:
    """Explicit-matrix operator with the same forward/adjoint interface."""

    def __init__(self, matrix: np.ndarray, image_dims: tuple):
        matrix = np.asarray(matrix, dtype=np.float64)
        m, n = image_dims
        if matrix.ndim != 2 or matrix.shape[1] != m * n:
            raise ValueError(f"matrix shape {matrix.shape} does not match image dims {m}x{n}")
        self.matrix = matrix
        self.image_dims = (int(m), int(n))

    @property
    def n_measurements(self) -> int:
        return self.matrix.shape[0]

    def forward(self, img) -> np.ndarray:
        x = _as_grid(img)
        return self.matrix @ x.ravel()

    def adjoint(self, values) -> np.ndarray:
        v = values.values if isinstance(values, MeasurementSet) else np.asarray(values, np.float64)
        return (self.matrix.T @ v).reshape(self.image_dims)


def make_operator(
    pattern: Union[ModulatorPattern, np.ndarray],
    psf: Optional[Psf] = None,
    mode: str = "raw01",
    architecture: str = "full",
    image_dims: Optional[tuple] = None,
    in_band_correction: bool = False,
) -> SensingOperator:
    """Build an operator from a modulator pattern.

    The physical 0/1 grid is optionally blurred with the PSF (zero-padded);
    bipolar mode then maps the blurred grid to 2*grid - 1. This order makes
    the compensated operator exactly consistent with the raw-to-bipolar
    measurement conversion for a unit-sum kernel: converted values are
    2*raw - I_total per aggregated measurement, and the operator's rows are
    2*(blurred window) - 1, so the offsets cancel even where the kernel
    hangs over the pattern border. (Mapping before blurring is equivalent in
    the interior but loses up to half the kernel mass at the edges, which
    breaks measurement consistency for images with border content.)

    ``in_band_correction`` builds the model for measurements converted with
    the in-band total estimate (architectures B and full). That estimate is
    itself linear in the image, I_hat = <colsum/base_sum, x> where colsum are
    the blurred pattern's window column sums, so appending the rank-one term
    s*<1 - colsum/base_sum, x> to the bipolar operator makes converted
    measurements exactly consistent for every image, including ones with
    content under the kernel footprint at the border. Without a PSF the
    column sums equal the base sum and the term vanishes.

    ``image_dims`` is only needed when passing a bare grid instead of a
    ModulatorPattern.
    """
    if isinstance(pattern, ModulatorPattern):
        grid = pattern.grid.astype(np.float64)
        dims = (pattern.base_rows, pattern.base_cols)
    else:
        grid = np.asarray(pattern, dtype=np.float64)
        if image_dims is None:
            if grid.shape[0] % 2 or grid.shape[1] % 2:
                raise ValueError("cannot infer image dims from an odd-sized grid")
            dims = (grid.shape[0] // 2, grid.shape[1] // 2)
        else:
            dims = tuple(image_dims)
    if psf is not None:
        if psf.kernel.shape[0] > grid.shape[0] or psf.kernel.shape[1] > grid.shape[1]:
            raise ValueError(f"psf {psf.kernel.shape} larger than pattern {grid.shape}")
        grid = blur_pattern(grid, psf)

    correction = None
    scale = 1.0
    if in_band_correction:
        if mode != "bipolar":
            raise ValueError("in-band correction applies to bipolar reconstruction operators")
        if architecture == "A":
            raise ArchitectureError(
                "architecture A cannot use in-band I_total; convert with the "
                "recorded second-shot total instead"
            )
        if not isinstance(pattern, ModulatorPattern):
            raise ValueError("in-band correction needs a ModulatorPattern (base sum required)")
        if psf is not None:
            base_sum = float(pattern.base.sum())
            if base_sum == 0:
                raise ValueError("all-opaque base quadrant: in-band total undefined")
            raw_full = SensingOperator(grid, dims, mode="raw01", architecture="full")
            column_sums = raw_full.adjoint(np.ones(dims[0] * dims[1]))
            correction = 1.0 - column_sums / base_sum
            scale = 4.0 if architecture == "B" else 1.0

    if mode == "bipolar":
        grid = 2.0 * grid - 1.0
    return SensingOperator(
        grid, dims, mode=mode, architecture=architecture,
        correction_weights=correction, correction_scale=scale,
    )


def forward_full(op: SensingOperator, img) -> MeasurementSet:
    """Full-architecture forward map (all m x n detectors)."""
    if op.architecture != "full":
        raise ArchitectureError(f"forward_full requires a full operator, got {op.architecture!r}")
    return op.forward(img)


def adjoint_full(op: SensingOperator, meas) -> np.ndarray:
    """Transpose of :func:`forward_full`."""
    if op.architecture != "full":
        raise ArchitectureError(f"adjoint_full requires a full operator, got {op.architecture!r}")
    return op.adjoint(meas)


def downsample_a(meas: MeasurementSet) -> MeasurementSet:
    """Keep detectors whose 1-based row and column indices are both odd."""
    if meas.architecture != "full":
        raise ArchitectureError(f"downsample_a needs full measurements, got {meas.architecture!r}")
    m, n = meas.image_dims
    if m % 2 or n % 2:
        raise ValueError(f"architecture A requires even detector dimensions, got {m}x{n}")
    grid = meas.values.reshape(m, n)
    return MeasurementSet(
        values=grid[0::2, 0::2].ravel(),
        architecture="A",
        stage=meas.stage,
        image_dims=meas.image_dims,
        i_total=meas.i_total,
    )


def downsample_b(meas: MeasurementSet) -> MeasurementSet:
    """Sum disjoint 2x2 detector blocks (top-left corners at odd 1-based indices)."""
    if meas.architecture != "full":
        raise ArchitectureError(f"downsample_b needs full measurements, got {meas.architecture!r}")
    m, n = meas.image_dims
    if m % 2 or n % 2:
        raise ValueError(f"architecture B requires even detector dimensions, got {m}x{n}")
    grid = meas.values.reshape(m // 2, 2, n // 2, 2)
    return MeasurementSet(
        values=grid.sum(axis=(1, 3)).ravel(),
        architecture="B",
        stage=meas.stage,
        image_dims=meas.image_dims,
        i_total=meas.i_total,
    )


def i_total_from_b(meas: MeasurementSet, pattern: ModulatorPattern) -> float:
    """Recover the total unmodulated irradiance from raw measurements.

    Works for architecture B (whose grouped values partition the full
    detector grid) and trivially for full sets. Architecture A discards
    detectors, so its sum no longer covers every shift and the in-band
    derivation is undefined: a second all-open acquisition is required.
    """
    if meas.stage != "raw":
        raise ArchitectureError(f"i_total derivation needs raw measurements, got {meas.stage!r}")
    if meas.architecture == "A":
        raise ArchitectureError(
            "architecture A discards detector pixels; I_total must come from a "
            "second all-open acquisition"
        )
    denom = float(pattern.base.sum())
    if denom == 0:
        raise ValueError("all-opaque base quadrant: I_total derivation divides by zero")
    return float(meas.values.sum()) / denom


def convert_measurements(meas: MeasurementSet, i_total: float) -> MeasurementSet:
    """Map raw 0/1-pattern measurements onto +-1-pattern measurements.

    Each converted value is 2*raw - c*I_total where c counts how many raw
    full-grid measurements were aggregated into it (1 for full and A, 4 for
    the 2x2 sums of B).
    """
    if meas.stage != "raw":
        raise ArchitectureError(f"convert_measurements needs raw measurements, got {meas.stage!r}")
    if i_total < 0:
        raise ValueError(f"i_total must be non-negative, got {i_total}")
    aggregated = 4.0 if meas.architecture == "B" else 1.0
    return MeasurementSet(
        values=2.0 * meas.values - aggregated * i_total,
        architecture=meas.architecture,
        stage="converted",
        image_dims=meas.image_dims,
        i_total=float(i_total),
    )


def build_explicit_matrix(op: SensingOperator) -> np.ndarray:
    """Materialize the operator as a dense matrix (verification scale only).

    Row for detector (i, j) holds the m x n window
    pattern(i..i+m-1, j..j+n-1) vectorized row-wise, matching the row-wise
    image vectorization, so matrix @ img.ravel() reproduces forward exactly.
    Architecture A selects the odd-odd rows; B sums each 2x2 row group.
    """
    m, n = op.image_dims
    if m * n > EXPLICIT_MATRIX_MAX_PIXELS:
        raise ValueError(
            f"explicit matrix limited to {EXPLICIT_MATRIX_MAX_PIXELS} image pixels, got {m * n}"
        )
    pat = op.pattern_grid
    full = np.empty((m * n, m * n))
    for i in range(m):
        for j in range(n):
            full[i * n + j, :] = pat[i : i + m, j : j + n].ravel()
    if op.architecture == "full":
        matrix = full
    elif op.architecture == "A":
        matrix = full.reshape(m, n, m * n)[0::2, 0::2].reshape((m * n) // 4, m * n)
    else:
        grouped = full.reshape(m // 2, 2, n // 2, 2, m * n).sum(axis=(1, 3))
        matrix = grouped.reshape((m * n) // 4, m * n)
    if op.correction_weights is not None:
        matrix = matrix + op.correction_scale * op.correction_weights.ravel()[None, :]
    return matrix
