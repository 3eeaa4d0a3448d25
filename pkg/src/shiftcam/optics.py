"""Diffraction blur of a square modulator pixel.

The coherent field behind a uniformly illuminated square aperture is
propagated with the paraxial (Fresnel) model. For a square aperture the
2-D Fresnel integral separates into two identical 1-D slit integrals, which
have a closed form in the Fresnel cosine/sine integrals C and S:

    U(x) = ((C(t2) - C(t1)) + i (S(t2) - S(t1))) / sqrt(2i),
    t edges = sqrt(2 / (wavelength z)) (+-a/2 - x)

The incoherent point spread function is |U|^2, integrated over each detector
pixel on a grid centered on the aperture axis, truncated to the requested
kernel and renormalized to unit sum. Pixel integrals use a midpoint rule
whose sub-sampling is doubled until the normalized kernel is stable to 1e-6
per entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import fresnel

from .errors import QuadratureError

CONVERGENCE_TOL = 1e-6
OVERSAMPLING_CAP = 65536


@dataclass(frozen=True)
class OpticsConfig:
    """Physical dimensions of the modulator/detector geometry.

    Lengths are in meters. ``kernel_radius`` r gives a (2r+1) x (2r+1)
    kernel sampled at ``pixel_pitch``. ``oversampling`` is the initial
    number of sub-samples per pixel for the diffraction quadrature; it is
    doubled internally until converged.
    """

    wavelength: float = 400e-9
    pixel_pitch: float = 1e-4
    propagation_distance: float = 60e-3
    modulator_side: float = 25.6e-3
    kernel_radius: int = 11
    oversampling: int = 8

    def __post_init__(self):
        for name in ("wavelength", "pixel_pitch", "propagation_distance", "modulator_side"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.kernel_radius < 0:
            raise ValueError(f"kernel_radius must be >= 0, got {self.kernel_radius}")
        if self.oversampling < 1:
            raise ValueError(f"oversampling must be >= 1, got {self.oversampling}")


@dataclass(frozen=True)
class Psf:
    """Odd-sized non-negative convolution kernel normalized to unit sum."""

    kernel: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
            raise ValueError(f"kernel must be square with odd side, got shape {k.shape}")
        if np.any(k < 0) or not np.all(np.isfinite(k)):
            raise ValueError("kernel entries must be finite and non-negative")
        total = k.sum()
        if total <= 0:
            raise ValueError("kernel must have positive sum")
        k = k / total
        k.setflags(write=False)
        object.__setattr__(self, "kernel", k)

    @property
    def radius(self) -> int:
        return self.kernel.shape[0] // 2

    @classmethod
    def delta(cls, radius: int = 0) -> "Psf":
        """Identity kernel (single unit entry at the center)."""
        k = np.zeros((2 * radius + 1, 2 * radius + 1))
        k[radius, radius] = 1.0
        return cls(k)


def slit_irradiance(x, aperture: float, wavelength: float, distance: float):
    """Fresnel irradiance of a 1-D slit of width ``aperture`` at ``distance``.

    Normalized so the unobstructed (geometric-shadow) irradiance is 1.
    """
    x = np.asarray(x, dtype=np.float64)
    scale = np.sqrt(2.0 / (wavelength * distance))
    s1, c1 = fresnel(scale * (-aperture / 2.0 - x))
    s2, c2 = fresnel(scale * (aperture / 2.0 - x))
    return 0.5 * ((c2 - c1) ** 2 + (s2 - s1) ** 2)


def _pixel_irradiance(cfg: OpticsConfig, oversampling: int) -> np.ndarray:
    """Midpoint-rule integral of the slit irradiance over each detector pixel."""
    idx = np.arange(-cfg.kernel_radius, cfg.kernel_radius + 1)
    sub = (np.arange(oversampling) + 0.5) / oversampling - 0.5
    pts = (idx[:, None] + sub[None, :]) * cfg.pixel_pitch
    irr = slit_irradiance(pts, cfg.pixel_pitch, cfg.wavelength, cfg.propagation_distance)
    return irr.mean(axis=1)  # times pixel_pitch = integral; constant cancels on normalization


def _normalized_kernel(v: np.ndarray) -> np.ndarray:
    k = np.outer(v, v)
    return k / k.sum()


def compute_psf(cfg: OpticsConfig, return_report: bool = False):
    """Compute the incoherent PSF of one modulator pixel.

    The pixel-integration quadrature starts at ``cfg.oversampling``
    sub-samples and doubles until no kernel entry changes by more than
    1e-6 between successive refinements; :class:`QuadratureError` is raised
    if that is not reached by an oversampling of 65536.

    With ``return_report`` a list of (oversampling, max_entry_change) pairs
    for the refinement ladder is returned alongside the Psf.
    """
    oversampling = max(cfg.oversampling, 1)
    kernel = _normalized_kernel(_pixel_irradiance(cfg, oversampling))
    report = []
    while True:
        finer = 2 * oversampling
        refined = _normalized_kernel(_pixel_irradiance(cfg, finer))
        change = float(np.abs(refined - kernel).max())
        report.append((finer, change))
        if change <= CONVERGENCE_TOL:
            psf = Psf(refined)
            return (psf, report) if return_report else psf
        if finer >= OVERSAMPLING_CAP:
            raise QuadratureError(
                f"Fresnel quadrature not converged at oversampling {finer}: "
                f"entries still change by {change:.3e} (> {CONVERGENCE_TOL:.0e})"
            )
        oversampling = finer
        kernel = refined


def blur_pattern(pattern: np.ndarray, psf: Psf) -> np.ndarray:
    """Zero-padded same-size 2-D linear convolution of a grid with the kernel."""
    pattern = np.asarray(pattern, dtype=np.float64)
    krows, kcols = psf.kernel.shape
    if pattern.shape[0] < krows or pattern.shape[1] < kcols:
        raise ValueError(
            f"pattern {pattern.shape} smaller than kernel {psf.kernel.shape}"
        )
    if psf.radius == 0:
        return pattern * psf.kernel[0, 0]
    return fftconvolve(pattern, psf.kernel, mode="same")
