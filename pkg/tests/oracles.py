"""Independent brute-force oracles used to pin expected values.

Everything here is written from the problem definitions with plain loops or
direct quadrature, deliberately avoiding the FFT and special-function code
paths of the package under test.
"""

import numpy as np


def xcorr_valid(pattern, img):
    """All valid shifts of the window sum: out[i,j] = sum pattern[i+p, j+q] img[p,q]."""
    pattern = np.asarray(pattern, dtype=float)
    img = np.asarray(img, dtype=float)
    pr, pc = pattern.shape
    m, n = img.shape
    out = np.zeros((pr - m + 1, pc - n + 1))
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            out[i, j] = (pattern[i : i + m, j : j + n] * img).sum()
    return out


def forward_reference(pattern_grid, img):
    """Detector grid of the shift architecture: the first m x n valid shifts."""
    m, n = np.asarray(img).shape
    return xcorr_valid(pattern_grid, img)[:m, :n]


def extended_detector_grid(pattern_grid, img, radius):
    """Ideal detector irradiance at every position light can reach.

    Shifts run from -radius to m-1+radius in both axes, computed against the
    zero-padded pattern; exact for images supported `radius` pixels inside.
    """
    m, n = np.asarray(img).shape
    padded = np.pad(np.asarray(pattern_grid, dtype=float), radius)
    return xcorr_valid(padded, img)[: m + 2 * radius, : n + 2 * radius]


def conv2_full(a, b):
    """Plain 2-D linear convolution by summation (full output)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
    for i in range(b.shape[0]):
        for j in range(b.shape[1]):
            out[i : i + a.shape[0], j : j + a.shape[1]] += b[i, j] * a
    return out


def conv2_valid(a, b):
    rb, cb = np.asarray(b).shape
    return conv2_full(a, b)[rb - 1 : 1 - rb or None, cb - 1 : 1 - cb or None]


def conv2_same(a, b):
    """Zero-padded same-size convolution with an odd-sized kernel."""
    rb, cb = np.asarray(b).shape
    full = conv2_full(a, b)
    r0, c0 = rb // 2, cb // 2
    ra, ca = np.asarray(a).shape
    return full[r0 : r0 + ra, c0 : c0 + ca]


def fresnel_psf_direct(wavelength, pitch, distance, radius, n_aperture=4001, n_gauss=16):
    """Direct-quadrature Fresnel PSF of a square aperture.

    The slit field is integrated with the trapezoid rule over the aperture,
    the irradiance over each detector pixel with Gauss-Legendre nodes, and
    the two 1-D profiles are tensored. No Fresnel special functions and no
    midpoint rule, so this shares nothing with the production path.
    """
    xi = np.linspace(-pitch / 2, pitch / 2, n_aperture)
    dxi = xi[1] - xi[0]
    weights = np.ones(n_aperture)
    weights[0] = weights[-1] = 0.5
    k = 2.0 * np.pi / wavelength

    gauss_x, gauss_w = np.polynomial.legendre.leggauss(n_gauss)
    centers = np.arange(-radius, radius + 1)
    points = (centers[:, None] + gauss_x[None, :] / 2.0) * pitch

    phase = np.exp(1j * k * (points.ravel()[:, None] - xi[None, :]) ** 2 / (2.0 * distance))
    field = (phase * weights).sum(axis=1) * dxi / np.sqrt(1j * wavelength * distance)
    irradiance = np.abs(field.reshape(points.shape)) ** 2
    profile = (irradiance * gauss_w[None, :]).sum(axis=1) * (pitch / 2.0)

    kernel = np.outer(profile, profile)
    return kernel / kernel.sum()
