"""Exception types shared across the package."""


class ShiftcamError(Exception):
    """Base class for all shiftcam errors."""


class ImageFormatError(ShiftcamError):
    """Unsupported image file format, bit depth, or color mode."""


class ArchitectureError(ShiftcamError):
    """Operation applied to a measurement set of the wrong architecture or stage."""


class QuadratureError(ShiftcamError):
    """Diffraction quadrature failed to converge within the oversampling cap."""


class SolverDivergenceError(ShiftcamError):
    """Non-finite values detected during reconstruction.

    Carries the objective trace accumulated up to the failure in ``trace``.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ProvenanceError(ShiftcamError):
    """Measurement artifact header is inconsistent with the active configuration."""


class ConfigError(ShiftcamError):
    """Malformed configuration file, unknown key, or bad value."""
