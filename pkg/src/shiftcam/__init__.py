"""One-shot parallel compressive imaging: simulation and TV reconstruction."""

from .errors import (
    ArchitectureError,
    ConfigError,
    ImageFormatError,
    ProvenanceError,
    QuadratureError,
    ShiftcamError,
    SolverDivergenceError,
)
from .harness import (
    CAMERAS,
    ExperimentConfig,
    ResultRow,
    TrialRecord,
    mse,
    replicate,
    run_experiment,
    simulate_classic,
    simulate_sequential_ci,
)
from .image_io import ImagePlane, block_average, load_image, make_phantom, save_image
from .optics import OpticsConfig, Psf, blur_pattern, compute_psf, slit_irradiance
from .sensing import (
    DenseOperator,
    MeasurementSet,
    ModulatorPattern,
    SensingOperator,
    adjoint_full,
    build_explicit_matrix,
    convert_measurements,
    downsample_a,
    downsample_b,
    forward_full,
    generate_pattern,
    i_total_from_b,
    make_operator,
)
from .solver import (
    ReconResult,
    SolverConfig,
    div,
    grad,
    reconstruct,
    shrink2,
    tv_norm,
)

__version__ = "0.1.0"
