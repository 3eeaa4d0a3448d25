"""Layered key=value configuration for the command-line tool.

Keys are dotted (``optics.wavelength``), values plain text. Precedence:
built-in defaults < config file < environment (``SHIFTCAM_OPTICS_WAVELENGTH``)
< command-line flags. Unknown keys are hard errors at every layer.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .optics import OpticsConfig
from .solver import SolverConfig

log = logging.getLogger("shiftcam.config")

ENV_PREFIX = "SHIFTCAM_"


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default)
CONFIG_SCHEMA = {
    "optics.wavelength": (float, 400e-9),
    "optics.pixel_pitch": (float, 1e-4),
    "optics.propagation_distance": (float, 60e-3),
    "optics.modulator_side": (float, 25.6e-3),
    "optics.kernel_radius": (int, 11),
    "optics.oversampling": (int, 8),
    "solver.max_outer_iters": (int, 120),
    "solver.max_inner_iters": (int, 20),
    "solver.penalty_tv": (float, 16.0),
    "solver.penalty_fidelity": (float, 256.0),
    "solver.continuation_factor": (float, 2.0),
    "solver.continuation_steps": (int, 4),
    "solver.tol_rel_change": (float, 1e-4),
    "solver.nonneg": (_parse_bool, True),
    "experiment.target_size": (int, 128),
    "experiment.trials": (int, 25),
    "experiment.seed_base": (int, 0),
    "experiment.mse_reference": (str, "original"),
    "experiment.apply_psf": (_parse_bool, True),
}


@dataclass
class GlobalConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        defaults = {key: default for key, (_, default) in CONFIG_SCHEMA.items()}
        defaults.update(self.values)
        self.values = defaults

    def __getitem__(self, key):
        return self.values[key]

    def optics(self) -> OpticsConfig:
        return OpticsConfig(
            wavelength=self["optics.wavelength"],
            pixel_pitch=self["optics.pixel_pitch"],
            propagation_distance=self["optics.propagation_distance"],
            modulator_side=self["optics.modulator_side"],
            kernel_radius=self["optics.kernel_radius"],
            oversampling=self["optics.oversampling"],
        )

    def solver(self) -> SolverConfig:
        return SolverConfig(
            max_outer_iters=self["solver.max_outer_iters"],
            max_inner_iters=self["solver.max_inner_iters"],
            penalty_tv=self["solver.penalty_tv"],
            penalty_fidelity=self["solver.penalty_fidelity"],
            continuation_factor=self["solver.continuation_factor"],
            continuation_steps=self["solver.continuation_steps"],
            tol_rel_change=self["solver.tol_rel_change"],
            nonneg=self["solver.nonneg"],
        )


def _coerce(key: str, raw: str, source: str):
    if key not in CONFIG_SCHEMA:
        raise ConfigError(f"unknown configuration key {key!r} (from {source})")
    parser, _ = CONFIG_SCHEMA[key]
    try:
        return parser(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r} (from {source}): {raw!r} ({exc})") from exc


def parse_config_file(path) -> dict:
    """Parse a key=value file with '#' comments and blank lines."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = stripped.partition("=")
        out[key.strip()] = _coerce(key.strip(), raw.strip(), f"{path}:{lineno}")
    return out


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX) :].lower().replace("_", ".", 1)
        out[key] = _coerce(key, raw, f"environment {name}")
    return out


def load_config(file_path=None, environ=None, overrides=None) -> GlobalConfig:
    """Merge defaults, config file, environment, and explicit overrides.

    ``overrides`` maps dotted keys to already-typed values (command-line
    flags). Every applied layer is logged at debug level.
    """
    merged = {}
    if file_path is not None:
        layer = parse_config_file(file_path)
        log.debug("config file %s: %s", file_path, layer)
        merged.update(layer)
    layer = env_overrides(environ)
    if layer:
        log.debug("environment overrides: %s", layer)
    merged.update(layer)
    if overrides:
        unknown = set(overrides) - set(CONFIG_SCHEMA)
        if unknown:
            raise ConfigError(f"unknown configuration keys from flags: {sorted(unknown)}")
        log.debug("flag overrides: %s", overrides)
        merged.update(overrides)
    return GlobalConfig(values=merged)
