import pytest

from shiftcam import ConfigError
from shiftcam.config import GlobalConfig, env_overrides, load_config, parse_config_file


class TestConfigFile:
    def test_parses_values_and_comments(self, tmp_path):
        p = tmp_path / "cfg"
        p.write_text(
            "# optics section\n"
            "optics.wavelength = 5e-7\n"
            "\n"
            "solver.nonneg=false\n"
            "experiment.trials=7\n"
        )
        values = parse_config_file(p)
        assert values == {
            "optics.wavelength": 5e-7,
            "solver.nonneg": False,
            "experiment.trials": 7,
        }

    def test_unknown_key_is_hard_error(self, tmp_path):
        p = tmp_path / "cfg"
        p.write_text("optics.wavelenght=5e-7\n")
        with pytest.raises(ConfigError):
            parse_config_file(p)

    def test_bad_value_is_hard_error(self, tmp_path):
        p = tmp_path / "cfg"
        p.write_text("experiment.trials=many\n")
        with pytest.raises(ConfigError):
            parse_config_file(p)

    def test_missing_equals_rejected(self, tmp_path):
        p = tmp_path / "cfg"
        p.write_text("optics.wavelength 5e-7\n")
        with pytest.raises(ConfigError):
            parse_config_file(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config_file(tmp_path / "absent")


class TestEnvOverrides:
    def test_mapping(self):
        out = env_overrides({"SHIFTCAM_OPTICS_WAVELENGTH": "5e-7"})
        assert out == {"optics.wavelength": 5e-7}

    def test_multi_underscore_key(self):
        out = env_overrides({"SHIFTCAM_SOLVER_MAX_OUTER_ITERS": "9"})
        assert out == {"solver.max_outer_iters": 9}

    def test_unknown_env_key_rejected(self):
        with pytest.raises(ConfigError):
            env_overrides({"SHIFTCAM_OPTICS_TYPO": "1"})

    def test_unrelated_env_ignored(self):
        assert env_overrides({"PATH": "/bin"}) == {}


class TestPrecedence:
    def test_file_then_env_then_flags(self, tmp_path):
        p = tmp_path / "cfg"
        p.write_text("experiment.trials=1\nexperiment.seed_base=10\noptics.kernel_radius=3\n")
        cfg = load_config(
            file_path=p,
            environ={"SHIFTCAM_EXPERIMENT_TRIALS": "2", "SHIFTCAM_EXPERIMENT_SEED_BASE": "20"},
            overrides={"experiment.trials": 3},
        )
        assert cfg["experiment.trials"] == 3  # flag wins
        assert cfg["experiment.seed_base"] == 20  # env beats file
        assert cfg["optics.kernel_radius"] == 3  # file beats default
        assert cfg["optics.oversampling"] == 8  # default

    def test_unknown_flag_key_rejected(self):
        with pytest.raises(ConfigError):
            load_config(overrides={"optics.nope": 1.0})


class TestGlobalConfig:
    def test_every_key_has_default(self):
        cfg = GlobalConfig()
        assert cfg["optics.wavelength"] == 400e-9
        assert cfg["solver.penalty_fidelity"] == 256.0
        assert cfg["experiment.mse_reference"] == "original"

    def test_builds_dataclasses(self):
        cfg = GlobalConfig()
        optics = cfg.optics()
        solver = cfg.solver()
        assert optics.kernel_radius == 11
        assert solver.nonneg is True
