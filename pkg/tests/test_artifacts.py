import numpy as np
import pytest

from shiftcam import ProvenanceError, load_image, generate_pattern, make_operator
from shiftcam.artifacts import (
    NO_PSF_HASH,
    psf_hash,
    read_measurements,
    read_pattern,
    write_measurements,
    write_pattern,
)
from shiftcam.optics import Psf


class TestMeasurementArtifact:
    def test_roundtrip(self, tmp_path, rng):
        pattern = generate_pattern(8, 8, seed=5)
        meas = make_operator(pattern, architecture="B").forward(rng.random((8, 8)))
        p = tmp_path / "m.meas"
        write_measurements(p, meas, pattern_seed=5, psf_digest=NO_PSF_HASH)
        loaded, header = read_measurements(p)
        assert np.array_equal(loaded.values, meas.values)
        assert loaded.architecture == "B"
        assert loaded.stage == "raw"
        assert loaded.image_dims == (8, 8)
        assert header["pattern_seed"] == "5"
        assert header["generator"] == "philox4x64"

    def test_i_total_roundtrip_exact(self, tmp_path, rng):
        pattern = generate_pattern(4, 4, seed=1)
        meas = make_operator(pattern, architecture="A").forward(rng.random((4, 4)))
        import dataclasses

        meas = dataclasses.replace(meas, i_total=0.1234567890123456789)
        p = tmp_path / "a.meas"
        write_measurements(p, meas, pattern_seed=1, psf_digest=NO_PSF_HASH)
        loaded, _ = read_measurements(p)
        assert loaded.i_total == meas.i_total  # repr round-trips float64

    def test_header_is_human_readable(self, tmp_path, rng):
        pattern = generate_pattern(4, 4, seed=1)
        meas = make_operator(pattern).forward(rng.random((4, 4)))
        p = tmp_path / "m.meas"
        write_measurements(p, meas, pattern_seed=1, psf_digest="abc")
        text = p.read_bytes().split(b"\n\n", 1)[0].decode()
        assert "format=shiftcam-measurements-v1" in text
        assert "count=16" in text

    def test_truncated_payload_rejected(self, tmp_path, rng):
        pattern = generate_pattern(4, 4, seed=1)
        meas = make_operator(pattern).forward(rng.random((4, 4)))
        p = tmp_path / "m.meas"
        write_measurements(p, meas, pattern_seed=1, psf_digest=NO_PSF_HASH)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(ProvenanceError):
            read_measurements(p)

    def test_corrupted_header_rejected(self, tmp_path):
        p = tmp_path / "m.meas"
        p.write_bytes(b"format=wrong\ncount=1\n\n" + bytes(8))
        with pytest.raises(ProvenanceError):
            read_measurements(p)

    def test_missing_blank_line_rejected(self, tmp_path):
        p = tmp_path / "m.meas"
        p.write_bytes(b"format=shiftcam-measurements-v1\ncount=1\n")
        with pytest.raises(ProvenanceError):
            read_measurements(p)


class TestPsfHash:
    def test_stable_and_distinct(self):
        a = psf_hash(Psf(np.full((3, 3), 1.0)))
        b = psf_hash(Psf(np.full((3, 3), 1.0)))
        c = psf_hash(Psf.delta(1))
        assert a == b
        assert a != c


class TestPatternExport:
    def test_pgm_and_sidecar(self, tmp_path):
        pattern = generate_pattern(8, 8, seed=7)
        p = tmp_path / "pat.pgm"
        write_pattern(p, pattern)
        reloaded = load_image(p)
        assert np.array_equal(reloaded.values, pattern.grid.astype(float))
        sidecar = (tmp_path / "pat.pgm.txt").read_text()
        assert "m=8" in sidecar
        assert "seed=7" in sidecar
        assert "tiled=true" in sidecar

    def test_import_roundtrip(self, tmp_path):
        pattern = generate_pattern(6, 4, seed=13)
        p = tmp_path / "pat.pgm"
        write_pattern(p, pattern)
        back = read_pattern(p)
        assert np.array_equal(back.grid, pattern.grid)
        assert (back.base_rows, back.base_cols, back.seed) == (6, 4, 13)

    def test_import_without_sidecar_rejected(self, tmp_path):
        pattern = generate_pattern(4, 4, seed=1)
        p = tmp_path / "pat.pgm"
        write_pattern(p, pattern)
        (tmp_path / "pat.pgm.txt").unlink()
        with pytest.raises(ProvenanceError):
            read_pattern(p)

    def test_import_rejects_nonbinary(self, tmp_path):
        from shiftcam import ImagePlane, save_image

        p = tmp_path / "gray.pgm"
        save_image(ImagePlane(np.full((8, 8), 0.5)), p)
        (tmp_path / "gray.pgm.txt").write_text("m=4\nn=4\nseed=0\ntiled=true\n")
        with pytest.raises(ProvenanceError):
            read_pattern(p)
