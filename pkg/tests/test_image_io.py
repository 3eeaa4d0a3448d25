import numpy as np
import pytest

from shiftcam import (
    ImageFormatError,
    ImagePlane,
    block_average,
    load_image,
    make_phantom,
    save_image,
    tv_norm,
)


def write_pgm(path, array):
    """Hand-rolled P5 writer so load tests do not depend on save_image."""
    array = np.asarray(array, dtype=np.uint8)
    header = f"P5\n{array.shape[1]} {array.shape[0]}\n255\n".encode()
    path.write_bytes(header + array.tobytes())


class TestLoadImage:
    def test_all_zero(self, tmp_path):
        p = tmp_path / "z.pgm"
        write_pgm(p, np.zeros((4, 4)))
        assert np.array_equal(load_image(p).values, np.zeros((4, 4)))

    def test_all_255(self, tmp_path):
        p = tmp_path / "w.pgm"
        write_pgm(p, np.full((4, 4), 255))
        assert np.array_equal(load_image(p).values, np.ones((4, 4)))

    def test_midgray_is_exact_ratio(self, tmp_path):
        p = tmp_path / "m.pgm"
        write_pgm(p, np.full((1, 1), 128))
        assert load_image(p).values[0, 0] == 128 / 255

    def test_header_with_comment(self, tmp_path):
        p = tmp_path / "c.pgm"
        p.write_bytes(b"P5\n# a comment\n2 3\n255\n" + bytes(6))
        img = load_image(p)
        assert img.shape == (3, 2)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "nope.pgm")

    def test_16bit_pgm_rejected(self, tmp_path):
        p = tmp_path / "deep.pgm"
        p.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
        with pytest.raises(ImageFormatError):
            load_image(p)

    def test_truncated_raster_rejected(self, tmp_path):
        p = tmp_path / "short.pgm"
        p.write_bytes(b"P5\n4 4\n255\n" + bytes(3))
        with pytest.raises(ImageFormatError):
            load_image(p)

    def test_color_png_rejected(self, tmp_path):
        from PIL import Image

        p = tmp_path / "rgb.png"
        Image.new("RGB", (4, 4)).save(p)
        with pytest.raises(ImageFormatError):
            load_image(p)

    def test_16bit_png_rejected(self, tmp_path):
        from PIL import Image

        p = tmp_path / "deep.png"
        Image.new("I;16", (4, 4)).save(p)
        with pytest.raises(ImageFormatError):
            load_image(p)

    def test_png_roundtrip(self, tmp_path, rng):
        raw = rng.integers(0, 256, (9, 7), dtype=np.uint8)
        from PIL import Image

        p = tmp_path / "g.png"
        Image.fromarray(raw, mode="L").save(p)
        assert np.array_equal(load_image(p).values, raw / 255.0)


class TestSaveImage:
    def test_clamps_above_one(self, tmp_path):
        p = tmp_path / "hi.pgm"
        save_image(ImagePlane(np.full((1, 1), 1.2)), p)
        assert load_image(p).values[0, 0] == 1.0

    def test_clamps_below_zero(self, tmp_path):
        p = tmp_path / "lo.pgm"
        save_image(ImagePlane(np.full((1, 1), -0.1)), p)
        assert load_image(p).values[0, 0] == 0.0

    def test_rounds_half_away_from_zero(self, tmp_path):
        p = tmp_path / "half.pgm"
        save_image(ImagePlane(np.full((1, 1), 0.5)), p)
        raw = p.read_bytes()[-1]
        assert raw == 128  # round(127.5) away from zero

    def test_roundtrip_identity_on_byte_grid(self, tmp_path, rng):
        for trial in range(20):
            raw = rng.integers(0, 256, (6, 5), dtype=np.uint8)
            img = ImagePlane(raw / 255.0)
            for ext in (".pgm", ".png"):
                p = tmp_path / f"rt{trial}{ext}"
                save_image(img, p)
                assert np.array_equal(load_image(p).values, img.values)

    def test_unknown_extension(self, tmp_path):
        with pytest.raises(ImageFormatError):
            save_image(ImagePlane(np.zeros((2, 2))), tmp_path / "x.tiff")


class TestBlockAverage:
    def test_constant_stays_constant(self):
        img = ImagePlane(np.full((8, 8), 0.3))
        out = block_average(img, 4)
        assert out.shape == (2, 2)
        assert np.allclose(out.values, 0.3)

    def test_checkerboard_mean(self):
        out = block_average(ImagePlane(np.array([[0.0, 1.0], [1.0, 0.0]])), 2)
        assert out.shape == (1, 1)
        assert out.values[0, 0] == 0.5

    def test_factor_one_identity(self, rng):
        img = ImagePlane(rng.random((5, 7)))
        assert np.array_equal(block_average(img, 1).values, img.values)

    def test_non_divisible_rejected(self):
        with pytest.raises(ValueError):
            block_average(ImagePlane(np.zeros((6, 6))), 4)

    def test_preserves_mean(self, rng):
        for _ in range(10):
            img = ImagePlane(rng.random((12, 8)))
            for factor in (2, 4):
                assert abs(block_average(img, factor).values.mean() - img.values.mean()) <= 1e-12

    def test_composition(self, rng):
        for _ in range(10):
            img = ImagePlane(rng.random((24, 12)))
            two_step = block_average(block_average(img, 2), 3)
            one_step = block_average(img, 6)
            assert np.abs(two_step.values - one_step.values).max() <= 1e-12


class TestPhantoms:
    def test_flat(self):
        assert np.all(make_phantom("flat", 8, 8).values == 0.5)

    def test_quadrants_tv_closed_form(self):
        # two internal edges: uniform vertical jump 2/3 across n-1 pixels,
        # horizontal jump 1/3 across m-1 pixels, and the crossing pixel
        # contributes sqrt((2/3)^2 + (1/3)^2) once instead of the two terms
        img = make_phantom("quadrants", 8, 8)
        expected = 7 * (2 / 3) + 7 * (1 / 3) + np.sqrt(5) / 3
        assert tv_norm(img) == pytest.approx(expected, abs=1e-12)

    def test_quadrants_values(self):
        img = make_phantom("quadrants", 8, 8)
        assert set(np.unique(img.values)) == {0.0, 1 / 3, 2 / 3, 1.0}

    def test_disk_membership_exact(self):
        img = make_phantom("disk", 64, 64)
        cy = cx = 63 / 2
        for i in range(64):
            for j in range(64):
                inside = (i - cy) ** 2 + (j - cx) ** 2 <= 16.0**2
                assert img.values[i, j] == (1.0 if inside else 0.0)

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            make_phantom("flat", 4, 8)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_phantom("stripes", 8, 8)


class TestImagePlane:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            ImagePlane(np.array([[0.0, np.nan]]))

    def test_rejects_1d(self):
        with pytest.raises(ValueError):
            ImagePlane(np.zeros(4))

    def test_immutable(self):
        img = ImagePlane(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            img.values[0, 0] = 1.0
