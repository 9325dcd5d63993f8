"""PNG and PPM codecs: quantization contract and rejection of bad inputs."""

import numpy as np
import pytest

from fanorm.images import ImageFormatError, read_image, write_image


def test_write_read_round_trip_error_bound(tmp_path, rng):
    img = rng.random((3, 9, 7)).astype(np.float32)
    for ext in ("png", "ppm"):
        path = tmp_path / f"t.{ext}"
        write_image(img, path)
        back = read_image(path)
        assert back.shape == (1, 3, 9, 7)
        assert np.max(np.abs(back[0] - img)) <= 0.5 / 255 + 1e-9


def test_1x1_white_ppm_exact_bytes(tmp_path):
    path = tmp_path / "w.ppm"
    write_image(np.ones((3, 1, 1), dtype=np.float32), path)
    assert path.read_bytes() == b"P6\n1 1\n255\n\xff\xff\xff"


def test_byte_128_reads_as_128_over_255(tmp_path):
    path = tmp_path / "g.ppm"
    path.write_bytes(b"P6\n1 1\n255\n" + bytes([128, 128, 128]))
    img = read_image(path)
    assert img[0, 0, 0, 0] == np.float32(128 / 255)


def test_write_quantizes_round_half_up(tmp_path):
    # v*255 + 0.5 floored: 0.5/255 lands exactly on the 1|0 boundary -> 1
    vals = np.array([0.0, 0.4 / 255, 0.5 / 255, 1.0 / 255, 1.0], dtype=np.float64)
    img = np.tile(vals, (3, 1)).reshape(3, 1, 5)
    path = tmp_path / "q.ppm"
    write_image(img, path)
    raw = path.read_bytes()[-15:]
    assert list(raw[0::3]) == [0, 0, 1, 1, 255]


def test_write_clamps_out_of_range(tmp_path):
    img = np.array([[[-0.5]], [[0.5]], [[1.5]]], dtype=np.float32)
    path = tmp_path / "c.ppm"
    write_image(img, path)
    assert list(path.read_bytes()[-3:]) == [0, 128, 255]


def test_png_and_ppm_write_identical_pixels(tmp_path, rng):
    img = rng.random((3, 6, 6)).astype(np.float32)
    write_image(img, tmp_path / "a.png")
    write_image(img, tmp_path / "a.ppm")
    assert np.array_equal(read_image(tmp_path / "a.png"), read_image(tmp_path / "a.ppm"))


def test_accepts_batch_of_one(tmp_path, rng):
    img = rng.random((1, 3, 4, 4)).astype(np.float32)
    write_image(img, tmp_path / "b.png")
    assert read_image(tmp_path / "b.png").shape == (1, 3, 4, 4)


def test_rejects_unknown_extension(tmp_path):
    with pytest.raises(ImageFormatError):
        write_image(np.zeros((3, 2, 2)), tmp_path / "x.jpg")


def test_rejects_non_p6_ppm(tmp_path):
    path = tmp_path / "p3.ppm"
    path.write_bytes(b"P3\n1 1\n255\n255 255 255\n")
    with pytest.raises(ImageFormatError) as exc:
        read_image(path)
    assert "P6" in str(exc.value)


def test_rejects_wrong_ppm_maxval(tmp_path):
    path = tmp_path / "m.ppm"
    path.write_bytes(b"P6\n1 1\n65535\n" + bytes(6))
    with pytest.raises(ImageFormatError) as exc:
        read_image(path)
    assert "maxval" in str(exc.value)


def test_rejects_truncated_ppm_pixels(tmp_path):
    path = tmp_path / "t.ppm"
    path.write_bytes(b"P6\n2 2\n255\n" + bytes(5))
    with pytest.raises(ImageFormatError):
        read_image(path)


def test_rejects_grayscale_png(tmp_path):
    from PIL import Image

    path = tmp_path / "gray.png"
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8), mode="L").save(path)
    with pytest.raises(ImageFormatError) as exc:
        read_image(path)
    assert "color type" in str(exc.value)


def test_rejects_16_bit_png(tmp_path):
    from PIL import Image

    path = tmp_path / "deep.png"
    arr = np.zeros((4, 4), dtype=np.uint16)
    Image.fromarray(arr).save(path)
    with pytest.raises(ImageFormatError) as exc:
        read_image(path)
    assert "depth" in str(exc.value) or "color type" in str(exc.value)
