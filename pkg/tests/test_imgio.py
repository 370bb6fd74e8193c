import struct

import numpy as np
import pytest

from rpsfcam.errors import ConfigurationError
from rpsfcam.imgio import (
    read_image,
    read_pfm,
    read_png,
    read_png_indices,
    write_pfm,
    write_png,
    write_png_indices,
)


def test_pfm_gray_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.normal(size=(7, 5)).astype(np.float32)
    path = tmp_path / "x.pfm"
    write_pfm(path, data)
    back = read_pfm(path)
    assert back.shape == (7, 5)
    assert np.array_equal(back.astype(np.float32), data)


def test_pfm_color_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    data = rng.uniform(-3, 3, (6, 9, 3)).astype(np.float32)
    path = tmp_path / "x.pfm"
    write_pfm(path, data)
    assert np.array_equal(read_pfm(path).astype(np.float32), data)


def test_pfm_byte_layout(tmp_path):
    # header: type, dims, scale -1.0 (little endian), rows bottom-to-top
    data = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
    path = tmp_path / "x.pfm"
    write_pfm(path, data)
    blob = path.read_bytes()
    assert blob.startswith(b"Pf\n2 2\n-1.0\n")
    payload = blob[len(b"Pf\n2 2\n-1.0\n") :]
    vals = struct.unpack("<4f", payload)
    assert vals == (3.0, 4.0, 1.0, 2.0)  # bottom row first


def test_pfm_rejects_bad_shapes(tmp_path):
    with pytest.raises(ConfigurationError):
        write_pfm(tmp_path / "x.pfm", np.zeros((4, 4, 2)))
    with pytest.raises(ConfigurationError):
        write_pfm(tmp_path / "x.pfm", np.zeros(4))


def test_pfm_rejects_garbage_header(tmp_path):
    path = tmp_path / "bad.pfm"
    path.write_bytes(b"P6\n2 2\n255\n" + b"\x00" * 12)
    with pytest.raises(ConfigurationError):
        read_pfm(path)


def test_png8_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    img = rng.uniform(size=(8, 8, 3))
    path = tmp_path / "x.png"
    write_png(path, img, bit_depth=8)
    back = read_png(path)
    assert back.shape == (8, 8, 3)
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-9


def test_png16_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    img = rng.uniform(size=(8, 8))
    path = tmp_path / "x.png"
    write_png(path, img, bit_depth=16)
    back = read_png(path)
    assert np.abs(back - img).max() <= 0.5 / 65535 + 1e-9


def test_png_clamps_input(tmp_path):
    path = tmp_path / "x.png"
    write_png(path, np.array([[-0.5, 1.5]]), bit_depth=8)
    back = read_png(path)
    assert back[0, 0] == 0.0 and back[0, 1] == 1.0


def test_png_validation(tmp_path):
    with pytest.raises(ConfigurationError):
        write_png(tmp_path / "x.png", np.zeros((4, 4, 3)), bit_depth=16)
    with pytest.raises(ConfigurationError):
        write_png(tmp_path / "x.png", np.zeros((4, 4)), bit_depth=12)


def test_png_indices_round_trip(tmp_path):
    idx = np.array([[0, 1, 2], [9, 500, 65535]])
    path = tmp_path / "idx.png"
    write_png_indices(path, idx)
    assert np.array_equal(read_png_indices(path), idx)


def test_png_indices_range_check(tmp_path):
    with pytest.raises(ConfigurationError):
        write_png_indices(tmp_path / "idx.png", np.array([[-1]]))
    with pytest.raises(ConfigurationError):
        write_png_indices(tmp_path / "idx.png", np.array([[70000]]))


def test_read_image_dispatch(tmp_path):
    data = np.random.default_rng(4).uniform(size=(4, 4)).astype(np.float32)
    write_pfm(tmp_path / "a.pfm", data)
    write_png(tmp_path / "a.png", data, bit_depth=8)
    assert np.array_equal(read_image(tmp_path / "a.pfm").astype(np.float32), data)
    assert read_image(tmp_path / "a.png").shape == (4, 4)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    write_pfm(tmp_path / "x.pfm", np.zeros((4, 4), dtype=np.float32))
    write_png(tmp_path / "x.png", np.zeros((4, 4)))
    leftovers = [p for p in tmp_path.iterdir() if p.suffix == ".tmp"]
    assert leftovers == []
