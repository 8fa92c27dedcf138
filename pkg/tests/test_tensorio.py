import numpy as np
import pytest

from dualdiff.denoiser import LAYER_ORDER, init_params
from dualdiff.rng import Rng
from dualdiff.tensorio import (TensorFileError, read_checkpoint, read_tensor_file, write_checkpoint,
                               write_tensor_file)


def test_round_trip_bitwise(tmp_path):
    x = Rng(0).normal((7, 3)).astype(np.float32)
    p = write_tensor_file(tmp_path / "a.f32", x, seed=4, config_hash="abc", note="hi")
    y, h = read_tensor_file(p)
    assert y.tobytes() == x.tobytes()
    assert h["seed"] == 4 and h["config_hash"] == "abc" and h["note"] == "hi"


def test_payload_size(tmp_path):
    p = write_tensor_file(tmp_path / "a.f32", np.zeros((3, 2), np.float32))
    blob = p.read_bytes()
    assert len(blob) - blob.index(b"\n") - 1 == 24


def test_empty(tmp_path):
    y, _ = read_tensor_file(write_tensor_file(tmp_path / "e.f32", np.zeros((0, 2), np.float32)))
    assert y.shape == (0, 2)


def test_truncated_and_malformed(tmp_path):
    p = write_tensor_file(tmp_path / "a.f32", np.ones((3, 2), np.float32))
    p.write_bytes(p.read_bytes()[:-1])
    with pytest.raises(TensorFileError):
        read_tensor_file(p)
    p.write_bytes(b"not json\n1234")
    with pytest.raises(TensorFileError):
        read_tensor_file(p)
    p.write_bytes(b'{"dtype": "f32le"}')
    with pytest.raises(TensorFileError):
        read_tensor_file(p)


def test_checkpoint_round_trip(tmp_path):
    params = init_params(2, 16, 8, seed=2, T=100)
    path = write_checkpoint(tmp_path / "m.ckpt", params, seed=2, config_hash="h", step=5)
    back, header = read_checkpoint(path)
    assert back.hyper() == params.hyper() and header["step"] == 5
    for k in LAYER_ORDER:
        assert back.weights[k].tobytes() == params.weights[k].tobytes()
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(TensorFileError):
        read_checkpoint(path)
    with pytest.raises(TensorFileError):
        read_checkpoint(write_tensor_file(tmp_path / "x.f32", np.zeros(3, np.float32)))
