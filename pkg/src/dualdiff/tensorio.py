"""On-disk formats for tensors and checkpoints.

Both are a single line of compact JSON (the header) terminated by ``\\n`` and
followed by a raw little-endian float32 payload::

    {"shape": [3, 2], "dtype": "f32le", "seed": 0, "config_hash": "..."}\\n<24 bytes>

A checkpoint header additionally lists ``layers`` as ``[[name, shape], ...]``;
its payload is the concatenation of those arrays in that order.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

DTYPE = "f32le"
_LE_F32 = np.dtype("<f4")


class TensorFileError(ValueError):
    pass


def _atomic_write(path, blob: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def encode(header: dict, payload: np.ndarray) -> bytes:
    head = json.dumps(header, sort_keys=True, separators=(",", ":"))
    if "\n" in head:
        raise TensorFileError("header must serialise to a single line")
    return head.encode() + b"\n" + np.ascontiguousarray(payload, dtype=_LE_F32).tobytes()


def decode(blob: bytes) -> tuple[dict, bytes]:
    nl = blob.find(b"\n")
    if nl < 0:
        raise TensorFileError("missing header terminator")
    try:
        header = json.loads(blob[:nl].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise TensorFileError(f"malformed header: {e}") from None
    if not isinstance(header, dict) or header.get("dtype") != DTYPE:
        raise TensorFileError("header must be an object with dtype 'f32le'")
    return header, blob[nl + 1:]


def _count(shape) -> int:
    if not isinstance(shape, list) or not all(isinstance(d, int) and d >= 0 for d in shape):
        raise TensorFileError(f"bad shape {shape!r}")
    return int(np.prod(shape, dtype=np.int64))


def write_tensor_file(path, data, seed=None, config_hash=None, **extra) -> Path:
    data = np.asarray(data)
    header = {"shape": list(data.shape), "dtype": DTYPE, "seed": seed, "config_hash": config_hash, **extra}
    _atomic_write(path, encode(header, data))
    return Path(path)


def read_tensor_file(path) -> tuple[np.ndarray, dict]:
    header, payload = decode(Path(path).read_bytes())
    if "shape" not in header:
        raise TensorFileError("header has no shape")
    n = _count(header["shape"])
    if len(payload) != 4 * n:
        raise TensorFileError(f"payload is {len(payload)} bytes, header promises {4 * n}")
    arr = np.frombuffer(payload, dtype=_LE_F32).reshape(header["shape"])
    return arr.astype(np.float32), header


def write_checkpoint(path, params, seed=None, config_hash=None, step=0, **extra) -> Path:
    from .denoiser import LAYER_ORDER

    layers = [[k, list(params.weights[k].shape)] for k in LAYER_ORDER]
    payload = np.concatenate([params.weights[k].astype(_LE_F32).ravel() for k in LAYER_ORDER])
    header = {"kind": "checkpoint", "dtype": DTYPE, "layers": layers, "hyper": params.hyper(),
              "seed": seed, "config_hash": config_hash, "step": step, **extra}
    _atomic_write(path, encode(header, payload))
    return Path(path)


def read_checkpoint(path):
    from .denoiser import LAYER_ORDER, DenoiserParams

    header, payload = decode(Path(path).read_bytes())
    if header.get("kind") != "checkpoint" or "layers" not in header or "hyper" not in header:
        raise TensorFileError("not a checkpoint file")
    names = [name for name, _ in header["layers"]]
    if names != list(LAYER_ORDER):
        raise TensorFileError(f"unexpected layer order {names}")
    total = sum(_count(shape) for _, shape in header["layers"])
    if len(payload) != 4 * total:
        raise TensorFileError(f"payload is {len(payload)} bytes, header promises {4 * total}")
    flat = np.frombuffer(payload, dtype=_LE_F32)
    weights, off = {}, 0
    for name, shape in header["layers"]:
        n = _count(shape)
        weights[name] = flat[off:off + n].reshape(shape).astype(np.float32)
        off += n
    h = header["hyper"]
    params = DenoiserParams(h["D"], h["H"], h["E"], h["T"], h.get("r_mode", "sample"), weights)
    try:
        params.validate()
    except ValueError as e:
        raise TensorFileError(str(e)) from None
    params.touch()
    return params, header
