"""Built-in toy datasets."""
from __future__ import annotations

import numpy as np

from .rng import Rng

GAUSS8_STD = 0.1
IMAGE8_SIDE = 8


def gauss8(n, rng: Rng):
    """Equal mixture of 8 isotropic Gaussians (std 0.1) centred on the unit circle."""
    k = rng.integers(0, 7, size=n)
    ang = 2 * np.pi * k / 8
    centers = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return centers + GAUSS8_STD * rng.normal((n, 2))


def swissroll(n, rng: Rng):
    """2-D Swiss roll (1.5 pi .. 4.5 pi), scaled so the coordinates have roughly unit scale."""
    theta = 1.5 * np.pi * (1 + 2 * rng.uniform(n))
    pts = np.stack([theta * np.cos(theta), theta * np.sin(theta)], axis=1)
    pts = pts + 0.5 * rng.normal((n, 2))
    return pts / 7.5


def checkerboard(n, rng: Rng):
    """Uniform over the 8 'black' unit squares of a 4x4 board covering [-2, 2]^2."""
    x = rng.uniform(n, -2.0, 2.0)
    y_cell = rng.uniform(n, 0.0, 1.0) + 2.0 * rng.integers(0, 1, size=n) - 2.0
    # shift y by one cell on columns of odd parity so black squares alternate
    y = y_cell + (np.floor(x) % 2)
    return np.stack([x, y], axis=1)


def point(n, rng: Rng, c=(0.0, 0.0)):
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    return np.tile(c, (n, 1))


def image8(n, rng: Rng):
    """Procedural 8x8 images in [-1, 1]: stripes, checks, rings and gradients with random phase."""
    side = IMAGE8_SIDE
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    kind = rng.integers(0, 3, size=n)
    phase = rng.integers(0, side - 1, size=n)
    period = rng.integers(2, 4, size=n)
    out = np.empty((n, side, side))
    for i in range(n):
        p, w = phase[i], period[i]
        if kind[i] == 0:
            img = np.where(((xx + p) // w) % 2 == 0, 1.0, -1.0)
        elif kind[i] == 1:
            img = np.where(((yy + p) // w) % 2 == 0, 1.0, -1.0)
        elif kind[i] == 2:
            img = np.where(((xx + p) // w + (yy + p) // w) % 2 == 0, 1.0, -1.0)
        else:
            c = (p % (side // 2)) + 1.5
            d = np.maximum(np.abs(xx - c), np.abs(yy - c))
            img = np.where(d.astype(int) % w == 0, 1.0, -1.0)
        out[i] = img
    contrast = rng.uniform((n, 1, 1), 0.6, 1.0)
    return (out * contrast).reshape(n, side * side)


DATASETS = {
    "gauss8": (gauss8, 2),
    "swissroll": (swissroll, 2),
    "checkerboard": (checkerboard, 2),
    "point": (point, None),
    "image8": (image8, IMAGE8_SIDE * IMAGE8_SIDE),
}


def dataset_dim(name, c=(0.0, 0.0)) -> int:
    if name not in DATASETS:
        raise ValueError(f"unknown dataset {name!r}; choose from {sorted(DATASETS)}")
    dim = DATASETS[name][1]
    return len(np.asarray(c).reshape(-1)) if dim is None else dim


def dataset_sample(name: str, n: int, seed: int, c=(0.0, 0.0)) -> np.ndarray:
    """n samples (n x D) of a named dataset, reproducible from ``seed``."""
    dataset_dim(name, c)
    fn = DATASETS[name][0]
    rng = Rng(seed, 7)
    if name == "point":
        return fn(n, rng, c)
    return np.asarray(fn(n, rng), dtype=np.float64).reshape(n, -1)
