"""Mean-subtracted contrast-normalized (MSCN) coefficients.

Local statistics use a 7x7 Gaussian window (half-width 3, standard deviation
7/6) normalized to unit sum.  Pixels outside the image come from half-sample
symmetric extension (``d c b a | a b c d | d c b a``).
"""

from __future__ import annotations

import numpy as np

HALF_WIDTH = 3
WINDOW_SIGMA = 7.0 / 6.0
STABILIZER = 1.0
PAD_MODE = "symmetric"


def gaussian_window(half_width: int = HALF_WIDTH, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    """Sampled 2-D Gaussian of shape (2K+1, 2K+1) rescaled to unit volume."""
    k = np.arange(-half_width, half_width + 1, dtype=np.float64)
    g = np.exp(-(k**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _padded(img, half: int) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    return np.pad(arr, half, mode=PAD_MODE)


def _shifts(w: np.ndarray):
    kh, kw = w.shape
    for dk in range(kh):
        for dl in range(kw):
            yield dk, dl, w[dk, dl]


def local_mean(img, w: np.ndarray | None = None) -> np.ndarray:
    """Gaussian-weighted local mean of every pixel.

    Accumulated as the centre value plus weighted neighbour differences, so a
    flat neighbourhood returns its own value exactly.
    """
    if w is None:
        w = gaussian_window()
    arr = np.asarray(img, dtype=np.float64)
    half = w.shape[0] // 2
    pad = _padded(arr, half)
    h, wd = arr.shape
    acc = np.zeros_like(arr)
    for dk, dl, weight in _shifts(w):
        acc += weight * (pad[dk:dk + h, dl:dl + wd] - arr)
    return arr + acc


def local_sigma(img, w: np.ndarray | None = None, mean_field: np.ndarray | None = None) -> np.ndarray:
    """Gaussian-weighted local standard deviation about ``mean_field``."""
    if w is None:
        w = gaussian_window()
    arr = np.asarray(img, dtype=np.float64)
    if mean_field is None:
        mean_field = local_mean(arr, w)
    half = w.shape[0] // 2
    pad = _padded(arr, half)
    h, wd = arr.shape
    var = np.zeros_like(arr)
    for dk, dl, weight in _shifts(w):
        d = pad[dk:dk + h, dl:dl + wd] - mean_field
        var += weight * (d * d)
    np.maximum(var, 0.0, out=var)
    return np.sqrt(var)


def mscn(img, w: np.ndarray | None = None) -> np.ndarray:
    """MSCN field ``(I - mu) / (sigma + 1)`` with the same shape as ``img``."""
    if w is None:
        w = gaussian_window()
    arr = np.asarray(img, dtype=np.float64)
    mu = local_mean(arr, w)
    sigma = local_sigma(arr, w, mu)
    return (arr - mu) / (sigma + STABILIZER)


def format_field(field: np.ndarray) -> str:
    """Plain-text float grid, one line per row, for diffing between implementations."""
    rows = (" ".join(repr(float(v)) for v in row) for row in np.asarray(field))
    return "\n".join(rows) + "\n"
