"""Synthetic distortions and labelled distortion ladders.

Three families are generated: Gaussian blur (``gblur``), additive white
Gaussian noise (``awgn``) and JPEG-like 8x8 block quantization (``blocky``).
``dead_leaves`` produces natural-looking test content (occluding disks with
power-law sizes), so the whole pipeline can be exercised without licensed
image databases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy import fft as sfft
from scipy.ndimage import correlate1d

from .imagio import DMOS, Manifest, Sample, save_gray, write_manifest

GBLUR, AWGN, BLOCKY = "gblur", "awgn", "blocky"
KINDS = (GBLUR, AWGN, BLOCKY)
_LABELS = {GBLUR: "gblur", AWGN: "wn", BLOCKY: "jpeg"}

# ITU-T T.81 Annex K, table K.1 (luminance)
JPEG_LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


@dataclass(frozen=True)
class DistortionSpec:
    kind: str
    level: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distortion kind {self.kind!r}")
        if not (self.level >= 0 and math.isfinite(self.level)):
            raise ValueError(f"level must be a finite non-negative number, got {self.level}")
        if self.kind == BLOCKY and self.level < 1:
            raise ValueError("blocky quantization scale must be >= 1")


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, kernel truncated at ceil(3 sigma), mirrored borders."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    arr = np.asarray(img, dtype=np.float64)
    if sigma == 0:
        return arr.copy()
    k = gaussian_kernel1d(sigma)
    out = correlate1d(arr, k, axis=0, mode="reflect")
    return correlate1d(out, k, axis=1, mode="reflect")


def awgn(img, sigma: float, seed: int = 0) -> np.ndarray:
    """Add zero-mean Gaussian noise of standard deviation ``sigma``, then clamp to [0, 255]."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    arr = np.asarray(img, dtype=np.float64)
    if sigma == 0:
        return arr.copy()
    noise = np.random.default_rng(seed).normal(0.0, sigma, size=arr.shape)
    return np.clip(arr + noise, 0.0, 255.0)


def blocky(img, q: float, table: Optional[np.ndarray] = None) -> np.ndarray:
    """Quantize the AC coefficients of each 8x8 block's orthonormal DCT.

    Coefficients are divided by ``q * table`` (Annex-K luminance table by
    default), rounded and rescaled.  The DC term is kept exactly, so block
    means are preserved.  Pixels outside the last full block row/column are
    left untouched.
    """
    if q < 1:
        raise ValueError("quantization scale must be >= 1")
    arr = np.asarray(img, dtype=np.float64)
    step = q * (JPEG_LUMA_TABLE if table is None else np.asarray(table, dtype=np.float64))
    h, w = (arr.shape[0] // 8) * 8, (arr.shape[1] // 8) * 8
    out = arr.copy()
    if h == 0 or w == 0:
        return out
    blocks = arr[:h, :w].reshape(h // 8, 8, w // 8, 8).swapaxes(1, 2)
    coef = sfft.dctn(blocks, axes=(-2, -1), norm="ortho")
    quant = np.rint(coef / step) * step
    quant[..., 0, 0] = coef[..., 0, 0]
    rec = sfft.idctn(quant, axes=(-2, -1), norm="ortho")
    out[:h, :w] = rec.swapaxes(1, 2).reshape(h, w)
    return np.clip(out, 0.0, 255.0)


def apply(img, spec: DistortionSpec) -> np.ndarray:
    if spec.kind == GBLUR:
        return gaussian_blur(img, spec.level)
    if spec.kind == AWGN:
        return awgn(img, spec.level, spec.seed)
    return blocky(img, spec.level)


Chain = Union[DistortionSpec, Sequence[DistortionSpec]]


def _as_chain(item: Chain) -> tuple[DistortionSpec, ...]:
    return (item,) if isinstance(item, DistortionSpec) else tuple(item)


def apply_chain(img, chain: Chain, seed: Optional[int] = None) -> np.ndarray:
    out = np.asarray(img, dtype=np.float64)
    for step, spec in enumerate(_as_chain(chain)):
        if seed is not None and spec.kind == AWGN:
            spec = DistortionSpec(spec.kind, spec.level, _derive_seed(seed, step))
        out = apply(out, spec)
    return out


def severity(chain: Chain, scales: Optional[Mapping[str, float]] = None) -> float:
    """Pseudo-DMOS of a chain: sum of each step's level divided by its kind's scale.

    With the default unit scales a single-step chain scores its raw level.
    """
    scales = scales or {}
    return float(sum(s.level / scales.get(s.kind, 1.0) for s in _as_chain(chain)))


def chain_label(chain: Chain) -> str:
    kinds = {s.kind for s in _as_chain(chain)}
    return "multiple" if len(kinds) > 1 else _LABELS[kinds.pop()]


def _derive_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence([int(e) for e in entropy]).generate_state(1)[0])


def build_ladder(
    contents: Sequence,
    specs: Sequence[Chain],
    out_dir,
    content_ids: Optional[Sequence[str]] = None,
    scales: Optional[Mapping[str, float]] = None,
    seed: int = 0,
    manifest_name: str = "manifest.csv",
) -> Manifest:
    """Distort every content with every chain, write PNGs and a manifest.

    Scores are ``severity(chain, scales)`` (higher is worse).  Noise seeds are
    derived from (seed, content index, chain index) so results do not depend
    on generation order.
    """
    if not contents or not specs:
        raise ValueError("contents and specs must be non-empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if content_ids is None:
        content_ids = [f"c{i:03d}" for i in range(len(contents))]
    chains = sorted((_as_chain(s) for s in specs), key=lambda c: severity(c, scales))

    samples = []
    for ci, (img, cid) in enumerate(zip(contents, content_ids)):
        for li, chain in enumerate(chains):
            distorted = apply_chain(img, chain, seed=_derive_seed(seed, ci, li))
            path = out_dir / f"{cid}_{li:02d}.png"
            save_gray(distorted, path)
            samples.append(Sample(path, severity(chain, scales), cid, chain_label(chain)))
    manifest = Manifest(samples, DMOS)
    write_manifest(manifest, out_dir / manifest_name)
    return manifest


def dead_leaves(seed: int, shape: tuple[int, int] = (192, 192), n_leaves: int = 3000,
                r_min: float = 2.0, r_max: Optional[float] = None, texture: float = 3.0) -> np.ndarray:
    """Dead-leaves scene: occluding disks with radius density ~ r^-3.

    Smoothed Gaussian texture of amplitude ``texture`` and a random linear
    illumination gradient are added; values are clipped to [0, 255].
    """
    rng = np.random.default_rng(seed)
    h, w = shape
    r_max = r_max if r_max is not None else min(h, w) / 4.0
    img = np.full(shape, rng.uniform(60, 200))
    yy, xx = np.mgrid[0:h, 0:w]
    # inverse-CDF sampling of p(r) ~ r^-3 on [r_min, r_max]
    u = rng.uniform(size=n_leaves)
    radii = 1.0 / np.sqrt(r_min**-2 - u * (r_min**-2 - r_max**-2))
    cy = rng.uniform(-r_max, h + r_max, n_leaves)
    cx = rng.uniform(-r_max, w + r_max, n_leaves)
    gray = rng.uniform(10, 245, n_leaves)
    for r, y0, x0, g in zip(radii, cy, cx, gray):
        y1, y2 = max(int(y0 - r), 0), min(int(y0 + r) + 1, h)
        x1, x2 = max(int(x0 - r), 0), min(int(x0 + r) + 1, w)
        if y1 >= y2 or x1 >= x2:
            continue
        sub_y, sub_x = yy[y1:y2, x1:x2], xx[y1:y2, x1:x2]
        mask = (sub_y - y0) ** 2 + (sub_x - x0) ** 2 <= r * r
        img[y1:y2, x1:x2][mask] = g
    img += texture * gaussian_blur(rng.normal(size=shape), 1.0)
    gy, gx = rng.normal(scale=20.0, size=2)
    img += gy * (yy / h - 0.5) + gx * (xx / w - 0.5)
    return np.clip(img, 0.0, 255.0)
