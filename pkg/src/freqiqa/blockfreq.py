"""Blockwise 8x8 DFT, centre shift and Manhattan-distance band labelling."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np

BLOCK = 8
DC_POS = (BLOCK // 2, BLOCK // 2)

DC, LF, MF, HF = "DC", "LF", "MF", "HF"
LF_INDICES = (1, 2, 3)
MF_INDICES = (4,)
HF_INDICES = (5, 6, 7, 8)


@dataclass(frozen=True)
class BlockSpectrum:
    block_row: int
    block_col: int
    magnitudes: np.ndarray  # 8x8, DC at (4, 4)


@dataclass(frozen=True)
class BandIndexMap:
    index: np.ndarray   # int, 8x8
    labels: np.ndarray  # str, 8x8

    def mask(self, band: str) -> np.ndarray:
        return self.labels == band

    def counts(self) -> dict[str, int]:
        return {b: int(self.mask(b).sum()) for b in (DC, LF, MF, HF)}


def dft8x8(block) -> np.ndarray:
    """Unnormalized forward 2-D DFT of one 8x8 block."""
    b = np.asarray(block, dtype=np.float64)
    if b.shape != (BLOCK, BLOCK):
        raise ValueError(f"expected an 8x8 block, got {b.shape}")
    return np.fft.fft2(b)


def center_shift(spectrum) -> np.ndarray:
    """Circularly shift the last two axes by half a period; DC moves to (4, 4)."""
    s = np.asarray(spectrum)
    m, n = s.shape[-2:]
    return np.roll(s, (m // 2, n // 2), axis=(-2, -1))


def band_label(i: int) -> str:
    if i == 0:
        return DC
    if i in LF_INDICES:
        return LF
    if i in MF_INDICES:
        return MF
    return HF


@lru_cache(maxsize=None)
def manhattan_index() -> BandIndexMap:
    u = np.arange(BLOCK)
    u0, v0 = DC_POS
    index = np.abs(u0 - u)[:, None] + np.abs(v0 - u)[None, :]
    labels = np.vectorize(band_label, otypes=[object])(index).astype("<U2")
    index.flags.writeable = False
    labels.flags.writeable = False
    return BandIndexMap(index, labels)


def tile(field) -> np.ndarray:
    """Non-overlapping 8x8 tiles from the top-left, remainder cropped.

    Returns an array of shape (rows, cols, 8, 8).
    """
    arr = np.asarray(field, dtype=np.float64)
    rows, cols = arr.shape[0] // BLOCK, arr.shape[1] // BLOCK
    if rows == 0 or cols == 0:
        raise ValueError(f"field of shape {arr.shape} holds no full 8x8 block")
    arr = arr[: rows * BLOCK, : cols * BLOCK]
    return arr.reshape(rows, BLOCK, cols, BLOCK).swapaxes(1, 2)


def block_magnitudes(field) -> np.ndarray:
    """Centre-shifted DFT magnitudes of every block, shape (rows, cols, 8, 8)."""
    blocks = tile(field)
    return np.abs(center_shift(np.fft.fft2(blocks, axes=(-2, -1))))


def block_spectra(field) -> list[BlockSpectrum]:
    """One BlockSpectrum per tile, in raster order."""
    return list(iter_block_spectra(field))


def iter_block_spectra(field) -> Iterator[BlockSpectrum]:
    mags = block_magnitudes(field)
    rows, cols = mags.shape[:2]
    for r in range(rows):
        for c in range(cols):
            yield BlockSpectrum(r, c, mags[r, c])


def format_block(magnitudes: np.ndarray) -> str:
    return "\n".join(" ".join(f"{v:10.4f}" for v in row) for row in np.asarray(magnitudes)) + "\n"
