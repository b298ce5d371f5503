"""The 24-dimensional frequency-domain feature vector.

Layout (frozen; the model file format depends on it)::

    f1..f5    S_g^LF histogram: zero, (0,.25], (.25,.5], (.5,.75], (.75,inf)
    f6..f10   S_m^LF histogram
    f11..f15  S_g^HF histogram
    f16..f20  S_m^HF histogram
    f21, f22  mean of the 100 largest normalized S_g^HF, S_m^HF
    f23, f24  mean of the 100 smallest normalized S_g^HF, S_m^HF

``g`` refers to the grayscale image and ``m`` to its MSCN field.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import blockfreq
from .errors import FormatError, VersionError
from .mscn import mscn

N_FEATURES = 24
FEATURE_NAMES = tuple(f"f{i}" for i in range(1, N_FEATURES + 1))
FEATURE_LAYOUT = "freqiqa-f24/1"
FEATURE_CSV_TAG = "# format=freqiqa-features/1"

BIN_EDGES = (0.25, 0.5, 0.75)
DEFAULT_EPSILON = 1e-6
N_EXTREMES = 100


@dataclass(frozen=True)
class NormalizationFactors:
    g_lf: float = 1000.0
    m_lf: float = 100.0
    g_hf: float = 100.0
    m_hf: float = 20.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"normalization factor {f.name} must be positive, got {v}")

    @classmethod
    def parse(cls, text: str) -> "NormalizationFactors":
        """Parse ``"a,b,c,d"`` given in the order g_lf, m_lf, g_hf, m_hf."""
        parts = [p for p in text.replace(" ", "").split(",") if p]
        if len(parts) != 4:
            raise ValueError(f"expected four comma-separated factors, got {text!r}")
        return cls(*(float(p) for p in parts))


@dataclass(frozen=True)
class SumParameterSets:
    """Per-block band sums, one entry per block in raster order."""

    g_lf: np.ndarray
    g_hf: np.ndarray
    m_lf: np.ndarray
    m_hf: np.ndarray

    def __post_init__(self):
        n = {len(self.g_lf), len(self.g_hf), len(self.m_lf), len(self.m_hf)}
        if len(n) != 1:
            raise ValueError("sum-parameter sets must share one block count")

    @property
    def n_blocks(self) -> int:
        return len(self.g_lf)

    def ordered(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Sets in feature-vector order: g_lf, m_lf, g_hf, m_hf."""
        return self.g_lf, self.m_lf, self.g_hf, self.m_hf


def _stack(spectra) -> np.ndarray:
    if isinstance(spectra, np.ndarray):
        return spectra.reshape(-1, blockfreq.BLOCK, blockfreq.BLOCK)
    return np.stack([s.magnitudes for s in spectra]) if len(spectra) else np.empty((0, 8, 8))


def sum_parameters(gray_spectra, mscn_spectra, band_map: Optional[blockfreq.BandIndexMap] = None) -> SumParameterSets:
    """Sum LF (index 1-3) and HF (index 5-8) magnitudes per block for both fields.

    Spectra may be lists of BlockSpectrum or magnitude arrays of shape
    (..., 8, 8).  DC and mid-band cells are excluded.
    """
    if band_map is None:
        band_map = blockfreq.manhattan_index()
    g = _stack(gray_spectra)
    m = _stack(mscn_spectra)
    if len(g) == 0 or len(m) == 0:
        raise ValueError("no blocks to summarize")
    if g.shape != m.shape:
        raise ValueError(f"gray and MSCN tilings differ: {len(g)} vs {len(m)} blocks")
    lf = band_map.mask(blockfreq.LF)
    hf = band_map.mask(blockfreq.HF)
    return SumParameterSets(
        g_lf=g[:, lf].sum(axis=1),
        g_hf=g[:, hf].sum(axis=1),
        m_lf=m[:, lf].sum(axis=1),
        m_hf=m[:, hf].sum(axis=1),
    )


def normalize(sets: SumParameterSets, nf: NormalizationFactors = NormalizationFactors()) -> SumParameterSets:
    # values above 1 are kept; binning folds them into the top bin
    return SumParameterSets(
        g_lf=sets.g_lf / nf.g_lf,
        g_hf=sets.g_hf / nf.g_hf,
        m_lf=sets.m_lf / nf.m_lf,
        m_hf=sets.m_hf / nf.m_hf,
    )


def _histogram(values: np.ndarray, eps: float) -> np.ndarray:
    zero = values <= eps
    upper = np.searchsorted(BIN_EDGES, values, side="left")  # (eps,.25]->0 ... (.75,inf)->3
    counts = np.zeros(5)
    counts[0] = zero.sum()
    counts[1:] = np.bincount(upper[~zero], minlength=4)
    return counts / len(values)


def histogram_features(normalized: SumParameterSets, zero_epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """f1..f20: fraction of blocks per bin for each normalized set."""
    if zero_epsilon < 0:
        raise ValueError("zero_epsilon must be non-negative")
    if normalized.n_blocks == 0:
        raise ValueError("no blocks to histogram")
    return np.concatenate([_histogram(v, zero_epsilon) for v in normalized.ordered()])


def _extremes(values: np.ndarray) -> tuple[float, float]:
    k = min(N_EXTREMES, len(values))
    s = np.sort(values)
    return float(s[-k:].mean()), float(s[:k].mean())


def extremal_means(normalized: SumParameterSets) -> np.ndarray:
    """f21..f24 from the normalized HF sets."""
    if normalized.n_blocks == 0:
        raise ValueError("no blocks")
    g_top, g_bottom = _extremes(normalized.g_hf)
    m_top, m_bottom = _extremes(normalized.m_hf)
    return np.array([g_top, m_top, g_bottom, m_bottom])


def sum_parameters_of(img) -> SumParameterSets:
    arr = np.asarray(img, dtype=np.float64)
    return sum_parameters(blockfreq.block_magnitudes(arr), blockfreq.block_magnitudes(mscn(arr)))


def extract(img, nf: NormalizationFactors = NormalizationFactors(), zero_epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Full pipeline: image -> 24 features."""
    normed = normalize(sum_parameters_of(img), nf)
    return np.concatenate([histogram_features(normed, zero_epsilon), extremal_means(normed)])


# -- feature CSV ---------------------------------------------------------------

@dataclass
class FeatureTable:
    paths: list[str]
    features: np.ndarray                 # (n, 24)
    scores: Optional[np.ndarray] = None  # (n,) or None

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        if self.features.shape != (len(self.paths), N_FEATURES):
            raise ValueError(f"feature matrix shape {self.features.shape} does not match {len(self.paths)} paths")
        if self.scores is not None:
            self.scores = np.asarray(self.scores, dtype=np.float64)

    def with_scores(self, scores) -> "FeatureTable":
        return replace(self, scores=np.asarray(scores, dtype=np.float64))


def format_feature_csv(table: FeatureTable) -> str:
    buf = io.StringIO()
    buf.write(FEATURE_CSV_TAG + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    header = ["path", *FEATURE_NAMES] + (["score"] if table.scores is not None else [])
    writer.writerow(header)
    for i, p in enumerate(table.paths):
        row = [p, *(repr(float(v)) for v in table.features[i])]
        if table.scores is not None:
            row.append(repr(float(table.scores[i])))
        writer.writerow(row)
    return buf.getvalue()


def write_feature_csv(table: FeatureTable, path) -> None:
    Path(path).write_text(format_feature_csv(table), encoding="utf-8")


def parse_feature_csv(text: str) -> FeatureTable:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise FormatError("feature file lacks its format tag line")
    if lines[0].strip() != FEATURE_CSV_TAG:
        raise VersionError(f"unsupported feature file format {lines[0].strip()!r}; expected {FEATURE_CSV_TAG!r}")
    reader = csv.reader(lines[1:])
    header = next(reader, None)
    if header is None or header[: N_FEATURES + 1] != ["path", *FEATURE_NAMES]:
        raise FormatError("feature file header must be path,f1,...,f24[,score]")
    has_score = len(header) == N_FEATURES + 2 and header[-1] == "score"
    if len(header) not in (N_FEATURES + 1, N_FEATURES + 2) or (len(header) == N_FEATURES + 2 and not has_score):
        raise FormatError(f"unexpected feature file columns: {header[N_FEATURES + 1:]}")
    paths, rows, scores = [], [], []
    for rowno, row in enumerate(reader, start=3):
        if not row:
            continue
        if len(row) != len(header):
            raise FormatError(f"row {rowno}: expected {len(header)} fields, got {len(row)}")
        try:
            vals = [float(v) for v in row[1:]]
        except ValueError:
            raise FormatError(f"row {rowno}: non-numeric value") from None
        paths.append(row[0])
        rows.append(vals[:N_FEATURES])
        if has_score:
            scores.append(vals[N_FEATURES])
    feats = np.array(rows, dtype=np.float64).reshape(-1, N_FEATURES)
    return FeatureTable(paths, feats, np.array(scores) if has_score else None)


def read_feature_csv(path) -> FeatureTable:
    return parse_feature_csv(Path(path).read_text(encoding="utf-8"))


def group_sums(vec: Sequence[float]) -> np.ndarray:
    """Sums of the four five-bin histogram groups (each should be 1)."""
    return np.asarray(vec, dtype=np.float64)[:20].reshape(4, 5).sum(axis=1)
