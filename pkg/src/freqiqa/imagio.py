"""Image decoding, grayscale conversion and dataset manifests.

Manifest files are UTF-8 CSV with the header ``path,score,distortion,content_id``
and an optional first comment line ``# polarity=dmos`` (or ``mos``).  Relative
paths are resolved against the manifest's own directory.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DimensionError, FormatError, ImageReadError

BLOCK = 8
LUMA_WEIGHTS = (0.299, 0.587, 0.114)  # ITU-R BT.601

DISTORTION_LABELS = frozenset({"jpeg", "gblur", "wn", "multiple", "pristine"})
MANIFEST_COLUMNS = ("path", "score", "distortion", "content_id")

DMOS = "higher_is_worse"
MOS = "higher_is_better"
_POLARITY_TAGS = {"dmos": DMOS, "mos": MOS}


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Immutable luminance field, values nominally in [0, 255]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise DimensionError(f"expected a 2-D luminance array, got shape {arr.shape}")
        h, w = arr.shape
        if h < BLOCK or w < BLOCK:
            raise DimensionError(f"image is {w}x{h}; at least {BLOCK}x{BLOCK} is required")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.data
        return self.data.astype(dtype)


def to_gray(pixels: np.ndarray) -> np.ndarray:
    """BT.601 luma of an HxWx3(+alpha) array; 2-D arrays pass through as float."""
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] in (3, 4):
        r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
        wr, wg, wb = LUMA_WEIGHTS
        return wr * r + wg * g + wb * b
    if arr.ndim == 3 and arr.shape[2] in (1, 2):
        return arr[..., 0]
    raise DimensionError(f"cannot interpret array of shape {arr.shape} as an image")


def load_gray(image_path) -> GrayImage:
    """Decode an 8-bit raster image and return its luminance as a GrayImage."""
    path = Path(image_path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "RGB", "RGBA", "LA"):
                pixels = np.asarray(im)
            elif im.mode in ("I;16", "I", "F"):
                raise ImageReadError(f"{path}: only 8-bit images are supported (mode {im.mode})")
            else:
                pixels = np.asarray(im.convert("RGB"))
    except (FileNotFoundError, IsADirectoryError, PermissionError, UnidentifiedImageError) as exc:
        raise ImageReadError(f"cannot read image {path}: {exc}") from exc
    except OSError as exc:
        if isinstance(exc, ImageReadError):
            raise
        raise ImageReadError(f"cannot decode image {path}: {exc}") from exc
    return GrayImage(to_gray(pixels))


def save_gray(img, path) -> None:
    """Write a luminance field as a lossless 8-bit PNG (values rounded, clipped)."""
    arr = np.clip(np.rint(np.asarray(img, dtype=np.float64)), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(Path(path), format="PNG")


@dataclass(frozen=True)
class Sample:
    image_path: Path
    subjective_score: float
    content_id: str
    distortion_label: Optional[str] = None

    def __post_init__(self):
        if not math.isfinite(self.subjective_score):
            raise FormatError(f"non-finite score for {self.image_path}")
        if not self.content_id:
            raise FormatError(f"empty content_id for {self.image_path}")


@dataclass
class Manifest:
    samples: list[Sample] = field(default_factory=list)
    score_polarity: str = DMOS

    def __len__(self):
        return len(self.samples)

    @property
    def content_ids(self) -> list[str]:
        """Distinct content ids in first-appearance order."""
        return list(dict.fromkeys(s.content_id for s in self.samples))

    @property
    def scores(self) -> np.ndarray:
        return np.array([s.subjective_score for s in self.samples], dtype=np.float64)

    def validate(self) -> list[str]:
        """Return a list of invariant violations (empty when the manifest is usable)."""
        problems = []
        if not self.samples:
            problems.append("manifest has no samples")
        if len(self.content_ids) < 2:
            problems.append("manifest needs at least 2 distinct content_id values for a content split")
        return problems

    def subset(self, indices: Iterable[int]) -> "Manifest":
        return Manifest([self.samples[i] for i in indices], self.score_polarity)


def _parse_polarity(line: str) -> str:
    body = line.lstrip("#").strip()
    key, _, value = body.partition("=")
    if key.strip() != "polarity":
        raise FormatError(f"unrecognised manifest header comment: {line.strip()!r}")
    tag = value.strip().lower()
    if tag not in _POLARITY_TAGS:
        raise FormatError(f"polarity must be dmos or mos, got {value.strip()!r}")
    return _POLARITY_TAGS[tag]


def parse_manifest(text: str, base_dir: Path = Path(".")) -> Manifest:
    lines = text.splitlines()
    polarity = DMOS
    if lines and lines[0].lstrip().startswith("#"):
        polarity = _parse_polarity(lines[0])
        lines = lines[1:]
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    if reader.fieldnames is None:
        raise FormatError("manifest is empty")
    header = [h.strip() for h in reader.fieldnames]
    missing = [c for c in MANIFEST_COLUMNS if c not in header]
    if missing:
        raise FormatError(f"manifest is missing required column(s): {', '.join(missing)}")
    reader.fieldnames = header

    samples = []
    # row numbers count from the header line as row 1
    for rowno, row in enumerate(reader, start=2):
        raw = (row.get("score") or "").strip()
        try:
            score = float(raw)
        except ValueError:
            raise FormatError(f"row {rowno}: score {raw!r} is not numeric") from None
        if not math.isfinite(score):
            raise FormatError(f"row {rowno}: score {raw!r} is not finite")
        path = Path((row.get("path") or "").strip())
        if not str(path) or str(path) == ".":
            raise FormatError(f"row {rowno}: empty path")
        if not path.is_absolute():
            path = base_dir / path
        label = (row.get("distortion") or "").strip().lower() or None
        if label is not None and label not in DISTORTION_LABELS:
            raise FormatError(f"row {rowno}: unknown distortion label {label!r}")
        content = (row.get("content_id") or "").strip()
        if not content:
            raise FormatError(f"row {rowno}: empty content_id")
        samples.append(Sample(path, score, content, label))
    return Manifest(samples, polarity)


def read_manifest(path) -> Manifest:
    """Parse a manifest CSV.  Structural invariants are checked with ``Manifest.validate``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ImageReadError(f"cannot read manifest {path}: {exc}") from exc
    return parse_manifest(text, path.parent)


def write_manifest(manifest: Manifest, path, relative_to: Optional[Path] = None) -> None:
    path = Path(path)
    base = Path(relative_to) if relative_to is not None else path.parent
    tag = "mos" if manifest.score_polarity == MOS else "dmos"
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(f"# polarity={tag}\n")
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for s in manifest.samples:
            p = Path(s.image_path)
            try:
                p = p.relative_to(base)
            except ValueError:
                pass
            writer.writerow([p.as_posix(), repr(float(s.subjective_score)), s.distortion_label or "", s.content_id])


def manifest_from_paths(paths: Sequence, scores: Optional[Sequence[float]] = None) -> Manifest:
    """Wrap bare image paths (one content each) so pipeline helpers can take them."""
    scores = list(scores) if scores is not None else [0.0] * len(paths)
    return Manifest([Sample(Path(p), float(s), Path(p).stem) for p, s in zip(paths, scores)])
