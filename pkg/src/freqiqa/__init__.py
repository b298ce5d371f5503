"""Blind image quality assessment from blockwise DFT statistics of an image
and its MSCN field, regressed onto quality scores with an exponential-kernel
Gaussian process."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DataError,
    DimensionError,
    FactorizationError,
    FormatError,
    FreqIQAError,
    ImageReadError,
    NumericalError,
    SplitError,
    UndefinedCorrelationError,
    VersionError,
)
from .features import FEATURE_NAMES, NormalizationFactors, extract  # noqa: E402
from .gpr import GprModel, KernelParams, fit, load_model, save_model  # noqa: E402
from .imagio import GrayImage, Manifest, Sample, load_gray, read_manifest  # noqa: E402
from .metrics import EvalReport, evaluate, krocc, srocc  # noqa: E402
from .mscn import mscn  # noqa: E402

__all__ = [
    "DataError", "DimensionError", "FactorizationError", "FormatError", "FreqIQAError",
    "ImageReadError", "NumericalError", "SplitError", "UndefinedCorrelationError", "VersionError",
    "FEATURE_NAMES", "NormalizationFactors", "extract",
    "GprModel", "KernelParams", "fit", "load_model", "save_model",
    "GrayImage", "Manifest", "Sample", "load_gray", "read_manifest",
    "EvalReport", "evaluate", "krocc", "srocc", "mscn",
]
