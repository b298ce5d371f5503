"""Gaussian process regression with an isotropic exponential kernel.

``k(x, y) = sf2 * exp(-||x - y|| / ell)``.  Features are standardized with
training statistics and targets are centred on their training mean before
the GP is fitted; hyperparameters maximize the log marginal likelihood.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist, pdist

from .errors import FactorizationError, FormatError, VersionError
from .features import FEATURE_LAYOUT, FEATURE_NAMES

MODEL_FORMAT = "freqiqa-gpr"
MODEL_VERSION = 1

JITTER_START = 1e-10
JITTER_MAX = 1e-4
N_RESTARTS = 5

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class KernelParams:
    signal_variance: float
    length_scale: float
    noise_variance: float

    def __post_init__(self):
        if not (self.signal_variance > 0 and math.isfinite(self.signal_variance)):
            raise ValueError(f"signal_variance must be positive, got {self.signal_variance}")
        if not (self.length_scale > 0 and math.isfinite(self.length_scale)):
            raise ValueError(f"length_scale must be positive, got {self.length_scale}")
        if not (self.noise_variance >= 0 and math.isfinite(self.noise_variance)):
            raise ValueError(f"noise_variance must be non-negative, got {self.noise_variance}")

    @property
    def log_params(self) -> np.ndarray:
        return np.log([self.signal_variance, self.length_scale, self.noise_variance])

    @classmethod
    def from_log(cls, theta) -> "KernelParams":
        sf2, ell, sn2 = np.exp(np.asarray(theta, dtype=np.float64))
        return cls(float(sf2), float(ell), float(sn2))


@dataclass(frozen=True)
class Prediction:
    mean: float
    variance: float


def kernel(x, y, p: KernelParams) -> float:
    r = float(np.linalg.norm(np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)))
    return p.signal_variance * math.exp(-r / p.length_scale)


def kernel_matrix(a: np.ndarray, b: np.ndarray, p: KernelParams) -> np.ndarray:
    return p.signal_variance * np.exp(-cdist(a, b) / p.length_scale)


def jittered_cholesky(k: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``k``, adding diagonal jitter only if needed.

    Jitter escalates by decades from 1e-10 to 1e-4 times the mean diagonal.
    Returns the factor and the jitter that was added.
    """
    n = k.shape[0]
    scale = float(np.trace(k)) / n
    if not math.isfinite(scale) or scale <= 0:
        scale = 1.0
    jitter = 0.0
    rel = JITTER_START
    while True:
        try:
            return cholesky(k + jitter * np.eye(n), lower=True, check_finite=False), jitter
        except LinAlgError:
            if rel > JITTER_MAX * (1 + 1e-9):
                raise FactorizationError(
                    f"covariance matrix not positive definite even with jitter {jitter:.3g}", jitter=jitter
                ) from None
            jitter = rel * scale
            rel *= 10.0


def _gram(x: np.ndarray, p: KernelParams) -> tuple[np.ndarray, np.ndarray]:
    dist = cdist(x, x)
    e = p.signal_variance * np.exp(-dist / p.length_scale)
    k = e + p.noise_variance * np.eye(len(x))
    return k, dist


def log_marginal_likelihood(features, targets, p: KernelParams, return_grad: bool = False):
    """GP evidence of ``targets`` under zero mean and kernel ``p``.

    With ``return_grad`` the gradient with respect to
    (log sf2, log ell, log sn2) is returned as well.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    d = np.asarray(targets, dtype=np.float64).ravel()
    return _evidence(cdist(x, x), d, p, return_grad)


def _evidence(dist: np.ndarray, d: np.ndarray, p: KernelParams, return_grad: bool):
    n = len(d)
    e = p.signal_variance * np.exp(-dist / p.length_scale)
    k = e + p.noise_variance * np.eye(n)
    chol, _ = jittered_cholesky(k)
    alpha = cho_solve((chol, True), d, check_finite=False)
    lml = -0.5 * d @ alpha - np.log(np.diag(chol)).sum() - 0.5 * n * LOG_2PI
    if not return_grad:
        return float(lml)

    # d lml / d theta_j = 1/2 tr((alpha alpha^T - K^-1) dK/dtheta_j)
    k_inv = cho_solve((chol, True), np.eye(n), check_finite=False)
    inner = np.outer(alpha, alpha) - k_inv
    grad = np.array([
        0.5 * np.sum(inner * e),
        0.5 * np.sum(inner * e * dist) / p.length_scale,
        0.5 * p.noise_variance * np.trace(inner),
    ])
    return float(lml), grad


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray  # 1.0 where the training column was constant
    constant: Optional[np.ndarray] = None

    @classmethod
    def from_data(cls, x: np.ndarray) -> "Standardizer":
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        constant = ~(std > 0)
        return cls(mean, np.where(constant, 1.0, std), constant)

    def apply(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale


@dataclass(frozen=True, eq=False)
class GprModel:
    standardizer: Standardizer
    train_features: np.ndarray  # standardized, (n, d)
    alpha: np.ndarray
    params: KernelParams
    target_offset: float
    jitter: float = 0.0
    feature_names: tuple = FEATURE_NAMES
    feature_layout: str = FEATURE_LAYOUT
    log_likelihood: float = float("nan")
    _chol: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_train(self) -> int:
        return len(self.alpha)

    def _factor(self) -> np.ndarray:
        if self._chol is None:
            k, _ = _gram(self.train_features, self.params)
            chol = cholesky(k + self.jitter * np.eye(len(k)), lower=True, check_finite=False)
            object.__setattr__(self, "_chol", chol)
        return self._chol

    def predict_many(self, features) -> tuple[np.ndarray, np.ndarray]:
        xs = self.standardizer.apply(np.atleast_2d(features))
        k_star = kernel_matrix(xs, self.train_features, self.params)
        mean = k_star @ self.alpha + self.target_offset
        v = solve_triangular(self._factor(), k_star.T, lower=True, check_finite=False)
        var = self.params.signal_variance - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 0.0)

    def predict(self, x) -> Prediction:
        mean, var = self.predict_many(np.asarray(x, dtype=np.float64)[None, :])
        return Prediction(float(mean[0]), float(var[0]))


def predict(model: GprModel, x) -> Prediction:
    return model.predict(x)


def _median_distance(x: np.ndarray) -> float:
    d = pdist(x)
    d = d[d > 0]
    return float(np.median(d)) if len(d) else 1.0


def _optimize(x, d, rng, restarts, noise_variance):
    """Maximize the evidence over log hyperparameters; returns (params, lml)."""
    var = float(np.var(d))
    med = _median_distance(x)
    dist = cdist(x, x)
    fixed_noise = noise_variance is not None

    lo = np.log([var * 1e-4, med * 1e-3, var * 1e-8])
    hi = np.log([var * 1e3, med * 1e3, var * 10.0])
    starts_lo = np.log([var * 0.1, med * 0.1, var * 1e-4])
    starts_hi = np.log([var * 10.0, med * 10.0, var])
    free = [0, 1] if fixed_noise else [0, 1, 2]

    def unpack(t):
        theta = np.empty(3)
        theta[free] = t
        if fixed_noise:
            theta[2] = math.log(noise_variance) if noise_variance > 0 else -np.inf
        return theta

    def objective(t):
        theta = unpack(t)
        try:
            p = KernelParams.from_log(theta)
            lml, grad = _evidence(dist, d, p, True)
        except (FactorizationError, ValueError, FloatingPointError):
            return 1e25, np.zeros(len(t))
        return -lml, -grad[free]

    best = None
    for _ in range(restarts):
        t0 = rng.uniform(starts_lo, starts_hi)[free]
        res = minimize(objective, t0, jac=True, method="L-BFGS-B",
                       bounds=list(zip(lo[free], hi[free])))
        if best is None or res.fun < best.fun:
            best = res
    return KernelParams.from_log(unpack(best.x)), -float(best.fun)


def fit(
    features,
    targets,
    *,
    seed: int = 0,
    restarts: int = N_RESTARTS,
    params: Optional[KernelParams] = None,
    noise_variance: Optional[float] = None,
    standardize: bool = True,
    feature_names: Optional[Sequence[str]] = None,
    feature_layout: Optional[str] = None,
) -> GprModel:
    """Fit a GP to ``features`` (n x d) and ``targets`` (n,).

    ``params`` fixes all hyperparameters; ``noise_variance`` pins only the
    noise term.  Otherwise hyperparameters come from ``restarts`` L-BFGS runs
    started at random points (deterministic given ``seed``).
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    d = np.asarray(targets, dtype=np.float64).ravel()
    if x.shape[0] != d.shape[0]:
        raise ValueError(f"{x.shape[0]} feature rows but {d.shape[0]} targets")
    if len(d) < 2:
        raise ValueError("at least two training samples are required")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(d))):
        raise ValueError("training data contains non-finite values")
    if feature_names is None:
        feature_names = FEATURE_NAMES if x.shape[1] == len(FEATURE_NAMES) else tuple(f"x{i}" for i in range(x.shape[1]))
    if feature_layout is None:
        feature_layout = FEATURE_LAYOUT if tuple(feature_names) == FEATURE_NAMES else "custom"

    if standardize:
        std = Standardizer.from_data(x)
    else:
        std = Standardizer(np.zeros(x.shape[1]), np.ones(x.shape[1]))
    xs = std.apply(x)
    offset = float(d.mean())
    dc = d - offset

    if params is None:
        if np.all(dc == 0):
            # nothing to explain: alpha is zero whatever the kernel
            params = KernelParams(1.0, _median_distance(xs), 1e-6 if noise_variance is None else noise_variance)
        else:
            rng = np.random.default_rng(seed)
            params, _ = _optimize(xs, dc, rng, max(1, restarts), noise_variance)

    k, _ = _gram(xs, params)
    chol, jitter = jittered_cholesky(k)
    alpha = cho_solve((chol, True), dc, check_finite=False)
    lml = float(-0.5 * dc @ alpha - np.log(np.diag(chol)).sum() - 0.5 * len(dc) * LOG_2PI)
    return GprModel(std, xs, alpha, params, offset, jitter, tuple(feature_names), feature_layout, lml, chol)


# -- model file ---------------------------------------------------------------

def model_to_dict(model: GprModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "feature_layout": model.feature_layout,
        "feature_names": list(model.feature_names),
        "standardizer": {
            "mean": model.standardizer.mean.tolist(),
            "scale": model.standardizer.scale.tolist(),
            "constant": [] if model.standardizer.constant is None else model.standardizer.constant.tolist(),
        },
        "params": {
            "signal_variance": model.params.signal_variance,
            "length_scale": model.params.length_scale,
            "noise_variance": model.params.noise_variance,
        },
        "target_offset": model.target_offset,
        "jitter": model.jitter,
        "log_likelihood": model.log_likelihood,
        "train_features": model.train_features.tolist(),
        "alpha": model.alpha.tolist(),
    }


def model_from_dict(doc: dict, expected_layout: Optional[str] = None) -> GprModel:
    if doc.get("format") != MODEL_FORMAT:
        raise FormatError(f"not a {MODEL_FORMAT} model file")
    if doc.get("version") != MODEL_VERSION:
        raise VersionError(f"model file version {doc.get('version')!r} is not supported (expected {MODEL_VERSION})")
    if expected_layout is not None and doc.get("feature_layout") != expected_layout:
        raise VersionError(
            f"model was trained on feature layout {doc.get('feature_layout')!r}, expected {expected_layout!r}"
        )
    try:
        sd = doc["standardizer"]
        constant = np.array(sd["constant"], dtype=bool) if sd.get("constant") else None
        std = Standardizer(np.array(sd["mean"], dtype=np.float64), np.array(sd["scale"], dtype=np.float64), constant)
        p = doc["params"]
        params = KernelParams(p["signal_variance"], p["length_scale"], p["noise_variance"])
        train = np.array(doc["train_features"], dtype=np.float64)
        alpha = np.array(doc["alpha"], dtype=np.float64)
        return GprModel(std, train.reshape(len(alpha), -1), alpha, params, float(doc["target_offset"]),
                        float(doc["jitter"]), tuple(doc["feature_names"]), doc["feature_layout"],
                        float(doc.get("log_likelihood", "nan")))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model file: {exc}") from exc


def save_model(model: GprModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)), encoding="utf-8")


def load_model(path, expected_layout: Optional[str] = FEATURE_LAYOUT) -> GprModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"model file {path} is not valid JSON: {exc}") from exc
    return model_from_dict(doc, expected_layout)
