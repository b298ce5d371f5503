"""Agreement criteria between predicted and subjective scores.

PLCC and RMSE are computed after a five-parameter logistic remapping of the
predictions::

    f(x) = b1 * (1/2 - 1 / (1 + exp(b2 * (x - b3)))) + b4 * x + b5
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from scipy.optimize import least_squares
from scipy.special import expit

from .errors import UndefinedCorrelationError

REPORT_FORMAT = "freqiqa-eval/1"
MIN_LOGISTIC_POINTS = 6


def _pair(x, y, min_len: int):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < min_len:
        raise ValueError(f"need at least {min_len} pairs, got {len(x)}")
    return x, y


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    if den == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant vector")
    return float(np.clip((a @ b) / den, -1.0, 1.0))


def srocc(x, y) -> float:
    """Spearman correlation: Pearson correlation of mid-ranks."""
    x, y = _pair(x, y, 3)
    return _pearson(stats.rankdata(x), stats.rankdata(y))


def _pair_counts(x: np.ndarray, y: np.ndarray, chunk: int = 512) -> tuple[int, int, int, int]:
    """(concordant, discordant, pairs tied in x, pairs tied in y) over i < j."""
    n = len(x)
    conc = disc = tx = ty = 0
    for start in range(0, n, chunk):
        rows = slice(start, min(start + chunk, n))
        sx = np.sign(x[rows, None] - x[None, :]).astype(np.int8)
        sy = np.sign(y[rows, None] - y[None, :]).astype(np.int8)
        # keep j > i only
        upper = np.arange(n)[None, :] > np.arange(start, rows.stop)[:, None]
        prod = (sx * sy)[upper]
        conc += int(np.count_nonzero(prod > 0))
        disc += int(np.count_nonzero(prod < 0))
        tx += int(np.count_nonzero(sx[upper] == 0))
        ty += int(np.count_nonzero(sy[upper] == 0))
    return conc, disc, tx, ty


def krocc(x, y) -> float:
    """Kendall tau-b over all pairs, from exact integer pair counts."""
    x, y = _pair(x, y, 2)
    n0 = len(x) * (len(x) - 1) // 2
    conc, disc, tx, ty = _pair_counts(x, y)
    if tx == n0 or ty == n0:
        raise UndefinedCorrelationError("Kendall tau is undefined when every pair is tied")
    return float((conc - disc) / math.sqrt((n0 - tx) * (n0 - ty)))


def pearson(x, y) -> float:
    x, y = _pair(x, y, 2)
    return _pearson(x, y)


@dataclass(frozen=True)
class LogisticParams:
    b1: float
    b2: float
    b3: float
    b4: float
    b5: float
    converged: bool = True

    def as_array(self) -> np.ndarray:
        return np.array([self.b1, self.b2, self.b3, self.b4, self.b5])

    def __call__(self, x):
        return logistic(x, self.as_array())


def logistic(x, beta) -> np.ndarray:
    b1, b2, b3, b4, b5 = beta
    x = np.asarray(x, dtype=np.float64)
    return b1 * (0.5 - expit(-b2 * (x - b3))) + b4 * x + b5


def _logistic_jac(beta, x):
    b1, b2, b3, _, _ = beta
    s = expit(-b2 * (x - b3))
    ds = s * (1.0 - s)
    return np.column_stack([0.5 - s, b1 * ds * (x - b3), -b1 * ds * b2, x, np.ones_like(x)])


def fit_logistic(predicted, subjective, max_nfev: int = 20000) -> LogisticParams:
    """Least-squares fit of the five-parameter logistic (Levenberg-Marquardt).

    Never raises on non-convergence; the best parameters found are returned
    with ``converged=False``.
    """
    x, y = _pair(predicted, subjective, MIN_LOGISTIC_POINTS)
    sx = float(np.std(x))
    beta0 = np.array([y.max() - y.min(), 1.0 / sx if sx > 0 else 1.0, x.mean(), 0.0, y.mean()])

    def resid(b):
        return logistic(x, b) - y

    def sse(b):
        r = resid(b)
        return float(r @ r) if np.all(np.isfinite(r)) else math.inf

    best, best_sse, converged = beta0, sse(beta0), False
    try:
        res = least_squares(resid, beta0, jac=lambda b: _logistic_jac(b, x), method="lm",
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
        if np.all(np.isfinite(res.x)) and sse(res.x) <= best_sse:
            best, best_sse = res.x, sse(res.x)
            converged = res.status > 0
    except (ValueError, np.linalg.LinAlgError):
        pass
    return LogisticParams(*(float(b) for b in best), converged=converged)


def plcc_rmse(predicted, subjective, params: LogisticParams) -> tuple[float, float]:
    x, y = _pair(predicted, subjective, 2)
    fx = params(x)
    r = fx - y
    return _pearson(fx, y), float(math.sqrt(np.mean(r * r)))


@dataclass
class EvalReport:
    srocc: float
    plcc: float
    krocc: float
    rmse: float
    logistic: LogisticParams
    n: int
    degenerate: bool = False
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = _nan_to_none(asdict(self))
        d["format"] = REPORT_FORMAT
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), allow_nan=False, **kw)

    def to_text(self) -> str:
        lines = [f"format={REPORT_FORMAT}"]
        for key in ("n", "srocc", "plcc", "krocc", "rmse"):
            lines.append(f"{key}={getattr(self, key)!r}")
        for name, v in asdict(self.logistic).items():
            lines.append(f"logistic.{name}={v!r}")
        lines.append(f"degenerate={self.degenerate}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = {k: v for k, v in d.items() if k != "format"}
        d["logistic"] = LogisticParams(**{k: math.nan if v is None else v for k, v in d["logistic"].items()})
        return cls(**d)


def _nan_to_none(obj):
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    return obj


def evaluate(predicted, subjective) -> EvalReport:
    """All four criteria; raises UndefinedCorrelationError on constant input."""
    x, y = _pair(predicted, subjective, MIN_LOGISTIC_POINTS)
    params = fit_logistic(x, y)
    plcc, rmse = plcc_rmse(x, y, params)
    notes = [] if params.converged else ["logistic fit did not converge"]
    return EvalReport(srocc(x, y), plcc, krocc(x, y), rmse, params, len(x), notes=notes)


def degenerate_report(predicted, subjective, reason: str) -> EvalReport:
    """Report used when correlations are undefined: correlations 0, flagged."""
    x, y = _pair(predicted, subjective, 1)
    r = x - y
    nan_params = LogisticParams(*(math.nan,) * 5, converged=False)
    return EvalReport(0.0, 0.0, 0.0, float(math.sqrt(np.mean(r * r))), nan_params, len(x), True, [reason])


def safe_evaluate(predicted, subjective) -> EvalReport:
    try:
        return evaluate(predicted, subjective)
    except UndefinedCorrelationError as exc:
        return degenerate_report(predicted, subjective, str(exc))
