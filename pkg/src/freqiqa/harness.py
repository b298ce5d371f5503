"""Train/test protocols: repeated random splits, cross-database runs,
single-feature ablation and extraction timing."""

from __future__ import annotations

import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import gpr
from .errors import ImageReadError, SplitError
from .features import DEFAULT_EPSILON, FEATURE_NAMES, N_FEATURES, NormalizationFactors, extract
from .imagio import Manifest, Sample, load_gray
from .metrics import MIN_LOGISTIC_POINTS, EvalReport, safe_evaluate


BY_CONTENT = "by_content"
BY_SAMPLE = "by_sample"
RESULT_FORMAT = "freqiqa-experiment/1"


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    iterations: int = 1000
    seed: int = 0
    split_unit: str = BY_CONTENT

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.split_unit not in (BY_CONTENT, BY_SAMPLE):
            raise ValueError(f"unknown split unit {self.split_unit!r}")


def _n_train(fraction: float, n: int) -> int:
    # round first so that e.g. 0.7 * 10 does not ceil to 8
    return math.ceil(round(fraction * n, 9))


def _iteration_rng(seed: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(iteration)]))


def _iteration_seed(seed: int, iteration: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(iteration), 1]).generate_state(1)[0])


def split_indices(content_ids: Sequence[str], spec: SplitSpec, iteration: int) -> tuple[np.ndarray, np.ndarray]:
    """Train/test sample indices for one iteration.

    ``by_content`` shuffles the distinct contents and sends the first
    ceil(fraction * n_contents) of them to training.
    """
    content_ids = list(content_ids)
    rng = _iteration_rng(spec.seed, iteration)
    if spec.split_unit == BY_CONTENT:
        unique = list(dict.fromkeys(content_ids))
        if len(unique) < 2:
            raise SplitError("a content split needs at least 2 distinct contents")
        order = rng.permutation(len(unique))
        k = _n_train(spec.train_fraction, len(unique))
        if k >= len(unique):
            raise SplitError(f"{len(unique)} contents at fraction {spec.train_fraction} leave the test side empty")
        train_contents = {unique[i] for i in order[:k]}
        mask = np.array([c in train_contents for c in content_ids])
        return np.flatnonzero(mask), np.flatnonzero(~mask)

    n = len(content_ids)
    order = rng.permutation(n)
    k = _n_train(spec.train_fraction, n)
    if k >= n or k == 0:
        raise SplitError(f"{n} samples at fraction {spec.train_fraction} leave one side empty")
    return np.sort(order[:k]), np.sort(order[k:])


def split(manifest: Manifest, spec: SplitSpec, iteration: int) -> tuple[list[Sample], list[Sample]]:
    tr, te = split_indices([s.content_id for s in manifest.samples], spec, iteration)
    return [manifest.samples[i] for i in tr], [manifest.samples[i] for i in te]


# -- feature extraction -------------------------------------------------------

class FeatureCache:
    """In-memory cache of feature vectors keyed by (path, nf, epsilon)."""

    def __init__(self):
        self._store: dict = {}
        self.seconds: dict = {}

    def key(self, path, nf: NormalizationFactors, eps: float):
        return (str(Path(path).resolve()), nf, float(eps))

    def get(self, path, nf, eps):
        return self._store.get(self.key(path, nf, eps))

    def put(self, path, nf, eps, vec: np.ndarray, seconds: float = math.nan):
        k = self.key(path, nf, eps)
        vec = np.array(vec, dtype=np.float64)
        vec.flags.writeable = False
        self._store[k] = vec
        self.seconds[k] = seconds

    def __len__(self):
        return len(self._store)


def _extract_one(args):
    path, nf, eps = args
    t0 = time.perf_counter()
    vec = extract(load_gray(path), nf, eps)
    return vec, time.perf_counter() - t0


def check_loadable(paths: Sequence) -> None:
    """Raise ImageReadError naming every path that cannot be decoded."""
    bad = []
    for p in paths:
        try:
            load_gray(p)
        except Exception as exc:  # noqa: BLE001 - every failure is reported together
            bad.append(f"{p}: {exc}")
    if bad:
        raise ImageReadError("unreadable images:\n  " + "\n  ".join(bad))


def extract_features(
    paths: Sequence,
    nf: NormalizationFactors = NormalizationFactors(),
    zero_epsilon: float = DEFAULT_EPSILON,
    workers: int = 1,
    cache: Optional[FeatureCache] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix (n, 24) and per-image extraction seconds.

    Every image is checked for readability before any extraction starts.
    Cached entries report NaN seconds unless the cache recorded a timing.
    """
    paths = list(paths)
    check_loadable(paths)
    todo = [i for i, p in enumerate(paths) if cache is None or cache.get(p, nf, zero_epsilon) is None]
    jobs = [(paths[i], nf, zero_epsilon) for i in todo]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_extract_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_extract_one(j) for j in jobs]

    feats = np.empty((len(paths), N_FEATURES))
    secs = np.full(len(paths), math.nan)
    fresh = dict(zip(todo, results))
    for i, p in enumerate(paths):
        if i in fresh:
            feats[i], secs[i] = fresh[i]
            if cache is not None:
                cache.put(p, nf, zero_epsilon, feats[i], secs[i])
        else:
            feats[i] = cache.get(p, nf, zero_epsilon)
            secs[i] = cache.seconds.get(cache.key(p, nf, zero_epsilon), math.nan)
    return feats, secs


# -- protocols ----------------------------------------------------------------

@dataclass
class ExperimentResult:
    reports: list[EvalReport]
    median_srocc: float
    median_plcc: float
    median_krocc: float
    median_rmse: float
    seconds_per_image: float
    spec: SplitSpec
    n_samples: int
    n_degenerate: int = 0

    @classmethod
    def from_reports(cls, reports, spec, seconds_per_image, n_samples) -> "ExperimentResult":
        def med(key):
            return float(np.median([getattr(r, key) for r in reports]))

        return cls(reports, med("srocc"), med("plcc"), med("krocc"), med("rmse"),
                   float(seconds_per_image), spec, n_samples, sum(r.degenerate for r in reports))

    def to_dict(self) -> dict:
        return {
            "format": RESULT_FORMAT,
            "spec": asdict(self.spec),
            "n_samples": self.n_samples,
            "median": {"srocc": self.median_srocc, "plcc": self.median_plcc,
                       "krocc": self.median_krocc, "rmse": self.median_rmse},
            "seconds_per_image": None if math.isnan(self.seconds_per_image) else self.seconds_per_image,
            "n_degenerate": self.n_degenerate,
            "iterations": [r.to_dict() for r in self.reports],
        }

    def table(self) -> str:
        rows = [("SROCC", self.median_srocc), ("PLCC", self.median_plcc),
                ("KROCC", self.median_krocc), ("RMSE", self.median_rmse)]
        head = f"median over {len(self.reports)} iteration(s), {self.n_samples} samples, {self.spec.split_unit}"
        return head + "\n" + "\n".join(f"  {k:<6} {v:10.4f}" for k, v in rows) + "\n"


def _run_iteration(args) -> EvalReport:
    x, y, contents, spec, it, gpr_kwargs = args
    tr, te = split_indices(contents, spec, it)
    if len(te) < MIN_LOGISTIC_POINTS:
        raise SplitError(f"iteration {it}: test side has {len(te)} samples, need {MIN_LOGISTIC_POINTS}")
    model = gpr.fit(x[tr], y[tr], seed=_iteration_seed(spec.seed, it), **gpr_kwargs)
    pred, _ = model.predict_many(x[te])
    return safe_evaluate(pred, y[te])


def run_protocol(
    features: np.ndarray,
    scores: np.ndarray,
    content_ids: Sequence[str],
    spec: SplitSpec,
    workers: int = 1,
    **gpr_kwargs,
) -> list[EvalReport]:
    """Per-iteration reports for precomputed features, ordered by iteration."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(scores, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != len(y):
        raise ValueError(f"features of shape {x.shape} do not match {len(y)} scores")
    contents = list(content_ids)
    jobs = [(x, y, contents, spec, it, gpr_kwargs) for it in range(spec.iterations)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_iteration, jobs))
    return [_run_iteration(j) for j in jobs]


def run_experiment(
    manifest: Manifest,
    spec: SplitSpec = SplitSpec(),
    *,
    nf: NormalizationFactors = NormalizationFactors(),
    zero_epsilon: float = DEFAULT_EPSILON,
    workers: int = 1,
    cache: Optional[FeatureCache] = None,
    **gpr_kwargs,
) -> ExperimentResult:
    """Extract features once, then repeat split -> fit -> predict -> evaluate."""
    problems = manifest.validate() if spec.split_unit == BY_CONTENT else []
    if problems:
        raise SplitError("; ".join(problems))
    feats, secs = extract_features([s.image_path for s in manifest.samples], nf, zero_epsilon, workers, cache)
    reports = run_protocol(feats, manifest.scores, [s.content_id for s in manifest.samples], spec, workers, **gpr_kwargs)
    per_image = float(np.nanmean(secs)) if np.any(np.isfinite(secs)) else math.nan
    return ExperimentResult.from_reports(reports, spec, per_image, len(manifest))


def cross_database(
    train_manifest: Manifest,
    test_manifest: Manifest,
    seed: int = 0,
    *,
    nf: NormalizationFactors = NormalizationFactors(),
    zero_epsilon: float = DEFAULT_EPSILON,
    workers: int = 1,
    cache: Optional[FeatureCache] = None,
    **gpr_kwargs,
) -> EvalReport:
    """Fit on every training-database sample, evaluate on every test-database sample."""
    x_tr, _ = extract_features([s.image_path for s in train_manifest.samples], nf, zero_epsilon, workers, cache)
    x_te, _ = extract_features([s.image_path for s in test_manifest.samples], nf, zero_epsilon, workers, cache)
    model = gpr.fit(x_tr, train_manifest.scores, seed=seed, **gpr_kwargs)
    pred, _ = model.predict_many(x_te)
    return safe_evaluate(pred, test_manifest.scores)


@dataclass
class AblationResult:
    median_srocc: list[float]
    degenerate: list[bool]
    feature_names: tuple = FEATURE_NAMES

    def to_dict(self) -> dict:
        return {
            "format": "freqiqa-ablation/1",
            "features": [
                {"feature": n, "median_srocc": s, "degenerate": d}
                for n, s, d in zip(self.feature_names, self.median_srocc, self.degenerate)
            ],
        }


def feature_ablation(
    manifest: Optional[Manifest],
    spec: SplitSpec = SplitSpec(),
    *,
    features: Optional[np.ndarray] = None,
    scores: Optional[np.ndarray] = None,
    content_ids: Optional[Sequence[str]] = None,
    nf: NormalizationFactors = NormalizationFactors(),
    zero_epsilon: float = DEFAULT_EPSILON,
    workers: int = 1,
    cache: Optional[FeatureCache] = None,
    **gpr_kwargs,
) -> AblationResult:
    """Median SROCC of the protocol run on each single feature, in feature order.

    Iterations whose predictions are constant count as SROCC 0; a feature is
    flagged degenerate when any iteration was.
    """
    if features is None:
        features, _ = extract_features([s.image_path for s in manifest.samples], nf, zero_epsilon, workers, cache)
    if scores is None:
        scores = manifest.scores
    if content_ids is None:
        content_ids = [s.content_id for s in manifest.samples]
    medians, flags = [], []
    for k in range(features.shape[1]):
        reports = run_protocol(features[:, [k]], scores, content_ids, spec, workers,
                               feature_names=(FEATURE_NAMES[k],), feature_layout="single", **gpr_kwargs)
        medians.append(float(np.median([r.srocc for r in reports])))
        flags.append(any(r.degenerate for r in reports))
    return AblationResult(medians, flags, FEATURE_NAMES[: features.shape[1]])


@dataclass
class BenchmarkResult:
    samples: dict  # path -> list of seconds
    mean: float
    median: float
    min: float
    variance: float

    def to_dict(self) -> dict:
        return {"format": "freqiqa-bench/1", "mean": self.mean, "median": self.median, "min": self.min,
                "variance": self.variance, "samples": {str(k): v for k, v in self.samples.items()}}


def benchmark(paths: Sequence, repeat: int = 3, nf: NormalizationFactors = NormalizationFactors(),
              zero_epsilon: float = DEFAULT_EPSILON) -> BenchmarkResult:
    """Wall-clock seconds of feature extraction per image (decoding excluded), in-process."""
    if repeat < 1:
        raise ValueError("repeat must be >= 1")
    samples = {}
    for p in paths:
        img = load_gray(p)
        runs = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            extract(img, nf, zero_epsilon)
            runs.append(time.perf_counter() - t0)
        samples[str(p)] = runs
    flat = [t for v in samples.values() for t in v]
    var = statistics.variance(flat) if len(flat) > 1 else 0.0
    return BenchmarkResult(samples, statistics.fmean(flat), statistics.median(flat), min(flat), var)
