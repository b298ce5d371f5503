"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.
Results go to stdout (or ``--out``); diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import __version__, distort, gpr, harness
from .blockfreq import block_magnitudes, format_block
from .errors import DataError, FreqIQAError, NumericalError
from .features import (
    DEFAULT_EPSILON,
    FeatureTable,
    NormalizationFactors,
    format_feature_csv,
    read_feature_csv,
)
from .imagio import load_gray, manifest_from_paths, read_manifest
from .metrics import safe_evaluate
from .mscn import format_field, mscn

log = logging.getLogger("freqiqa")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_atomic(path, text: str) -> None:
    """Write via a temp file in the same directory so failures leave nothing behind."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _emit(text: str, out) -> None:
    if out:
        _write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _nf(args) -> NormalizationFactors:
    try:
        return NormalizationFactors.parse(args.nf) if args.nf else NormalizationFactors()
    except ValueError as exc:
        raise UsageError(f"--nf: {exc}") from None


def _manifest_or_images(args):
    if getattr(args, "manifest", None):
        m = read_manifest(args.manifest)
        return m, True
    if getattr(args, "image", None):
        return manifest_from_paths(args.image), False
    raise UsageError("one of --manifest or --image is required")


def _feature_args(p):
    p.add_argument("--nf", help="normalization factors g_lf,m_lf,g_hf,m_hf (default 1000,100,100,20)")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="zero threshold on normalized sums")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker processes")


def _gpr_args(p):
    p.add_argument("--restarts", type=int, default=gpr.N_RESTARTS, help="hyperparameter restarts")
    p.add_argument("--noise-variance", type=float, default=None, help="pin the GP noise variance")


def _gpr_kwargs(args) -> dict:
    if args.restarts < 1:
        raise UsageError("--restarts must be >= 1")
    return {"restarts": args.restarts, "noise_variance": args.noise_variance}


def _split_args(p, iterations=1000):
    p.add_argument("--iterations", type=int, default=iterations)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--split-unit", choices=[harness.BY_CONTENT, harness.BY_SAMPLE], default=harness.BY_CONTENT)


def _split_spec(args) -> harness.SplitSpec:
    try:
        return harness.SplitSpec(args.train_fraction, args.iterations, args.seed, args.split_unit)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# -- verbs ----------------------------------------------------------------------

def cmd_extract(args) -> int:
    nf = _nf(args)
    if args.epsilon < 0:
        raise UsageError("--epsilon must be non-negative")
    manifest, has_scores = _manifest_or_images(args)
    paths = [s.image_path for s in manifest.samples]
    if args.dump_mscn or args.dump_block:
        if len(paths) != 1:
            raise UsageError("--dump-mscn/--dump-block need exactly one image")
        img = load_gray(paths[0])
        field = mscn(img)
        if args.dump_mscn:
            _write_atomic(args.dump_mscn, format_field(field))
        if args.dump_block:
            try:
                r, c = (int(v) for v in args.dump_block.split(","))
            except ValueError:
                raise UsageError(f"--dump-block expects ROW,COL, got {args.dump_block!r}") from None
            source = field if args.dump_source == "mscn" else img
            mags = block_magnitudes(source)
            if not (0 <= r < mags.shape[0] and 0 <= c < mags.shape[1]):
                raise UsageError(f"--dump-block {r},{c} outside the {mags.shape[0]}x{mags.shape[1]} block grid")
            sys.stderr.write(format_block(mags[r, c]))
    feats, _ = harness.extract_features(paths, nf, args.epsilon, workers=args.threads)
    table = FeatureTable([str(p) for p in paths], feats, manifest.scores if has_scores else None)
    _emit(format_feature_csv(table), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    table = read_feature_csv(args.features)
    if table.scores is None:
        raise DataError(f"{args.features} has no score column; training needs targets")
    model = gpr.fit(table.features, table.scores, seed=args.seed, **_gpr_kwargs(args))
    _write_atomic(args.out, json.dumps(gpr.model_to_dict(model)))
    p = model.params
    log.info("trained on %d samples: sf2=%.4g ell=%.4g sn2=%.4g lml=%.4f",
             model.n_train, p.signal_variance, p.length_scale, p.noise_variance, model.log_likelihood)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = gpr.load_model(args.model)
    if args.features:
        table = read_feature_csv(args.features)
        names, feats = table.paths, table.features
    elif args.image:
        feats, _ = harness.extract_features(args.image, _nf(args), args.epsilon, workers=args.threads)
        names = [str(p) for p in args.image]
    else:
        raise UsageError("one of --image or --features is required")
    mean, var = model.predict_many(feats)
    lines = ["path,mean,variance"] + [f"{n},{m!r},{v!r}" for n, m, v in zip(names, mean.tolist(), var.tolist())]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _report_text(report, fmt: str) -> str:
    return report.to_text() if fmt == "text" else report.to_json(indent=2) + "\n"


def cmd_evaluate(args) -> int:
    """With --model: score a manifest.  Without: run the repeated-split protocol."""
    manifest = read_manifest(args.manifest)
    nf = _nf(args)
    if args.model:
        model = gpr.load_model(args.model)
        feats, _ = harness.extract_features([s.image_path for s in manifest.samples], nf, args.epsilon,
                                            workers=args.threads)
        pred, _ = model.predict_many(feats)
        _emit(_report_text(safe_evaluate(pred, manifest.scores), args.format), args.out)
        return EXIT_OK
    result = harness.run_experiment(manifest, _split_spec(args), nf=nf, zero_epsilon=args.epsilon,
                                    workers=args.threads, **_gpr_kwargs(args))
    sys.stderr.write(result.table())
    _emit(json.dumps(result.to_dict(), indent=2, allow_nan=False) + "\n", args.out)
    return EXIT_OK


def cmd_crossval(args) -> int:
    train = read_manifest(args.train_manifest)
    test = read_manifest(args.test_manifest)
    report = harness.cross_database(train, test, args.seed, nf=_nf(args), zero_epsilon=args.epsilon,
                                    workers=args.threads, **_gpr_kwargs(args))
    _emit(_report_text(report, args.format), args.out)
    return EXIT_OK


def cmd_ablate(args) -> int:
    manifest = read_manifest(args.manifest)
    result = harness.feature_ablation(manifest, _split_spec(args), nf=_nf(args), zero_epsilon=args.epsilon,
                                      workers=args.threads, **_gpr_kwargs(args))
    _emit(json.dumps(result.to_dict(), indent=2) + "\n", args.out)
    return EXIT_OK


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_synth(args) -> int:
    try:
        size = tuple(int(v) for v in args.size.lower().split("x"))
    except ValueError:
        size = ()
    if len(size) != 2 or min(size) < 8:
        raise UsageError(f"--size must look like HxW with both sides >= 8, got {args.size!r}")
    if args.contents < 1:
        raise UsageError("--contents must be >= 1")
    contents = [distort.dead_leaves(args.seed + i, size) for i in range(args.contents)]
    if args.kind == "combined":
        blur = _float_list(args.levels or "1,2.5")
        q_levels = _float_list(args.blocky_levels)
        n_levels = _float_list(args.noise_levels)
        chains = [(distort.DistortionSpec(distort.GBLUR, s), distort.DistortionSpec(k, lv))
                  for s in blur for k, lvls in ((distort.BLOCKY, q_levels), (distort.AWGN, n_levels)) for lv in lvls]
        scales = {distort.GBLUR: max(blur), distort.BLOCKY: max(q_levels), distort.AWGN: max(n_levels)}
    else:
        defaults = {distort.GBLUR: "0.5,1,1.5,2,2.5,3,3.5,4,4.5,5", distort.AWGN: "2,5,10,15,20,30",
                    distort.BLOCKY: "1,2,4,6,8,12"}
        try:
            chains = [distort.DistortionSpec(args.kind, lv) for lv in _float_list(args.levels or defaults[args.kind])]
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        scales = None
    manifest = distort.build_ladder(contents, chains, args.out, scales=scales, seed=args.seed)
    print(Path(args.out) / "manifest.csv")
    log.info("wrote %d images", len(manifest))
    return EXIT_OK


def cmd_bench(args) -> int:
    manifest, _ = _manifest_or_images(args)
    res = harness.benchmark([s.image_path for s in manifest.samples], args.repeat, _nf(args), args.epsilon)
    _emit(json.dumps(res.to_dict(), indent=2) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="freqiqa", description="Blind frequency-domain image quality assessment.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", help="write the 24-feature CSV for images")
    p.add_argument("--manifest")
    p.add_argument("--image", nargs="+", type=Path)
    p.add_argument("--out")
    p.add_argument("--dump-mscn", metavar="PATH", help="write the MSCN field of the single input image")
    p.add_argument("--dump-block", metavar="ROW,COL", help="print one block's shifted DFT magnitudes to stderr")
    p.add_argument("--dump-source", choices=["gray", "mscn"], default="gray")
    _feature_args(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="fit a GP model on a feature CSV with scores")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _gpr_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict quality scores")
    p.add_argument("--model", required=True)
    p.add_argument("--image", nargs="+", type=Path)
    p.add_argument("--features")
    p.add_argument("--out")
    _feature_args(p)
    p.set_defaults(func=cmd_predict, threads=1)

    p = sub.add_parser("evaluate", help="score a model on a manifest, or run the repeated-split protocol")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["json", "text"], default="json")
    p.add_argument("--out")
    _split_args(p)
    _feature_args(p)
    _gpr_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("crossval", help="train on one database, test on another")
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--test-manifest", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["json", "text"], default="json")
    p.add_argument("--out")
    _feature_args(p)
    _gpr_args(p)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("ablate", help="median SROCC of each single feature")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _split_args(p, iterations=100)
    _feature_args(p)
    _gpr_args(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="generate a synthetic distortion ladder")
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=[*distort.KINDS, "combined"], default=distort.GBLUR)
    p.add_argument("--levels", help="comma-separated levels (blur sigmas for 'combined')")
    p.add_argument("--blocky-levels", default="2,6")
    p.add_argument("--noise-levels", default="5,20")
    p.add_argument("--contents", type=int, default=20)
    p.add_argument("--size", default="192x192")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="time feature extraction (single-threaded)")
    p.add_argument("--manifest")
    p.add_argument("--image", nargs="+", type=Path)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--out")
    p.add_argument("--nf")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and argparse usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"freqiqa: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"freqiqa: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"freqiqa: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FreqIQAError as exc:
        print(f"freqiqa: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"freqiqa: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
