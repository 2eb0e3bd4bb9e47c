"""Command-line interface.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
Every command writes its outputs plus one ``manifest.json`` into ``--out``.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .classify import CLASSIFIERS, TrainConfig, TrainedClassifier, train_classifier
from .experiment import default_workers
from .features import KIND_DIMS
from .fitting import (DISTRUST_THRESHOLD, FitDivergedError, Personalization, fit_frames,
                      format_distrust_table, personalize)
from .io import (InputError, read_features_csv, read_json, read_jsonl, read_landmarks_csv,
                 write_dataset, write_features_csv, write_json, write_jsonl, write_manifest)
from .metrics import ConfusionMatrix, report as metrics_report
from .model import ModelFormatError, load_correspondence, load_model
from .synth import AugmentConfig, SynthSpec, generate_dataset

log = logging.getLogger("candidefit")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
FIT_MODES = ("global", "personalize", "action")
_NOT_CONFIG = {"func", "out", "quiet", "timing", "command"}


class CliError(Exception):
    def __init__(self, message, code=EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _global_flags(parser, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--model", type=Path, default=d(None), help="model file (default: bundled)")
    parser.add_argument("--corr", type=Path, default=d(None),
                        help="correspondence file (default: bundled)")
    parser.add_argument("--seed", type=int, default=d(0))
    parser.add_argument("--out", type=Path, default=d(None), help="output directory")
    parser.add_argument("--quiet", action="store_true", default=d(False))
    parser.add_argument("--timing", action="store_true", default=d(False),
                        help="record wall time in the manifest (breaks byte-identical reruns)")


def build_parser():
    parser = argparse.ArgumentParser(prog="candidefit",
                                     description="Candide-3 landmark fitting and emotion classification")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic landmark dataset")
    p.add_argument("--n-per-class", type=int, default=200)
    p.add_argument("--train-yaw", type=float, default=0.0)
    p.add_argument("--test-yaw", type=float, action="append", dest="test_yaws",
                   help="test yaw in radians, repeatable (default: -pi/4 and pi/4)")
    p.add_argument("--noise-sigma", type=float, default=0.5)
    p.add_argument("--identity-sigma", type=float, default=SynthSpec.identity_sigma)
    p.add_argument("--no-augment", action="store_true")
    p.set_defaults(func=cmd_synth)

    for name in ("fit", "personalize"):
        p = sub.add_parser(name, parents=[common],
                           help="fit the model to landmark frames" if name == "fit"
                           else "alias of: fit --mode personalize")
        p.add_argument("landmarks", type=Path, help="landmark CSV")
        if name == "fit":
            p.add_argument("--mode", choices=FIT_MODES, default="action")
        p.add_argument("--personalization", type=Path,
                       help="personalization JSON whose shape coefficients are frozen in action mode")
        p.add_argument("--label", help="use only frames with this label")
        p.add_argument("--threshold", type=float, default=DISTRUST_THRESHOLD)
        p.set_defaults(func=cmd_fit, mode="personalize" if name == "personalize" else "action")

    p = sub.add_parser("extract", parents=[common], help="write AU8 or FP68 feature CSV")
    p.add_argument("input", type=Path, help="fit records (.jsonl) for au8, landmark CSV for fp68")
    p.add_argument("--kind", choices=sorted(KIND_DIMS), default="au8")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[common], help="train a classifier on a feature CSV")
    p.add_argument("features", type=Path)
    p.add_argument("--classifier", required=True, help=f"one of: {', '.join(CLASSIFIERS)}")
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--gamma", type=float, help="kernel scale (default: 1/dim)")
    p.add_argument("--coef0", type=float, default=1.0)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=TrainConfig.max_epochs)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
    p.add_argument("--patience", type=int, default=TrainConfig.plateau_patience)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score a trained classifier")
    p.add_argument("model_file", type=Path, metavar="MODEL")
    p.add_argument("features", type=Path)
    p.add_argument("--plot-data", action="store_true", help="also write per-class CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="figures and tables from eval reports")
    p.add_argument("reports", type=Path, nargs="+", help="report.json files")
    p.add_argument("--name", action="append", dest="names", help="display name per report")
    p.set_defaults(func=cmd_report)
    return parser


def _config(args):
    cfg = {}
    for k, v in sorted(vars(args).items()):
        if k in _NOT_CONFIG:
            continue
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, list):
            v = [str(x) if isinstance(x, Path) else x for x in v]
        cfg[k] = v
    return cfg


def _out_dir(args):
    if args.out is None:
        raise CliError("--out is required")
    try:
        args.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {args.out}: {exc.strerror}") from None
    return args.out


def _load_model(args):
    for p in (args.model, args.corr):
        if p is not None and not p.is_file():
            raise CliError(f"{p}: no such file")
    model = load_model(args.model)
    return model, load_correspondence(args.corr, model)


def _manifest(args, inputs, outputs, started):
    wall = round(time.perf_counter() - started, 3) if args.timing else None
    write_manifest(args.out, args.command, _config(args), seed=args.seed, inputs=inputs,
                   outputs=outputs, wall_time=wall)


def _say(args, text):
    if not args.quiet:
        print(text)


def cmd_synth(args, started):
    out = _out_dir(args)
    model, corr = _load_model(args)
    yaws = tuple(args.test_yaws) if args.test_yaws else (-math.pi / 4, math.pi / 4)
    try:
        spec = SynthSpec(n_per_class=args.n_per_class, train_yaw=args.train_yaw, test_yaws=yaws,
                         noise_sigma=args.noise_sigma, seed=args.seed, augment=not args.no_augment,
                         identity_sigma=args.identity_sigma)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    ds = generate_dataset(spec, model, corr)
    outputs = write_dataset(out, ds)
    args.test_yaws = list(yaws)
    _manifest(args, [], outputs, started)
    _say(args, f"wrote {len(ds.train)} train and {len(ds.test)} test frames to {out}")
    return EXIT_OK


def _select_frames(args):
    frames = read_landmarks_csv(args.landmarks)
    if args.label is not None:
        frames = [f for f in frames if f.label == args.label]
    if not frames:
        raise CliError("no frames to fit")
    return frames


def cmd_fit(args, started):
    out = _out_dir(args)
    model, corr = _load_model(args)
    frames = _select_frames(args)
    workers = default_workers()
    if args.mode == "personalize":
        try:
            pers = personalize(frames, model, corr, args.threshold, workers=workers)
        except ValueError as exc:
            raise CliError(str(exc)) from None
        table = format_distrust_table(pers.records, args.threshold)
        write_json(out / "personalization.json", pers.to_dict())
        (out / "distrust.txt").write_text(table + "\n")
        _manifest(args, [args.landmarks], ["personalization.json", "distrust.txt"], started)
        _say(args, table)
        if pers.dropped:
            print(f"diverged frames: {pers.dropped}", file=sys.stderr)
            return EXIT_NUMERIC
        return EXIT_OK

    a_shape = None
    if args.personalization is not None:
        a_shape = Personalization.from_dict(read_json(args.personalization)).shape_coeffs
        if a_shape.size != model.n_shape:
            raise CliError(f"personalization has {a_shape.size} shape coefficients, model has {model.n_shape}")
    phase = "global" if args.mode == "global" else "action"
    results = fit_frames(frames, model, corr, phase=phase, a_shape=a_shape, workers=workers,
                         skip_diverged=True)
    records, diverged = [], []
    for frame, res in zip(frames, results):
        if isinstance(res, FitDivergedError):
            diverged.append(frame.tau)
            continue
        res.tau = frame.tau
        records.append({"label": frame.label, **res.to_record()})
    records.sort(key=lambda r: r["tau"])
    write_jsonl(out / "fits.jsonl", records)
    inputs = [args.landmarks] + ([args.personalization] if args.personalization else [])
    _manifest(args, inputs, ["fits.jsonl"], started)
    worst = max((r["rmse"] for r in records), default=float("nan"))
    _say(args, f"fitted {len(records)} frames (max rmse {worst:.3g} px) -> {out / 'fits.jsonl'}")
    if diverged:
        print(f"diverged frames: {diverged}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_extract(args, started):
    out = _out_dir(args)
    if args.kind == "au8":
        if args.input.suffix == ".csv":
            raise CliError("au8 features come from fit records (.jsonl); run `fit` first")
        recs = read_jsonl(args.input)
        if not recs:
            raise CliError(f"{args.input}: no fit records")
        try:
            X = np.array([r["a_action"] for r in recs], dtype=float)
        except (KeyError, ValueError):
            raise CliError(f"{args.input}: records need an a_action list") from None
        if X.ndim != 2 or X.shape[1] != KIND_DIMS["au8"]:
            raise CliError(f"{args.input}: expected {KIND_DIMS['au8']} action coefficients per record")
        labels = [r.get("label") for r in recs]
    else:
        frames = read_landmarks_csv(args.input)
        X = np.array([f.points.reshape(-1) for f in frames])
        labels = [f.label for f in frames]
    write_features_csv(out / "features.csv", X, labels)
    _manifest(args, [args.input], ["features.csv"], started)
    _say(args, f"wrote {len(X)} {args.kind} vectors to {out / 'features.csv'}")
    return EXIT_OK


def cmd_train(args, started):
    if args.classifier not in CLASSIFIERS:
        raise CliError(f"unknown classifier {args.classifier!r}; valid: {', '.join(CLASSIFIERS)}")
    out = _out_dir(args)
    X, labels, kind = read_features_csv(args.features)
    try:
        cfg = TrainConfig(learning_rate=args.lr, plateau_patience=args.patience,
                          batch_size=args.batch_size, max_epochs=args.epochs, seed=args.seed)
        svm_params = {"degree": args.degree, "gamma": args.gamma, "coef0": args.coef0, "C": args.C}
        clf, train_log = train_classifier(args.classifier, X, labels, kind, seed=args.seed,
                                          svm_params=svm_params, mlp_config=cfg,
                                          val_fraction=args.val_fraction)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    (out / "model.json").write_text(clf.dumps() + "\n")
    write_json(out / "train_log.json", train_log)
    _manifest(args, [args.features], ["model.json", "train_log.json"], started)
    _say(args, f"{args.classifier} on {kind}: accuracy on input {train_log['input_accuracy']:.4f}")
    return EXIT_OK


def _load_classifier(path):
    if not path.is_file():
        raise CliError(f"{path}: no such file")
    try:
        return TrainedClassifier.loads(path.read_text())
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(f"{path}: not a classifier file ({exc})") from None


def cmd_eval(args, started):
    out = _out_dir(args)
    clf = _load_classifier(args.model_file)
    X, labels, kind = read_features_csv(args.features)
    if kind != clf.feature_kind:
        raise CliError(f"feature kind mismatch: model expects {clf.feature_kind}, file holds {kind}")
    if any(lbl is None for lbl in labels):
        raise CliError("evaluation rows need labels")
    unknown = set(labels) - set(clf.classes)
    if unknown:
        raise CliError(f"labels unknown to the model: {sorted(unknown)}")
    C = ConfusionMatrix.from_predictions(labels, clf.predict(X), clf.classes)
    try:
        rep = metrics_report(C)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_NUMERIC) from None
    write_json(out / "report.json", rep)
    outputs = ["report.json"]
    if args.plot_data:
        from .plotting import write_per_class_csv
        write_per_class_csv(out / "plot_data.csv", rep)
        outputs.append("plot_data.csv")
    _manifest(args, [args.model_file, args.features], outputs, started)
    _say(args, f"accuracy {rep['accuracy']:.4f}  kappa {rep['kappa']:.4f}  "
               f"weighted F1 {rep['weighted_f1']:.4f}  (n={rep['n']})")
    return EXIT_OK


def cmd_report(args, started):
    from . import plotting

    out = _out_dir(args)
    names = args.names or [p.parent.name or p.stem for p in args.reports]
    if len(names) != len(args.reports):
        raise CliError("give one --name per report")
    if len(set(names)) != len(names):
        raise CliError(f"report names must be distinct: {names}")
    reports = {}
    for name, path in zip(names, args.reports):
        rep = read_json(path)
        if "confusion" not in rep or "per_class" not in rep:
            raise CliError(f"{path}: not an eval report")
        reports[name] = rep
    outputs = ["summary.csv", "summary.png"]
    plotting.write_summary_csv(out / "summary.csv", reports)
    plotting.plot_summary(reports, out / "summary.png")
    for name, rep in reports.items():
        plotting.write_per_class_csv(out / f"{name}_per_class.csv", rep)
        plotting.plot_per_class(rep, out / f"{name}_per_class.png", title=name)
        plotting.plot_confusion(rep, out / f"{name}_confusion.png", title=name)
        outputs += [f"{name}_per_class.csv", f"{name}_per_class.png", f"{name}_confusion.png"]
    _manifest(args, args.reports, outputs, started)
    _say(args, f"wrote {len(outputs)} files to {out}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    started = time.perf_counter()
    try:
        return args.func(args, started)
    except CliError as exc:
        print(f"candidefit {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except (InputError, ModelFormatError) as exc:
        print(f"candidefit {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FitDivergedError as exc:
        print(f"candidefit {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"candidefit {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"candidefit {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
