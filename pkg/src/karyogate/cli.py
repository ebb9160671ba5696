"""Batch command-line front end.

Subcommands wrap one module entry point each: generate, preprocess,
extract, reduce, train, calibrate, evaluate, compare-metrics. All
outputs are written atomically (temp file + rename) and every
subcommand is deterministic given its seed and inputs.

Exit codes: 0 success, 2 missing inputs, 3 parse errors, 4 invalid
configuration, 5 internal invariant violations.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import classify, dimred, features, imaging, pipeline, reliability, synthgen
from .errors import (
    InternalError,
    InvalidConfigError,
    InvalidInputError,
    KaryogateError,
    ParseError,
)

EXIT_MISSING_INPUT = 2
EXIT_PARSE = 3
EXIT_CONFIG = 4
EXIT_INTERNAL = 5


def _atomic_write(path, text: str) -> None:
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def _atomic_call(path, writer) -> None:
    """Run a writer against a temp path, then rename into place."""
    tmp = str(path) + ".tmp"
    writer(tmp)
    os.replace(tmp, path)
    # sidecar emitted by the feature writer
    if os.path.exists(tmp + ".layout"):
        os.replace(tmp + ".layout", str(path) + ".layout")


def _require(path, what: str):
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _load_images(manifest, images_dir):
    return [
        imaging.load_image(os.path.join(images_dir, inst.path)) for inst in manifest
    ]


def _select(manifest, split: str):
    if split == "all":
        return list(range(len(manifest)))
    return [i for i, inst in enumerate(manifest) if inst.split == split]


def _targets(manifest, target: str):
    if target == "label":
        return np.array([inst.label for inst in manifest])
    return np.array([inst.prune_label for inst in manifest])


def _load_model(path, kind: str):
    _require(path, "model")
    if kind == "svm":
        return classify.OvOSvm.load(path)
    if kind == "knn":
        return classify.Knn.load(path)
    raise InvalidConfigError(f"cannot load classifier kind {kind!r}")


def _label_indices(model, manifest, indices):
    label_to_idx = {int(v): i for i, v in enumerate(model.labels_)}
    try:
        return np.array([label_to_idx[int(manifest[i].label)] for i in indices])
    except KeyError as exc:
        raise InvalidInputError(f"label {exc} unknown to the model") from exc


def cmd_generate(args) -> int:
    spec = synthgen.SynthSpec(
        n_classes=args.classes,
        curved_prob=args.curved_prob,
        overlap_prob=args.overlap_prob,
        garbage_prob=args.garbage_prob,
        seed=args.seed,
    )
    images, manifest, _ = synthgen.generate(spec, args.n_per_class)
    fractions = tuple(float(v) for v in args.split_fractions.split(","))
    manifest = pipeline.split_by_subject(manifest, fractions, seed=args.seed)
    img_dir = os.path.join(args.out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)
    for img, inst in zip(images, manifest):
        imaging.save_image(os.path.join(img_dir, inst.path), img)
    _atomic_call(
        os.path.join(args.out_dir, "manifest.tsv"),
        lambda p: pipeline.save_manifest(p, manifest),
    )
    print(f"generate: {len(images)} images, {args.classes} classes -> {args.out_dir}")
    return 0


def cmd_preprocess(args) -> int:
    manifest = pipeline.load_manifest(_require(args.manifest, "manifest"))
    os.makedirs(args.out_dir, exist_ok=True)
    n_ok = 0
    for inst in manifest:
        img = imaging.load_image(
            _require(os.path.join(args.images_dir, inst.path), "image")
        )
        arr = imaging.normalize_and_equalize(img)
        try:
            trace = imaging.trace_boundary(imaging.find_boundary(arr))
            trace = trace.with_centromere(imaging.locate_centromere(trace))
            arr = imaging.rotate_vertical(arr, trace)
            n_ok += 1
        except InvalidInputError:
            pass  # keep the unrotated image; resize still applies
        arr = imaging.resize_nn(arr, args.height, args.width)
        imaging.save_image(os.path.join(args.out_dir, inst.path), arr)
    print(f"preprocess: {len(manifest)} images ({n_ok} rotated) -> {args.out_dir}")
    return 0


def cmd_extract(args) -> int:
    manifest = pipeline.load_manifest(_require(args.manifest, "manifest"))
    images = _load_images(manifest, _require(args.images_dir, "images dir"))
    if args.features == "engineered":
        matrix = features.extract_engineered_batch(images)
        layout = features.ENGINEERED_LAYOUT
    else:
        cfg = features.DescriptorConfig(args.keypoints, args.orientations)
        rows = [features.sift_lite(img, cfg).values for img in images]
        matrix = np.vstack(rows)
        layout = features._descriptor_layout(cfg)
    _atomic_call(args.out, lambda p: features.save_features(p, matrix, layout))
    print(f"extract: {matrix.shape[0]}x{matrix.shape[1]} {args.features} -> {args.out}")
    return 0


def cmd_reduce(args) -> int:
    manifest = pipeline.load_manifest(_require(args.manifest, "manifest"))
    X, _ = features.load_features(_require(args.features_file, "features"))
    fit_idx = _select(manifest, args.fit_split)
    if not fit_idx:
        fit_idx = list(range(len(manifest)))
    y = _targets(manifest, args.target)[fit_idx]
    model = dimred.FukunagaTransform(d_mid=args.dr_mid, d_out=args.dr_out)
    model.fit(X[fit_idx], y)
    reduced = model.transform(X)
    layout = features._make_layout([("reduced", reduced.shape[1])])
    _atomic_call(args.out, lambda p: features.save_features(p, reduced, layout))
    _atomic_call(args.model_out, model.save)
    print(
        f"reduce: {X.shape[1]} -> {reduced.shape[1]} dims "
        f"(mid {model.d_mid_}) -> {args.out}"
    )
    return 0


def cmd_train(args) -> int:
    manifest = pipeline.load_manifest(_require(args.manifest, "manifest"))
    X, _ = features.load_features(_require(args.features_file, "features"))
    idx = _select(manifest, args.train_split)
    if not idx:
        raise InvalidInputError(f"no instances in split {args.train_split!r}")
    y = _targets(manifest, args.target)[idx]
    if args.classifier == "svm":
        model = classify.OvOSvm(regularization=args.reg, epochs=args.epochs)
    elif args.classifier == "knn":
        model = classify.Knn(k=args.k)
    else:
        raise InvalidConfigError("train supports classifiers: svm, knn")
    model.fit(X[idx], y)
    _atomic_call(args.out, model.save)
    print(f"train: {args.classifier} on {len(idx)} instances -> {args.out}")
    return 0


def cmd_calibrate(args) -> int:
    manifest = pipeline.load_manifest(_require(args.manifest, "manifest"))
    X, _ = features.load_features(_require(args.features_file, "features"))
    model = _load_model(args.model, args.classifier)
    idx = _select(manifest, args.calib_split)
    if not idx:
        raise InvalidInputError(f"no instances in split {args.calib_split!r}")
    scores = model.score_batch(X[idx])
    y_idx = _label_indices(model, manifest, idx)
    table = reliability.calibrate_thresholds(
        scores, y_idx, args.metric, args.recall_cutoff, args.strategy
    )
    _atomic_call(args.out, table.save)
    n_set = sum(1 for v in table.thresholds.values() if v is not None)
    print(f"calibrate: metric {args.metric}, {n_set} labels set -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    manifest = pipeline.load_manifest(_require(args.manifest, "manifest"))
    X, _ = features.load_features(_require(args.features_file, "features"))
    if args.classifier == "external":
        vectors = classify.load_external_scores(_require(args.scores, "score file"))
        n = vectors[0].n_labels if vectors else 0
        idx = _select(manifest, args.eval_split)
        if len(vectors) != len(idx):
            raise InvalidInputError("external scores do not align with eval split")
        model = classify.ExternalScores(vectors, labels=np.arange(1, n + 1))
    else:
        model = _load_model(args.model, args.classifier)
        idx = _select(manifest, args.eval_split)
    if not idx:
        raise InvalidInputError(f"no instances in split {args.eval_split!r}")
    table = (
        reliability.ThresholdTable.load(_require(args.thresholds, "thresholds"))
        if args.thresholds
        else None
    )
    pruner = None
    if args.pruner:
        pruner = _load_model(args.pruner, args.pruner_classifier)
    report = pipeline.run_cascade(
        [manifest[i] for i in idx], X[idx], model, table, pruner=pruner
    )
    _atomic_write(args.out, report.to_text())
    _atomic_write(str(args.out) + ".json", report.to_json())
    print(
        f"evaluate: {len(idx)} instances, rejection rate "
        f"{report.rejection_rate:.3f} -> {args.out}"
    )
    return 0


def cmd_compare_metrics(args) -> int:
    manifest = pipeline.load_manifest(_require(args.manifest, "manifest"))
    X, _ = features.load_features(_require(args.features_file, "features"))
    model = _load_model(args.model, args.classifier)
    calib_idx = _select(manifest, args.calib_split)
    eval_idx = _select(manifest, args.eval_split)
    if not calib_idx or not eval_idx:
        raise InvalidInputError("empty calibration or evaluation split")
    calib_scores = model.score_batch(X[calib_idx])
    eval_scores = model.score_batch(X[eval_idx])
    rows = pipeline.compare_metrics_report(
        calib_scores,
        _label_indices(model, manifest, calib_idx),
        eval_scores,
        _label_indices(model, manifest, eval_idx),
        recall_cutoff=args.recall_cutoff,
        strategy=args.strategy,
        precision_floor=args.precision_floor,
    )
    _atomic_write(args.out, pipeline.comparison_to_text(rows))
    print(f"compare-metrics: 5 metrics over {len(eval_idx)} instances -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="karyogate",
        description="Reliability-gated chromosome classification toolkit",
    )
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap (processing is currently serial)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="render a synthetic corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=24)
    p.add_argument("--n-per-class", type=int, default=50)
    p.add_argument("--curved-prob", type=float, default=0.0)
    p.add_argument("--overlap-prob", type=float, default=0.0)
    p.add_argument("--garbage-prob", type=float, default=0.0)
    p.add_argument("--split-fractions", default="0.8,0.2,0.0")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("preprocess", help="normalize, rotate upright, resize")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--height", type=int, default=200)
    p.add_argument("--width", type=int, default=100)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("extract", help="compute feature matrices")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--features", choices=("engineered", "descriptor"),
                   default="engineered")
    p.add_argument("--keypoints", type=int, choices=features.KEYPOINT_CHOICES,
                   default=50)
    p.add_argument("--orientations", type=int,
                   choices=features.ORIENTATION_CHOICES, default=128)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("reduce", help="fit and apply the two-stage DR")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features-file", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--dr-mid", type=int, default=None)
    p.add_argument("--dr-out", type=int, default=None)
    p.add_argument("--target", choices=("label", "prune"), default="label")
    p.add_argument("--fit-split", default="train")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("train", help="fit a scoring classifier")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features-file", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classifier", choices=("svm", "knn"), default="knn")
    p.add_argument("--target", choices=("label", "prune"), default="label")
    p.add_argument("--train-split", default="train")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--reg", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=300)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="learn per-label thresholds")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features-file", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--classifier", choices=("svm", "knn"), default="knn")
    p.add_argument("--out", required=True)
    p.add_argument("--metric", choices=reliability.METRICS, default="III")
    p.add_argument("--recall-cutoff", type=float,
                   default=reliability.DEFAULT_RECALL_CUTOFF)
    p.add_argument("--strategy", choices=reliability.STRATEGIES,
                   default="recall_sweep")
    p.add_argument("--calib-split", default="train")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="run the gated cascade and report")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features-file", required=True)
    p.add_argument("--model")
    p.add_argument("--classifier", choices=("svm", "knn", "external"),
                   default="knn")
    p.add_argument("--scores", help="external score matrix file")
    p.add_argument("--thresholds")
    p.add_argument("--pruner")
    p.add_argument("--pruner-classifier", choices=("svm", "knn"), default="knn")
    p.add_argument("--eval-split", default="valid")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare-metrics", help="five-metric comparison table")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features-file", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--classifier", choices=("svm", "knn"), default="knn")
    p.add_argument("--out", required=True)
    p.add_argument("--recall-cutoff", type=float,
                   default=reliability.DEFAULT_RECALL_CUTOFF)
    p.add_argument("--strategy", choices=reliability.STRATEGIES,
                   default="recall_sweep")
    p.add_argument("--precision-floor", type=float, default=0.8)
    p.add_argument("--calib-split", default="train")
    p.add_argument("--eval-split", default="valid")
    p.set_defaults(func=cmd_compare_metrics)
    return parser


def _apply_config(parser, argv):
    """Pre-parse --config, folding JSON keys into subparser defaults."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    cfg_path = argv[i + 1]
    try:
        with open(cfg_path) as f:
            cfg = json.load(f)
    except json.JSONDecodeError as exc:
        raise ParseError(f"config {cfg_path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InvalidConfigError("config file must hold a JSON object")
    known = set()
    for action in parser._subparsers._group_actions[0].choices.values():
        for a in action._actions:
            known.update(s.lstrip("-").replace("-", "_") for s in a.option_strings)
    for key, value in cfg.items():
        norm = key.replace("-", "_")
        if norm not in known:
            raise InvalidConfigError(f"unknown config key {key!r}")
        for action in parser._subparsers._group_actions[0].choices.values():
            action.set_defaults(**{norm: value})
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InvalidConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except KaryogateError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
