"""Command-line interface.

Commands: gen-data, train, eval, classify, features, baseline-train,
baseline-eval, benchmark, heatmap. Exit codes: 0 success, 1 usage error,
2 data error, 3 model-format error. Result tables go to stdout (or --out)
and are byte-deterministic for identical inputs and seeds; progress and
timing chatter goes to stderr.
"""

import argparse
import sys

import numpy as np

from . import __version__, datagen
from .bench import benchmark_latency, write_benchmark
from .errors import DataError, ModelFormatError, SynthsieveError
from .features import FEATURE_NAMES, extract_features, read_feature_table, write_feature_table
from .forest import Forest, ForestConfig, forest_predict, load_forest, save_forest, train_forest
from .heatmap import AGGREGATIONS, export_heatmap
from .imageio import load_image_array
from .manifest import load_manifest
from .models import ARCH_IDS, CLASS_NAMES, build_model, forward
from .modelio import load_model, save_model
from .trainer import (
    TrainConfig,
    evaluate,
    load_manifest_images,
    metrics_from_predictions,
    train,
    write_report,
)
from .forest import forest_predict_many

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_MODEL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _open_out(args):
    if getattr(args, "out", None):
        return open(args.out, "w", encoding="utf-8")
    return sys.stdout


def _load_model_or_die(path):
    try:
        return load_model(path)
    except OSError as exc:
        raise ModelFormatError(f"cannot open model {path}: {exc}") from exc


# --- commands ---------------------------------------------------------------------

def cmd_gen_data(args):
    if args.count is not None:
        counts = datagen.balanced_counts(args.count)
    else:
        counts = {}
        for source, n in (("camera_proxy", args.camera), ("text_overlay", args.text_overlay),
                          ("stacked", args.stacked), ("flat_synthetic", args.flat)):
            if n:
                counts[source] = n
        if not counts:
            raise ValueError("give --count or at least one per-source count")
    grid = tuple(float(q) for q in args.quality.split(","))
    for q in grid:
        if not 0.0 < q <= 1.0:
            raise ValueError(f"quality {q} outside (0, 1]")
    config = datagen.DatasetConfig(counts=counts, size=args.size, seed=args.seed,
                                   quality_grid=grid, keep_masters=args.masters)
    manifest = datagen.make_dataset(config, args.out)
    per_label = [sum(1 for s in manifest.samples if s.label == c) for c in (0, 1)]
    print(f"{args.out}/manifest.jsonl\t{len(manifest.samples)} samples\t"
          f"camera={per_label[0]}\tsynthetic={per_label[1]}")
    return EXIT_OK


def cmd_train(args):
    manifest = load_manifest(args.manifest)
    manifest.validate(require_both_labels=True)
    model = build_model(args.arch, args.seed, input_side=args.input_side)
    config = TrainConfig(learning_rate=args.lr, decay=args.decay,
                         batch_size=args.batch_size, epochs=args.epochs,
                         folds=args.folds, seed=args.seed)
    def progress(rec):
        print(f"fold {rec.fold} epoch {rec.epoch}: train_loss {rec.train_loss:.4f} "
              f"train_acc {rec.train_accuracy:.4f} val_acc {rec.val_accuracy:.4f}",
              file=sys.stderr, flush=True)
    report, fold_models = train(model, manifest, config, progress=progress)
    if args.report:
        write_report(report, args.report)
    accs = [m.accuracy for m in report.fold_metrics]
    best = int(np.argmax(accs))  # first best fold wins ties
    if args.out:
        save_model(fold_models[best], args.out)
    print(f"mean_val_accuracy\t{report.mean_val_accuracy:.6f}")
    for i, m in enumerate(report.fold_metrics):
        print(f"fold_{i}_val_accuracy\t{m.accuracy:.6f}")
    print(f"saved_fold\t{best}")
    return EXIT_OK


def _print_metrics(metrics, fh):
    fh.write(f"accuracy\t{metrics.accuracy:.6f}\n")
    fh.write(f"mean_loss\t{metrics.mean_loss:.6f}\n")
    for c, name in enumerate(CLASS_NAMES):
        row = metrics.confusion[c]
        fh.write(f"confusion_true_{name}\t{int(row[0])}\t{int(row[1])}\n")
    for c, name in enumerate(CLASS_NAMES):
        fh.write(f"precision_{name}\t{metrics.precision[c]:.6f}\n")
    for c, name in enumerate(CLASS_NAMES):
        fh.write(f"recall_{name}\t{metrics.recall[c]:.6f}\n")


def cmd_eval(args):
    model = _load_model_or_die(args.model)
    manifest = load_manifest(args.manifest)
    metrics = evaluate(model, manifest)
    out = _open_out(args)
    with out if out is not sys.stdout else _nullcontext(out):
        _print_metrics(metrics, out)
    return EXIT_OK


class _nullcontext:
    def __init__(self, value):
        self.value = value

    def __enter__(self):
        return self.value

    def __exit__(self, *exc):
        return False


def cmd_classify(args):
    model = _load_model_or_die(args.model)
    side = model.spec.input_side
    out = _open_out(args)
    with out if out is not sys.stdout else _nullcontext(out):
        out.write("path\tclass\tsynthetic_prob\n")
        for path in args.paths:
            try:
                image = load_image_array(path, side).astype(np.float32) / np.float32(255.0)
            except DataError:
                out.write(f"{path}\terror\t-\n")
                continue
            probs, _ = forward(model, image)
            synthetic_prob = float(probs[1])
            cls = CLASS_NAMES[1] if synthetic_prob > args.threshold else CLASS_NAMES[0]
            out.write(f"{path}\t{cls}\t{synthetic_prob:.6f}\n")
    return EXIT_OK


def cmd_features(args):
    manifest = load_manifest(args.manifest)
    rows = []
    for sample in manifest.samples:
        image = load_image_array(manifest.resolve_path(sample))
        rows.append((extract_features(image), sample.label))
    if args.out:
        write_feature_table(rows, args.out)
    else:
        sys.stdout.write(",".join(FEATURE_NAMES + ("label",)) + "\n")
        for fv, label in rows:
            values = [repr(float(v)) for v in fv.as_array()]
            sys.stdout.write(",".join(values + [str(int(label))]) + "\n")
    return EXIT_OK


def _features_and_labels(args):
    if args.features:
        return read_feature_table(args.features)
    if args.manifest:
        manifest = load_manifest(args.manifest)
        feats = []
        labels = []
        for sample in manifest.samples:
            image = load_image_array(manifest.resolve_path(sample))
            feats.append(extract_features(image).as_array())
            labels.append(sample.label)
        return np.asarray(feats), np.asarray(labels, np.int64)
    raise ValueError("give --features or --manifest")


def cmd_baseline_train(args):
    feats, labels = _features_and_labels(args)
    forest = train_forest(feats, labels,
                          ForestConfig(trees=args.trees, max_depth=args.max_depth,
                                       seed=args.seed))
    save_forest(forest, args.out)
    preds = forest_predict_many(forest, feats)
    acc = float((preds == labels).mean())
    print(f"{args.out}\ttrees={args.trees}\ttrain_accuracy\t{acc:.6f}")
    return EXIT_OK


def cmd_baseline_eval(args):
    forest = load_forest(args.forest)
    feats, labels = _features_and_labels(args)
    preds = forest_predict_many(forest, feats)
    metrics = metrics_from_predictions(labels, preds)
    out = _open_out(args)
    with out if out is not sys.stdout else _nullcontext(out):
        out.write(f"accuracy\t{metrics.accuracy:.6f}\n")
        for c, name in enumerate(CLASS_NAMES):
            row = metrics.confusion[c]
            out.write(f"confusion_true_{name}\t{int(row[0])}\t{int(row[1])}\n")
    return EXIT_OK


def cmd_benchmark(args):
    model = _load_model_or_die(args.model)
    factors = [float(f) for f in args.factors.split(",")]
    rows = benchmark_latency(model, factors, reps=args.reps, seed=args.seed)
    out = _open_out(args)
    with out if out is not sys.stdout else _nullcontext(out):
        write_benchmark(rows, out)
    return EXIT_OK


def cmd_heatmap(args):
    model = _load_model_or_die(args.model)
    image = load_image_array(args.image, model.spec.input_side).astype(np.float32)
    image /= np.float32(255.0)
    export_heatmap(model, image, args.out, agg=args.agg)
    print(args.out)
    return EXIT_OK


# --- wiring -----------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="synthsieve",
                     description="Classify images as camera captures vs. synthetic "
                                 "compositions; includes data generation, training, "
                                 "baselines, benchmarking, and heat-map diagnostics.")
    parser.add_argument("--version", action="version", version=f"synthsieve {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a procedural corpus + manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, help="total samples, balanced classes")
    p.add_argument("--camera", type=int, default=0, help="camera_proxy count")
    p.add_argument("--text-overlay", type=int, default=0, dest="text_overlay")
    p.add_argument("--stacked", type=int, default=0)
    p.add_argument("--flat", type=int, default=0, help="flat_synthetic count")
    p.add_argument("--size", type=int, default=224)
    p.add_argument("--quality", default="0.95", help="comma-separated quality grid")
    p.add_argument("--masters", action="store_true", help="also keep lossless masters")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="k-fold cross-validated training")
    p.add_argument("--manifest", required=True)
    p.add_argument("--arch", choices=ARCH_IDS, default="dws1")
    p.add_argument("--out", help="write the best fold's model here")
    p.add_argument("--report", help="write the per-epoch report table here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--decay", type=float, default=1e-6)
    p.add_argument("--input-side", type=int, default=224)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a model against a manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("classify", help="classify image files")
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("features", help="dump the ten forensic features per image")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("baseline-train", help="train the random-forest baseline")
    p.add_argument("--manifest")
    p.add_argument("--features", help="feature CSV instead of a manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--trees", type=int, default=50)
    p.add_argument("--max-depth", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_baseline_train)

    p = sub.add_parser("baseline-eval", help="score a trained forest")
    p.add_argument("--forest", required=True)
    p.add_argument("--manifest")
    p.add_argument("--features")
    p.add_argument("--out")
    p.set_defaults(func=cmd_baseline_eval)

    p = sub.add_parser("benchmark", help="latency vs. input resolution")
    p.add_argument("--model", required=True)
    p.add_argument("--factors", default="0.5,1.0,1.5,2.0")
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--out")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("heatmap", help="export a conv5 activation heat map")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--agg", choices=AGGREGATIONS, default="mean")
    p.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ModelFormatError as exc:
        print(f"synthsieve: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except DataError as exc:
        print(f"synthsieve: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"synthsieve: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SynthsieveError as exc:
        print(f"synthsieve: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
