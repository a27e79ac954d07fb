"""Command-line surface for the paired-resolution classification pipeline.

Verbs: synth, split, train, predict, extract-features, rf-fit, evaluate,
run-splits.  Every verb writes its primary output plus a reproducibility
record `<output>.repro.json` holding the full argument list, the seeds in
play, and SHA-256 hashes of everything written.  Data goes to files,
diagnostics to standard error; exit codes: 0 success, 1 domain error
(one-line "error: ..." on stderr), 2 usage error.
"""

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from .data import (build_training_set, enumerate_samples, load_dataset,
                   load_split, object_split, save_dataset, save_split,
                   split_samples, stack_samples, synth_generate, write_raster,
                   read_raster)
from .kv import ManifestError
from .metrics import confusion, confusion_to_csv, scores
from .model import MODEL_BUILDERS, load_model, save_model
from .random_forest import ForestConfig, fit, predict, save_forest
from .training import (TrainConfig, arrange_inputs, metrics_csv, predict_map,
                       run_splits, train)

_THREAD_HOLDER = []


def _cap_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)
    try:
        import threadpoolctl
    except ImportError:
        return
    _THREAD_HOLDER.append(threadpoolctl.threadpool_limits(n))


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_repro(primary, argv, seeds, outputs):
    record = {
        "argv": list(argv),
        "seeds": seeds,
        "outputs": {str(p): _sha256(p) for p in outputs},
    }
    path = Path(str(primary) + ".repro.json")
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def write_features_csv(path, labels, features):
    """Label column first, then one column per feature dimension."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("label," + ",".join(
            f"f{i}" for i in range(features.shape[1])) + "\n")
        for lab, row in zip(labels, features):
            fh.write(str(int(lab)) + ","
                     + ",".join(repr(float(v)) for v in row) + "\n")


def read_features_csv(path):
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2,
                       dtype=np.float64)
    if table.shape[1] < 2:
        raise ManifestError(f"{path}: need a label column plus features")
    return table[:, 0].astype(np.int64), table[:, 1:]


def _scores_csv(sc):
    lines = ["metric,value"]
    for key in ("accuracy", "fmeasure", "fmeasure_macro", "kappa"):
        lines.append(f"{key},{sc[key]:.6f}")
    for i, v in enumerate(sc["per_class_f"], start=1):
        lines.append(f"f_class_{i},{v:.6f}")
    return "\n".join(lines) + "\n"


def _gather_samples(args, dataset):
    samples = enumerate_samples(dataset.scene, d=args.window,
                                max_per_object=args.cap, seed=args.seed)
    split_path = getattr(args, "split", None)
    side = getattr(args, "split_side", None)
    if side is None:
        # train narrows to the training side once a split is supplied
        side = "train" if split_path is not None else "all"
    if side != "all" and split_path is None:
        raise ManifestError("--split-side needs --split")
    if split_path is not None:
        plan = load_split(split_path)
        train_part, test_part = split_samples(samples, plan)
        samples = {"train": train_part, "test": test_part,
                   "all": train_part + test_part}[side]
    if not samples:
        raise ManifestError("no samples selected")
    return samples


# ------------------------------------------------------------------ verbs

def cmd_synth(args, argv):
    scene, names = synth_generate(args.classes, args.objects, args.size,
                                  ratio=args.ratio, bands=args.bands,
                                  seed=args.seed)
    manifest = save_dataset(scene, names, args.out)
    outputs = [manifest] + sorted(manifest.parent.glob("*.mrr"))
    _write_repro(manifest, argv, {"seed": args.seed}, outputs)
    print(manifest, file=sys.stderr)
    return 0


def cmd_split(args, argv):
    dataset = load_dataset(args.manifest)
    samples = enumerate_samples(dataset.scene, d=args.window, seed=args.seed)
    plan = object_split(samples, ratio=args.ratio, seed=args.seed)
    save_split(plan, args.out)
    _write_repro(args.out, argv, {"seed": args.seed}, [args.out])
    return 0


def cmd_train(args, argv):
    dataset = load_dataset(args.manifest)
    samples = _gather_samples(args, dataset)
    if not args.no_augment:
        samples = build_training_set(samples, seed=args.seed)
    arrays = stack_samples(samples)
    model = MODEL_BUILDERS[args.model](dataset.num_classes, seed=args.seed)
    config = TrainConfig(epochs=args.epochs, lr=args.lr,
                         batch_size=args.batch, seed=args.seed)
    out = Path(args.out)
    log_path = out.with_suffix(".trainlog.tsv")
    train(model, arrange_inputs(model, arrays), arrays["labels"], config,
          log_path=log_path)
    ckpt = save_model(model, out)
    _write_repro(out, argv, {"seed": args.seed}, [out, ckpt, log_path])
    return 0


def cmd_predict(args, argv):
    model = load_model(args.checkpoint)
    dataset = load_dataset(args.manifest)
    label_map, prob_map = predict_map(model, dataset.scene,
                                      stride=args.stride)
    out = Path(args.out)
    label_path = out.with_name(out.name + "_labels.mrr")
    prob_path = out.with_name(out.name + "_probs.mrr")
    write_raster(label_path, label_map)
    write_raster(prob_path, prob_map)
    _write_repro(label_path, argv, {"seed": None},
                 [label_path, prob_path])
    return 0


def cmd_extract_features(args, argv):
    model = load_model(args.checkpoint)
    dataset = load_dataset(args.manifest)
    samples = _gather_samples(args, dataset)
    arrays = stack_samples(samples)
    inputs = arrange_inputs(model, arrays)
    chunks = []
    for start in range(0, arrays["labels"].size, args.batch):
        sl = slice(start, start + args.batch)
        chunks.append(model.extract_features([x[sl] for x in inputs]))
    write_features_csv(args.out, arrays["labels"], np.concatenate(chunks))
    _write_repro(args.out, argv, {"seed": args.seed}, [args.out])
    return 0


def cmd_rf_fit(args, argv):
    if (args.features is None) == (args.manifest is None):
        raise ManifestError("pass exactly one of --features / --manifest")
    if args.features is not None:
        labels, feats = read_features_csv(args.features)
    else:
        dataset = load_dataset(args.manifest)
        samples = _gather_samples(args, dataset)
        arrays = stack_samples(samples)
        labels = arrays["labels"]
        feats = arrays["ms"].reshape(labels.size, -1).astype(np.float64)
    config = ForestConfig(n_trees=args.trees,
                          max_depth=args.max_depth or None,
                          min_leaf=args.min_leaf, seed=args.seed)
    forest = fit(feats, labels, config)
    save_forest(forest, args.out)
    outputs = [args.out]
    if args.eval_features:
        eval_labels, eval_feats = read_features_csv(args.eval_features)
        pred = predict(forest, eval_feats)
        cm = confusion(eval_labels, pred, int(max(forest.classes_.max(),
                                                  eval_labels.max())))
        metrics_path = Path(str(args.out) + ".metrics.csv")
        metrics_path.write_text(_scores_csv(scores(cm)), encoding="utf-8")
        outputs.append(metrics_path)
    _write_repro(args.out, argv, {"seed": args.seed}, outputs)
    return 0


def cmd_evaluate(args, argv):
    pred = read_raster(args.pred)[:, :, 0]
    truth = read_raster(args.truth)[:, :, 0]
    if pred.shape != truth.shape:
        raise ManifestError(
            f"prediction {pred.shape} and truth {truth.shape} differ")
    mask = truth > 0
    if not mask.any():
        raise ManifestError("truth raster has no labeled pixels")
    num_classes = args.classes or int(max(truth.max(), pred[mask].max()))
    cm = confusion(truth[mask], pred[mask], num_classes)
    out = Path(args.out)
    out.write_text(_scores_csv(scores(cm)), encoding="utf-8")
    cm_path = Path(str(out) + ".confusion.csv")
    cm_path.write_text(confusion_to_csv(cm), encoding="utf-8")
    _write_repro(out, argv, {"seed": None}, [out, cm_path])
    return 0


def cmd_run_splits(args, argv):
    dataset = load_dataset(args.manifest)
    config = TrainConfig(epochs=args.epochs, lr=args.lr,
                         batch_size=args.batch, seed=args.seed)
    rows, summary = run_splits(dataset, builder=args.model, n_splits=args.n,
                               config=config, d=args.window,
                               train_ratio=args.ratio,
                               max_per_object=args.cap)
    Path(args.out).write_text(metrics_csv(rows, summary), encoding="utf-8")
    _write_repro(args.out, argv, {"seed": args.seed}, [args.out])
    return 0


# ----------------------------------------------------------------- parser

def _add_sampling_flags(p, with_split=True):
    p.add_argument("--window", type=int, default=32,
                   help="high-res window side")
    p.add_argument("--cap", type=int, default=None,
                   help="max anchors per object (default: unlimited)")
    if with_split:
        p.add_argument("--split", default=None,
                       help="object-split file restricting the samples")
        p.add_argument("--split-side", choices=("train", "test", "all"),
                       default="all", help="which side of --split to use")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mrfusion",
        description="Two-branch fusion classifier for paired-resolution "
                    "imagery: data synthesis, training, and evaluation.")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap numeric library worker threads")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(
            name, help=help_text,
            formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.set_defaults(func=fn)
        return p

    p = add("synth", cmd_synth, "generate a synthetic paired scene")
    p.add_argument("--classes", type=int, default=4, help="class count")
    p.add_argument("--objects", type=int, default=20,
                   help="objects per class")
    p.add_argument("--size", type=int, default=512,
                   help="high-res scene side")
    p.add_argument("--ratio", type=int, default=4,
                   help="resolution ratio between the two sources")
    p.add_argument("--bands", type=int, default=4, help="low-res band count")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--out", required=True, help="output directory")

    p = add("split", cmd_split, "draw an object-disjoint train/test split")
    p.add_argument("--manifest", required=True, help="dataset manifest")
    p.add_argument("--ratio", type=float, default=0.30,
                   help="fraction of objects per class used for training")
    p.add_argument("--seed", type=int, default=0, help="draw seed")
    p.add_argument("--window", type=int, default=32,
                   help="high-res window side, sets which objects qualify")
    p.add_argument("--out", required=True, help="split file path")

    p = add("train", cmd_train, "train a model on the training side")
    p.add_argument("--manifest", required=True, help="dataset manifest")
    p.add_argument("--model", choices=sorted(MODEL_BUILDERS),
                   default="mrfusion", help="architecture variant")
    p.add_argument("--epochs", type=int, default=250, help="training epochs")
    p.add_argument("--lr", type=float, default=2e-4, help="learning rate")
    p.add_argument("--batch", type=int, default=32, help="minibatch size")
    p.add_argument("--seed", type=int, default=0, help="training seed")
    p.add_argument("--no-augment", action="store_true",
                   help="skip the 3x geometric augmentation")
    _add_sampling_flags(p)
    p.set_defaults(split_side=None)  # with --split, default to its train side
    p.add_argument("--out", required=True, help="model manifest path")

    p = add("predict", cmd_predict, "classify a whole scene")
    p.add_argument("--checkpoint", required=True,
                   help="model manifest written by train")
    p.add_argument("--manifest", required=True, help="dataset manifest")
    p.add_argument("--stride", type=int, default=1,
                   help="anchor lattice step in high-res pixels")
    p.add_argument("--out", required=True,
                   help="output prefix for _labels/_probs rasters")

    p = add("extract-features", cmd_extract_features,
            "write the model's penultimate feature vectors to CSV")
    p.add_argument("--checkpoint", required=True,
                   help="model manifest written by train")
    p.add_argument("--manifest", required=True, help="dataset manifest")
    p.add_argument("--seed", type=int, default=0, help="sampling cap seed")
    p.add_argument("--batch", type=int, default=64, help="inference batch")
    _add_sampling_flags(p)
    p.add_argument("--out", required=True, help="features CSV path")

    p = add("rf-fit", cmd_rf_fit,
            "fit a random forest on features or raw band values")
    p.add_argument("--features", default=None,
                   help="features CSV from extract-features")
    p.add_argument("--manifest", default=None,
                   help="dataset manifest: fit on raw low-res band values")
    p.add_argument("--trees", type=int, default=400, help="ensemble size")
    p.add_argument("--max-depth", type=int, default=0,
                   help="0 means unlimited")
    p.add_argument("--min-leaf", type=int, default=1,
                   help="minimum samples per leaf")
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p.add_argument("--eval-features", default=None,
                   help="score the fitted forest on this features CSV")
    _add_sampling_flags(p)
    p.add_argument("--out", required=True, help="forest file path")

    p = add("evaluate", cmd_evaluate,
            "score a predicted label raster against ground truth")
    p.add_argument("--pred", required=True, help="predicted label raster")
    p.add_argument("--truth", required=True, help="true label raster")
    p.add_argument("--classes", type=int, default=0,
                   help="class count (0: infer from rasters)")
    p.add_argument("--out", required=True, help="scores CSV path")

    p = add("run-splits", cmd_run_splits,
            "repeat split/train/evaluate and tabulate the metrics")
    p.add_argument("--manifest", required=True, help="dataset manifest")
    p.add_argument("--model", choices=sorted(MODEL_BUILDERS),
                   default="mrfusion", help="architecture variant")
    p.add_argument("--n", type=int, default=10, help="number of splits")
    p.add_argument("--ratio", type=float, default=0.30,
                   help="training fraction of objects per class")
    p.add_argument("--epochs", type=int, default=250, help="training epochs")
    p.add_argument("--lr", type=float, default=2e-4, help="learning rate")
    p.add_argument("--batch", type=int, default=32, help="minibatch size")
    p.add_argument("--seed", type=int, default=0, help="base seed")
    _add_sampling_flags(p, with_split=False)
    p.add_argument("--out", required=True, help="metric table CSV path")

    return parser


_DOMAIN_ERRORS = (ValueError, KeyError, OSError, RuntimeError)


def main(argv=None):
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads is not None:
        _cap_threads(args.threads)
    try:
        return args.func(args, argv)
    except _DOMAIN_ERRORS as exc:
        message = " ".join(str(exc).split())
        print(f"error: {message}", file=sys.stderr)
        return 1


def console_main():
    sys.exit(main())


if __name__ == "__main__":
    console_main()
