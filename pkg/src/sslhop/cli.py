"""Command-line entry point: train / extract / predict / evaluate / inspect."""
import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import SSLError
from .io import (format_config, load_dataset, load_model, parse_config, save_model,
                 serialize_features)
from .kernels import BACKEND
from .llsr import fit_llsr, predict_batch
from .pixelhop import describe, fit_hoptree, transform_batch


def _scores_line(index, cls, scores):
    return "\t".join([str(index), str(cls)] + [f"{s:.9g}" for s in scores])


def _load(args, labels=False):
    data = load_dataset(args.images, getattr(args, "labels", None))
    if len(data) == 0:
        raise SSLError("empty dataset")
    if labels and data.labels is None:
        raise SSLError("labels are required")
    return data


def cmd_train(args, out):
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise SSLError(f"cannot read config {args.config}: {exc.strerror}") from None
    config, ridge = parse_config(text)
    data = _load(args, labels=True)
    tree = fit_hoptree(data.images, config)
    features = transform_batch(data.images, tree)
    head = fit_llsr(features, data.labels, data.class_count, ridge)
    save_model(args.out, tree, head)
    predicted, _ = predict_batch(head, features)
    out.write(describe(tree))
    out.write(f"training_accuracy {np.mean(predicted == data.labels):.9g}\n")


def _predict(args):
    tree, head = load_model(args.model)
    if head is None:
        raise SSLError("model has no decision head")
    data = _load(args)
    features = transform_batch(data.images, tree)
    predicted, scores = predict_batch(head, features)
    return data, head, predicted, scores


def cmd_predict(args, out):
    _, _, predicted, scores = _predict(args)
    for i, (cls, row) in enumerate(zip(predicted, scores)):
        out.write(_scores_line(i, cls, row) + "\n")


def cmd_evaluate(args, out):
    data, head, predicted, scores = _predict(args)
    if data.labels is None:
        raise SSLError("labels are required")
    k = head.n_classes
    if np.any(data.labels >= k):
        raise SSLError("label outside the model's classes")
    for i, (cls, row) in enumerate(zip(predicted, scores)):
        out.write(_scores_line(i, cls, row) + "\n")
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (data.labels, predicted), 1)
    out.write(f"accuracy {np.mean(predicted == data.labels):.9g}\n")
    for row in confusion:
        out.write("\t".join(str(v) for v in row) + "\n")


def cmd_extract(args, out):
    tree, _ = load_model(args.model)
    data = _load(args)
    Path(args.out).write_bytes(serialize_features(transform_batch(data.images, tree)))


def cmd_inspect(args, out):
    tree, head = load_model(args.model)
    out.write(format_config(tree.config, None if head is None else head.ridge))
    out.write(describe(tree))


def build_parser():
    parser = argparse.ArgumentParser(prog="sslhop", description="PixelHop++ features with a least-squares head")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit the feature tree and decision head")
    p.add_argument("--config", required=True)
    p.add_argument("--images", required=True, help="IDX3 file or class-per-directory PGM tree")
    p.add_argument("--labels")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="print class and scores per image")
    p.add_argument("--model", required=True)
    p.add_argument("--images", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="predict, then print accuracy and confusion matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--labels")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect", help="print config and tree report")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("extract", help="write the feature matrix of a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    print(f"sslhop {__version__} ({BACKEND} kernels)", file=sys.stderr)
    try:
        args.func(args, out)
    except (SSLError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"sslhop: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
