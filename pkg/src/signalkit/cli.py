"""Command-line entry point: synth / train / eval / predict / sweep / project.

Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 I/O or
runtime failure. The SIGNAL_LOG environment variable (error|info|debug)
controls verbosity; all randomness flows from explicit --seed flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .bundle import SynthConfig, generate_synthetic, read_bundle, write_bundle
from .encoder import encode
from .errors import SignalError, ValidationError
from .fusion import FusionConfig, prediction_to_json, predict_batch
from .metrics import evaluate_closed, evaluate_open, pca_project, sweep_tau
from .model import load_model, save_model
from .trainer import TrainConfig, train

USAGE_ERROR = 1
DATA_ERROR = 2
RUNTIME_ERROR = 3


class _Parser(argparse.ArgumentParser):
    """argparse parser that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self._usage_exit(message))

    def _usage_exit(self, message) -> int:
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return USAGE_ERROR


def _configure_logging():
    level_name = os.environ.get("SIGNAL_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level_name not in levels:
        print(f"warning: unknown SIGNAL_LOG level {level_name!r}, using error", file=sys.stderr)
        level_name = "error"
    logging.basicConfig(level=levels[level_name], format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> _Parser:
    parser = _Parser(prog="signalkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic cluster bundle")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--std", type=float, required=True)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output bundle directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a bundle's seen classes")
    p.add_argument("--bundle", required=True)
    p.add_argument("--seen", default=None, help="comma-separated label ids (default: all)")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--out", required=True, help="output directory for checkpoint + report")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model on a split")
    p.add_argument("--bundle", required=True)
    p.add_argument("--model", required=True, help="directory holding model.sgm")
    p.add_argument("--split", required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--branch", choices=["gnn", "knn", "ensemble"], default="ensemble")
    p.add_argument("--protocol", choices=["closed", "open"], required=True)
    p.add_argument("--report", required=True, help="output metrics JSON file")
    p.add_argument("--confusion", default=None, help="optional confusion-matrix CSV file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="emit JSONL predictions for a bundle")
    p.add_argument("--model", required=True)
    p.add_argument("--embeddings", required=True, help="bundle directory to predict on")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sweep", help="sweep the routing threshold on a split")
    p.add_argument("--bundle", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--tau-min", type=float, default=0.1)
    p.add_argument("--tau-max", type=float, default=0.9)
    p.add_argument("--steps", type=int, default=9)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--out", required=True, help="output CSV file")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("project", help="export a 2-D projection of encoded latents")
    p.add_argument("--bundle", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True, help="output CSV file")
    p.set_defaults(func=cmd_project)

    return parser


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    config = SynthConfig(
        classes=args.classes, per_class=args.per_class, dim=args.dim,
        cluster_std=args.std, mean_radius=args.radius, seed=args.seed,
    )
    bundle = generate_synthetic(config)
    write_bundle(bundle, args.out)
    print(f"wrote bundle: {bundle.count} records, dim {bundle.dim}, "
          f"{len(bundle.label_names)} classes -> {args.out}")
    return 0


def _parse_seen(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as e:
        raise ValidationError(f"--seen must be comma-separated integers, got {text!r}") from e


def cmd_train(args) -> int:
    bundle = read_bundle(args.bundle)
    config = TrainConfig(
        lr=args.lr, batch_size=args.batch, max_epochs=args.epochs,
        patience=args.patience, seed=args.seed, seen_class_ids=_parse_seen(args.seen),
        heads=args.heads, k=args.k, eps=args.eps,
    )
    model, index, report = train(bundle, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, index, out / "model.sgm")
    with open(out / "train_report.json", "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2)
        f.write("\n")
    print(f"trained on {len(model.config.seen_class_ids)} seen classes; "
          f"best epoch {report.best_epoch}, dev accuracy "
          f"{report.dev_accuracy[report.best_epoch - 1]:.4f} -> {out / 'model.sgm'}")
    return 0


def _load_for_bundle(model_dir, bundle):
    model, index = load_model(Path(model_dir) / "model.sgm")
    if index is None:
        raise ValidationError(f"{model_dir}: checkpoint has no neighbor index tensors")
    if bundle.dim != model.config.d0:
        raise ValidationError(
            f"bundle dim {bundle.dim} does not match checkpoint dim {model.config.d0}")
    return model, index


def cmd_eval(args) -> int:
    bundle = read_bundle(args.bundle)
    model, index = _load_for_bundle(args.model, bundle)
    idxs = bundle.split_indices(args.split)
    if idxs.size == 0:
        raise ValidationError(f"split {args.split!r} is empty")

    alpha = {"gnn": 1.0, "knn": 0.0}.get(args.branch, args.alpha)
    fusion = FusionConfig(alpha=alpha, tau=args.tau)
    x = bundle.vectors[idxs].astype(np.float64)
    labels = bundle.label_ids[idxs]
    preds = predict_batch(x, model, index, fusion)

    remap = {orig: i for i, orig in enumerate(model.config.seen_class_ids)}
    n = model.config.n_classes
    if args.protocol == "closed":
        keep = [i for i, lab in enumerate(labels) if int(lab) in remap]
        if not keep:
            raise ValidationError(f"split {args.split!r} has no seen-class samples")
        preds = [preds[i] for i in keep]
        truths = [remap[int(labels[i])] for i in keep]
        report = evaluate_closed(preds, truths)
    else:
        truths = [remap.get(int(lab), n) for lab in labels]
        report = evaluate_open(preds, truths)

    record = {
        "split": args.split,
        "branch": args.branch,
        "alpha": alpha,
        "tau": args.tau,
        **report.to_dict(),
    }
    path = Path(args.report)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(record, f, indent=2)
        f.write("\n")
    if args.confusion:
        names = model.config.seen_label_names()
        if args.protocol == "open":
            names = names + ["unseen"]
        cpath = Path(args.confusion)
        cpath.parent.mkdir(parents=True, exist_ok=True)
        with open(cpath, "w", encoding="utf-8", newline="") as f:
            f.write("truth," + ",".join(names) + "\n")
            for name, row in zip(names, report.confusion):
                f.write(name + "," + ",".join(str(int(v)) for v in row) + "\n")
    print(f"{args.protocol} eval on {args.split!r} ({args.branch}): "
          f"ACC {report.accuracy:.4f}, F1 {report.f1_macro:.4f}, EER {report.eer:.4f}")
    return 0


def cmd_predict(args) -> int:
    bundle = read_bundle(args.embeddings)
    model, index = _load_for_bundle(args.model, bundle)
    fusion = FusionConfig(alpha=args.alpha, tau=args.tau)
    preds = predict_batch(bundle.vectors.astype(np.float64), model, index, fusion)
    names = model.config.seen_label_names()
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for p in preds:
            f.write(prediction_to_json(p, names))
            f.write("\n")
    print(f"wrote {len(preds)} predictions -> {path}")
    return 0


def cmd_sweep(args) -> int:
    if args.tau_min >= args.tau_max:
        print(f"signalkit sweep: error: --tau-min must be below --tau-max "
              f"({args.tau_min} >= {args.tau_max})", file=sys.stderr)
        return USAGE_ERROR
    if args.steps < 1:
        print(f"signalkit sweep: error: --steps must be >= 1, got {args.steps}", file=sys.stderr)
        return USAGE_ERROR
    bundle = read_bundle(args.bundle)
    model, index = _load_for_bundle(args.model, bundle)
    idxs = bundle.split_indices(args.split)
    if idxs.size == 0:
        raise ValidationError(f"split {args.split!r} is empty")

    if args.steps == 1:
        grid = [round(args.tau_min, 10)]
    else:
        step = (args.tau_max - args.tau_min) / (args.steps - 1)
        grid = [round(args.tau_min + i * step, 10) for i in range(args.steps)]

    fusion = FusionConfig(alpha=args.alpha, tau=grid[0])
    x = bundle.vectors[idxs].astype(np.float64)
    labels = bundle.label_ids[idxs]
    preds = predict_batch(x, model, index, fusion)
    remap = {orig: i for i, orig in enumerate(model.config.seen_class_ids)}
    truths = [remap.get(int(lab), model.config.n_classes) for lab in labels]

    result = sweep_tau(preds, truths, grid, fusion)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(result.to_csv())
    print(f"wrote {len(result.rows)} sweep rows -> {path}")
    return 0


def cmd_project(args) -> int:
    bundle = read_bundle(args.bundle)
    model, _ = load_model(Path(args.model) / "model.sgm")
    if bundle.dim != model.config.d0:
        raise ValidationError(
            f"bundle dim {bundle.dim} does not match checkpoint dim {model.config.d0}")
    idxs = bundle.split_indices(args.split)
    if idxs.size == 0:
        raise ValidationError(f"split {args.split!r} is empty")
    latents = encode(bundle.vectors[idxs].astype(np.float64), model.encoder)
    coords = pca_project(latents)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("x,y,label\n")
        for row, i in zip(coords, idxs):
            lab = int(bundle.label_ids[i])
            name = bundle.label_names[lab] if lab >= 0 else "unknown"
            f.write(f"{row[0]},{row[1]},{name}\n")
    print(f"wrote {coords.shape[0]} projected points -> {path}")
    return 0


# ---------------------------------------------------------------------------
# entry
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.func(args)
    except SignalError as e:
        print(f"signalkit: error: {e}", file=sys.stderr)
        return DATA_ERROR
    except OSError as e:
        print(f"signalkit: i/o error: {e}", file=sys.stderr)
        return RUNTIME_ERROR


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
