"""Joint training of encoder + prototype head, then neighbor-index fitting.

Cross-entropy over the seen classes drives Adam updates; the dev split is
scored every epoch through the attention head alone (closed-set accuracy)
and training stops once that score fails to improve for `patience` epochs.
The best-epoch parameters are restored before the frozen encoder's training
latents are collected into the neighbor index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .bundle import EmbeddingBundle
from .encoder import BaselineParams, baseline_logits, encode, encode_tensors, init_baseline
from .errors import ValidationError
from .gnn import gnn_logits
from .knn import KnnIndex, knn_fit
from .model import DEFAULT_HEADS, ModelConfig, SignalModel, init_model
from .nn import ParamSet, Tensor

log = logging.getLogger("signalkit.trainer")

CE_CLAMP = 1e-12


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    seen_class_ids: list[int] | None = None
    heads: int = DEFAULT_HEADS
    k: int = 5
    eps: float = 1e-8

    def validate(self):
        if self.batch_size <= 0 or self.max_epochs <= 0 or self.patience <= 0:
            raise ValidationError("batch_size, max_epochs, and patience must be positive")


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    dev_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = 0            # 1-based epoch of the best dev accuracy
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return {
            "epochs": [
                {"epoch": i + 1, "train_loss": l, "dev_accuracy": a}
                for i, (l, a) in enumerate(zip(self.train_loss, self.dev_accuracy))
            ],
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
        }


def cross_entropy(p, y):
    """-ln(max(p_y, 1e-12)). Differentiable when `p` is a Tensor.

    Accepts a single simplex vector with an integer class id, or a [B, N]
    stack with a length-B id vector (returning per-sample losses).
    """
    if isinstance(p, Tensor):
        n = p.data.shape[-1]
        if np.any(np.asarray(y) < 0) or np.any(np.asarray(y) >= n):
            raise ValidationError(f"class id {y} outside [0, {n})")
        return nn.scale(nn.log(nn.clip_min(nn.pick(p, y), CE_CLAMP)), -1.0)
    p = np.asarray(p, dtype=np.float64)
    y = int(y)
    if not 0 <= y < p.shape[-1]:
        raise ValidationError(f"class id {y} outside [0, {p.shape[-1]})")
    return float(-np.log(max(p[y], CE_CLAMP)))


def _resolve_seen(bundle: EmbeddingBundle, seen: list[int] | None) -> list[int]:
    n_names = len(bundle.label_names)
    if seen is None:
        seen = list(range(n_names))
    if not seen:
        raise ValidationError("seen class list is empty")
    if len(set(seen)) != len(seen):
        raise ValidationError(f"seen class list contains duplicates: {seen}")
    for c in seen:
        if not 0 <= c < n_names:
            raise ValidationError(f"seen class id {c} is not a bundle label (have {n_names} labels)")
    return list(seen)


def _gather_split(bundle: EmbeddingBundle, split: str, remap: dict[int, int]):
    idxs = bundle.split_indices(split)
    if idxs.size == 0:
        raise ValidationError(f"split {split!r} is empty")
    keep = [i for i in idxs if int(bundle.label_ids[i]) in remap]
    if not keep:
        raise ValidationError(f"split {split!r} has no samples from the seen classes")
    x = bundle.vectors[keep].astype(np.float64)
    y = np.asarray([remap[int(bundle.label_ids[i])] for i in keep], dtype=np.int64)
    return x, y


def _fit_loop(logits_fn, params: ParamSet, x_train, y_train, x_dev, y_dev,
              config: TrainConfig, rng: np.random.Generator) -> TrainReport:
    report = TrainReport()
    best_acc = -np.inf
    best_state: dict[str, np.ndarray] | None = None
    epochs_since_improve = 0
    n = x_train.shape[0]

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            xb = nn.as_tensor(x_train[batch])
            logits = logits_fn(xb)
            p = nn.softmax(logits)
            loss = nn.tensor_mean(cross_entropy(p, y_train[batch]))
            params.zero_grad()
            loss.backward()
            nn.adam_step(params, lr=config.lr)
            loss_sum += float(loss.data) * batch.size
        epoch_loss = loss_sum / n

        dev_logits = logits_fn(nn.as_tensor(x_dev)).data
        dev_acc = float(np.mean(np.argmax(dev_logits, axis=1) == y_dev))
        report.train_loss.append(epoch_loss)
        report.dev_accuracy.append(dev_acc)
        log.info("epoch %d: train loss %.6f, dev accuracy %.4f", epoch, epoch_loss, dev_acc)

        if dev_acc > best_acc:
            best_acc = dev_acc
            report.best_epoch = epoch
            best_state = {name: t.data.copy() for name, t in params.params.items()}
            epochs_since_improve = 0
        else:
            epochs_since_improve += 1
            if epochs_since_improve >= config.patience:
                report.stopped_early = True
                break

    assert best_state is not None
    params.load_arrays(best_state)
    return report


def train(bundle: EmbeddingBundle, config: TrainConfig) -> tuple[SignalModel, KnnIndex, TrainReport]:
    """Train encoder + head on the seen classes, then fit the neighbor index.

    Fully deterministic given (bundle, config): parameter init, epoch
    shuffling, and index contents all derive from config.seed.
    """
    config.validate()
    seen = _resolve_seen(bundle, config.seen_class_ids)
    remap = {orig: i for i, orig in enumerate(seen)}
    x_train, y_train = _gather_split(bundle, "train", remap)
    x_dev, y_dev = _gather_split(bundle, "dev", remap)
    present = set(int(v) for v in y_train)
    for orig, internal in remap.items():
        if internal not in present:
            raise ValidationError(
                f"seen class {orig} ({bundle.label_names[orig]!r}) has no training samples")

    rng = np.random.Generator(np.random.PCG64(config.seed))
    model_config = ModelConfig(
        n_classes=len(seen), d0=bundle.dim, heads=config.heads,
        seen_class_ids=seen, label_names=list(bundle.label_names),
        k=config.k, eps=config.eps,
    )
    model = init_model(rng, model_config)
    params = model.param_set()

    def logits_fn(xb: Tensor) -> Tensor:
        latents = encode_tensors(xb, model.encoder)
        logits, _ = gnn_logits(latents, model.gnn)
        return logits

    report = _fit_loop(logits_fn, params, x_train, y_train, x_dev, y_dev, config, rng)

    train_latents = encode(x_train, model.encoder)
    index = knn_fit(train_latents, y_train, n_classes=len(seen), k=config.k, eps=config.eps)
    return model, index, report


def train_baseline(bundle: EmbeddingBundle, config: TrainConfig,
                   variant: str) -> tuple[BaselineParams, TrainReport]:
    """Train an FCN or CNN baseline classifier with the same loop and stopping rule."""
    config.validate()
    seen = _resolve_seen(bundle, config.seen_class_ids)
    remap = {orig: i for i, orig in enumerate(seen)}
    x_train, y_train = _gather_split(bundle, "train", remap)
    x_dev, y_dev = _gather_split(bundle, "dev", remap)

    rng = np.random.Generator(np.random.PCG64(config.seed))
    baseline = init_baseline(rng, bundle.dim, len(seen), variant)
    params = ParamSet()
    for name, t in baseline.tensors().items():
        params.add(name, t)

    report = _fit_loop(lambda xb: baseline_logits(xb, baseline), params,
                       x_train, y_train, x_dev, y_dev, config, rng)
    return baseline, report
