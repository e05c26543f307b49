"""Model assembly: parameter container, checkpoint naming, (de)serialization.

A trained artifact bundles the encoder, the prototype attention head, the
frozen neighbor index, and the hyperparameter record. Tensor names in the
checkpoint follow the `encoder.*` / `gnn.*` / `knn.*` convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bundle as bundle_io
from . import nn
from .encoder import LATENT_DIM, EncoderParams, init_encoder
from .errors import ValidationError
from .gnn import GnnParams, init_gnn
from .knn import KnnIndex, knn_fit
from .nn import ParamSet

DEFAULT_HEADS = 4


@dataclass
class ModelConfig:
    n_classes: int
    d0: int
    heads: int
    seen_class_ids: list[int]
    label_names: list[str]
    latent_dim: int = LATENT_DIM
    alpha: float = 0.5
    tau: float = 0.5
    k: int = 5
    eps: float = 1e-8

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "d0": self.d0,
            "heads": self.heads,
            "seen_class_ids": list(self.seen_class_ids),
            "label_names": list(self.label_names),
            "latent_dim": self.latent_dim,
            "alpha": self.alpha,
            "tau": self.tau,
            "k": self.k,
            "eps": self.eps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        try:
            return cls(
                n_classes=int(d["n_classes"]),
                d0=int(d["d0"]),
                heads=int(d["heads"]),
                seen_class_ids=[int(i) for i in d["seen_class_ids"]],
                label_names=[str(s) for s in d["label_names"]],
                latent_dim=int(d.get("latent_dim", LATENT_DIM)),
                alpha=float(d.get("alpha", 0.5)),
                tau=float(d.get("tau", 0.5)),
                k=int(d.get("k", 5)),
                eps=float(d.get("eps", 1e-8)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"checkpoint config is malformed: {e}") from e

    def seen_label_names(self) -> list[str]:
        return [self.label_names[i] for i in self.seen_class_ids]


@dataclass
class SignalModel:
    encoder: EncoderParams
    gnn: GnnParams
    config: ModelConfig

    def tensors(self):
        named = {}
        named.update(self.encoder.tensors())
        named.update(self.gnn.tensors())
        return named

    def param_set(self) -> ParamSet:
        ps = ParamSet()
        for name, t in self.tensors().items():
            ps.add(name, t)
        return ps


def init_model(rng: np.random.Generator, config: ModelConfig) -> SignalModel:
    return SignalModel(
        encoder=init_encoder(rng, config.d0),
        gnn=init_gnn(rng, config.n_classes, config.latent_dim, config.heads),
        config=config,
    )


def save_model(model: SignalModel, index: KnnIndex | None, path) -> None:
    tensors = {name: t.data for name, t in model.tensors().items()}
    if index is not None:
        tensors["knn.latents"] = index.latents
        tensors["knn.labels"] = index.labels.astype(np.float64)
    bundle_io.save_checkpoint(tensors, model.config.to_dict(), path)


def load_model(path) -> tuple[SignalModel, KnnIndex | None]:
    tensors, raw = bundle_io.load_checkpoint(path)
    config = ModelConfig.from_dict(raw)

    protos = tensors.get("gnn.prototypes")
    if protos is None:
        raise ValidationError(f"{path}: checkpoint has no gnn.prototypes tensor")
    if protos.shape[0] != config.n_classes:
        raise ValidationError(
            f"{path}: config lists {config.n_classes} classes but prototypes have "
            f"first dimension {protos.shape[0]}")

    def take(name):
        if name not in tensors:
            raise ValidationError(f"{path}: checkpoint missing tensor {name!r}")
        return nn.parameter(tensors[name])

    encoder = EncoderParams(
        conv1_kernels=take("encoder.conv1.kernels"),
        conv1_bias=take("encoder.conv1.bias"),
        conv2_kernels=take("encoder.conv2.kernels"),
        conv2_bias=take("encoder.conv2.bias"),
        proj_weight=take("encoder.proj.weight"),
        proj_bias=take("encoder.proj.bias"),
    )
    gnn = GnnParams(
        prototypes=take("gnn.prototypes"),
        ws=take("gnn.ws"),
        attention=nn.AttentionParams(
            wq=take("gnn.attn.wq"),
            wk=take("gnn.attn.wk"),
            wv=take("gnn.attn.wv"),
            wo=take("gnn.attn.wo"),
        ),
        logit_w=take("gnn.logit_w"),
    )
    model = SignalModel(encoder=encoder, gnn=gnn, config=config)

    index = None
    if "knn.latents" in tensors:
        if "knn.labels" not in tensors:
            raise ValidationError(f"{path}: checkpoint has knn.latents but no knn.labels")
        labels_f = tensors["knn.labels"]
        labels = np.rint(labels_f).astype(np.int64)
        if not np.array_equal(labels_f, labels.astype(np.float64)):
            raise ValidationError(f"{path}: knn.labels contain non-integer values")
        index = knn_fit(
            tensors["knn.latents"],
            labels,
            n_classes=config.n_classes,
            k=config.k,
            eps=config.eps,
        )
    return model, index
