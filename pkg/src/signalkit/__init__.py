"""Source attribution and unseen-generator detection over utterance embeddings.

The pipeline encodes precomputed speech-model embeddings into a compact
latent space, scores them with a prototype attention head and a
distance-weighted nearest-neighbor branch, fuses the two posteriors, and
routes low-confidence samples to an "unseen generator" verdict.
"""

from .bundle import (
    EmbeddingBundle,
    SynthConfig,
    generate_synthetic,
    load_checkpoint,
    make_bundle,
    read_bundle,
    save_checkpoint,
    write_bundle,
)
from .encoder import BaselineParams, EncoderParams, baseline_forward, encode, init_encoder
from .errors import FormatError, MetricsError, SignalError, ValidationError
from .fusion import Decision, FusionConfig, Prediction, fuse, predict, predict_batch, route
from .gnn import GnnOutput, GnnParams, attention_entropy, gnn_forward, init_gnn
from .knn import KnnIndex, knn_fit, knn_predict
from .metrics import (
    MetricsReport,
    SweepResult,
    compute_eer,
    evaluate_closed,
    evaluate_open,
    pca_project,
    sweep_tau,
)
from .model import ModelConfig, SignalModel, init_model, load_model, save_model
from .trainer import TrainConfig, TrainReport, cross_entropy, train, train_baseline

__version__ = "0.1.0"

__all__ = [
    "EmbeddingBundle", "SynthConfig", "generate_synthetic", "read_bundle", "write_bundle",
    "make_bundle", "save_checkpoint", "load_checkpoint",
    "EncoderParams", "BaselineParams", "encode", "baseline_forward", "init_encoder",
    "SignalError", "FormatError", "ValidationError", "MetricsError",
    "GnnParams", "GnnOutput", "gnn_forward", "attention_entropy", "init_gnn",
    "KnnIndex", "knn_fit", "knn_predict",
    "FusionConfig", "Decision", "Prediction", "fuse", "route", "predict", "predict_batch",
    "MetricsReport", "SweepResult", "compute_eer", "evaluate_closed", "evaluate_open",
    "pca_project", "sweep_tau",
    "ModelConfig", "SignalModel", "init_model", "save_model", "load_model",
    "TrainConfig", "TrainReport", "cross_entropy", "train", "train_baseline",
]
