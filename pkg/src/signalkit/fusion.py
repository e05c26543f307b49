"""Convex fusion of the two branch posteriors and open-set routing.

p_ens = alpha * p_gnn + (1 - alpha) * p_knn. A sample routes to Unseen when
max(p_ens) < tau (strict), or additionally when entropy routing is enabled
and the attribution entropy exceeds tau_e; otherwise it routes to the argmax
seen class (lowest index on ties).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

SIMPLEX_TOL = 1e-6

DEFAULT_ALPHA = 0.5
DEFAULT_TAU = 0.5


@dataclass(frozen=True)
class FusionConfig:
    alpha: float = DEFAULT_ALPHA
    tau: float = DEFAULT_TAU
    entropy_routing: bool = False
    tau_e: float = 0.0

    def validate(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValidationError(f"tau must lie in [0, 1], got {self.tau}")
        if self.tau_e < 0.0:
            raise ValidationError(f"tau_e must be non-negative, got {self.tau_e}")


@dataclass(frozen=True)
class Decision:
    """Routing verdict: a seen class id, or None for unseen."""

    class_id: int | None

    @property
    def is_unseen(self) -> bool:
        return self.class_id is None


UNSEEN_DECISION = Decision(class_id=None)


@dataclass
class Prediction:
    p_gnn: np.ndarray
    p_knn: np.ndarray
    p_ens: np.ndarray
    entropy: float
    decision: Decision
    max_conf: float
    record_index: int = field(default=-1)


def _check_simplex(p, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if abs(float(p.sum()) - 1.0) > SIMPLEX_TOL or np.any(p < -SIMPLEX_TOL):
        raise ValidationError(f"{name} is off the probability simplex (sum={p.sum():.6g})")
    return p


def fuse(p_gnn, p_knn, alpha: float) -> np.ndarray:
    """Elementwise convex combination of two simplex vectors."""
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must lie in [0, 1], got {alpha}")
    a = _check_simplex(p_gnn, "p_gnn")
    b = _check_simplex(p_knn, "p_knn")
    if a.shape != b.shape:
        raise ValidationError(f"branch shapes differ: {a.shape} vs {b.shape}")
    return alpha * a + (1.0 - alpha) * b


def route(p_ens, entropy: float, config: FusionConfig) -> Decision:
    """Confidence (and optional entropy) routing to a seen class or Unseen.

    Pure comparison against the thresholds as given: tau is not clamped, so a
    value above the largest attainable confidence routes everything to Unseen.
    """
    p_ens = np.asarray(p_ens, dtype=np.float64)
    if float(p_ens.max()) < config.tau:
        return UNSEEN_DECISION
    if config.entropy_routing and entropy > config.tau_e:
        return UNSEEN_DECISION
    return Decision(class_id=int(np.argmax(p_ens)))


def predict(z0, model, index, config: FusionConfig) -> Prediction:
    """Full single-sample pipeline: encode, both branches, fuse, route."""
    preds = predict_batch(np.asarray(z0, dtype=np.float64)[None, :], model, index, config)
    return preds[0]


def predict_batch(z0_rows, model, index, config: FusionConfig) -> list[Prediction]:
    """Batched pipeline over a [B, d0] matrix; one Prediction per row, in order."""
    from .encoder import encode
    from .gnn import gnn_forward
    from .knn import knn_predict

    config.validate()
    z0_rows = np.asarray(z0_rows, dtype=np.float64)
    if z0_rows.ndim != 2:
        raise ValidationError(f"expected a [B, d0] matrix, got rank {z0_rows.ndim}")
    latents = encode(z0_rows, model.encoder)
    gout = gnn_forward(latents, model.gnn)
    p_knn = knn_predict(index, latents)
    entropies = np.atleast_1d(np.asarray(gout.entropy, dtype=np.float64))
    out = []
    for i in range(z0_rows.shape[0]):
        p_g = gout.p_gnn[i]
        p_k = p_knn[i]
        ent = float(entropies[i])
        p_e = fuse(p_g, p_k, config.alpha)
        out.append(Prediction(
            p_gnn=p_g,
            p_knn=p_k,
            p_ens=p_e,
            entropy=ent,
            decision=route(p_e, ent, config),
            max_conf=float(p_e.max()),
            record_index=i,
        ))
    return out


def reroute(pred: Prediction, config: FusionConfig) -> Decision:
    """Recompute the routing verdict from stored posteriors (no re-inference)."""
    return route(pred.p_ens, pred.entropy, config)


def prediction_to_json(pred: Prediction, label_names: list[str] | None = None) -> str:
    """One JSON object per sample for the predictions JSONL output."""
    if pred.decision.is_unseen:
        decision = "unseen"
    else:
        cid = pred.decision.class_id
        name = label_names[cid] if label_names is not None else str(cid)
        decision = f"seen:{name}"
    record = {
        "p_gnn": [float(v) for v in pred.p_gnn],
        "p_knn": [float(v) for v in pred.p_knn],
        "p_ens": [float(v) for v in pred.p_ens],
        "entropy": pred.entropy,
        "max_conf": pred.max_conf,
        "decision": decision,
    }
    return json.dumps(record)
