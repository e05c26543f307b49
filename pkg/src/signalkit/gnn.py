"""Query-conditioned graph attention over learnable class prototypes.

Given a latent query z, the head projects it (s = W_s z), adds s to every
prototype to form query-aware node features, refines the nodes with
multi-head self-attention, and reads a scalar logit per node through a
shared vector w. The softmax over node logits is the attribution
distribution; its Shannon entropy is the uncertainty signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ValidationError
from .nn import AttentionParams, Tensor

SIMPLEX_TOL = 1e-6


@dataclass
class GnnParams:
    prototypes: Tensor        # [N, d]
    ws: Tensor                # [d, d]
    attention: AttentionParams
    logit_w: Tensor           # [d]

    @property
    def n_classes(self) -> int:
        return self.prototypes.data.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.data.shape[1]

    def tensors(self) -> dict[str, Tensor]:
        named = {
            "gnn.prototypes": self.prototypes,
            "gnn.ws": self.ws,
            "gnn.logit_w": self.logit_w,
        }
        for key, t in self.attention.tensors().items():
            named[f"gnn.attn.{key}"] = t
        return named


def init_gnn(rng: np.random.Generator, n_classes: int, dim: int, heads: int) -> GnnParams:
    if n_classes < 2:
        raise ValidationError(f"need at least 2 prototype classes, got {n_classes}")
    return GnnParams(
        prototypes=nn.parameter(rng.normal(0.0, 1.0 / math.sqrt(dim), size=(n_classes, dim))),
        ws=nn.parameter(nn.glorot_uniform(rng, (dim, dim), dim, dim)),
        attention=nn.init_attention(rng, dim, heads),
        logit_w=nn.parameter(nn.glorot_uniform(rng, (dim,), dim, 1)),
    )


@dataclass
class GnnOutput:
    p_gnn: np.ndarray             # [N] or [B, N], on the simplex
    entropy: float | np.ndarray   # nats, in [0, ln N]
    node_logits: np.ndarray       # [N] or [B, N]
    attention_weights: np.ndarray  # [h, N, N] or [B, h, N, N]


def gnn_logits(z: Tensor, params: GnnParams) -> tuple[Tensor, Tensor]:
    """Tape path: latent z [d] or [B, d] -> (node logits [N] or [B, N], attention weights)."""
    d = params.dim
    n = params.n_classes
    if z.data.shape[-1] != d:
        raise ValueError(f"latent width {z.data.shape[-1]} does not match prototype dim {d}")
    s = nn.dense_forward(z, params.ws, nn.as_tensor(np.zeros(d)))        # [d] or [B, d]
    if s.data.ndim == 1:
        s_row = nn.reshape(s, (1, d))
    else:
        s_row = nn.reshape(s, (s.data.shape[0], 1, d))
    nodes = nn.add(params.prototypes, s_row)                              # [N, d] or [B, N, d]
    refined, attn = nn.multi_head_self_attention(nodes, params.attention, return_weights=True)
    w_col = nn.reshape(params.logit_w, (d, 1))
    logits = nn.matmul(refined, w_col)                                    # [..., N, 1]
    lead = logits.data.shape[:-2]
    logits = nn.reshape(logits, lead + (n,))
    return logits, attn


def gnn_forward(z, params: GnnParams) -> GnnOutput:
    """Inference record for a latent query (or a stack of queries)."""
    zt = nn.as_tensor(np.asarray(z, dtype=np.float64))
    logits, attn = gnn_logits(zt, params)
    p = nn.softmax(logits).data
    return GnnOutput(
        p_gnn=p,
        entropy=attention_entropy(p),
        node_logits=logits.data,
        attention_weights=attn.data,
    )


def attention_entropy(p) -> float | np.ndarray:
    """Shannon entropy (nats) of a distribution on the simplex; 0*ln(0) = 0."""
    p = np.asarray(p, dtype=np.float64)
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > SIMPLEX_TOL) or np.any(p < -SIMPLEX_TOL):
        raise ValidationError(
            f"entropy input is off the probability simplex (sum={np.max(np.abs(sums - 1.0)):.3g} from 1)")
    terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    h = -terms.sum(axis=-1)
    return float(h) if h.ndim == 0 else h
