"""Projection from pooled utterance embeddings to the 64-d latent space.

The encoder treats a d0-wide embedding as a 1-channel sequence and applies
conv(64, k=3) -> ReLU -> pool2 -> conv(128, k=3) -> ReLU -> pool2 -> flatten
-> dense(64). The same conv stack backs the CNN baseline classifier; the FCN
baseline drops it and runs the dense block on the raw embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ValidationError
from .nn import Tensor

LATENT_DIM = 64
CONV1_FILTERS = 64
CONV2_FILTERS = 128
KERNEL_SIZE = 3
MIN_INPUT_DIM = 10
HIDDEN_DIM = 128


def conv_stack_length(d0: int) -> int:
    """Sequence length after conv(3) -> pool2 -> conv(3) -> pool2 on a length-d0 input."""
    return ((d0 - KERNEL_SIZE + 1) // 2 - KERNEL_SIZE + 1) // 2


def flat_length(d0: int) -> int:
    if d0 < MIN_INPUT_DIM:
        raise ValidationError(
            f"input too short for conv stack: d0={d0}, minimum is {MIN_INPUT_DIM}")
    return CONV2_FILTERS * conv_stack_length(d0)


@dataclass
class EncoderParams:
    conv1_kernels: Tensor   # [64, 1, 3]
    conv1_bias: Tensor
    conv2_kernels: Tensor   # [128, 64, 3]
    conv2_bias: Tensor
    proj_weight: Tensor     # [64, flat_len]
    proj_bias: Tensor

    def tensors(self) -> dict[str, Tensor]:
        return {
            "encoder.conv1.kernels": self.conv1_kernels,
            "encoder.conv1.bias": self.conv1_bias,
            "encoder.conv2.kernels": self.conv2_kernels,
            "encoder.conv2.bias": self.conv2_bias,
            "encoder.proj.weight": self.proj_weight,
            "encoder.proj.bias": self.proj_bias,
        }


def init_encoder(rng: np.random.Generator, d0: int) -> EncoderParams:
    flat = flat_length(d0)
    return EncoderParams(
        conv1_kernels=nn.parameter(nn.glorot_uniform(
            rng, (CONV1_FILTERS, 1, KERNEL_SIZE), KERNEL_SIZE, CONV1_FILTERS * KERNEL_SIZE)),
        conv1_bias=nn.parameter(np.zeros(CONV1_FILTERS)),
        conv2_kernels=nn.parameter(nn.glorot_uniform(
            rng, (CONV2_FILTERS, CONV1_FILTERS, KERNEL_SIZE),
            CONV1_FILTERS * KERNEL_SIZE, CONV2_FILTERS * KERNEL_SIZE)),
        conv2_bias=nn.parameter(np.zeros(CONV2_FILTERS)),
        proj_weight=nn.parameter(nn.glorot_uniform(rng, (LATENT_DIM, flat), flat, LATENT_DIM)),
        proj_bias=nn.parameter(np.zeros(LATENT_DIM)),
    )


def _conv_stack(x: Tensor, params) -> Tensor:
    h = nn.relu(nn.conv1d_forward(x, params.conv1_kernels, params.conv1_bias))
    h = nn.maxpool1d(h)
    h = nn.relu(nn.conv1d_forward(h, params.conv2_kernels, params.conv2_bias))
    h = nn.maxpool1d(h)
    return h


def _as_channel_seq(z0: Tensor) -> Tensor:
    d0 = z0.data.shape[-1]
    if d0 < MIN_INPUT_DIM:
        raise ValidationError(
            f"input too short for conv stack: d0={d0}, minimum is {MIN_INPUT_DIM}")
    if z0.data.ndim == 1:
        return nn.reshape(z0, (1, d0))
    return nn.reshape(z0, (z0.data.shape[0], 1, d0))


def encode_tensors(z0: Tensor, params: EncoderParams) -> Tensor:
    """Tape path: z0 [d0] or [B, d0] -> latent [64] or [B, 64]."""
    h = _conv_stack(_as_channel_seq(z0), params)
    if h.data.ndim == 2:
        flat = nn.reshape(h, (h.data.shape[0] * h.data.shape[1],))
    else:
        flat = nn.reshape(h, (h.data.shape[0], h.data.shape[1] * h.data.shape[2]))
    return nn.dense_forward(flat, params.proj_weight, params.proj_bias)


def encode(z0, params: EncoderParams) -> np.ndarray:
    """Inference path: plain array in, 64-d latent array out."""
    return encode_tensors(nn.as_tensor(np.asarray(z0, dtype=np.float64)), params).data


# ---------------------------------------------------------------------------
# FCN / CNN baseline classifiers
# ---------------------------------------------------------------------------

FCN = "fcn"
CNN = "cnn"


@dataclass
class BaselineParams:
    variant: str
    hidden_weight: Tensor   # [128, d0] for FCN, [128, flat_len] for CNN
    hidden_bias: Tensor
    out_weight: Tensor      # [N, 128]
    out_bias: Tensor
    conv1_kernels: Tensor | None = None
    conv1_bias: Tensor | None = None
    conv2_kernels: Tensor | None = None
    conv2_bias: Tensor | None = None

    def tensors(self) -> dict[str, Tensor]:
        named = {
            "baseline.hidden.weight": self.hidden_weight,
            "baseline.hidden.bias": self.hidden_bias,
            "baseline.out.weight": self.out_weight,
            "baseline.out.bias": self.out_bias,
        }
        if self.variant == CNN:
            named.update({
                "baseline.conv1.kernels": self.conv1_kernels,
                "baseline.conv1.bias": self.conv1_bias,
                "baseline.conv2.kernels": self.conv2_kernels,
                "baseline.conv2.bias": self.conv2_bias,
            })
        return named


def init_baseline(rng: np.random.Generator, d0: int, n_classes: int, variant: str) -> BaselineParams:
    if variant not in (FCN, CNN):
        raise ValueError(f"unknown baseline variant {variant!r}")
    conv = {}
    if variant == CNN:
        in_width = flat_length(d0)
        conv = dict(
            conv1_kernels=nn.parameter(nn.glorot_uniform(
                rng, (CONV1_FILTERS, 1, KERNEL_SIZE), KERNEL_SIZE, CONV1_FILTERS * KERNEL_SIZE)),
            conv1_bias=nn.parameter(np.zeros(CONV1_FILTERS)),
            conv2_kernels=nn.parameter(nn.glorot_uniform(
                rng, (CONV2_FILTERS, CONV1_FILTERS, KERNEL_SIZE),
                CONV1_FILTERS * KERNEL_SIZE, CONV2_FILTERS * KERNEL_SIZE)),
            conv2_bias=nn.parameter(np.zeros(CONV2_FILTERS)),
        )
    else:
        in_width = d0
    return BaselineParams(
        variant=variant,
        hidden_weight=nn.parameter(nn.glorot_uniform(rng, (HIDDEN_DIM, in_width), in_width, HIDDEN_DIM)),
        hidden_bias=nn.parameter(np.zeros(HIDDEN_DIM)),
        out_weight=nn.parameter(nn.glorot_uniform(rng, (n_classes, HIDDEN_DIM), HIDDEN_DIM, n_classes)),
        out_bias=nn.parameter(np.zeros(n_classes)),
        **conv,
    )


def baseline_logits(z0: Tensor, params: BaselineParams) -> Tensor:
    if params.variant == CNN:
        h = _conv_stack(_as_channel_seq(z0), params)
        if h.data.ndim == 2:
            x = nn.reshape(h, (h.data.shape[0] * h.data.shape[1],))
        else:
            x = nn.reshape(h, (h.data.shape[0], h.data.shape[1] * h.data.shape[2]))
    else:
        x = z0
    hidden = nn.relu(nn.dense_forward(x, params.hidden_weight, params.hidden_bias))
    return nn.dense_forward(hidden, params.out_weight, params.out_bias)


def baseline_forward(z0, params: BaselineParams) -> np.ndarray:
    """Class-probability vector(s) for a raw embedding under the FCN/CNN baseline."""
    t = nn.as_tensor(np.asarray(z0, dtype=np.float64))
    return nn.softmax(baseline_logits(t, params)).data
