"""Distance-weighted k-nearest-neighbor classifier over trained latents.

The index stores encoder outputs for the training split and is immutable
after fitting; no learning happens here. Votes are weighted by inverse
squared Euclidean distance, 1 / (||z - z_k||^2 + eps), so a query that
coincides with a stored latent dominates the vote as eps -> 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

DEFAULT_K = 5
DEFAULT_EPS = 1e-8


@dataclass(frozen=True)
class KnnIndex:
    latents: np.ndarray   # [M, d] float64
    labels: np.ndarray    # [M] int, values in [0, n_classes)
    n_classes: int
    k: int
    eps: float


def knn_fit(latents, labels, n_classes: int, k: int = DEFAULT_K, eps: float = DEFAULT_EPS) -> KnnIndex:
    """Build an immutable index over training latents."""
    latents = np.ascontiguousarray(latents, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if latents.ndim != 2:
        raise ValidationError(f"latents must be a 2-D matrix, got rank {latents.ndim}")
    m = latents.shape[0]
    if m == 0:
        raise ValidationError("cannot fit a neighbor index on an empty latent set")
    if labels.shape != (m,):
        raise ValidationError(f"label count {labels.shape} does not match {m} latents")
    if k <= 0 or k > m:
        raise ValidationError(f"neighbor count k={k} must be in [1, {m}]")
    if eps <= 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    if n_classes <= 0:
        raise ValidationError(f"n_classes must be positive, got {n_classes}")
    if np.any((labels < 0) | (labels >= n_classes)):
        bad = int(labels[np.argmax((labels < 0) | (labels >= n_classes))])
        raise ValidationError(f"label id {bad} outside [0, {n_classes})")
    latents = latents.copy()
    labels = labels.copy()
    latents.setflags(write=False)
    labels.setflags(write=False)
    return KnnIndex(latents=latents, labels=labels, n_classes=n_classes, k=k, eps=float(eps))


def knn_predict(index: KnnIndex, z) -> np.ndarray:
    """Distance-weighted vote over the K nearest stored latents.

    z: [d] or [Q, d]. Neighbors are ranked by squared Euclidean distance with
    ties broken by lower training-record index. Returns simplex vector(s)
    over the index's classes.
    """
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    queries = z[None] if single else z
    if queries.shape[1] != index.latents.shape[1]:
        raise ValidationError(
            f"query dim {queries.shape[1]} does not match index dim {index.latents.shape[1]}")

    m, d = index.latents.shape
    p = np.empty((queries.shape[0], index.n_classes))
    block = max(1, (1 << 22) // max(1, m * d))
    for start in range(0, queries.shape[0], block):
        q = queries[start:start + block]
        # ||z - z_k||^2 computed per pair (not via the expanded form) so that
        # mathematically equal distances compare equal and the tie rule holds
        diffs = q[:, None, :] - index.latents[None, :, :]
        d2 = np.einsum("qmd,qmd->qm", diffs, diffs)
        # stable sort keeps ascending record order among equal distances
        order = np.argsort(d2, axis=1, kind="stable")[:, :index.k]
        nd2 = np.take_along_axis(d2, order, axis=1)
        weights = 1.0 / (nd2 + index.eps)
        votes = np.zeros((q.shape[0], index.n_classes))
        np.add.at(votes, (np.arange(q.shape[0])[:, None], index.labels[order]), weights)
        p[start:start + block] = votes / weights.sum(axis=1, keepdims=True)
    return p[0] if single else p
