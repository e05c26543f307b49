"""Evaluation: accuracy, macro-F1, equal error rate, sweeps, 2-D projection.

Closed-set protocol scores attribution over the seen classes only (routing
forced to Seen). Open-set protocol treats Unseen as an extra class for
accuracy/F1 and scores seen-vs-unseen separation by EER over the ensemble
confidence. The threshold sweep re-routes stored predictions at each tau and
additionally reports the balanced error of the tau operating point, which is
the quantity that actually varies with the routing threshold.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import MetricsError, ValidationError
from .fusion import FusionConfig, Prediction, reroute

CLOSED_SET = "closed"
OPEN_SET = "open"


@dataclass
class MetricsReport:
    accuracy: float
    f1_macro: float
    eer: float
    confusion: np.ndarray
    protocol: str

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "accuracy": self.accuracy,
            "f1_macro": self.f1_macro,
            "eer": self.eer,
            "confusion": [[int(v) for v in row] for row in self.confusion],
        }


# ---------------------------------------------------------------------------
# equal error rate
# ---------------------------------------------------------------------------

def compute_eer(scores, labels) -> float:
    """EER of a binary score set (label 1 = positive, classified positive when score >= t).

    Sweeps every distinct score as a threshold plus the reject-all point and
    linearly interpolates between the two operating points bracketing the
    FAR/FRR crossing.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValidationError(
            f"scores and labels must be matching vectors, got {scores.shape} vs {labels.shape}")
    pos = np.sort(scores[labels == 1])
    neg = np.sort(scores[labels == 0])
    if pos.size == 0 or neg.size == 0:
        raise MetricsError("EER needs both classes present in the labels")

    ts = np.unique(scores)
    # FAR: fraction of negatives at or above t; FRR: fraction of positives below t
    far = 1.0 - np.searchsorted(neg, ts, side="left") / neg.size
    frr = np.searchsorted(pos, ts, side="left") / pos.size
    far = np.append(far, 0.0)
    frr = np.append(frr, 1.0)

    diff = far - frr  # non-increasing along the sweep
    i = int(np.argmax(diff <= 0.0))
    if diff[i] == 0.0:
        return float(far[i])
    # crossing lies between operating points i-1 (diff > 0) and i (diff < 0)
    f1, f2 = far[i - 1], far[i]
    r1, r2 = frr[i - 1], frr[i]
    lam = (f1 - r1) / ((r2 - r1) - (f2 - f1))
    return float(f1 + lam * (f2 - f1))


# ---------------------------------------------------------------------------
# closed / open protocols
# ---------------------------------------------------------------------------

def _f1_macro(confusion: np.ndarray) -> float:
    scores = []
    for c in range(confusion.shape[0]):
        tp = confusion[c, c]
        fp = confusion[:, c].sum() - tp
        fn = confusion[c, :].sum() - tp
        denom = 2 * tp + fp + fn
        scores.append(0.0 if denom == 0 else 2 * tp / denom)
    return float(np.mean(scores))


def _macro_ovr_eer(p_matrix: np.ndarray, truths: np.ndarray) -> float:
    """Macro average of one-vs-rest EERs; classes missing a side are skipped."""
    eers = []
    for c in range(p_matrix.shape[1]):
        binary = (truths == c).astype(int)
        if binary.min() == binary.max():
            continue
        eers.append(compute_eer(p_matrix[:, c], binary))
    if not eers:
        raise MetricsError("one-vs-rest EER undefined: truths contain a single class")
    return float(np.mean(eers))


def evaluate_closed(predictions: list[Prediction], truths) -> MetricsReport:
    """Attribution metrics with routing forced to Seen; truths are seen-class ids."""
    if not predictions:
        raise MetricsError("cannot evaluate an empty prediction list")
    truths = np.asarray(truths, dtype=np.int64)
    if truths.shape[0] != len(predictions):
        raise ValidationError(
            f"{len(predictions)} predictions but {truths.shape[0]} truth labels")
    n = predictions[0].p_ens.shape[0]
    if np.any((truths < 0) | (truths >= n)):
        raise ValidationError(f"closed-set truths must lie in [0, {n})")

    p_matrix = np.stack([p.p_ens for p in predictions])
    predicted = np.argmax(p_matrix, axis=1)
    confusion = np.zeros((n, n), dtype=np.int64)
    np.add.at(confusion, (truths, predicted), 1)
    return MetricsReport(
        accuracy=float(np.trace(confusion) / confusion.sum()),
        f1_macro=_f1_macro(confusion),
        eer=_macro_ovr_eer(p_matrix, truths),
        confusion=confusion,
        protocol=CLOSED_SET,
    )


def evaluate_open(predictions: list[Prediction], truths) -> MetricsReport:
    """Joint metrics with Unseen as class N; truths use id N for unseen samples.

    EER scores the binary seen-vs-unseen task with the ensemble confidence as
    the score (positive class = seen); it requires unseen samples.
    """
    if not predictions:
        raise MetricsError("cannot evaluate an empty prediction list")
    truths = np.asarray(truths, dtype=np.int64)
    if truths.shape[0] != len(predictions):
        raise ValidationError(
            f"{len(predictions)} predictions but {truths.shape[0]} truth labels")
    n = predictions[0].p_ens.shape[0]
    if np.any((truths < 0) | (truths > n)):
        raise ValidationError(f"open-set truths must lie in [0, {n}] with {n} meaning unseen")

    predicted = np.asarray(
        [n if p.decision.is_unseen else p.decision.class_id for p in predictions],
        dtype=np.int64)
    confusion = np.zeros((n + 1, n + 1), dtype=np.int64)
    np.add.at(confusion, (truths, predicted), 1)

    seen_flags = (truths < n).astype(int)
    if seen_flags.min() == 1:
        raise MetricsError("open-set EER undefined: no unseen samples in the truths")
    if seen_flags.max() == 0:
        raise MetricsError("open-set EER undefined: no seen samples in the truths")
    scores = np.asarray([p.max_conf for p in predictions])
    return MetricsReport(
        accuracy=float(np.trace(confusion) / confusion.sum()),
        f1_macro=_f1_macro(confusion),
        eer=compute_eer(scores, seen_flags),
        confusion=confusion,
        protocol=OPEN_SET,
    )


# ---------------------------------------------------------------------------
# threshold sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    tau: float
    eer_closed: float
    eer_open: float
    unseen_count: int
    report: MetricsReport


@dataclass
class SweepResult:
    rows: list[SweepRow]

    def to_csv(self) -> str:
        lines = ["tau,eer_closed,eer_open"]
        for r in self.rows:
            lines.append(f"{r.tau},{r.eer_closed},{r.eer_open}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "rows": [
                {"tau": r.tau, "eer_closed": r.eer_closed, "eer_open": r.eer_open,
                 "unseen_count": r.unseen_count, "report": r.report.to_dict()}
                for r in self.rows
            ]
        }


def sweep_tau(predictions: list[Prediction], truths, grid,
              config: FusionConfig | None = None) -> SweepResult:
    """Re-route stored predictions at each tau and recompute open-set metrics.

    eer_closed is the attribution EER over the seen-truth samples (a property
    of the stored posteriors, identical at every tau). eer_open is the
    balanced seen-vs-unseen error of the tau operating point,
    (FAR(tau) + FRR(tau)) / 2, the quantity the routing threshold trades off.
    """
    grid = [float(t) for t in grid]
    if not grid:
        raise ValidationError("tau grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValidationError(f"tau grid must be strictly increasing, got {grid}")
    if config is None:
        config = FusionConfig()
    truths = np.asarray(truths, dtype=np.int64)
    n = predictions[0].p_ens.shape[0] if predictions else 0

    seen_mask = truths < n
    seen_truths = truths[seen_mask]
    seen_preds = [p for p, s in zip(predictions, seen_mask) if s]
    p_seen = np.stack([p.p_ens for p in seen_preds]) if seen_preds else np.zeros((0, n))
    eer_closed = _macro_ovr_eer(p_seen, seen_truths)

    rows = []
    for tau in grid:
        tau_config = dataclasses.replace(config, tau=tau)
        rerouted = [dataclasses.replace(p, decision=reroute(p, tau_config)) for p in predictions]
        report = evaluate_open(rerouted, truths)
        routed_unseen = np.asarray([p.decision.is_unseen for p in rerouted])
        frr = float(routed_unseen[seen_mask].mean())
        far = float((~routed_unseen[~seen_mask]).mean())
        rows.append(SweepRow(
            tau=tau,
            eer_closed=eer_closed,
            eer_open=0.5 * (far + frr),
            unseen_count=int(routed_unseen.sum()),
            report=report,
        ))
    return SweepResult(rows=rows)


# ---------------------------------------------------------------------------
# 2-D projection
# ---------------------------------------------------------------------------

def _power_iteration(cov: np.ndarray, rng: np.random.Generator,
                     tol: float = 1e-9, max_iter: int = 100000) -> tuple[np.ndarray, float]:
    v = rng.standard_normal(cov.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm <= 1e-30:
            break  # start vector lies in the null space; any unit vector is valid there
        w /= norm
        if np.linalg.norm(w - v) < tol:
            v = w
            break
        v = w
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return v, float(v @ cov @ v)


def pca_project(latents) -> np.ndarray:
    """Mean-centered projection onto the top-2 principal directions.

    Deterministic: power iteration with deflation from a fixed seeded start.
    """
    x = np.asarray(latents, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValidationError(f"projection needs at least 2 rows, got shape {x.shape}")
    centered = x - x.mean(axis=0)
    if np.max(np.abs(centered)) == 0.0:
        raise ValidationError("projection undefined: all points are identical")
    cov = centered.T @ centered / (x.shape[0] - 1)

    rng = np.random.Generator(np.random.PCG64(0))
    v1, lam1 = _power_iteration(cov, rng)
    deflated = cov - lam1 * np.outer(v1, v1)
    v2, _ = _power_iteration(deflated, rng)
    # re-orthogonalize against v1 to absorb deflation round-off
    v2 = v2 - (v2 @ v1) * v1
    n2 = np.linalg.norm(v2)
    if n2 > 1e-12:
        v2 = v2 / n2
    return centered @ np.stack([v1, v2], axis=1)
