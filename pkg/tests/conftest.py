import numpy as np
import pytest

import signalkit as sk


def rel_err(a, b):
    """Worst-case entrywise error scaled by max(1, |a|, |b|)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(1.0, float(np.max(np.abs(a)) if a.size else 0.0),
                float(np.max(np.abs(b)) if b.size else 0.0))
    return float(np.max(np.abs(a - b)) / denom) if a.size else 0.0


def fd_gradient(build_loss, tensor, indices, h=1e-5):
    """Central finite differences of a scalar loss wrt selected flat indices."""
    flat = tensor.data.reshape(-1)
    grads = np.zeros(len(indices))
    for j, i in enumerate(indices):
        old = flat[i]
        flat[i] = old + h
        fp = float(build_loss().data)
        flat[i] = old - h
        fm = float(build_loss().data)
        flat[i] = old
        grads[j] = (fp - fm) / (2.0 * h)
    return grads


def check_gradients(build_loss, tensors, rng, h=1e-5, max_checks=24):
    """Backprop build_loss once, then compare each tensor's grad to central FD.

    Returns the worst relative error over all checked entries.
    """
    for t in tensors:
        t.grad = None
    loss = build_loss()
    loss.backward()
    worst = 0.0
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        size = t.data.size
        if size <= max_checks:
            idxs = np.arange(size)
        else:
            idxs = rng.choice(size, size=max_checks, replace=False)
        numeric = fd_gradient(build_loss, t, idxs, h=h)
        worst = max(worst, rel_err(analytic.reshape(-1)[idxs], numeric))
    return worst


@pytest.fixture(scope="session")
def tiny_bundle():
    """Separable 3-class clusters, class 2 reserved as unseen in most tests."""
    return sk.generate_synthetic(sk.SynthConfig(
        classes=3, per_class=45, dim=24, cluster_std=0.3, mean_radius=5.0, seed=11))


@pytest.fixture(scope="session")
def tiny_trained(tiny_bundle):
    """Model trained on classes {0, 1} of the tiny bundle."""
    config = sk.TrainConfig(seed=3, seen_class_ids=[0, 1], max_epochs=25,
                            patience=6, batch_size=4)
    model, index, report = sk.train(tiny_bundle, config)
    return model, index, report
