"""Training losses: concordance loss for age, cross-entropy for gender."""

import numpy as np

from . import tensor as T

CCC_EPS = 1e-8


def ccc(pred, target):
    """Concordance correlation with population statistics (numpy)."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape or p.size < 2:
        raise ValueError(f"ccc needs two equal-length sequences of >= 2 values, got {p.shape} and {t.shape}")
    mp, mt = p.mean(), t.mean()
    cov = np.mean((p - mp) * (t - mt))
    den = np.mean((p - mp) ** 2) + np.mean((t - mt) ** 2) + (mp - mt) ** 2
    return float(2.0 * cov / max(den, CCC_EPS))


def ccc_loss(pred, target):
    """1 - CCC over a batch, differentiable in ``pred``.

    The denominator is floored at 1e-8 rather than offset by it, so exact
    agreement gives a loss of exactly 0.
    """
    pred = T.as_tensor(pred).reshape(-1)
    target = T.as_tensor(np.asarray(target.data if isinstance(target, T.Tensor) else target,
                                    dtype=np.float64).reshape(-1))
    if pred.shape != target.shape or pred.shape[0] < 2:
        raise ValueError(f"ccc_loss needs equal lengths >= 2, got {pred.shape} and {target.shape}")
    mp, mt = T.tmean(pred), T.tmean(target)
    dp, dt = pred - mp, target - mt
    cov = T.tmean(dp * dt)
    den = T.tmean(dp * dp) + T.tmean(dt * dt) + (mp - mt) * (mp - mt)
    return 1.0 - T.scale(cov, 2.0) / T.clamp_min(den, CCC_EPS)


def ce_loss(logits, labels):
    """Mean negative log-likelihood of ``labels`` under softmax(logits)."""
    logits = T.as_tensor(logits)
    if logits.ndim == 1:
        logits = logits.reshape(1, -1)
    labels = np.atleast_1d(np.asarray(labels))
    n, k = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k}), got {labels.tolist()}")
    picked = T.log_softmax(logits, axis=-1)[np.arange(n), labels.astype(int)]
    return -T.tmean(picked)


def combined_loss(age_loss, gender_loss):
    return T.scale(T.as_tensor(age_loss) + T.as_tensor(gender_loss), 0.5)
