"""Policy distribution primitives: diagonal Gaussian and categorical.

Plain-numpy evaluation lives here; tape-node variants (for losses) take
Tensor means/log-stds/logits and are suffixed `_t`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

LOG_2PI = float(np.log(2.0 * np.pi))
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0


@dataclass
class DiagGaussianHead:
    """State-independent log_std; mean comes from the network output."""

    mean: np.ndarray
    log_std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.log_std = np.clip(
            np.asarray(self.log_std, dtype=np.float64), LOG_STD_MIN, LOG_STD_MAX
        )


def diag_gaussian_log_prob(head: DiagGaussianHead, action) -> float:
    action = np.asarray(action, dtype=np.float64)
    if action.shape != head.mean.shape:
        raise ValueError("action/mean dimension mismatch")
    std = np.exp(head.log_std)
    z = (action - head.mean) / std
    return float(np.sum(-0.5 * z**2 - head.log_std - 0.5 * LOG_2PI))


def diag_gaussian_sample(head: DiagGaussianHead, rng: np.random.Generator):
    z = rng.standard_normal(head.mean.shape)
    return head.mean + np.exp(head.log_std) * z


def diag_gaussian_entropy(head: DiagGaussianHead) -> float:
    return float(np.sum(head.log_std + 0.5 * (LOG_2PI + 1.0)))


def gaussian_log_prob_t(mean: Tensor, log_std: Tensor, actions: np.ndarray) -> Tensor:
    """Row-wise log-density of `actions` (batch, dim) as a tape node."""
    std = ad.exp(log_std)
    z = (ad.as_tensor(actions) - mean) / std
    per_dim = z * z * (-0.5) - log_std - 0.5 * LOG_2PI
    return per_dim.sum(axis=1)

def gaussian_entropy_t(log_std: Tensor, dim: int) -> Tensor:
    return log_std.sum() + 0.5 * dim * (LOG_2PI + 1.0)


# -- categorical ------------------------------------------------------------


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def categorical_log_prob(logits, index: int) -> float:
    logits = np.asarray(logits, dtype=np.float64)
    return float(_log_softmax(logits)[index])


def categorical_sample(logits, rng: np.random.Generator) -> int:
    p = np.exp(_log_softmax(np.asarray(logits, dtype=np.float64)))
    return int(rng.choice(len(p), p=p))


def categorical_sample_batch(logits: np.ndarray, rng: np.random.Generator):
    """Vectorized inverse-CDF sampling, one draw per row."""
    p = np.exp(_log_softmax(logits))
    c = np.cumsum(p, axis=1)
    u = rng.random((logits.shape[0], 1))
    return (u > c[:, :-1]).sum(axis=1) if logits.shape[1] > 1 else np.zeros(
        logits.shape[0], dtype=np.intp
    )


def categorical_entropy(logits) -> float:
    lp = _log_softmax(np.asarray(logits, dtype=np.float64))
    return float(-(np.exp(lp) * lp).sum())


def categorical_log_prob_t(logits: Tensor, actions: np.ndarray) -> Tensor:
    """Log-prob of integer `actions` per row of `logits`, as a tape node."""
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(actions)), actions.astype(np.intp)] = 1.0
    return (ad.log_softmax(logits) * onehot).sum(axis=1)


def categorical_entropy_t(logits: Tensor) -> Tensor:
    lp = ad.log_softmax(logits)
    return -(ad.exp(lp) * lp).sum(axis=1)
