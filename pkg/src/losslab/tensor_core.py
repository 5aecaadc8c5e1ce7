"""Dense float64 layer primitives with hand-written reverse-mode gradients.

Tensors are plain ``numpy.ndarray`` objects of dtype float64, row-major.
Each ``*_forward`` returns its output plus whatever the matching
``*_backward`` needs; nothing is cached on module state.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteError, ShapeError

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.1


def as_tensor(x, ndim: int | None = None, name: str = "tensor") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeError(f"{name} must have {ndim} dimensions, got shape {arr.shape}")
    return arr


def check_finite(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return x


# --- affine ---------------------------------------------------------------

def affine_forward(x, W, b) -> np.ndarray:
    x = check_finite(as_tensor(x, 2, "x"), "x")
    W = as_tensor(W, 2, "W")
    b = as_tensor(b, 1, "b")
    if x.shape[1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise ShapeError(f"affine shapes do not conform: x{x.shape} W{W.shape} b{b.shape}")
    return x @ W + b


def affine_backward(dout: np.ndarray, x: np.ndarray, W: np.ndarray):
    """Returns ``(dx, dW, db)``."""
    return dout @ W.T, x.T @ dout, dout.sum(axis=0)


# --- relu -----------------------------------------------------------------

def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dout * (x > 0)


# --- batch normalization --------------------------------------------------

@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = BN_EPSILON

    def __post_init__(self):
        n = len(self.gamma)
        if not (len(self.beta) == len(self.running_mean) == len(self.running_var) == n):
            raise ShapeError("batch-norm vectors must all have the feature count length")
        if self.epsilon <= 0:
            raise ValueError("batch-norm epsilon must be positive")
        if np.any(self.running_var < 0):
            raise ValueError("running_var must be non-negative")

    @classmethod
    def fresh(cls, features: int, epsilon: float = BN_EPSILON) -> "BatchNormState":
        return cls(np.ones(features), np.zeros(features), np.zeros(features),
                   np.ones(features), epsilon)


@dataclass
class BNCache:
    x_centered: np.ndarray
    inv_std: np.ndarray
    x_hat: np.ndarray
    gamma: np.ndarray


def batch_statistics(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature batch mean and biased (1/N) variance."""
    mean = x.mean(axis=0)
    var = ((x - mean) ** 2).mean(axis=0)
    return mean, var


def batchnorm_forward(x, bn: BatchNormState, mode: str = "train", update_stats: bool = True):
    """Normalise ``x`` per feature.

    In train mode the batch statistics are used and, if ``update_stats``, the
    running estimates move by ``BN_MOMENTUM`` towards them (running variance
    is the unbiased batch estimate). Eval mode uses the running estimates.
    Returns ``(out, cache)``; ``cache`` is None in eval mode.
    """
    x = as_tensor(x, 2, "x")
    if x.shape[1] != len(bn.gamma):
        raise ShapeError(f"expected {len(bn.gamma)} features, got {x.shape[1]}")
    if mode == "train":
        n = x.shape[0]
        if n < 2:
            raise ShapeError("batch-norm in train mode needs a batch of at least 2")
        mean, var = batch_statistics(x)
        check_finite(mean, "batch mean")
        check_finite(var, "batch variance")
        if update_stats:
            bn.running_mean = (1 - BN_MOMENTUM) * bn.running_mean + BN_MOMENTUM * mean
            bn.running_var = (1 - BN_MOMENTUM) * bn.running_var + BN_MOMENTUM * var * (n / (n - 1))
    elif mode == "eval":
        mean, var = bn.running_mean, bn.running_var
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x_centered = x - mean
    inv_std = 1.0 / np.sqrt(var + bn.epsilon)
    x_hat = x_centered * inv_std
    out = bn.gamma * x_hat + bn.beta
    cache = BNCache(x_centered, inv_std, x_hat, bn.gamma) if mode == "train" else None
    return out, cache


def batchnorm_backward(dout: np.ndarray, cache: BNCache):
    """Train-mode gradient. Returns ``(dx, dgamma, dbeta)``."""
    n = dout.shape[0]
    dbeta = dout.sum(axis=0)
    dgamma = (dout * cache.x_hat).sum(axis=0)
    dxhat = dout * cache.gamma
    dx = (cache.inv_std / n) * (n * dxhat - dxhat.sum(axis=0)
                                - cache.x_hat * (dxhat * cache.x_hat).sum(axis=0))
    return dx, dgamma, dbeta


# --- dropout --------------------------------------------------------------

def _check_rate(rate: float) -> None:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")


def dropout_forward(x, rate: float, mask=None, train: bool = True) -> np.ndarray:
    """Inverted dropout with an externally supplied 0/1 mask."""
    _check_rate(rate)
    x = as_tensor(x)
    if not train:
        return x
    mask = as_tensor(mask)
    if mask.shape != x.shape:
        raise ShapeError(f"dropout mask shape {mask.shape} != input shape {x.shape}")
    return x * mask / (1.0 - rate)


def dropout_backward(dout: np.ndarray, rate: float, mask: np.ndarray) -> np.ndarray:
    return dout * mask / (1.0 - rate)


# --- softmax cross-entropy -----------------------------------------------

def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def softmax_xent(logits, labels):
    """Mean cross-entropy and its gradient with respect to ``logits``."""
    logits = check_finite(as_tensor(logits, 2, "logits"), "logits")
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"need one label per row: {labels.shape} vs batch {n}")
    if np.any(labels < 0) or np.any(labels >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    logp = log_softmax(logits)
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return float(loss), grad / n


@dataclass
class GradientRecord:
    """Gradients keyed by parameter-tensor name, in parameter-layout order."""

    grads: dict[str, np.ndarray]
    loss: float
    extras: dict = field(default_factory=dict)
