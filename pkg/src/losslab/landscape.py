"""Loss-landscape slices through weight space.

The interpolation helpers are exact linear maps on ``ParameterVector``.
Whenever a point is evaluated its batch-norm running statistics are first
re-estimated from training data, because interpolating stored statistics
has no meaning.

Convention: the first vertex of ``interp_linear`` lives at coordinate
``alpha = 1``. An init-to-final profile is therefore ``interp_linear(final,
init, alpha)``, with the final weights at ``alpha = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor_core as tc
from .errors import LossLabError, NonFiniteError, ShapeError
from .model import BNStats, Model, ParameterVector, forward

DEFAULT_1D_POINTS = 101
DEFAULT_2D_POINTS = 25
DEFAULT_ALPHA_RANGE = (-0.25, 2.0)
EVAL_CHUNK = 4096


# --- interpolation --------------------------------------------------------

def _compatible(*vertices: ParameterVector) -> None:
    first = vertices[0]
    for v in vertices[1:]:
        first.check_compatible(v)


def interp_linear(theta1: ParameterVector, theta2: ParameterVector, alpha: float) -> ParameterVector:
    """``alpha * theta1 + (1 - alpha) * theta2``; alpha may leave [0, 1].

    Entries where the vertices agree are copied through, so a degenerate
    segment returns its vertex bit for bit rather than up to rounding.
    """
    _compatible(theta1, theta2)
    a, b = theta1.data, theta2.data
    return theta1.with_data(np.where(a == b, a, alpha * a + (1.0 - alpha) * b))


def interp_bilinear(theta1, theta2, theta3, theta4, alpha: float, beta: float) -> ParameterVector:
    _compatible(theta1, theta2, theta3, theta4)
    phi = interp_linear(theta1, theta2, alpha)
    varphi = interp_linear(theta3, theta4, alpha)
    return interp_linear(phi, varphi, beta)


def interp_barycentric(theta0, theta1, theta2, alpha: float, beta: float) -> ParameterVector:
    """Triangle patch with apex ``theta0``.

    Equal to ``beta (theta0 + alpha d1) + (1 - beta)(theta0 + alpha d2)`` with
    ``d_i = theta_i - theta0``, evaluated as
    ``alpha * lin(theta1, theta2, beta) + (1 - alpha) * theta0`` so that the
    vertices are recovered bit for bit.
    """
    _compatible(theta0, theta1, theta2)
    edge = interp_linear(theta1, theta2, beta)
    return interp_linear(edge, theta0, alpha)


# --- batch-norm refresh and evaluation ------------------------------------

@dataclass(frozen=True)
class BNRefreshPolicy:
    """``num_batches = 0`` streams the whole training set."""

    num_batches: int = 0
    batch_size: int = 128

    def __post_init__(self):
        if self.num_batches < 0:
            raise ValueError("num_batches must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 to estimate a variance")


FULL_PASS = BNRefreshPolicy()


def refresh_bn_stats(model: Model, theta: ParameterVector, data, policy: BNRefreshPolicy = FULL_PASS):
    """Re-estimate running statistics at ``theta`` and install them on ``model``.

    Training batches are taken in dataset order. Each hidden layer is
    normalised with its own batch statistics (train-mode behaviour) while
    the per-batch means and unbiased variances are averaged with equal weight.
    Dropout is off. Returns the new statistics.
    """
    model.check_params(theta)
    if not model.has_batch_norm:
        return {}
    x_all = np.asarray(data.x, dtype=np.float64)
    n = len(x_all)
    if n == 0:
        raise ValueError("cannot refresh batch-norm statistics from an empty dataset")
    starts = list(range(0, n, policy.batch_size))
    if policy.num_batches:
        starts = starts[:policy.num_batches]
    t = theta.tensors()
    spec = model.spec
    sums = {layer: [np.zeros(spec.layer_sizes[layer + 1]), np.zeros(spec.layer_sizes[layer + 1])]
            for layer in model.bn}
    count = 0
    for start in starts:
        h = x_all[start:start + policy.batch_size]
        if len(h) < 2:
            continue
        m = len(h)
        for layer in range(spec.num_hidden):
            z = h @ t[f"W{layer}"] + t[f"b{layer}"]
            if spec.batch_norm[layer]:
                mean, var = tc.batch_statistics(z)
                sums[layer][0] += mean
                sums[layer][1] += var * (m / (m - 1))
                z = t[f"gamma{layer}"] * (z - mean) / np.sqrt(var + tc.BN_EPSILON) + t[f"beta{layer}"]
            h = np.maximum(z, 0.0)
        count += 1
    if count == 0:
        raise ValueError("no training batch of size >= 2 available for batch-norm refresh")
    stats = {layer: BNStats(s[0] / count, s[1] / count) for layer, s in sums.items()}
    for layer, st in stats.items():
        tc.check_finite(st.running_mean, "refreshed running mean")
        tc.check_finite(st.running_var, "refreshed running variance")
    model.set_bn_stats(stats)
    return stats


@dataclass
class SurfaceSample:
    alpha: float
    beta: float | None
    train_loss: float
    train_acc: float
    test_loss: float | None = None
    test_acc: float | None = None

    @property
    def diverged(self) -> bool:
        return not np.isfinite(self.train_loss) or (
            self.test_loss is not None and not np.isfinite(self.test_loss))


def _eval_metrics(model: Model, theta: ParameterVector, data) -> tuple[float, float]:
    x_all, y_all = data.x, np.asarray(data.y)
    n = len(y_all)
    if n == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    loss_sum = 0.0
    correct = 0
    for start in range(0, n, EVAL_CHUNK):
        xb, yb = x_all[start:start + EVAL_CHUNK], y_all[start:start + EVAL_CHUNK]
        logits, _ = forward(model, theta, xb, mode="eval", update_stats=False)
        logp = tc.log_softmax(logits)
        loss_sum += -logp[np.arange(len(yb)), yb].sum()
        correct += int((np.argmax(logits, axis=1) == yb).sum())
    loss = loss_sum / n
    if not np.isfinite(loss):
        raise NonFiniteError("evaluation loss is not finite")
    return float(loss), correct / n


def evaluate_point(model: Model, theta: ParameterVector, data, train=None,
                   policy: BNRefreshPolicy | None = FULL_PASS, alpha: float = float("nan"),
                   beta: float | None = None, test=None) -> SurfaceSample:
    """Mean cross-entropy and accuracy on ``data`` at ``theta`` in eval mode.

    Batch-norm statistics are refreshed from ``train`` (default: ``data``)
    unless ``policy`` is None, in which case the model's current statistics
    are used as they are. A point whose statistics or loss are not finite
    comes back as a diverged sample with ``inf`` loss instead of raising.
    """
    train = data if train is None else train
    try:
        # overflow is detected by the finiteness checks, so silence numpy's warnings
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if policy is not None:
                refresh_bn_stats(model, theta, train, policy)
            loss, acc = _eval_metrics(model, theta, data)
    except (NonFiniteError, FloatingPointError):
        return SurfaceSample(alpha, beta, float("inf"), float("nan"),
                             float("inf") if test is not None else None,
                             float("nan") if test is not None else None)
    sample = SurfaceSample(alpha, beta, loss, acc)
    if test is not None:
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                sample.test_loss, sample.test_acc = _eval_metrics(model, theta, test)
        except (NonFiniteError, FloatingPointError):
            sample.test_loss, sample.test_acc = float("inf"), float("nan")
    return sample


# --- sweeps ---------------------------------------------------------------

_VERTEX_COUNT = {"linear": 2, "bilinear": 4, "barycentric": 3}


@dataclass
class InterpolationSpec:
    mode: str
    vertices: Sequence[ParameterVector]
    alpha_range: tuple[float, float] = (0.0, 1.0)
    beta_range: tuple[float, float] = (0.0, 1.0)
    resolution: int = DEFAULT_1D_POINTS

    def __post_init__(self):
        if self.mode not in _VERTEX_COUNT:
            raise ValueError(f"unknown interpolation mode {self.mode!r}")
        if len(self.vertices) != _VERTEX_COUNT[self.mode]:
            raise ShapeError(f"{self.mode} interpolation needs {_VERTEX_COUNT[self.mode]} vertices")
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")
        _compatible(*self.vertices)

    def alphas(self) -> np.ndarray:
        return np.linspace(self.alpha_range[0], self.alpha_range[1], self.resolution)

    def betas(self) -> np.ndarray:
        return np.linspace(self.beta_range[0], self.beta_range[1], self.resolution)

    def point(self, alpha: float, beta: float | None) -> ParameterVector:
        v = self.vertices
        if self.mode == "linear":
            return interp_linear(v[0], v[1], alpha)
        if self.mode == "bilinear":
            return interp_bilinear(v[0], v[1], v[2], v[3], alpha, beta)
        return interp_barycentric(v[0], v[1], v[2], alpha, beta)

    def grid(self) -> list[tuple[float, float | None]]:
        """Grid coordinates in evaluation order (alpha-major)."""
        if self.mode == "linear":
            return [(float(a), None) for a in self.alphas()]
        return [(float(a), float(b)) for a in self.alphas() for b in self.betas()]


def sweep(spec: InterpolationSpec, model: Model, data, test=None,
          policy: BNRefreshPolicy | None = FULL_PASS) -> list[SurfaceSample]:
    """Evaluate every grid point; results are ordered by grid index."""
    return [evaluate_point(model, spec.point(a, b), data, train=data, policy=policy,
                           alpha=a, beta=b, test=test)
            for a, b in spec.grid()]


def basin_alpha_grid(lo: float = DEFAULT_ALPHA_RANGE[0], hi: float = DEFAULT_ALPHA_RANGE[1],
                     per_unit: int = 40) -> np.ndarray:
    """Grid ``k / per_unit`` covering [lo, hi]; contains 0, 1 and 2 exactly."""
    ks = np.arange(int(np.ceil(lo * per_unit)), int(np.floor(hi * per_unit)) + 1)
    return ks / float(per_unit)


def basin_profile_alpha(model: Model, init: ParameterVector, final: ParameterVector, data,
                        alphas=None, test=None, policy: BNRefreshPolicy | None = FULL_PASS):
    """Loss along ``init + alpha (final - init)``; ``alpha = 1`` is the final point."""
    alphas = basin_alpha_grid() if alphas is None else np.asarray(alphas, dtype=np.float64)
    if alphas.min() > 0 or alphas.max() < 2:
        raise ValueError("alpha grid must cover at least [0, 2]")
    return [evaluate_point(model, interp_linear(final, init, float(a)), data, train=data,
                           policy=policy, alpha=float(a), test=test)
            for a in alphas]


def basin_profile_lambda(model: Model, init: ParameterVector, final: ParameterVector, data,
                         lambdas, test=None, policy: BNRefreshPolicy | None = FULL_PASS):
    """Loss along the unit-speed ray from ``final`` towards ``init``.

    ``lambda`` is measured in weight-space units, so ``lambda = ||init - final||``
    lands on ``init`` exactly.
    """
    _compatible(init, final)
    length = float(np.linalg.norm(init.data - final.data))
    if length == 0.0:
        raise LossLabError("init and final weights coincide; the ray has no direction")
    out = []
    for lam in np.asarray(lambdas, dtype=np.float64):
        point = interp_linear(init, final, float(lam) / length)
        out.append(evaluate_point(model, point, data, train=data, policy=policy,
                                  alpha=float(lam), test=test))
    return out


def path_length(init: ParameterVector, final: ParameterVector) -> float:
    _compatible(init, final)
    return float(np.linalg.norm(init.data - final.data))

