"""Optimizers as vector fields consumed by a fixed-step explicit Euler update.

Every method produces a direction ``X_t`` from the current gradient and its
own accumulators; the parameter update is always ``theta + eta * X_t`` with a
fixed ``eta``. A second-order Runge-Kutta combination of two gradient
evaluations can replace the raw gradient of any method.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .checkpoint import make_checkpoint
from .errors import LayoutMismatchError, NonFiniteError, ScheduleError
from .landscape import evaluate_point
from .model import Model, ParameterVector, distance, flat_grad, loss_and_grad, norm
from .rng import Stream, StreamKey, shuffle_indices, stream_digest

KINDS = ("sgd", "sgdm", "adagrad", "rmsprop", "adadelta", "adam")

# name: (a1, a2, q1)
RK2_METHODS = {
    "midpoint": (0.0, 1.0, 0.5),
    "heun": (0.5, 0.5, 1.0),
    "ralston": (1.0 / 3.0, 2.0 / 3.0, 0.75),
}

_DEFAULTS = {
    "sgd": dict(eta=0.1),
    "sgdm": dict(eta=0.1, beta1=0.9),
    "adagrad": dict(eta=0.002, epsilon=1e-8),
    "rmsprop": dict(eta=0.001, beta2=0.9, epsilon=1e-8),
    "adadelta": dict(eta=1.0, beta2=0.95, epsilon=1e-6),
    "adam": dict(eta=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8),
}

LEARNING_RATE_GRID = {
    "sgd": (0.2, 0.1, 0.05, 0.01),
    "sgdm": (0.2, 0.1, 0.05, 0.01),
    "adaptive": (0.002, 0.001, 0.0005, 0.0001),
}


@dataclass(frozen=True)
class RK2Coefficients:
    a1: float
    a2: float
    q1: float
    name: str = ""

    def __post_init__(self):
        if abs(self.a1 + self.a2 - 1.0) > 1e-12:
            raise ValueError("RK2 coefficients need a1 + a2 = 1")

    @classmethod
    def named(cls, name: str) -> "RK2Coefficients":
        a1, a2, q1 = RK2_METHODS[name]
        return cls(a1, a2, q1, name)


@dataclass(frozen=True)
class OptimizerSpec:
    """``beta1`` decays the gradient average, ``beta2`` the squared one.

    For adadelta ``beta2`` is the decay rho of both averages and ``eta`` is
    ignored (the step is always 1).
    """

    kind: str
    eta: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    rk2: RK2Coefficients | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if self.kind != "adadelta" and not self.eta >= 0:
            raise ValueError("eta must be non-negative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("decay rates must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @classmethod
    def default(cls, kind: str, **overrides) -> "OptimizerSpec":
        if kind not in _DEFAULTS:
            raise ValueError(f"unknown optimizer {kind!r}")
        params = {**_DEFAULTS[kind], **overrides}
        return cls(kind, **params)

    def with_rk2(self, method: str = "heun", double_eta: bool = True) -> "OptimizerSpec":
        """RK2-augmented copy; the step size doubles to pay for the second gradient."""
        eta = self.eta * 2 if double_eta and self.kind != "adadelta" else self.eta
        return replace(self, eta=eta, rk2=RK2Coefficients.named(method))

    @property
    def step_size(self) -> float:
        return 1.0 if self.kind == "adadelta" else self.eta

    @property
    def label(self) -> str:
        return self.kind + (f"+rk2:{self.rk2.name or 'custom'}" if self.rk2 else "")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "eta": self.eta, "beta1": self.beta1,
             "beta2": self.beta2, "epsilon": self.epsilon}
        if self.rk2 is not None:
            d["rk2"] = {"a1": self.rk2.a1, "a2": self.rk2.a2, "q1": self.rk2.q1, "name": self.rk2.name}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerSpec":
        base = cls.default(d["kind"], **{k: float(d[k]) for k in ("eta", "beta1", "beta2", "epsilon") if k in d})
        rk2 = d.get("rk2")
        if rk2 is None:
            return base
        if isinstance(rk2, str):
            return replace(base, rk2=RK2Coefficients.named(rk2))
        return replace(base, rk2=RK2Coefficients(float(rk2["a1"]), float(rk2["a2"]),
                                                 float(rk2["q1"]), rk2.get("name", "")))


@dataclass
class OptimizerState:
    t: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    s: np.ndarray | None = None
    u: np.ndarray | None = None


def init_state(spec: OptimizerSpec, size: int) -> OptimizerState:
    z = lambda: np.zeros(size)  # noqa: E731
    kind = spec.kind
    return OptimizerState(
        t=0,
        m=z() if kind in ("sgdm", "adam") else None,
        v=z() if kind in ("rmsprop", "adadelta", "adam") else None,
        s=z() if kind == "adagrad" else None,
        u=z() if kind == "adadelta" else None,
    )


def vector_field(spec: OptimizerSpec, state: OptimizerState, g) -> np.ndarray:
    """Update ``state`` once with gradient ``g`` and return the direction ``X_t``."""
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("gradient contains NaN or Inf")
    kind = spec.kind
    state.t += 1
    if kind == "sgd":
        return -g
    if kind == "sgdm":
        state.m = (1 - spec.beta1) * g + spec.beta1 * state.m
        return -state.m
    if kind == "adagrad":
        state.s = state.s + g * g
        return -g / np.sqrt(state.s + spec.epsilon)
    if kind == "rmsprop":
        state.v = (1 - spec.beta2) * g * g + spec.beta2 * state.v
        return -g / np.sqrt(state.v + spec.epsilon)
    if kind == "adadelta":
        rho = spec.beta2
        state.v = rho * state.v + (1 - rho) * g * g
        x = -(np.sqrt(state.u + spec.epsilon) / np.sqrt(state.v + spec.epsilon)) * g
        state.u = rho * state.u + (1 - rho) * x * x
        return x
    # adam: one combined bias-correction multiplier; epsilon guards sqrt(v)
    b1, b2 = spec.beta1, spec.beta2
    state.m = (1 - b1) * g + b1 * state.m
    state.v = (1 - b2) * g * g + b2 * state.v
    c_t = np.sqrt(1 - b2 ** state.t) / (1 - b1 ** state.t)
    return -c_t * state.m / (np.sqrt(state.v) + spec.epsilon)


def rk2_gradient(coeffs: RK2Coefficients, theta: np.ndarray, grad_fn, h: float,
                 first_grad: np.ndarray | None = None) -> np.ndarray:
    """The substitute gradient ``-(a1 k1 + a2 k2)`` on the field ``X = -grad``."""
    k1 = -(grad_fn(theta) if first_grad is None else first_grad)
    if coeffs.a2 == 0.0:
        return -k1
    k2 = -grad_fn(theta + coeffs.q1 * h * k1)
    return -(coeffs.a1 * k1 + coeffs.a2 * k2)


def rk2_vector_field(spec: OptimizerSpec, state: OptimizerState, theta, grad_fn,
                     h: float | None = None, first_grad: np.ndarray | None = None) -> np.ndarray:
    """Feed the RK2 substitute gradient into ``spec``'s own vector field.

    For sgd the result is exactly ``a1 k1 + a2 k2``. ``h`` defaults to the
    spec's step size; ``grad_fn`` maps a flat parameter array to a flat
    gradient and must use the same minibatch for both stages.
    """
    if spec.rk2 is None:
        raise ValueError("optimizer spec has no RK2 coefficients")
    theta = theta.data if isinstance(theta, ParameterVector) else np.asarray(theta, dtype=np.float64)
    h = spec.step_size if h is None else h
    g_bar = rk2_gradient(spec.rk2, theta, grad_fn, h, first_grad)
    return vector_field(spec, state, g_bar)


def apply_step(theta, x, eta: float):
    """``theta + eta * x``; returns the same type as ``theta``."""
    if isinstance(theta, ParameterVector):
        if isinstance(x, ParameterVector):
            theta.check_compatible(x)
            x = x.data
        if np.shape(x) != theta.data.shape:
            raise LayoutMismatchError("step direction does not match the parameter layout")
        return theta.with_data(theta.data + eta * np.asarray(x))
    theta = np.asarray(theta, dtype=np.float64)
    if np.shape(x) != theta.shape:
        raise LayoutMismatchError("step direction does not match the parameter layout")
    return theta + eta * np.asarray(x)


def optimizer_step(spec: OptimizerSpec, state: OptimizerState, theta, g, grad_fn=None):
    """One full update: direction (RK2-augmented if configured) then Euler step."""
    if spec.rk2 is not None:
        if grad_fn is None:
            raise ValueError("RK2 augmentation needs a gradient function")
        flat = theta.data if isinstance(theta, ParameterVector) else theta
        x = rk2_vector_field(spec, state, flat, grad_fn, first_grad=g)
    else:
        x = vector_field(spec, state, g)
    return apply_step(theta, x, spec.step_size)


# --- training loops -------------------------------------------------------

@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    dist_from_init: float
    weight_norm: float
    optimizer: str
    test_acc: float | None = None
    test_loss: float | None = None
    shuffle_digest: str = ""


def minibatches(n: int, batch_size: int, seed: int, epoch: int, min_batch: int = 1):
    """Index arrays for one epoch, drawn from the shared shuffle stream."""
    perm = shuffle_indices(StreamKey(Stream(seed, "shuffle", (epoch,)), 0), n)
    batches = [perm[i:i + batch_size] for i in range(0, n, batch_size)]
    return [b for b in batches if len(b) >= min_batch], perm


def dropout_masks(model: Model, seed: int, epoch: int, batch: int, batch_len: int):
    rate = model.spec.dropout_rate
    if rate <= 0:
        return None
    sizes = model.spec.layer_sizes
    masks = []
    for layer in range(model.spec.num_hidden):
        width = sizes[layer + 1]
        u = Stream(seed, "dropout", (epoch, batch, layer)).uniforms(0, batch_len * width)
        masks.append((u >= rate).astype(np.float64).reshape(batch_len, width))
    return masks


def run_epoch(model: Model, theta: ParameterVector, state: OptimizerState, spec: OptimizerSpec,
              data, seed: int, epoch: int, batch_size: int = 128,
              init: ParameterVector | None = None):
    """One shuffled pass over ``data``; returns ``(theta, state, EpochMetrics)``.

    ``epoch`` indexes the shuffle and dropout sub-streams, so runs that share
    a seed see identical minibatch sequences and masks whatever their optimizer.
    """
    x_all, y_all = data.x, data.y
    n = len(y_all)
    if n == 0:
        raise ValueError("empty training set")
    min_batch = 2 if model.has_batch_norm else 1
    batches, perm = minibatches(n, batch_size, seed, epoch, min_batch)
    total_loss = 0.0
    total_correct = 0.0
    seen = 0
    for b, idx in enumerate(batches):
        xb, yb = x_all[idx], y_all[idx]
        masks = dropout_masks(model, seed, epoch, b, len(idx))
        loss, acc, record = loss_and_grad(model, theta, xb, yb, masks, "train")
        g = flat_grad(theta, record)

        def grad_fn(flat, xb=xb, yb=yb, masks=masks):
            p = theta.with_data(flat)
            _, _, rec = loss_and_grad(model, p, xb, yb, masks, "train", update_stats=False)
            return flat_grad(p, rec)

        theta = optimizer_step(spec, state, theta, g, grad_fn)
        total_loss += loss * len(idx)
        total_correct += acc * len(idx)
        seen += len(idx)
    metrics = EpochMetrics(
        epoch=epoch + 1,
        train_loss=total_loss / seen,
        train_acc=total_correct / seen,
        dist_from_init=distance(theta, init) if init is not None else float("nan"),
        weight_norm=norm(theta),
        optimizer=spec.label,
        shuffle_digest=stream_digest(perm),
    )
    return theta, state, metrics


@dataclass(frozen=True)
class SwitchSchedule:
    segments: tuple[tuple[int, OptimizerSpec], ...]

    def __post_init__(self):
        segs = tuple((int(s), o) for s, o in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs or segs[0][0] != 0:
            raise ScheduleError("schedule must start at epoch 0")
        starts = [s for s, _ in segs]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ScheduleError("segment starts must be strictly increasing")

    @classmethod
    def single(cls, spec: OptimizerSpec) -> "SwitchSchedule":
        return cls(((0, spec),))

    def spec_at(self, epoch: int) -> OptimizerSpec:
        current = self.segments[0][1]
        for start, spec in self.segments:
            if start <= epoch:
                current = spec
        return current

    def boundaries(self) -> list[int]:
        return [s for s, _ in self.segments[1:]]

    def label(self, total_epochs: int) -> str:
        """e.g. ``adam10-sgd10`` for a switch at epoch 10 of 20."""
        starts = [s for s, _ in self.segments] + [total_epochs]
        return "-".join(f"{spec.label}{starts[i + 1] - start}"
                        for i, (start, spec) in enumerate(self.segments))

    def to_list(self) -> list:
        return [{"start_epoch": s, "optimizer": o.to_dict()} for s, o in self.segments]

    @classmethod
    def from_list(cls, items: list) -> "SwitchSchedule":
        return cls(tuple((int(d["start_epoch"]), OptimizerSpec.from_dict(d["optimizer"])) for d in items))


@dataclass
class ScheduleResult:
    checkpoints: list = field(default_factory=list)
    series: list[EpochMetrics] = field(default_factory=list)
    final: ParameterVector | None = None
    init: ParameterVector | None = None
    init_checkpoint: object = None


def run_schedule(model: Model, theta0: ParameterVector, schedule: SwitchSchedule, total_epochs: int,
                 data, seed: int, batch_size: int = 128, test=None, reset_on_switch: bool = True,
                 eval_every: int = 1, run_hash: str = "") -> ScheduleResult:
    """Train through every segment of ``schedule``.

    Checkpoints (with freshly estimated batch-norm statistics and full-pass
    train metrics) are taken at each switch boundary and at the end. The
    series starts with an epoch-0 row evaluated at ``theta0``.
    """
    if schedule.segments[-1][0] >= total_epochs:
        raise ScheduleError("schedule has a segment starting at or beyond total_epochs")
    model.check_params(theta0)
    result = ScheduleResult(init=theta0.copy())
    label = schedule.label(total_epochs)
    # evaluation refreshes batch-norm statistics; keep that off the training model
    probe = model.clone()

    def evaluate(theta):
        train_pt = evaluate_point(probe, theta, data, train=data)
        test_pt = evaluate_point(probe, theta, test, train=data) if test is not None else None
        return train_pt, test_pt

    train0, test0 = evaluate(theta0)
    result.init_checkpoint = make_checkpoint(probe, theta0, epoch=0, optimizer=label, seed=seed,
                                             run_hash=run_hash, eval_loss=train0.train_loss,
                                             eval_acc=train0.train_acc)
    result.series.append(EpochMetrics(
        0, train0.train_loss, train0.train_acc, 0.0, norm(theta0), schedule.spec_at(0).label,
        test_acc=test0.train_acc if test0 else None, test_loss=test0.train_loss if test0 else None))

    theta = theta0.copy()
    spec = schedule.spec_at(0)
    state = init_state(spec, len(theta))
    boundaries = set(schedule.boundaries())
    for epoch in range(total_epochs):
        if epoch in boundaries:
            result.checkpoints.append(_checkpoint(probe, theta, data, epoch, label, seed, run_hash))
            spec = schedule.spec_at(epoch)
            if reset_on_switch:
                state = init_state(spec, len(theta))
            else:
                state = _carry_state(state, spec, len(theta))
        theta, state, metrics = run_epoch(model, theta, state, spec, data, seed, epoch, batch_size, theta0)
        if test is not None and ((epoch + 1) % eval_every == 0 or epoch + 1 == total_epochs):
            test_pt = evaluate_point(probe, theta, test, train=data)
            metrics.test_acc, metrics.test_loss = test_pt.train_acc, test_pt.train_loss
        result.series.append(metrics)
    result.checkpoints.append(_checkpoint(probe, theta, data, total_epochs, label, seed, run_hash))
    result.final = theta
    return result


def _carry_state(old: OptimizerState, spec: OptimizerSpec, size: int) -> OptimizerState:
    # warm start: keep whichever accumulators the incoming method also uses
    new = init_state(spec, size)
    for name in ("m", "v", "s", "u"):
        if getattr(new, name) is not None and getattr(old, name) is not None:
            setattr(new, name, getattr(old, name).copy())
    new.t = old.t
    return new


def _checkpoint(probe, theta, data, epoch, label, seed, run_hash):
    sample = evaluate_point(probe, theta, data, train=data)
    return make_checkpoint(probe, theta, epoch=epoch, optimizer=label, seed=seed, run_hash=run_hash,
                           eval_loss=sample.train_loss, eval_acc=sample.train_acc)
