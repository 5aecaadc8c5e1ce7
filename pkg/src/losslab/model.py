"""Fully connected ReLU networks with optional batch norm and dropout.

Parameters live in one flat float64 vector (``ParameterVector``) so that
interpolation and distance arithmetic never has to know about layers.
Batch-norm running statistics are model state, not parameters.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import tensor_core as tc
from .errors import LayoutMismatchError, ShapeError, TraceError
from .rng import Stream


@dataclass(frozen=True)
class ModelSpec:
    layer_sizes: tuple[int, ...]
    batch_norm: tuple[bool, ...] = ()
    dropout_rate: float = 0.0
    activation: str = "relu"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValueError(f"need at least two positive layer sizes, got {sizes}")
        bn = self.batch_norm
        if isinstance(bn, bool):
            bn = (bn,) * (len(sizes) - 2)
        bn = tuple(bool(b) for b in bn) or (False,) * (len(sizes) - 2)
        if len(bn) != len(sizes) - 2:
            raise ValueError("batch_norm needs one flag per hidden layer")
        object.__setattr__(self, "batch_norm", bn)
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.activation != "relu":
            raise ValueError("only relu activations are supported")

    @property
    def num_hidden(self) -> int:
        return len(self.layer_sizes) - 2

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "batch_norm": list(self.batch_norm),
            "dropout_rate": self.dropout_rate,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(tuple(d["layer_sizes"]), tuple(d.get("batch_norm", ())),
                   float(d.get("dropout_rate", 0.0)), d.get("activation", "relu"))

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def fc2(n_in: int = 784, hidden: int = 50, n_out: int = 10, batch_norm: bool = True,
        dropout_rate: float = 0.0) -> ModelSpec:
    return ModelSpec((n_in, hidden, n_out), (batch_norm,), dropout_rate)


@dataclass(frozen=True)
class LayoutEntry:
    name: str
    shape: tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass
class ParameterVector:
    data: np.ndarray
    layout: tuple[LayoutEntry, ...]
    config_hash: str

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != 1:
            raise ShapeError("parameter data must be flat")
        pos = 0
        for entry in self.layout:
            if entry.offset != pos:
                raise ShapeError(f"layout gap or overlap at {entry.name}")
            pos += entry.size
        if pos != self.data.size:
            raise ShapeError(f"layout covers {pos} entries but data has {self.data.size}")

    def __len__(self) -> int:
        return self.data.size

    def view(self, name: str) -> np.ndarray:
        for entry in self.layout:
            if entry.name == name:
                return self.data[entry.offset:entry.offset + entry.size].reshape(entry.shape)
        raise KeyError(name)

    def tensors(self) -> dict[str, np.ndarray]:
        return {e.name: self.data[e.offset:e.offset + e.size].reshape(e.shape) for e in self.layout}

    def check_compatible(self, other: "ParameterVector") -> None:
        if self.config_hash != other.config_hash or self.layout != other.layout:
            raise LayoutMismatchError(
                f"parameter vectors are not interpolation-compatible "
                f"({self.config_hash} vs {other.config_hash})")

    def with_data(self, data: np.ndarray) -> "ParameterVector":
        return ParameterVector(np.asarray(data, dtype=np.float64), self.layout, self.config_hash)

    def copy(self) -> "ParameterVector":
        return self.with_data(self.data.copy())

    def flatten_tensors(self, tensors: dict[str, np.ndarray]) -> np.ndarray:
        """Concatenate per-tensor arrays (e.g. gradients) in layout order."""
        out = np.empty_like(self.data)
        for e in self.layout:
            t = np.asarray(tensors[e.name], dtype=np.float64)
            if t.shape != e.shape:
                raise ShapeError(f"{e.name}: expected shape {e.shape}, got {t.shape}")
            out[e.offset:e.offset + e.size] = t.ravel()
        return out


@dataclass
class BNStats:
    running_mean: np.ndarray
    running_var: np.ndarray


class Model:
    """A network architecture plus its batch-norm running statistics."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        entries = []
        offset = 0
        sizes = spec.layer_sizes
        for layer in range(len(sizes) - 1):
            shapes = [(f"W{layer}", (sizes[layer], sizes[layer + 1])), (f"b{layer}", (sizes[layer + 1],))]
            if layer < spec.num_hidden and spec.batch_norm[layer]:
                shapes += [(f"gamma{layer}", (sizes[layer + 1],)), (f"beta{layer}", (sizes[layer + 1],))]
            for name, shape in shapes:
                entries.append(LayoutEntry(name, shape, offset))
                offset += int(np.prod(shape))
        self.layout = tuple(entries)
        self.num_params = offset
        self.bn = {layer: BNStats(np.zeros(sizes[layer + 1]), np.ones(sizes[layer + 1]))
                   for layer in range(spec.num_hidden) if spec.batch_norm[layer]}

    @property
    def config_hash(self) -> str:
        return self.spec.config_hash

    @property
    def has_batch_norm(self) -> bool:
        return bool(self.bn)

    def zeros(self) -> ParameterVector:
        return ParameterVector(np.zeros(self.num_params), self.layout, self.config_hash)

    def wrap(self, data) -> ParameterVector:
        return ParameterVector(np.array(data, dtype=np.float64), self.layout, self.config_hash)

    def check_params(self, params: ParameterVector) -> None:
        if params.config_hash != self.config_hash or params.layout != self.layout:
            raise LayoutMismatchError("parameters were built for a different model spec")

    def get_bn_stats(self) -> dict[int, BNStats]:
        return {k: BNStats(v.running_mean.copy(), v.running_var.copy()) for k, v in self.bn.items()}

    def set_bn_stats(self, stats: dict[int, BNStats]) -> None:
        if set(stats) != set(self.bn):
            raise ShapeError("batch-norm layers do not match")
        self.bn = {k: BNStats(np.array(v.running_mean, dtype=np.float64),
                              np.array(v.running_var, dtype=np.float64)) for k, v in stats.items()}

    def clone(self) -> "Model":
        other = Model(self.spec)
        other.set_bn_stats(self.get_bn_stats())
        return other


def build(spec: ModelSpec) -> Model:
    return Model(spec)


@dataclass(frozen=True)
class InitScheme:
    kind: str = "xavier_uniform"
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if self.kind not in ("xavier_uniform", "gaussian"):
            raise ValueError(f"unknown init scheme {self.kind!r}")
        if self.kind == "gaussian" and not self.std > 0:
            raise ValueError("gaussian init needs std > 0")

    def to_dict(self) -> dict:
        if self.kind == "gaussian":
            return {"kind": self.kind, "mean": self.mean, "std": self.std}
        return {"kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "InitScheme":
        return cls(d.get("kind", "xavier_uniform"), float(d.get("mean", 0.0)), float(d.get("std", 1.0)))


def xavier_bound(n_in: int, n_out: int) -> float:
    return float(np.sqrt(6.0 / (n_in + n_out)))


def initialize(model: Model, scheme: InitScheme, stream: Stream) -> ParameterVector:
    """Draw weights; biases start at 0, batch-norm gamma at 1 and beta at 0.

    Layer ``l`` weights use sub-stream ``stream.child(l)`` from counter 0.
    """
    if stream.name != "init":
        raise ValueError("initialization must draw from the 'init' stream")
    params = model.zeros()
    tensors = params.tensors()
    sizes = model.spec.layer_sizes
    for layer in range(len(sizes) - 1):
        n_in, n_out = sizes[layer], sizes[layer + 1]
        sub = stream.child(layer)
        if scheme.kind == "xavier_uniform":
            a = xavier_bound(n_in, n_out)
            w = a * (2.0 * sub.uniforms(0, n_in * n_out) - 1.0)
        else:
            w = scheme.mean + scheme.std * sub.gaussians(0, n_in * n_out)
        tensors[f"W{layer}"][...] = w.reshape(n_in, n_out)
        if f"gamma{layer}" in tensors:
            tensors[f"gamma{layer}"][...] = 1.0
    return params


# --- forward / backward ---------------------------------------------------

@dataclass
class Trace:
    """Intermediates of one forward pass; consumed by a single ``backward``."""

    inputs: list = field(default_factory=list)
    pre_act: list = field(default_factory=list)
    bn_caches: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    complete: bool = False
    used: bool = False


def _dropout_active(model: Model, mode: str) -> bool:
    return mode == "train" and model.spec.dropout_rate > 0


def forward(model: Model, params: ParameterVector, x, masks=None, mode: str = "train",
            update_stats: bool = True):
    """Run the network, returning ``(logits, trace)``.

    ``masks`` holds one 0/1 array per hidden layer and is required when
    dropout is active. In eval mode batch norm uses the running statistics.
    """
    model.check_params(params)
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    t = params.tensors()
    spec = model.spec
    trace = Trace()
    h = tc.check_finite(tc.as_tensor(x, 2, "inputs"), "inputs")
    use_dropout = _dropout_active(model, mode)
    if use_dropout and (masks is None or len(masks) != spec.num_hidden):
        raise ValueError("dropout is active: supply one mask per hidden layer")
    for layer in range(spec.num_hidden):
        trace.inputs.append(h)
        z = tc.affine_forward(h, t[f"W{layer}"], t[f"b{layer}"])
        bn_cache = None
        if spec.batch_norm[layer]:
            stats = model.bn[layer]
            state = tc.BatchNormState(t[f"gamma{layer}"], t[f"beta{layer}"],
                                      stats.running_mean, stats.running_var)
            z, bn_cache = tc.batchnorm_forward(z, state, mode, update_stats)
            stats.running_mean, stats.running_var = state.running_mean, state.running_var
        trace.bn_caches.append(bn_cache)
        trace.pre_act.append(z)
        h = tc.relu_forward(z)
        if use_dropout:
            mask = np.asarray(masks[layer], dtype=np.float64)
            h = tc.dropout_forward(h, spec.dropout_rate, mask)
            trace.masks.append(mask)
        else:
            trace.masks.append(None)
    last = spec.num_hidden
    trace.inputs.append(h)
    logits = tc.affine_forward(h, t[f"W{last}"], t[f"b{last}"])
    tc.check_finite(logits, "logits")
    trace.complete = True
    return logits, trace


def backward(model: Model, params: ParameterVector, trace: Trace | None, dlogits: np.ndarray,
             loss: float = float("nan")) -> tc.GradientRecord:
    if trace is None or not trace.complete:
        raise TraceError("backward called before a completed forward pass")
    if trace.used:
        raise TraceError("forward trace already consumed")
    trace.used = True
    t = params.tensors()
    spec = model.spec
    grads: dict[str, np.ndarray] = {}
    last = spec.num_hidden
    dh, grads[f"W{last}"], grads[f"b{last}"] = tc.affine_backward(dlogits, trace.inputs[last], t[f"W{last}"])
    for layer in reversed(range(spec.num_hidden)):
        if trace.masks[layer] is not None:
            dh = tc.dropout_backward(dh, spec.dropout_rate, trace.masks[layer])
        dz = tc.relu_backward(dh, trace.pre_act[layer])
        if trace.bn_caches[layer] is not None:
            dz, grads[f"gamma{layer}"], grads[f"beta{layer}"] = tc.batchnorm_backward(dz, trace.bn_caches[layer])
        elif spec.batch_norm[layer]:
            raise TraceError("batch-norm gradients need a train-mode forward pass")
        dh, grads[f"W{layer}"], grads[f"b{layer}"] = tc.affine_backward(dz, trace.inputs[layer], t[f"W{layer}"])
    ordered = {e.name: grads[e.name] for e in model.layout}
    return tc.GradientRecord(ordered, loss)


def accuracy(logits: np.ndarray, labels) -> float:
    # argmax picks the lowest index on ties
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(labels)))


def loss_and_grad(model: Model, params: ParameterVector, x, y, masks=None, mode: str = "train",
                  update_stats: bool = True):
    """Minibatch loss, accuracy and gradient record ``(loss, acc, record)``."""
    logits, trace = forward(model, params, x, masks, mode, update_stats)
    loss, dlogits = tc.softmax_xent(logits, y)
    record = backward(model, params, trace, dlogits, loss)
    return loss, accuracy(logits, y), record


def flat_grad(params: ParameterVector, record: tc.GradientRecord) -> np.ndarray:
    return params.flatten_tensors(record.grads)


def predict(model: Model, params: ParameterVector, inputs) -> np.ndarray:
    """Eval-mode softmax probabilities, one row per example."""
    logits, _ = forward(model, params, inputs, mode="eval", update_stats=False)
    return tc.softmax(logits)


def norm(params: ParameterVector) -> float:
    return float(np.linalg.norm(params.data))


def distance(p: ParameterVector, q: ParameterVector) -> float:
    p.check_compatible(q)
    return float(np.linalg.norm(p.data - q.data))
