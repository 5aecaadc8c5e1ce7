"""Comparisons between trained solutions and summaries of training runs."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .landscape import FULL_PASS, BNRefreshPolicy, SurfaceSample, refresh_bn_stats
from .model import Model, ParameterVector, predict


@dataclass
class ComparisonReport:
    functional_distance: float
    disagreement_rate: float
    bump_height: float
    endpoint_losses: tuple[float, float]
    path_id: str = ""

    def __post_init__(self):
        if not 0.0 <= self.disagreement_rate <= 1.0:
            raise ValueError("disagreement_rate must lie in [0, 1]")
        if self.functional_distance < 0:
            raise ValueError("functional_distance must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["endpoint_losses"] = list(self.endpoint_losses)
        return d


def network_outputs(model: Model, theta: ParameterVector, data, train=None,
                    policy: BNRefreshPolicy | None = FULL_PASS) -> np.ndarray:
    """Softmax outputs on ``data`` after refreshing batch-norm statistics from ``train``."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    if policy is not None:
        refresh_bn_stats(model, theta, data if train is None else train, policy)
    return predict(model, theta, data.x)


def output_distance(p1: np.ndarray, p2: np.ndarray) -> float:
    """Root-mean-square over examples of the Euclidean distance between output rows."""
    if len(p1) == 0:
        raise ValueError("empty dataset")
    return float(np.sqrt(np.mean(np.sum((p1 - p2) ** 2, axis=1))))


def functional_distance(model: Model, theta1: ParameterVector, theta2: ParameterVector, data,
                        train=None, policy: BNRefreshPolicy | None = FULL_PASS) -> float:
    theta1.check_compatible(theta2)
    p1 = network_outputs(model, theta1, data, train, policy)
    p2 = network_outputs(model, theta2, data, train, policy)
    return output_distance(p1, p2)


def output_disagreement(p1: np.ndarray, p2: np.ndarray) -> float:
    if len(p1) == 0:
        raise ValueError("empty dataset")
    return float(np.mean(np.argmax(p1, axis=1) != np.argmax(p2, axis=1)))


def disagreement_rate(model: Model, theta1: ParameterVector, theta2: ParameterVector, data,
                      train=None, policy: BNRefreshPolicy | None = FULL_PASS) -> float:
    """Fraction of examples whose predicted labels differ (ties go to the lowest class)."""
    theta1.check_compatible(theta2)
    p1 = network_outputs(model, theta1, data, train, policy)
    p2 = network_outputs(model, theta2, data, train, policy)
    return output_disagreement(p1, p2)


def bump_statistic(samples: list[SurfaceSample]) -> dict:
    """Interior maximum loss minus the larger endpoint loss along a path.

    A positive value certifies a barrier between the endpoints within this slice.
    """
    if len(samples) < 3:
        raise ValueError("need at least 3 samples (two endpoints and an interior point)")
    losses = [s.train_loss for s in samples]
    ends = (losses[0], losses[-1])
    return {"bump_height": max(losses[1:-1]) - max(ends), "endpoint_losses": ends}


def compare(model: Model, theta1: ParameterVector, theta2: ParameterVector, data, path: list[SurfaceSample],
            train=None, path_id: str = "", policy: BNRefreshPolicy | None = FULL_PASS) -> ComparisonReport:
    p1 = network_outputs(model, theta1, data, train, policy)
    p2 = network_outputs(model, theta2, data, train, policy)
    bump = bump_statistic(path)
    return ComparisonReport(output_distance(p1, p2), output_disagreement(p1, p2),
                            bump["bump_height"], bump["endpoint_losses"], path_id)


@dataclass
class TrajectorySeries:
    epoch: np.ndarray
    distance_from_init: np.ndarray
    weight_norm: np.ndarray
    train_loss: np.ndarray
    train_acc: np.ndarray
    test_acc: np.ndarray
    optimizer: list[str]
    init_norm: float

    @property
    def norm_gap(self) -> np.ndarray:
        return np.abs(self.distance_from_init - self.weight_norm)

    def nearly_identical(self) -> bool:
        """Whether ``|distance - norm| <= ||theta_init||`` at every epoch (triangle inequality)."""
        return bool(np.all(self.norm_gap <= self.init_norm * (1 + 1e-12)))


def trajectory_series(metrics, init_norm: float | None = None) -> TrajectorySeries:
    """Align per-epoch training logs (as produced by ``run_schedule``) into arrays."""
    metrics = list(metrics)
    if init_norm is None:
        init_norm = metrics[0].weight_norm if metrics and metrics[0].epoch == 0 else float("nan")
    col = lambda name: np.array([getattr(m, name) for m in metrics], dtype=np.float64)  # noqa: E731
    test = np.array([np.nan if m.test_acc is None else m.test_acc for m in metrics], dtype=np.float64)
    return TrajectorySeries(
        epoch=np.array([m.epoch for m in metrics], dtype=np.int64),
        distance_from_init=col("dist_from_init"),
        weight_norm=col("weight_norm"),
        train_loss=col("train_loss"),
        train_acc=col("train_acc"),
        test_acc=test,
        optimizer=[m.optimizer for m in metrics],
        init_norm=float(init_norm),
    )
