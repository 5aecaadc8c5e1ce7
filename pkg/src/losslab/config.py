"""Run configuration files and dataset selection."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

from .checkpoint import canonical_json
from .data import Dataset, load_mnist, mnist_available, synth_dataset, synthetic_mnist_like, unit_range
from .model import InitScheme, ModelSpec, fc2
from .optim import OptimizerSpec, SwitchSchedule
from .rng import Stream

DEFAULT_SEED = 20170403


@dataclass
class RunConfig:
    model: ModelSpec = field(default_factory=fc2)
    dataset: dict = field(default_factory=lambda: {"kind": "synthetic", "subset": 10_000, "test_subset": 2_000})
    init: InitScheme = field(default_factory=InitScheme)
    schedule: SwitchSchedule = field(default_factory=lambda: SwitchSchedule.single(OptimizerSpec.default("sgd")))
    total_epochs: int = 20
    batch_size: int = 128
    master_seed: int = DEFAULT_SEED
    eval_every: int = 1
    reset_on_switch: bool = True

    def __post_init__(self):
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "dataset": dict(self.dataset),
            "init": self.init.to_dict(),
            "schedule": self.schedule.to_list(),
            "total_epochs": self.total_epochs,
            "batch_size": self.batch_size,
            "master_seed": self.master_seed,
            "eval_every": self.eval_every,
            "reset_on_switch": self.reset_on_switch,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        base = cls()
        return cls(
            model=ModelSpec.from_dict(d["model"]) if "model" in d else base.model,
            dataset=dict(d.get("dataset", base.dataset)),
            init=InitScheme.from_dict(d["init"]) if "init" in d else base.init,
            schedule=SwitchSchedule.from_list(d["schedule"]) if "schedule" in d else base.schedule,
            total_epochs=int(d.get("total_epochs", base.total_epochs)),
            batch_size=int(d.get("batch_size", base.batch_size)),
            master_seed=int(d.get("master_seed", base.master_seed)),
            eval_every=int(d.get("eval_every", base.eval_every)),
            reset_on_switch=bool(d.get("reset_on_switch", base.reset_on_switch)),
        )

    def canonical(self) -> str:
        return canonical_json(self.to_dict())

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return RunConfig.from_dict(json.load(fh))


def load_data(selector: dict, seed: int) -> tuple[Dataset, Dataset]:
    """Resolve a dataset selector into ``(train, test)``.

    Kinds: ``mnist`` (``path`` to IDX files; falls back to ``synthetic`` when
    the files are missing and ``fallback`` is true), ``synthetic`` (the
    multi-cluster MNIST stand-in) and ``blobs`` (one Gaussian blob per class).
    ``subset``/``test_subset`` keep the first N examples.
    """
    kind = selector.get("kind", "synthetic")
    n_train = int(selector.get("subset", 10_000))
    n_test = int(selector.get("test_subset", 2_000))
    data_seed = int(selector.get("seed", seed))
    if kind == "mnist":
        path = selector.get("path") or os.environ.get("LOSSLAB_MNIST")
        if mnist_available(path):
            return load_mnist(path, "train", n_train), load_mnist(path, "test", n_test)
        if not selector.get("fallback", True):
            raise FileNotFoundError(f"MNIST IDX files not found at {path!r}")
        kind = "synthetic"
    if kind == "synthetic":
        return synthetic_mnist_like(data_seed, n_train, n_test, int(selector.get("dim", 784)),
                                    int(selector.get("classes", 10)))
    if kind == "blobs":
        classes = int(selector.get("classes", 10))
        dim = int(selector.get("dim", 784))
        kw = {k: float(selector[k]) for k in ("separation", "sigma") if k in selector}
        train = synth_dataset(classes, n_train // classes, dim, Stream(data_seed, "data_synth", (0,)), **kw)
        test = synth_dataset(classes, n_test // classes, dim, Stream(data_seed, "data_synth", (1,)), **kw)
        if selector.get("unit_range", True):
            train, test = unit_range(train, test)
        return train, test
    raise ValueError(f"unknown dataset kind {kind!r}")


def data_kind_used(selector: dict) -> str:
    if selector.get("kind") == "mnist":
        path = selector.get("path") or os.environ.get("LOSSLAB_MNIST")
        return "mnist" if mnist_available(path) else "synthetic"
    return selector.get("kind", "synthetic")
