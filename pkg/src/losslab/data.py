"""Datasets: MNIST from IDX files, and synthetic Gaussian blobs."""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .rng import Stream

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    num_classes: int
    name: str = ""

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or len(self.x) != len(self.y):
            raise ValueError(f"need x of shape (n, d) and n labels; got {self.x.shape}, {self.y.shape}")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def subset(self, n: int) -> "Dataset":
        """The first ``n`` examples."""
        return Dataset(self.x[:n], self.y[:n], self.num_classes, self.name)


def _read_bytes(path: str) -> bytes:
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as fh:
        return fh.read()


def parse_idx(raw: bytes, expected_magic: int, source: str = "<bytes>") -> np.ndarray:
    if len(raw) < 4:
        raise FormatError(f"{source}: truncated header at offset 0")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{source}: bad magic 0x{magic:08x} at offset 0, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise FormatError(f"{source}: truncated dimension header at offset 4")
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    count = int(np.prod(dims))
    if len(raw) - header_end < count:
        raise FormatError(f"{source}: truncated payload at offset {len(raw)}; "
                          f"need {count} bytes after offset {header_end}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header_end).reshape(dims)


def _find(directory: str, stem: str) -> str:
    for candidate in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
        path = os.path.join(directory, candidate)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"no {stem}[.gz] in {directory}")


def load_mnist(path: str, split: str = "train", subset: int | None = None) -> Dataset:
    """Load an MNIST split from a directory of IDX files, pixels scaled to [0, 1]."""
    img_stem, lbl_stem = MNIST_FILES[split]
    img_path, lbl_path = _find(path, img_stem), _find(path, lbl_stem)
    images = parse_idx(_read_bytes(img_path), IMAGES_MAGIC, img_path)
    labels = parse_idx(_read_bytes(lbl_path), LABELS_MAGIC, lbl_path)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"image count {images.shape[0]} != label count {labels.shape[0]}")
    if subset is not None:
        images, labels = images[:subset], labels[:subset]
    x = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return Dataset(x, labels.astype(np.int64), 10, f"mnist-{split}")


def mnist_available(path: str | None) -> bool:
    if not path:
        return False
    try:
        for stems in MNIST_FILES.values():
            for stem in stems:
                _find(path, stem)
    except FileNotFoundError:
        return False
    return True


def synth_dataset(classes: int, per_class: int, dim: int, stream: Stream,
                  separation: float = 6.0, sigma: float = 1.0) -> Dataset:
    """Isotropic Gaussian blobs; class ``k`` is centred at ``separation * sigma * e_k``.

    Labels cycle ``0, 1, ..., classes-1`` so every prefix is class-balanced.
    Noise is drawn from ``stream`` (normally the ``data_synth`` stream).
    """
    if dim < classes:
        raise ValueError("dim must be >= classes")
    n = classes * per_class
    y = np.arange(n, dtype=np.int64) % classes
    x = sigma * stream.gaussians(0, n * dim).reshape(n, dim)
    x[np.arange(n), y] += separation * sigma
    return Dataset(x, y, classes, f"synth-{classes}x{per_class}x{dim}")


def unit_range(train: Dataset, *others: Dataset) -> list[Dataset]:
    """Map features affinely into [0, 1] using the training set's global min and max."""
    lo, hi = float(train.x.min()), float(train.x.max())
    scale = 1.0 / (hi - lo)
    return [Dataset((d.x - lo) * scale, d.y, d.num_classes, d.name) for d in (train, *others)]


def synth_clusters(classes: int, per_class: int, dim: int, stream: Stream, clusters_per_class: int = 8,
                   latent_dim: int = 10, separation: float = 5.0, sigma: float = 1.0,
                   centers_stream: Stream | None = None) -> Dataset:
    """Several Gaussian clusters per class in a ``latent_dim`` subspace, embedded into ``dim``.

    Cluster centres are random, so classes are not linearly separable and a
    hidden layer is needed. ``centers_stream`` fixes the centres and the
    embedding; passing the same one for train and test gives two samples of
    one distribution. Cluster ``j`` belongs to class ``j % classes``.
    """
    centers_stream = stream if centers_stream is None else centers_stream
    n_clusters = classes * clusters_per_class
    centers = separation * sigma * centers_stream.gaussians(0, n_clusters * latent_dim).reshape(n_clusters, latent_dim)
    embed = centers_stream.child(1).gaussians(0, latent_dim * dim).reshape(latent_dim, dim) / np.sqrt(latent_dim)
    n = classes * per_class
    cluster = np.arange(n) % n_clusters
    z = centers[cluster] + sigma * stream.child(0).gaussians(0, n * latent_dim).reshape(n, latent_dim)
    return Dataset(z @ embed, cluster % classes, classes,
                   f"clusters-{classes}x{per_class}x{dim}")


def synthetic_mnist_like(seed: int, n_train: int = 10_000, n_test: int = 2_000, dim: int = 784,
                         classes: int = 10):
    """Stand-in for an MNIST subset when no IDX files are available.

    Non-negative ``dim``-feature inputs in [0, 1], balanced classes, and a
    problem a two-layer network solves to about 99.8% in 20 epochs but a
    linear model cannot.
    """
    centres = Stream(seed, "data_synth", (2,))
    train = synth_clusters(classes, n_train // classes, dim, Stream(seed, "data_synth", (3, 0)),
                           centers_stream=centres)
    test = synth_clusters(classes, n_test // classes, dim, Stream(seed, "data_synth", (3, 1)),
                          centers_stream=centres)
    train, test = unit_range(train, test)
    train.name, test.name = "synthetic-train", "synthetic-test"
    return train, test
