import gzip
import json
import math
import os

import numpy as np
import pytest

from losslab import emit
from losslab.checkpoint import MAGIC, checkpoint_bytes, load_checkpoint, make_checkpoint, parse_checkpoint, save_checkpoint
from losslab.config import RunConfig, load_config, load_data
from losslab.data import (IMAGES_MAGIC, LABELS_MAGIC, Dataset, load_mnist, mnist_available, parse_idx,
                          synth_dataset, synthetic_mnist_like)
from losslab.errors import FormatError, LayoutMismatchError
from losslab.landscape import SurfaceSample
from losslab.model import InitScheme, ModelSpec, build, fc2, initialize
from losslab.optim import EpochMetrics, OptimizerSpec, SwitchSchedule
from losslab.rng import Stream
from oracles import idx_bytes


def write_mnist(tmp_path, n=12, compress=False):
    r = np.random.default_rng(0)
    imgs = r.integers(0, 256, size=(n, 28, 28), dtype=np.uint8)
    labels = (np.arange(n) % 10).astype(np.uint8)
    for split, count in (("train", n), ("t10k", n // 2)):
        files = {f"{split}-images-idx3-ubyte": idx_bytes(IMAGES_MAGIC, (count, 28, 28), imgs[:count].tobytes()),
                 f"{split}-labels-idx1-ubyte": idx_bytes(LABELS_MAGIC, (count,), labels[:count].tobytes())}
        for name, raw in files.items():
            if compress:
                with gzip.open(tmp_path / (name + ".gz"), "wb") as fh:
                    fh.write(raw)
            else:
                (tmp_path / name).write_bytes(raw)
    return imgs, labels


@pytest.mark.parametrize("compress", [False, True])
def test_load_mnist_from_idx(tmp_path, compress):
    imgs, labels = write_mnist(tmp_path, compress=compress)
    ds = load_mnist(str(tmp_path), "train")
    assert ds.x.shape == (12, 784) and ds.x.max() <= 1.0
    assert np.array_equal(ds.x, imgs.reshape(12, -1) / 255.0)
    assert np.array_equal(ds.y, labels)
    sub = load_mnist(str(tmp_path), "train", subset=5)
    assert np.array_equal(sub.x, load_mnist(str(tmp_path), "train", subset=5).x) and len(sub) == 5
    assert len(load_mnist(str(tmp_path), "test")) == 6
    assert mnist_available(str(tmp_path)) and not mnist_available(str(tmp_path / "nope"))


def test_idx_errors_name_offset():
    with pytest.raises(FormatError, match="offset 0"):
        parse_idx(idx_bytes(0x0802, (1,), b"\x00"), LABELS_MAGIC)
    with pytest.raises(FormatError, match="offset"):
        parse_idx(idx_bytes(LABELS_MAGIC, (5,), b"\x00\x01"), LABELS_MAGIC)
    with pytest.raises(FormatError):
        parse_idx(b"\x00\x00", LABELS_MAGIC)


def test_image_label_count_mismatch(tmp_path):
    write_mnist(tmp_path)
    (tmp_path / "train-labels-idx1-ubyte").write_bytes(idx_bytes(LABELS_MAGIC, (3,), b"\x00\x01\x02"))
    with pytest.raises(FormatError, match="count"):
        load_mnist(str(tmp_path), "train")


def test_synth_blobs_are_linearly_separable():
    ds = synth_dataset(2, 50, 4, Stream(1, "data_synth"), separation=30.0, sigma=0.1)
    # centres sit at 3 e_0 and 3 e_1 with sigma 0.1; the projection onto e_0 - e_1 separates them
    score = ds.x[:, 0] - ds.x[:, 1]
    assert np.all((score > 0) == (ds.y == 0))
    again = synth_dataset(2, 50, 4, Stream(1, "data_synth"), separation=30.0, sigma=0.1)
    assert np.array_equal(ds.x, again.x)
    assert len(synth_dataset(3, 0, 4, Stream(1, "data_synth"))) == 0
    with pytest.raises(ValueError):
        synth_dataset(5, 2, 3, Stream(1, "data_synth"))


def test_synthetic_stand_in_shape_and_range():
    tr, te = synthetic_mnist_like(3, 200, 50)
    assert tr.x.shape == (200, 784) and te.x.shape == (50, 784)
    assert tr.x.min() == 0.0 and tr.x.max() == 1.0
    assert np.bincount(tr.y).tolist() == [20] * 10


def _checkpoint():
    model = build(ModelSpec((5, 4, 3), batch_norm=True))
    theta = initialize(model, InitScheme(), Stream(3, "init"))
    model.bn[0].running_mean = np.linspace(-1, 1, 4)
    model.bn[0].running_var = np.linspace(0.1, 3, 4)
    return model, make_checkpoint(model, theta, epoch=7, optimizer="adam7", seed=3, run_hash="abc",
                                  eval_loss=0.5, eval_acc=0.75)


def test_checkpoint_round_trip_bitwise(tmp_path):
    model, ck = _checkpoint()
    path = tmp_path / "c.lsck"
    save_checkpoint(ck, path)
    back = load_checkpoint(path, expect=model.spec)
    assert back.params.data.tobytes() == ck.params.data.tobytes()
    assert back.bn_stats[0].running_var.tobytes() == ck.bn_stats[0].running_var.tobytes()
    assert (back.epoch, back.optimizer, back.master_seed, back.eval_loss) == (7, "adam7", 3, 0.5)
    assert checkpoint_bytes(back) == path.read_bytes()


def test_checkpoint_tampering_detected():
    model, ck = _checkpoint()
    raw = checkpoint_bytes(ck)
    pos = raw.index(MAGIC) + len(MAGIC)
    bad_len = raw[:pos] + (999).to_bytes(8, "little") + raw[pos + 8:]
    with pytest.raises(FormatError, match="length"):
        parse_checkpoint(bad_len)
    with pytest.raises(FormatError):
        parse_checkpoint(raw.replace(MAGIC, b"XXXXXXXX"))
    with pytest.raises(FormatError):
        parse_checkpoint(raw[:-8])
    with pytest.raises(LayoutMismatchError):
        parse_checkpoint(raw, expect=ModelSpec((5, 4, 3), batch_norm=False))


def test_run_config_round_trip(tmp_path):
    cfg = RunConfig(model=fc2(), schedule=SwitchSchedule(((0, OptimizerSpec.default("adam")),
                                                          (10, OptimizerSpec.default("sgd")))))
    path = tmp_path / "run.json"
    cfg.save(path)
    back = load_config(path)
    assert back.canonical() == cfg.canonical() and back.config_hash == cfg.config_hash
    other = RunConfig(master_seed=1)
    assert other.config_hash != RunConfig().config_hash
    assert json.loads(cfg.canonical())["batch_size"] == 128


def test_load_data_fallback_and_errors(tmp_path):
    tr, te = load_data({"kind": "mnist", "path": str(tmp_path), "subset": 100, "test_subset": 20}, 5)
    assert tr.name == "synthetic-train" and len(tr) == 100
    with pytest.raises(FileNotFoundError):
        load_data({"kind": "mnist", "path": str(tmp_path), "fallback": False}, 5)
    with pytest.raises(ValueError):
        load_data({"kind": "cifar"}, 5)
    b, _ = load_data({"kind": "blobs", "subset": 40, "test_subset": 10, "dim": 12}, 5)
    assert b.x.shape == (40, 12)


def test_surface_and_series_emission(tmp_path):
    samples = [SurfaceSample(a, None, 0.1 * i, 0.5) for i, a in enumerate(np.linspace(0, 1, 101))]
    samples[50] = SurfaceSample(0.5, None, math.inf, math.nan)
    path = tmp_path / "s.csv"
    emit.emit_surface(samples, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 102 and lines[0] == emit.SURFACE_HEADER
    assert lines[51].split(",")[1] == "" and lines[51].split(",")[2] == "inf"
    rows = emit.read_surface(path)
    assert rows[3]["train_loss"] == samples[3].train_loss
    series = [EpochMetrics(1, 0.5, 0.9, 1.2, 3.4, "sgd", test_acc=0.8)]
    emit.emit_series(series, tmp_path / "series.csv")
    assert (tmp_path / "series.csv").read_text().splitlines() == [
        emit.SERIES_HEADER, "1,0.5,0.9,0.8,1.2,3.4,sgd"]
    emit.emit_surface(samples, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_bytes() == path.read_bytes()
