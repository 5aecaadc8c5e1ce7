"""Bit-exact checkpoint files.

Layout::

    <header: one line of canonical JSON, UTF-8> b"\\n"
    b"LSCHKPT1"                       8-byte magic
    <uint64 little-endian>            number of float64 values that follow
    <float64 little-endian> * count   parameter payload in layout order

Header floats are written with ``repr`` precision, so batch-norm statistics
survive the round trip exactly.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, LayoutMismatchError
from .model import BNStats, LayoutEntry, Model, ModelSpec, ParameterVector

MAGIC = b"LSCHKPT1"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    params: ParameterVector
    model_spec: ModelSpec
    bn_stats: dict[int, BNStats] = field(default_factory=dict)
    epoch: int = 0
    optimizer: str = ""
    master_seed: int = 0
    run_hash: str = ""
    eval_loss: float | None = None
    eval_acc: float | None = None

    @property
    def config_hash(self) -> str:
        return self.params.config_hash

    def install(self, model: Model) -> ParameterVector:
        """Load the stored batch-norm statistics into ``model``; returns the parameters."""
        model.check_params(self.params)
        model.set_bn_stats(self.bn_stats)
        return self.params


def make_checkpoint(model: Model, params: ParameterVector, epoch: int = 0, optimizer: str = "",
                    seed: int = 0, run_hash: str = "", eval_loss=None, eval_acc=None) -> Checkpoint:
    model.check_params(params)
    return Checkpoint(params.copy(), model.spec, model.get_bn_stats(), epoch, optimizer, seed,
                      run_hash, eval_loss, eval_acc)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def _header(ckpt: Checkpoint) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "config_hash": ckpt.config_hash,
        "model_spec": ckpt.model_spec.to_dict(),
        "optimizer": ckpt.optimizer,
        "epoch": ckpt.epoch,
        "master_seed": ckpt.master_seed,
        "run_hash": ckpt.run_hash,
        "param_count": len(ckpt.params),
        "layout": [[e.name, list(e.shape), e.offset] for e in ckpt.params.layout],
        "bn_stats": {str(k): {"running_mean": [float(v) for v in s.running_mean],
                              "running_var": [float(v) for v in s.running_var]}
                     for k, s in sorted(ckpt.bn_stats.items())},
        "eval_loss": ckpt.eval_loss,
        "eval_acc": ckpt.eval_acc,
    }


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    header = canonical_json(_header(ckpt)).encode("utf-8")
    payload = ckpt.params.data.astype("<f8").tobytes()
    return header + b"\n" + MAGIC + struct.pack("<Q", len(ckpt.params)) + payload


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(ckpt))


def parse_checkpoint(raw: bytes, expect: ModelSpec | str | None = None, source: str = "<bytes>") -> Checkpoint:
    nl = raw.find(b"\n")
    if nl < 0:
        raise FormatError(f"{source}: missing header terminator")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{source}: unreadable header: {exc}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{source}: unsupported format version {header.get('format_version')}")
    body = raw[nl + 1:]
    if body[:8] != MAGIC:
        raise FormatError(f"{source}: bad payload magic {body[:8]!r}")
    if len(body) < 16:
        raise FormatError(f"{source}: truncated payload length field")
    (count,) = struct.unpack("<Q", body[8:16])
    payload = body[16:]
    if count != header["param_count"] or len(payload) != 8 * count:
        raise FormatError(f"{source}: length mismatch: field says {count}, header says "
                          f"{header['param_count']}, payload holds {len(payload) / 8:g} values")
    spec = ModelSpec.from_dict(header["model_spec"])
    if spec.config_hash != header["config_hash"]:
        raise LayoutMismatchError(f"{source}: header config_hash does not match its model spec")
    if expect is not None:
        want = expect if isinstance(expect, str) else expect.config_hash
        if want != header["config_hash"]:
            raise LayoutMismatchError(f"{source}: checkpoint is for config {header['config_hash']}, "
                                      f"expected {want}")
    layout = tuple(LayoutEntry(name, tuple(shape), offset) for name, shape, offset in header["layout"])
    if layout != Model(spec).layout:
        raise LayoutMismatchError(f"{source}: layout table disagrees with the model spec")
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    params = ParameterVector(data, layout, header["config_hash"])
    bn = {int(k): BNStats(np.array(v["running_mean"], dtype=np.float64),
                          np.array(v["running_var"], dtype=np.float64))
          for k, v in header["bn_stats"].items()}
    return Checkpoint(params, spec, bn, header["epoch"], header["optimizer"], header["master_seed"],
                      header["run_hash"], header["eval_loss"], header["eval_acc"])


def load_checkpoint(path, expect: ModelSpec | str | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    return parse_checkpoint(raw, expect, str(path))
