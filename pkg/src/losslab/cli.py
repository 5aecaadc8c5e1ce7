"""Command-line driver: ``losslab {train,sweep,basin,fdist,recipe}``.

Usage errors (bad flags, missing files) exit with status 2.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import emit, recipes
from .analysis import disagreement_rate, functional_distance
from .checkpoint import load_checkpoint, save_checkpoint
from .config import DEFAULT_SEED, load_config, load_data
from .errors import LossLabError
from .landscape import (InterpolationSpec, basin_alpha_grid, basin_profile_alpha, basin_profile_lambda,
                        path_length, sweep)
from .model import build, initialize
from .optim import run_schedule
from .rng import Stream

_VERTICES = {"linear": 2, "bilinear": 4, "barycentric": 3}


def _data_selector(spec: str | None) -> dict:
    """``--data``: a JSON selector, a JSON file, an MNIST directory, or a kind name."""
    if not spec:
        return {"kind": "mnist", "fallback": True}
    if spec.lstrip().startswith("{"):
        return json.loads(spec)
    if os.path.isfile(spec):
        with open(spec) as fh:
            return json.load(fh)
    if os.path.isdir(spec):
        return {"kind": "mnist", "path": spec, "fallback": False}
    return {"kind": spec}


def _load_ckpts(parser, paths):
    for p in paths:
        if not os.path.isfile(p):
            parser.error(f"checkpoint not found: {p}")
    ckpts = [load_checkpoint(p) for p in paths]
    for c in ckpts[1:]:
        if c.config_hash != ckpts[0].config_hash:
            parser.error("checkpoints come from different model specs")
    return ckpts


def _out(path):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def cmd_train(args, parser) -> int:
    if not os.path.isfile(args.config):
        parser.error(f"config not found: {args.config}")
    cfg = load_config(args.config)
    train, test = load_data(cfg.dataset, cfg.master_seed)
    model = build(cfg.model)
    theta0 = initialize(model, cfg.init, Stream(cfg.master_seed, "init"))
    result = run_schedule(model, theta0, cfg.schedule, cfg.total_epochs, train, cfg.master_seed,
                          cfg.batch_size, test=test, reset_on_switch=cfg.reset_on_switch,
                          eval_every=cfg.eval_every, run_hash=cfg.config_hash)
    os.makedirs(args.out, exist_ok=True)
    cfg.save(os.path.join(args.out, "config.json"))
    save_checkpoint(result.init_checkpoint, os.path.join(args.out, "init.lsck"))
    for ck in result.checkpoints:
        save_checkpoint(ck, os.path.join(args.out, f"epoch{ck.epoch:03d}.lsck"))
    emit.emit_series(result.series, os.path.join(args.out, "series.csv"))
    last = result.series[-1]
    print(f"trained {cfg.schedule.label(cfg.total_epochs)}: epoch {last.epoch} "
          f"train_acc={last.train_acc:.4f} train_loss={last.train_loss:.4f}")
    return 0


def cmd_sweep(args, parser) -> int:
    need = _VERTICES[args.mode]
    if len(args.ckpt) != need:
        parser.error(f"--mode {args.mode} needs {need} --ckpt values, got {len(args.ckpt)}")
    ckpts = _load_ckpts(parser, args.ckpt)
    seed = ckpts[0].master_seed
    train, test = load_data(_data_selector(args.data), seed)
    model = build(ckpts[0].model_spec)
    lo, hi = (args.alpha_range if args.alpha_range else (0.0, 1.0))
    spec = InterpolationSpec(args.mode, [c.params for c in ckpts], (lo, hi), resolution=args.grid)
    samples = sweep(spec, model, train, test=test if args.test else None)
    emit.emit_surface(samples, _out(args.out))
    print(f"wrote {len(samples)} points to {args.out}")
    return 0


def cmd_basin(args, parser) -> int:
    init, final = _load_ckpts(parser, [args.init, args.final])
    train, test = load_data(_data_selector(args.data), final.master_seed)
    model = build(final.model_spec)
    if args.profile == "alpha":
        samples = basin_profile_alpha(model, init.params, final.params, train, basin_alpha_grid())
    else:
        length = path_length(init.params, final.params)
        lams = np.unique(np.concatenate([np.linspace(0.0, length, args.points), [length]]))
        samples = basin_profile_lambda(model, init.params, final.params, train, lams)
    if args.out:
        emit.emit_surface(samples, _out(args.out))
    else:
        sys.stdout.write("\n".join(emit.surface_lines(samples)) + "\n")
    return 0


def cmd_fdist(args, parser) -> int:
    if len(args.ckpt) != 2:
        parser.error("fdist needs exactly two --ckpt values")
    a, b = _load_ckpts(parser, args.ckpt)
    train, test = load_data(_data_selector(args.data), a.master_seed)
    model = build(a.model_spec)
    evalset = train if args.split == "train" else test
    report = {
        "functional_distance": functional_distance(model, a.params, b.params, evalset, train=train),
        "disagreement_rate": disagreement_rate(model, a.params, b.params, evalset, train=train),
    }
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_recipe(args, parser) -> int:
    lab = recipes.Lab(seed=args.seed, mnist_path=args.mnist)
    out = args.out or os.path.join("runs", args.name)
    summary = recipes.run_recipe(args.name, out, lab)
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="losslab", description="Loss-surface experiments on small networks.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run a training schedule from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="evaluate loss on an interpolation grid between checkpoints")
    s.add_argument("--mode", choices=sorted(_VERTICES), required=True)
    s.add_argument("--ckpt", action="append", required=True, help="repeat once per vertex, in order")
    s.add_argument("--grid", type=int, default=None, help="points per axis (default 101 for 1-D, 25 for 2-D)")
    s.add_argument("--alpha-range", type=float, nargs=2, default=None)
    s.add_argument("--data", default=None)
    s.add_argument("--test", action="store_true", help="also record test loss/accuracy")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("basin", help="loss profile along the init/final line")
    b.add_argument("--init", required=True)
    b.add_argument("--final", required=True)
    b.add_argument("--profile", choices=("alpha", "lambda"), default="alpha")
    b.add_argument("--points", type=int, default=101)
    b.add_argument("--data", default=None)
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_basin)

    f = sub.add_parser("fdist", help="functional distance and disagreement between two checkpoints")
    f.add_argument("--ckpt", action="append", required=True)
    f.add_argument("--data", default=None)
    f.add_argument("--split", choices=("train", "test"), default="test")
    f.set_defaults(func=cmd_fdist)

    r = sub.add_parser("recipe", help="run a canned experiment end to end")
    r.add_argument("name", choices=sorted(recipes.RECIPES))
    r.add_argument("--out", default=None)
    r.add_argument("--mnist", default=None, help="directory holding the MNIST IDX files")
    r.add_argument("--seed", type=int, default=DEFAULT_SEED)
    r.set_defaults(func=cmd_recipe)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "grid", "unset") is None:
        args.grid = 101 if args.mode == "linear" else 25
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        return args.func(args, sub)
    except (LossLabError, ValueError, FileNotFoundError) as exc:
        print(f"losslab {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
