"""Canned desk-scale experiments, each writing a self-contained output tree.

=============  ==========================================================
recipe         experiment
=============  ==========================================================
bump-fc2       loss along the segments between final points of four optimizers
switch-fc2     Adam -> SGD switch half way through training
basin-fc2      init -> final profiles, in alpha and in absolute distance
exotic-init    N(-10, 0.01) initialisation with and without batch norm
surface-fc2    2-D barycentric / bilinear surfaces
rk2-order      convergence order of the RK2 integrators on dtheta/dt = -theta
=============  ==========================================================

All recipes run FC2 [784, 50, 10] with batch norm on a 10 000-example
MNIST subset when IDX files are available (``mnist_path`` or the
``LOSSLAB_MNIST`` environment variable) and on the synthetic stand-in
otherwise. Every optimizer run shares the initial weights, the minibatch
order and the dropout masks.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import analysis, emit
from .checkpoint import canonical_json, save_checkpoint
from .config import DEFAULT_SEED, RunConfig, data_kind_used, load_data
from .landscape import (InterpolationSpec, basin_alpha_grid, basin_profile_alpha, basin_profile_lambda,
                        evaluate_point, path_length, sweep)
from .model import InitScheme, build, fc2, initialize
from .optim import OptimizerSpec, SwitchSchedule, run_schedule
from .rng import Stream

BUMP_OPTIMIZERS = {
    "sgd": OptimizerSpec.default("sgd", eta=0.1),
    "sgdm": OptimizerSpec.default("sgdm", eta=0.1),
    "rmsprop": OptimizerSpec.default("rmsprop", eta=1e-3),
    "adam": OptimizerSpec.default("adam", eta=1e-3),
}

EPOCHS = 20
SUBSET = 10_000
TEST_SUBSET = 2_000

# pass thresholds: (MNIST, synthetic fallback)
TRAIN_ACC_MIN = {"mnist": 0.95, "synthetic": 0.99}
BUMP_MIN = {"mnist": 0.5, "synthetic": 0.3}


@dataclass
class Lab:
    """Shared experimental setting; ``cache`` memoises training runs in-process."""

    seed: int = DEFAULT_SEED
    mnist_path: str | None = None
    epochs: int = EPOCHS
    subset: int = SUBSET
    test_subset: int = TEST_SUBSET
    cache: dict | None = None
    _data: tuple | None = field(default=None, repr=False)

    @property
    def selector(self) -> dict:
        return {"kind": "mnist", "path": self.mnist_path, "subset": self.subset,
                "test_subset": self.test_subset, "fallback": True}

    @property
    def data_kind(self) -> str:
        return data_kind_used(self.selector)

    def data(self):
        if self._data is None:
            self._data = load_data(self.selector, self.seed)
        return self._data

    def config(self, schedule: SwitchSchedule, batch_norm: bool = True,
               init: InitScheme | None = None) -> RunConfig:
        train, _ = self.data()
        return RunConfig(model=fc2(train.dim, 50, train.num_classes, batch_norm), dataset=self.selector,
                         init=init or InitScheme(), schedule=schedule, total_epochs=self.epochs,
                         master_seed=self.seed, eval_every=self.epochs)

    def run(self, cfg: RunConfig):
        key = cfg.canonical()
        if self.cache is not None and key in self.cache:
            return self.cache[key]
        train, test = self.data()
        model = build(cfg.model)
        theta0 = initialize(model, cfg.init, Stream(cfg.master_seed, "init"))
        result = run_schedule(model, theta0, cfg.schedule, cfg.total_epochs, train, cfg.master_seed,
                              cfg.batch_size, test=test, reset_on_switch=cfg.reset_on_switch,
                              eval_every=cfg.eval_every, run_hash=cfg.config_hash)
        out = (model, result)
        if self.cache is not None:
            self.cache[key] = out
        return out


def _mkdir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _write_json(obj, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n")


def _save_run(out_dir, name, cfg, result):
    run_dir = _mkdir(os.path.join(out_dir, "runs", name))
    cfg.save(os.path.join(run_dir, "config.json"))
    emit.emit_series(result.series, os.path.join(run_dir, "series.csv"))
    save_checkpoint(result.init_checkpoint, os.path.join(run_dir, "init.lsck"))
    for ck in result.checkpoints:
        save_checkpoint(ck, os.path.join(run_dir, f"epoch{ck.epoch:03d}.lsck"))


def _single(spec):
    return SwitchSchedule.single(spec)


# --- bump ----------------------------------------------------------------

def bump_fc2(out_dir: str, lab: Lab | None = None, resolution: int = 101) -> dict:
    lab = lab or Lab()
    train, test = lab.data()
    kind = lab.data_kind
    runs = {}
    for name, spec in BUMP_OPTIMIZERS.items():
        cfg = lab.config(_single(spec))
        model, result = lab.run(cfg)
        runs[name] = (cfg, model, result)
        _save_run(out_dir, name, cfg, result)
    surf_dir = _mkdir(os.path.join(out_dir, "surfaces"))
    names = list(runs)
    reports, bumps = [], {}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            model = runs[a][1].clone()
            fa, fb = runs[a][2].final, runs[b][2].final
            spec = InterpolationSpec("linear", [fa, fb], (0.0, 1.0), resolution=resolution)
            samples = sweep(spec, model, train)
            path_id = f"{a}<->{b}"
            emit.emit_surface(samples, os.path.join(surf_dir, f"{a}__{b}.csv"))
            report = analysis.compare(model, fa, fb, test, samples, train=train, path_id=path_id)
            reports.append(report)
            bumps[path_id] = report.bump_height
    emit.emit_report(reports, os.path.join(out_dir, "reports.json"))
    final_acc = {n: runs[n][2].checkpoints[-1].eval_acc for n in names}
    acc_min, bump_min = TRAIN_ACC_MIN[kind], BUMP_MIN[kind]
    summary = {
        "recipe": "bump-fc2",
        "data": kind,
        "train_acc": final_acc,
        "bump_height": bumps,
        "functional_distance": {r.path_id: r.functional_distance for r in reports},
        "disagreement_rate": {r.path_id: r.disagreement_rate for r in reports},
        "thresholds": {"train_acc": acc_min, "bump_height": bump_min, "pairs_required": 4},
        "pass_train_acc": all(v >= acc_min for v in final_acc.values()),
        "pairs_with_bump": sum(v >= bump_min for v in bumps.values()),
    }
    summary["pass_bump"] = summary["pairs_with_bump"] >= 4
    _write_json(summary, os.path.join(out_dir, "summary.json"))
    return summary


# --- switch ----------------------------------------------------------------

def switch_fc2(out_dir: str, lab: Lab | None = None, switch_epoch: int | None = None,
               resolution: int = 101) -> dict:
    lab = lab or Lab()
    train, _ = lab.data()
    switch_epoch = lab.epochs // 2 if switch_epoch is None else switch_epoch
    adam, sgd = BUMP_OPTIMIZERS["adam"], BUMP_OPTIMIZERS["sgd"]
    plans = {
        "adam": _single(adam),
        "sgd": _single(sgd),
        "adam-sgd": SwitchSchedule(((0, adam), (switch_epoch, sgd))),
    }
    runs = {}
    for name, schedule in plans.items():
        cfg = lab.config(schedule)
        runs[name] = lab.run(cfg)
        _save_run(out_dir, name, cfg, runs[name][1])
    switched, pure_sgd, pure_adam = runs["adam-sgd"][1], runs["sgd"][1], runs["adam"][1]
    gaps = {}
    for e in range(switch_epoch + 1, min(switch_epoch + 3, lab.epochs) + 1):
        gaps[e] = abs(switched.series[e].train_acc - pure_sgd.series[e].train_acc)
    model = runs["adam-sgd"][0].clone()
    spec = InterpolationSpec("linear", [switched.final, pure_adam.final], (0.0, 1.0), resolution=resolution)
    samples = sweep(spec, model, train)
    emit.emit_surface(samples, os.path.join(_mkdir(os.path.join(out_dir, "surfaces")), "adam-sgd__adam.csv"))
    bump = analysis.bump_statistic(samples)["bump_height"]
    dist = {n: [m.dist_from_init for m in r[1].series] for n, r in runs.items()}
    summary = {
        "recipe": "switch-fc2",
        "data": lab.data_kind,
        "switch_epoch": switch_epoch,
        "post_switch_acc_gap": {str(k): v for k, v in gaps.items()},
        "pass_catch_up": any(v <= 0.02 for v in gaps.values()),
        "bump_height": bump,
        "pass_bump": bump > 0,
        "distance_from_init": dist,
        "distance_decreases_after_switch": bool(
            switched.series[switch_epoch + 1].dist_from_init < switched.series[switch_epoch].dist_from_init),
    }
    _write_json(summary, os.path.join(out_dir, "summary.json"))
    return summary


# --- basin -----------------------------------------------------------------

def basin_fc2(out_dir: str, lab: Lab | None = None, lambda_points: int = 101) -> dict:
    lab = lab or Lab()
    train, _ = lab.data()
    prof_dir = _mkdir(os.path.join(out_dir, "profiles"))
    runs = {name: lab.run(lab.config(_single(spec))) for name, spec in BUMP_OPTIMIZERS.items()}
    lengths = {n: path_length(r[1].init, r[1].final) for n, r in runs.items()}
    common = np.linspace(0.0, max(lengths.values()), lambda_points)
    alphas = basin_alpha_grid()
    out = {"recipe": "basin-fc2", "data": lab.data_kind, "runs": {}}
    ln_c = math.log(train.num_classes)
    for name, (model, result) in runs.items():
        model = model.clone()
        init, final = result.init, result.final
        a_prof = basin_profile_alpha(model, init, final, train, alphas)
        lam_grid = np.unique(np.concatenate([common, [0.0, lengths[name]]]))
        l_prof = basin_profile_lambda(model, init, final, train, lam_grid)
        emit.emit_surface(a_prof, os.path.join(prof_dir, f"{name}_alpha.csv"))
        emit.emit_surface(l_prof, os.path.join(prof_dir, f"{name}_lambda.csv"))
        losses = np.array([s.train_loss for s in a_prof])
        alpha_min = float(alphas[int(np.argmin(losses))])
        at0 = a_prof[int(np.flatnonzero(alphas == 0.0)[0])].train_loss
        at1 = a_prof[int(np.flatnonzero(alphas == 1.0)[0])].train_loss
        at2 = a_prof[int(np.flatnonzero(alphas == 2.0)[0])].train_loss
        direct_final = evaluate_point(model, final, train)
        direct_init = evaluate_point(model, init, train)
        lam0 = l_prof[int(np.flatnonzero(lam_grid == 0.0)[0])]
        lam_end = l_prof[int(np.flatnonzero(lam_grid == lengths[name])[0])]
        out["runs"][name] = {
            "alpha_of_min": alpha_min,
            "loss_alpha0": at0,
            "loss_alpha1": at1,
            "loss_alpha2": at2,
            "distance_init_final": lengths[name],
            "lambda0_is_final": lam0.train_loss == direct_final.train_loss,
            "lambda_end_is_init": lam_end.train_loss == direct_init.train_loss,
            "pass": (0.9 <= alpha_min <= 1.1 and abs(at0 - ln_c) <= 0.2
                     and lam0.train_loss == direct_final.train_loss
                     and lam_end.train_loss == direct_init.train_loss),
        }
    out["pass"] = all(r["pass"] for r in out["runs"].values())
    _write_json(out, os.path.join(out_dir, "summary.json"))
    return out


# --- exotic initialisation ----------------------------------------------------

EXOTIC_INIT = InitScheme("gaussian", -10.0, 0.01)


def exotic_init(out_dir: str, lab: Lab | None = None, optimizers=("sgd", "adam")) -> dict:
    """Train from N(-10, 0.01) with and without batch norm.

    The first optimizer listed (SGD by default) decides pass/fail; the
    others are reported alongside.
    """
    lab = lab or Lab()
    train, _ = lab.data()
    chance = 1.0 / train.num_classes
    out = {"recipe": "exotic-init", "data": lab.data_kind, "chance": chance, "runs": {}}
    for opt in optimizers:
        for bn in (False, True):
            cfg = lab.config(_single(BUMP_OPTIMIZERS[opt]), batch_norm=bn, init=EXOTIC_INIT)
            _, result = lab.run(cfg)
            name = f"{opt}-{'bn' if bn else 'nobn'}"
            _save_run(out_dir, name, cfg, result)
            start, end = result.init_checkpoint.eval_acc, result.checkpoints[-1].eval_acc
            out["runs"][name] = {"initial_train_acc": start, "final_train_acc": end,
                                 "improvement": end - start}
    lead = optimizers[0]
    nobn, bn = out["runs"][f"{lead}-nobn"], out["runs"][f"{lead}-bn"]
    out["pass_no_bn_at_chance"] = abs(nobn["final_train_acc"] - chance) <= 0.01
    out["pass_bn_improves"] = bn["improvement"] >= 0.10
    _write_json(out, os.path.join(out_dir, "summary.json"))
    return out


# --- 2-D surfaces ------------------------------------------------------------

def surface_fc2(out_dir: str, lab: Lab | None = None, resolution: int = 25) -> dict:
    lab = lab or Lab()
    train, _ = lab.data()
    finals = {}
    model = None
    for name, spec in BUMP_OPTIMIZERS.items():
        model, result = lab.run(lab.config(_single(spec)))
        finals[name] = result.final
        init = result.init
    model = model.clone()
    surf_dir = _mkdir(os.path.join(out_dir, "surfaces"))
    tri = InterpolationSpec("barycentric", [init, finals["sgd"], finals["adam"]], resolution=resolution)
    quad = InterpolationSpec("bilinear", [finals["sgd"], finals["sgdm"], finals["rmsprop"], finals["adam"]],
                             resolution=resolution)
    out = {"recipe": "surface-fc2", "data": lab.data_kind, "resolution": resolution}
    for label, spec in (("barycentric_init_sgd_adam", tri), ("bilinear_sgd_sgdm_rmsprop_adam", quad)):
        samples = sweep(spec, model, train)
        emit.emit_surface(samples, os.path.join(surf_dir, f"{label}.csv"))
        losses = [s.train_loss for s in samples]
        out[label] = {"min_loss": min(losses), "max_loss": max(losses),
                      "diverged_points": sum(s.diverged for s in samples)}
    _write_json(out, os.path.join(out_dir, "summary.json"))
    return out


# --- RK2 order ---------------------------------------------------------------

def rk2_order_table(hs=(0.1, 0.05), t_end: float = 1.0) -> dict:
    """Global error at ``t_end`` integrating dtheta/dt = -theta from 1, per method and step."""
    from .optim import OptimizerSpec as Spec, apply_step, init_state, rk2_vector_field, vector_field

    table = {}
    methods = {"euler": None, "midpoint": "midpoint", "heun": "heun", "ralston": "ralston"}
    for label, method in methods.items():
        errs = []
        for h in hs:
            spec = Spec("sgd", eta=h)
            if method:
                spec = spec.with_rk2(method, double_eta=False)
            state = init_state(spec, 1)
            theta = np.array([1.0])
            for _ in range(int(round(t_end / h))):
                if method:
                    x = rk2_vector_field(spec, state, theta, lambda th: th)
                else:
                    x = vector_field(spec, state, theta)
                theta = apply_step(theta, x, spec.step_size)
            errs.append(abs(float(theta[0]) - math.exp(-t_end)))
        table[label] = {"errors": errs, "ratio": errs[0] / errs[1]}
    return table


def rk2_order(out_dir: str, lab: Lab | None = None) -> dict:
    table = rk2_order_table()
    out = {"recipe": "rk2-order", "methods": table,
           "pass": all((1.8 <= v["ratio"] <= 2.2) if k == "euler" else (3.5 <= v["ratio"] <= 4.5)
                       for k, v in table.items())}
    _write_json(out, os.path.join(out_dir, "summary.json"))
    return out


RECIPES = {
    "bump-fc2": bump_fc2,
    "switch-fc2": switch_fc2,
    "basin-fc2": basin_fc2,
    "exotic-init": exotic_init,
    "surface-fc2": surface_fc2,
    "rk2-order": rk2_order,
}


def run_recipe(name: str, out_dir: str, lab: Lab | None = None) -> dict:
    if name not in RECIPES:
        raise KeyError(f"unknown recipe {name!r}; choose from {sorted(RECIPES)}")
    _mkdir(out_dir)
    return RECIPES[name](out_dir, lab)


def describe(lab: Lab) -> str:
    return canonical_json({"seed": lab.seed, "data": lab.data_kind, "epochs": lab.epochs})
