"""Recipes on a tiny budget: the plumbing, not the science."""
import json

import pytest

from losslab import recipes


@pytest.fixture(scope="module")
def tiny_lab():
    return recipes.Lab(epochs=2, subset=200, test_subset=50, cache={})


@pytest.mark.parametrize("name", ["bump-fc2", "switch-fc2", "exotic-init"])
def test_recipe_writes_tree(name, tiny_lab, tmp_path):
    summary = recipes.run_recipe(name, str(tmp_path), tiny_lab)
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["recipe"] == name == summary["recipe"]
    assert on_disk["data"] == "synthetic"
    assert (tmp_path / "runs").is_dir()


def test_bump_tree_contents(tiny_lab, tmp_path):
    recipes.bump_fc2(str(tmp_path), tiny_lab, resolution=5)
    surfaces = sorted(p.name for p in (tmp_path / "surfaces").iterdir())
    assert len(surfaces) == 6 and "sgd__adam.csv" in surfaces
    assert len((tmp_path / "surfaces" / "sgd__adam.csv").read_text().splitlines()) == 6
    reports = json.loads((tmp_path / "reports.json").read_text())
    assert {r["path_id"] for r in reports} >= {"sgd<->adam", "rmsprop<->adam"}
    run = tmp_path / "runs" / "adam"
    assert sorted(p.name for p in run.iterdir()) == ["config.json", "epoch002.lsck", "init.lsck", "series.csv"]


def test_basin_and_surface_small(tiny_lab, tmp_path):
    basin = recipes.basin_fc2(str(tmp_path / "b"), tiny_lab, lambda_points=5)
    assert all(r["lambda0_is_final"] and r["lambda_end_is_init"] for r in basin["runs"].values())
    surf = recipes.surface_fc2(str(tmp_path / "s"), tiny_lab, resolution=3)
    assert surf["barycentric_init_sgd_adam"]["diverged_points"] == 0


def test_cache_reuses_runs(tiny_lab):
    cfg = tiny_lab.config(recipes.SwitchSchedule.single(recipes.BUMP_OPTIMIZERS["sgd"]))
    assert tiny_lab.run(cfg) is tiny_lab.run(cfg)


def test_unknown_recipe():
    with pytest.raises(KeyError):
        recipes.run_recipe("nope", "/tmp/x")
