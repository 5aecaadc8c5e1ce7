import json
import subprocess
import sys

import pytest

from losslab.cli import main
from losslab.config import RunConfig
from losslab.model import ModelSpec
from losslab.optim import OptimizerSpec, SwitchSchedule

DATA = {"kind": "blobs", "subset": 60, "test_subset": 30, "dim": 8, "classes": 3}


@pytest.fixture
def trained_dir(tmp_path):
    cfg = RunConfig(model=ModelSpec((8, 6, 3), batch_norm=True), dataset=DATA,
                    schedule=SwitchSchedule(((0, OptimizerSpec.default("adam")), (2, OptimizerSpec.default("sgd")))),
                    total_epochs=3, batch_size=16, master_seed=4)
    cfg.save(tmp_path / "run.json")
    out = tmp_path / "run"
    assert main(["train", "--config", str(tmp_path / "run.json"), "--out", str(out)]) == 0
    return tmp_path, out


def test_train_writes_checkpoints_and_series(trained_dir):
    _, out = trained_dir
    names = sorted(p.name for p in out.iterdir())
    assert names == ["config.json", "epoch002.lsck", "epoch003.lsck", "init.lsck", "series.csv"]
    assert len((out / "series.csv").read_text().splitlines()) == 5


def test_train_is_byte_deterministic(trained_dir):
    tmp, out = trained_dir
    again = tmp / "again"
    main(["train", "--config", str(tmp / "run.json"), "--out", str(again)])
    for p in out.iterdir():
        assert (again / p.name).read_bytes() == p.read_bytes()


def test_sweep_basin_fdist(trained_dir, capsys):
    tmp, out = trained_dir
    data = json.dumps(DATA)
    a, b, i = str(out / "epoch002.lsck"), str(out / "epoch003.lsck"), str(out / "init.lsck")
    assert main(["sweep", "--mode", "linear", "--ckpt", a, "--ckpt", b, "--grid", "7",
                 "--data", data, "--out", str(tmp / "s.csv")]) == 0
    assert len((tmp / "s.csv").read_text().splitlines()) == 8
    assert main(["sweep", "--mode", "barycentric", "--ckpt", i, "--ckpt", a, "--ckpt", b, "--grid", "3",
                 "--data", data, "--out", str(tmp / "tri.csv")]) == 0
    assert len((tmp / "tri.csv").read_text().splitlines()) == 10
    assert main(["basin", "--init", i, "--final", b, "--profile", "lambda", "--points", "5",
                 "--data", data, "--out", str(tmp / "lam.csv")]) == 0
    assert main(["basin", "--init", i, "--final", b, "--data", data]) == 0
    capsys.readouterr()
    assert main(["fdist", "--ckpt", a, "--ckpt", b, "--data", data]) == 0
    report = json.loads(capsys.readouterr().out)
    assert 0 <= report["disagreement_rate"] <= 1 and report["functional_distance"] >= 0


def test_wrong_vertex_count_is_usage_error(trained_dir):
    _, out = trained_dir
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--mode", "bilinear", "--ckpt", str(out / "init.lsck"), "--out", "x.csv"])
    assert exc.value.code == 2


def test_missing_checkpoint_exits_2_with_usage():
    proc = subprocess.run([sys.executable, "-m", "losslab", "fdist", "--ckpt", "/no/such.lsck",
                           "--ckpt", "/no/other.lsck"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "usage:" in proc.stderr and "not found" in proc.stderr


def test_recipe_rk2_order(tmp_path, capsys):
    assert main(["recipe", "rk2-order", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["pass"] is True


def test_unknown_recipe_rejected():
    with pytest.raises(SystemExit) as exc:
        main(["recipe", "nope"])
    assert exc.value.code == 2
