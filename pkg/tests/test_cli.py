import csv
import json

import numpy as np
import pytest

from conftest import write_idx_pair
from flsched.cli import METRICS_COLUMNS, main

BASE_CONFIG = {
    "k_clients": 10,
    "rounds": 3,
    "master_seed": 5,
    "policy": "aou_or_ds",
    "channel": {"p": 0.7, "n_subchannels": 3},
    "dataset": {"kind": "synthetic", "classes": 3, "dim": 6, "n": 200,
                "separation": 3.0, "test_fraction": 0.1},
    "learner": {"arch": "softmax"},
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(BASE_CONFIG))
    return path


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_validate_config_ok(config_path, capsys):
    assert main(["validate-config", "--config", str(config_path)]) == 0
    assert "ok" in capsys.readouterr().out


def test_shipped_configs_validate():
    import pathlib

    configs = sorted((pathlib.Path(__file__).parent.parent / "configs").glob("*.json"))
    assert configs, "no shipped configs found"
    for path in configs:
        assert main(["validate-config", "--config", str(path)]) == 0, path


def test_validate_config_reports_bad_override(config_path, capsys):
    code = main(["validate-config", "--config", str(config_path), "--set", "channel.p=1.5"])
    assert code == 2
    err = capsys.readouterr().err
    assert "channel.p" in err and "[0, 1]" in err


def test_unknown_override_key_rejected(config_path, capsys):
    code = main(["validate-config", "--config", str(config_path), "--set", "channel.bogus=1"])
    assert code == 2
    assert "channel.bogus" in capsys.readouterr().err


def test_unknown_config_key_rejected(tmp_path, capsys):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({**BASE_CONFIG, "typo_key": 1}))
    assert main(["validate-config", "--config", str(path)]) == 2
    assert "typo_key" in capsys.readouterr().err


def test_run_writes_expected_rows(config_path, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", str(config_path), "--out", str(out), "--no-plot"]) == 0
    rows = read_rows(out / "metrics.csv")
    assert len(rows) == 3
    assert tuple(rows[0].keys()) == METRICS_COLUMNS
    assert (out / "config.resolved.json").exists()


def test_metrics_rows_roundtrip(config_path, tmp_path):
    from flsched.config import resolve
    from flsched.simulator import run as sim_run

    out = tmp_path / "out"
    main(["run", "--config", str(config_path), "--out", str(out), "--no-plot"])
    cfg, _ = resolve(json.loads(config_path.read_text()))
    records = {r.round: r for r in sim_run(cfg)}
    for row in read_rows(out / "metrics.csv"):
        record = records[int(row["round"])]
        assert float(row["accuracy"]) == record.accuracy
        assert float(row["loss"]) == record.loss
        assert float(row["v"]) == record.v
        assert int(row["n_reliable"]) == record.n_reliable
        assert int(row["n_selected"]) == len(record.selected)
        assert float(row["mean_aou"]) == record.mean_aou
        assert float(row["max_aou"]) == record.max_aou


def test_resolved_config_reproduces_run(config_path, tmp_path):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    main(["run", "--config", str(config_path), "--out", str(out1), "--no-plot"])
    main(["run", "--config", str(out1 / "config.resolved.json"), "--out", str(out2), "--no-plot"])
    assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()


def test_thread_env_does_not_change_bytes(config_path, tmp_path, monkeypatch):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    monkeypatch.setenv("FLSCHED_THREADS", "1")
    main(["run", "--config", str(config_path), "--out", str(out1), "--no-plot"])
    monkeypatch.setenv("FLSCHED_THREADS", "4")
    main(["run", "--config", str(config_path), "--out", str(out2), "--no-plot"])
    assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()


def test_sweep_grid_and_plot(config_path, tmp_path):
    out = tmp_path / "sw"
    code = main([
        "sweep", "--config", str(config_path), "--out", str(out),
        "--policies", "aou,random", "--seeds", "1,2,3",
    ])
    assert code == 0
    rows = read_rows(out / "metrics.csv")
    assert len(rows) == 2 * 3 * 3
    svg = (out / "accuracy.svg").read_text()
    assert svg.count('id="policy-') == 2
    assert svg.count('id="band-') == 2


def test_plot_deterministic_bytes(config_path, tmp_path):
    out = tmp_path / "sw"
    main(["sweep", "--config", str(config_path), "--out", str(out),
          "--policies", "aou", "--seeds", "1,2", "--no-plot"])
    a = tmp_path / "a.svg"
    b = tmp_path / "b.svg"
    assert main(["plot", "--metrics", str(out / "metrics.csv"), "--out", str(a)]) == 0
    assert main(["plot", "--metrics", str(out / "metrics.csv"), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_plot_single_run_collapsed_band(config_path, tmp_path):
    out = tmp_path / "one"
    main(["run", "--config", str(config_path), "--out", str(out)])
    svg = (out / "accuracy.svg").read_text()
    assert svg.count('id="policy-') == 1
    assert svg.count('id="band-') == 1


def test_plot_malformed_csv_names_row(tmp_path, capsys):
    bad = tmp_path / "metrics.csv"
    bad.write_text("run_id,policy,seed,round,accuracy\nx,aou,1,1,0.5\nx,aou,1,two,0.6\n")
    code = main(["plot", "--metrics", str(bad), "--out", str(tmp_path / "x.svg")])
    assert code == 3
    assert "row 3" in capsys.readouterr().err


def test_missing_config_is_io_error(tmp_path, capsys):
    code = main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert code == 4


def test_unwritable_outdir_is_io_error(config_path, tmp_path, capsys):
    blocker = tmp_path / "blocked"
    blocker.write_text("file, not a directory")
    code = main(["run", "--config", str(config_path), "--out", str(blocker / "sub")])
    assert code == 4
    assert "io error" in capsys.readouterr().err


def test_per_client_dump(config_path, tmp_path):
    out = tmp_path / "dump"
    main(["run", "--config", str(config_path), "--out", str(out), "--no-plot",
          "--set", "per_client_dump=true"])
    rows = read_rows(out / "per_client.csv")
    assert len(rows) == 3 * 10
    assert "shapley_score" in rows[0]
    assert {r["round"] for r in rows} == {"1", "2", "3"}


def test_synthetic_flag_overrides_dataset(config_path, tmp_path):
    out = tmp_path / "syn"
    code = main([
        "run", "--config", str(config_path), "--out", str(out), "--no-plot",
        "--synthetic", "classes=2,dim=4,n=80,separation=5.0",
    ])
    assert code == 0
    resolved = json.loads((out / "config.resolved.json").read_text())
    assert resolved["dataset"]["classes"] == 2
    assert resolved["dataset"]["n"] == 80


def test_mnist_flags_run_idx_files(tmp_path):
    rng = np.random.default_rng(0)
    for stem, count in (("train", 60), ("t10k", 20)):
        images = rng.integers(0, 256, size=(count, 4, 4), dtype=np.uint8)
        labels = (rng.integers(0, 3, size=count)).astype(np.uint8)
        write_idx_pair(tmp_path / f"{stem}-images", tmp_path / f"{stem}-labels", images, labels)
    config = dict(BASE_CONFIG)
    config["k_clients"] = 5
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    out = tmp_path / "mnist"
    code = main([
        "run", "--config", str(path), "--out", str(out), "--no-plot",
        "--mnist-images", str(tmp_path / "train-images"),
        "--mnist-labels", str(tmp_path / "train-labels"),
        "--mnist-test-images", str(tmp_path / "t10k-images"),
        "--mnist-test-labels", str(tmp_path / "t10k-labels"),
    ])
    assert code == 0
    assert len(read_rows(out / "metrics.csv")) == 3
