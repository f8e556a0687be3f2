import json
import zipfile

import numpy as np
import pytest
import yaml

from reclab.checkpoint import check_vocab, load_archive, save_archive
from reclab.cli import main
from reclab.config import RunConfig, config_from_dict, load_config, with_overrides
from reclab.errors import ConfigError, HashMismatch

TINY = {
    "data": {"generator": {"n_users": 300, "n_trips": 400, "n_cities": 40, "n_countries": 4}},
    "model": {"autoencoder_epochs": 10, "hidden_size": 16, "embedding_dim": 8, "month_dim": 4,
              "duration_dim": 4, "category_dim": 4},
    "training": {"max_epochs": 2, "early_stop_patience": 2},
}


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(yaml.safe_dump(TINY))
    return p


def test_archive_round_trip(tmp_path):
    arrays = {"param.w": np.arange(6, dtype=np.float64).reshape(2, 3), "ids": np.array([1, 2], dtype=np.int64)}
    save_archive(tmp_path / "a.ckpt", {"vocab_hash": "h"}, arrays)
    save_archive(tmp_path / "b.ckpt", {"vocab_hash": "h"}, arrays)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    manifest, got = load_archive(tmp_path / "a.ckpt")
    assert got["param.w"].dtype == np.float32 and got["ids"].dtype == np.int64
    np.testing.assert_array_equal(got["param.w"], arrays["param.w"])
    assert "manifest.json" in zipfile.ZipFile(tmp_path / "a.ckpt").namelist()
    check_vocab(manifest, "h")
    with pytest.raises(HashMismatch):
        check_vocab(manifest, "other")


def test_config_strictness(tmp_path):
    with pytest.raises(ConfigError):
        config_from_dict({"training": {"learning_rat": 0.1}})
    with pytest.raises(ConfigError):
        config_from_dict({"extra": {}})
    with pytest.raises(ConfigError):
        config_from_dict({"data": {"generator": {"n_town": 3}}})
    with pytest.raises(ConfigError):
        config_from_dict({"model": {"variant": "gru4rec"}})
    cfg = with_overrides(RunConfig(), seed=5, variant="narm")
    assert (cfg.training.seed, cfg.model.variant) == (5, "narm")
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"command": "train", "config": cfg.to_dict()}))
    assert load_config(p).digest() == cfg.digest()


def test_train_evaluate_export(tmp_path, tiny):
    out = tmp_path / "run"
    assert main(["train", "--config", str(tiny), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest-train.json").read_text())
    assert {"command", "config", "seed", "input_hash", "wall_seconds"} <= set(manifest)
    assert main(["evaluate", "--config", str(tiny), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert 0.0 <= summary["acc_at_4"] <= 1.0
    assert main(["export-embeddings", "--config", str(tiny), "--out", str(out), "--max-users", "50"]) == 0
    assert (out / "user_embeddings.coords.csv").exists()

    # rerun from the manifest
    again = tmp_path / "again"
    assert main(["train", "--config", str(out / "manifest-train.json"), "--out", str(again)]) == 0
    assert (again / "metrics.jsonl").read_bytes() == (out / "metrics.jsonl").read_bytes()

    # a checkpoint scored against a dataset with a different vocabulary
    other = dict(TINY, data={"generator": dict(TINY["data"]["generator"], n_cities=41)})
    p = tmp_path / "other.yaml"
    p.write_text(yaml.safe_dump(other))
    code = main(["evaluate", "--config", str(p), "--out", str(tmp_path / "x"), "--checkpoint", str(out / "model.ckpt")])
    assert code == 3
    err = json.loads((tmp_path / "x" / "error.json").read_text())
    assert err["error"] == "HashMismatch"


def test_bad_config_exits_nonzero(tmp_path, monkeypatch):
    p = tmp_path / "bad.yaml"
    p.write_text("training: {speed: 3}\n")
    monkeypatch.setenv("REC_LAB_OUT", str(tmp_path / "env"))
    assert main(["train", "--config", str(p)]) == 2
    assert json.loads((tmp_path / "env" / "error.json").read_text())["error"] == "ConfigError"


def test_out_precedence(tmp_path, tiny, monkeypatch):
    monkeypatch.setenv("REC_LAB_OUT", str(tmp_path / "env"))
    assert main(["generate", "--config", str(tiny)]) == 0
    assert (tmp_path / "env" / "data" / "train.csv").exists()
    assert main(["generate", "--config", str(tiny), "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "manifest-generate.json").exists()


def test_compare_leaderboard(tmp_path, tiny):
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(tiny), "--out", str(out)]) == 0
    rows = [json.loads(x) for x in (out / "leaderboard.jsonl").read_text().splitlines()]
    assert sorted(r["model_name"] for r in rows) == sorted(["popularity", "itemknn", "narm", "narm_v1", "narm_v2"])
    assert len((out / "leaderboard.txt").read_text().splitlines()) == 2 + 5
