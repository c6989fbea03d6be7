import json
import os

import numpy as np
import pytest

from synth import binary_dataset
from vfboost.cli import main


def write_party_csvs(tmp_path, X, y, split_at):
    guest = tmp_path / "guest.csv"
    host = tmp_path / "host.csv"
    d = X.shape[1]
    with open(guest, "w") as fh:
        fh.write("id,y," + ",".join(f"g{i}" for i in range(split_at)) + "\n")
        for i in range(len(y)):
            cells = ",".join(repr(float(X[i, j])) for j in range(split_at))
            fh.write(f"{i},{int(y[i])},{cells}\n")
    with open(host, "w") as fh:
        fh.write("id," + ",".join(f"h{i}" for i in range(split_at, d)) + "\n")
        for i in range(len(y)):
            cells = ",".join(repr(float(X[i, j])) for j in range(split_at, d))
            fh.write(f"{i},{cells}\n")
    return guest, host


def write_config(tmp_path, guest, host, out_dir, **overrides):
    lines = {
        "session_id": "cli-test",
        "seed": 11,
        "tree_num": 2,
        "max_depth": 2,
        "key_bits": 512,
        "output_dir": str(out_dir),
    }
    lines.update(overrides)
    cfg = tmp_path / "cfg.yaml"
    body = "\n".join(f"{k}: {v}" for k, v in lines.items())
    body += f"\nparties:\n  - {{role: guest, data: {guest}}}\n  - {{role: host, data: {host}}}\n"
    cfg.write_text(body)
    return cfg


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("cli")
    X, y = binary_dataset(n=160, d=6, seed=51)
    guest, host = write_party_csvs(tmp_path, X, y, split_at=3)
    out_dir = tmp_path / "run"
    cfg = write_config(tmp_path, guest, host, out_dir)
    return tmp_path, cfg, out_dir, y


def test_train_writes_artifacts(workdir, capsys):
    tmp_path, cfg, out_dir, y = workdir
    assert main(["train", "--config", str(cfg)]) == 0
    for name in ("model.guest.json", "model.host1.json", "train_log.json"):
        assert (out_dir / name).exists()
    log = json.loads((out_dir / "train_log.json").read_text())
    assert len(log["log"]) == 2
    assert log["cipher_counters"]["1"]["additions"] > 0  # host-side homomorphic work


def test_train_deterministic_artifacts(workdir, tmp_path):
    wd, cfg, out_dir, y = workdir
    out2 = tmp_path / "run2"
    cfg2 = write_config(wd, wd / "guest.csv", wd / "host.csv", out2)
    assert main(["train", "--config", str(cfg2)]) == 0
    for name in ("model.guest.json", "model.host1.json"):
        assert (out2 / name).read_bytes() == (out_dir / name).read_bytes()


def test_predict_and_eval(workdir, capsys, tmp_path):
    wd, cfg, out_dir, y = workdir
    scores = tmp_path / "scores.csv"
    assert main(["predict", "--config", str(cfg), "--model-dir", str(out_dir),
                 "--out", str(scores)]) == 0
    capsys.readouterr()
    lines = scores.read_text().strip().splitlines()
    assert lines[0] == "id,margin,probability"
    assert len(lines) == 161
    assert main(["eval", "--config", str(cfg), "--model-dir", str(out_dir)]) == 0
    out = capsys.readouterr().out
    metrics = json.loads(out.strip().splitlines()[-1])
    assert 0.5 < metrics["auc"] <= 1.0


def test_predict_scores_roundtrip_model(workdir, tmp_path):
    # save -> load -> predict must give identical scores on a second run
    wd, cfg, out_dir, y = workdir
    s1, s2 = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["predict", "--config", str(cfg), "--model-dir", str(out_dir), "--out", str(s1)])
    main(["predict", "--config", str(cfg), "--model-dir", str(out_dir), "--out", str(s2)])
    assert s1.read_bytes() == s2.read_bytes()


def test_cost_estimate_output(capsys):
    assert main([
        "cost-estimate", "--instances", "1000000", "--features", "2000",
        "--bins", "32", "--depth", "5", "--capacity", "6",
    ]) == 0
    out = capsys.readouterr().out
    assert "74.99%" in out or "75.00%" in out
    assert "78.00%" in out


def test_cost_estimate_derives_capacity(capsys):
    assert main([
        "cost-estimate", "--instances", "1000000", "--features", "2000",
        "--key-bits", "1024", "--precision", "53", "--hessian-max", "1.0",
    ]) == 0
    out = capsys.readouterr().out
    assert "b_g=74" in out and "b_h=73" in out and "capacity=6" in out


def test_keygen_artifact(tmp_path, capsys):
    out = tmp_path / "key.json"
    assert main(["keygen", "--bits", "512", "--seed", "3", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["max_plaintext_bits"] == 511
    assert main(["keygen", "--bits", "512", "--seed", "3", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["public"]["n"] == doc["public"]["n"]


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("tree_num: 0\nparties:\n  - {role: guest, data: x}\n  - {role: host, data: y}\n")
    assert main(["train", "--config", str(bad)]) == 2
    assert main(["train", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_crypto_error_exit_code(tmp_path):
    assert main(["keygen", "--bits", "255"]) == 2
