"""Contract tests for the gms command line (exit codes, artifacts, manifests)."""

import hashlib
import json
import os
import subprocess
from pathlib import Path

import pytest

GMS = os.environ.get("GMS_BIN", "gms")


def run(*args, cwd=None):
    return subprocess.run([GMS, *map(str, args)], cwd=cwd, capture_output=True, text=True, timeout=300)


def digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    """A two-record dataset and a zero-epoch checkpoint built from it."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "tiny.jsonl"
    r = run("daydream", "--out", data, "--runs", 1, "--generations", 1, "--pop", 2, "--seed", 4)
    assert r.returncode == 0, r.stderr
    ckpt = root / "tiny.ckpt"
    r = run("train", "--data", data, "--out", ckpt, "--T", 5, "--epochs", 0, "--quiet")
    assert r.returncode == 0, r.stderr
    return root, data, ckpt


def test_daydream_writes_every_record(tiny):
    _, data, _ = tiny
    lines = data.read_text().splitlines()
    assert len(lines) == 3  # header + 2 records
    assert json.loads(lines[0])["seed"] == 4


def test_same_seed_same_bytes(tmp_path):
    for name in ("a.jsonl", "b.jsonl"):
        r = run("daydream", "--out", tmp_path / name, "--runs", 2, "--generations", 3, "--pop", 5, "--seed", 9)
        assert r.returncode == 0, r.stderr
    assert digest(tmp_path / "a.jsonl") == digest(tmp_path / "b.jsonl")
    r = run("daydream", "--out", tmp_path / "c.jsonl", "--runs", 2, "--generations", 3, "--pop", 5, "--seed", 10)
    assert r.returncode == 0
    assert digest(tmp_path / "c.jsonl") != digest(tmp_path / "a.jsonl")


def test_zero_epochs_gives_header_only_loss_csv(tiny):
    _, _, ckpt = tiny
    assert ckpt.exists()
    loss = Path(str(ckpt) + ".loss.csv").read_text().splitlines()
    assert loss == ["epoch,mean_loss"]


def test_manifest_fields(tiny):
    _, _, ckpt = tiny
    manifest = json.loads(Path(str(ckpt) + ".manifest.json").read_text())
    for key in ("command", "argv", "parameters", "seed", "git_describe", "started", "finished", "outputs"):
        assert key in manifest
    assert manifest["command"] == "train"
    assert manifest["parameters"]["T"] == 5


def test_sample_json(tiny, tmp_path):
    _, _, ckpt = tiny
    out = tmp_path / "s.json"
    r = run("sample", "--ckpt", ckpt, "--capacity", 120, "--count", 3, "--seed", 1, "--snapshots", "5,0", "--out", out)
    assert r.returncode == 0, r.stderr
    doc = json.loads(out.read_text())
    assert len(doc["decisions"]) == 3
    assert {s["t"] for s in doc["snapshots"]} == {5, 0}


@pytest.mark.parametrize(
    "args",
    [
        ("sample", "--ckpt", "X", "--capacity", 250),
        ("bench", "--ckpt", "X", "--algos", "hill-climb"),
        ("daydream", "--out", "x.jsonl", "--runs", 0),
        ("train", "--data", "missing.jsonl"),
        ("frobnicate",),
    ],
)
def test_usage_errors_exit_2(tiny, args):
    _, _, ckpt = tiny
    args = [str(ckpt) if a == "X" else a for a in args]
    r = run(*args, cwd=tiny[0])
    assert r.returncode == 2, (r.stdout, r.stderr)


def test_runtime_errors_exit_1(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    r = run("sample", "--ckpt", bad)
    assert r.returncode == 1
    assert "magic" in r.stderr
    r = run("train", "--data", tmp_path / "absent.jsonl", "--out", tmp_path / "m.ckpt")
    assert r.returncode == 1


def test_help_exits_0():
    r = run("--help")
    assert r.returncode == 0
    assert "daydream" in r.stdout
