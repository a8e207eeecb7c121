"""Test CLI."""

import json
import os

import pytest
import torch
from click.testing import CliRunner

from hoigraph.datamodel import BoundingBox, HOIDetection, dump_detections
from hoigraph.scripts.cli import cli

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")

SMALL = [
    "--set",
    "model.d_s=6",
    "--set",
    "model.d_h=8",
    "--set",
    "model.d_g=6",
    "--set",
    "model.d_f=8",
    "--set",
    "mask.size=8",
    "--set",
    "data.test_scenes=2",
]


@pytest.fixture
def world(tmp_path):
    """Small synthetic dataset directory."""
    out = tmp_path / "world"
    runner = CliRunner()
    result = runner.invoke(
        cli,
        ["synth-gen", "--out", str(out), "--num-scenes", "6", "-p", "feature_dim=8"],
    )
    assert result.exit_code == 0, result.output
    return out


def test_synth_gen(tmp_path):
    """Should write a dataset and report its hash."""
    runner = CliRunner()
    hashes = []
    for name, seed in (("a", "7"), ("b", "7"), ("c", "8")):
        result = runner.invoke(
            cli,
            [
                "synth-gen",
                "--out",
                str(tmp_path / name),
                "--seed",
                seed,
                "--num-scenes",
                "3",
                "-p",
                "feature_dim=4",
                "--rules",
                "predicate-only",
            ],
        )
        assert not result.exception
        assert result.exit_code == 0
        summary = json.loads(result.stdout)
        assert summary["num_scenes"] == 3
        hashes.append(summary["manifest_hash"])

    assert hashes[0] == hashes[1]
    assert hashes[0] != hashes[2]
    assert (tmp_path / "a" / "manifest.json").exists()

    result = runner.invoke(
        cli, ["synth-gen", "--out", str(tmp_path / "d"), "-p", "num_scenes=0"]
    )
    assert result.exit_code == 2

    result = runner.invoke(
        cli, ["synth-gen", "--out", str(tmp_path / "d"), "-p", "num_scenes"]
    )
    assert result.exit_code == 2


def test_train_predict_eval(tmp_path, world):
    """Should run the whole pipeline."""
    runner = CliRunner()
    run = tmp_path / "run"
    result = runner.invoke(
        cli,
        ["train", "--data", str(world), "--out", str(run), "--seed", "0", "--epochs", "2"]
        + SMALL,
    )
    assert not result.exception, result.output
    assert result.exit_code == 0
    summary = json.loads(result.stdout)
    assert summary == {
        "variant": "sge+rel",
        "scenes": 4,
        "epochs": 2,
        "final_loss": summary["final_loss"],
    }
    assert (run / "checkpoint.pt").exists()
    assert len((run / "train_log.jsonl").read_text().splitlines()) == 2
    with open(run / "config.json") as f:
        assert json.load(f)["seed"] == 0

    detections = tmp_path / "detections.json"
    result = runner.invoke(
        cli,
        [
            "predict",
            "--checkpoint",
            str(run / "checkpoint.pt"),
            "--data",
            str(world),
            "--out",
            str(detections),
            "--dot",
            str(tmp_path / "dot"),
        ],
    )
    assert not result.exception, result.output
    assert result.exit_code == 0
    assert json.loads(result.stdout)["images"] == 2
    assert (tmp_path / "detections.config.json").exists()
    dots = sorted(os.listdir(tmp_path / "dot"))
    assert dots == ["synth_00004.dot", "synth_00005.dot"]
    assert "cluster_hoi" in (tmp_path / "dot" / dots[0]).read_text()

    # same checkpoint, same detections
    again = tmp_path / "again.json"
    result = runner.invoke(
        cli,
        [
            "predict",
            "--checkpoint",
            str(run / "checkpoint.pt"),
            "--data",
            str(world),
            "--out",
            str(again),
        ],
    )
    assert result.exit_code == 0
    assert again.read_text() == detections.read_text()

    report = tmp_path / "report.json"
    result = runner.invoke(
        cli,
        ["eval", "--det", str(detections), "--gt", str(world), "--out", str(report)],
    )
    assert not result.exception, result.output
    assert result.exit_code == 0
    with open(report) as f:
        reports = json.load(f)["reports"]
    assert set(reports) == {"default", "known"}
    assert "hold" in result.stdout

    result = runner.invoke(
        cli,
        ["eval", "--det", str(detections), "--gt", str(world), "--min-map", "1.1"],
    )
    assert result.exit_code == 4


def test_train_errors(tmp_path, world):
    """Should map configuration and data errors to exit codes."""
    runner = CliRunner()
    result = runner.invoke(
        cli, ["train", "--data", str(world), "--out", str(tmp_path / "run")] + SMALL
    )
    assert result.exit_code == 2
    assert "seed" in result.output

    result = runner.invoke(
        cli,
        ["train", "--data", str(world), "--out", str(tmp_path / "run"), "--seed", "0"]
        + ["--ablation", "rel", "--ablation", "no-rel"],
    )
    assert result.exit_code == 2

    # features are 8 wide, the model expects 256
    result = runner.invoke(
        cli,
        ["train", "--data", str(world), "--out", str(tmp_path / "run"), "--seed", "0"],
    )
    assert result.exit_code == 3

    junk = tmp_path / "junk.pt"
    junk.write_bytes(b"junk")
    result = runner.invoke(
        cli,
        [
            "predict",
            "--checkpoint",
            str(junk),
            "--data",
            str(world),
            "--out",
            str(tmp_path / "det.json"),
        ],
    )
    assert result.exit_code == 3


def test_eval_fixture(tmp_path):
    """Should score a detection file against an annotation file."""
    detections = tmp_path / "detections.json"
    dump_detections(
        {
            "fixture_0001": [
                HOIDetection(
                    BoundingBox(12, 20, 110, 222), BoundingBox(90, 100, 130, 140), 1, 0, 0.9
                )
            ]
        },
        detections,
    )
    report = tmp_path / "report.json"
    runner = CliRunner()
    result = runner.invoke(
        cli,
        [
            "eval",
            "--det",
            str(detections),
            "--gt",
            os.path.join(FIXTURES, "annotations.json"),
            "--setting",
            "default",
            "--out",
            str(report),
        ],
    )
    assert not result.exception, result.output
    assert result.exit_code == 0
    with open(report) as f:
        default = json.load(f)["reports"]["default"]
    assert default["ap"] == {"0": 1.0, "1": None, "2": 0.0}
    assert default["map"] == {"full": 0.5, "rare": 0.0, "non_rare": 1.0}

    result = runner.invoke(
        cli,
        [
            "eval",
            "--det",
            str(detections),
            "--gt",
            os.path.join(FIXTURES, "annotations.json"),
            "--setting",
            "default",
            "--min-map",
            "0.5",
        ],
    )
    assert result.exit_code == 0


def test_gradcheck():
    """Should report the worst relative error per op."""
    runner = CliRunner()
    result = runner.invoke(
        cli, ["gradcheck", "--op", "linear", "--op", "pipeline", "--fixtures", "2"]
    )
    assert not result.exception, result.output
    assert result.exit_code == 0
    summary = json.loads(result.stdout)
    assert list(summary) == ["linear", "pipeline"]
    assert summary["linear"] < 1e-8

    result = runner.invoke(
        cli, ["gradcheck", "--op", "linear", "--fixtures", "1", "--tolerance", "-1"]
    )
    assert result.exit_code == 4

    result = runner.invoke(
        cli, ["gradcheck", "--op", "linear", "--set", "model.dtype=float32"]
    )
    assert result.exit_code == 2


def test_threads_env(tmp_path):
    """Should cap torch threads and reject bad thread counts."""
    args = ["gradcheck", "--op", "linear", "--fixtures", "1"]
    for env in (
        {"SG2HOI_THREADS": "many"},
        {"HOIGRAPH_THREADS": "many"},
        {"SG2HOI_THREADS": "0"},
    ):
        result = CliRunner(env=env).invoke(cli, args)
        assert result.exit_code == 2, env

    previous = torch.get_num_threads()
    try:
        env = {"SG2HOI_THREADS": "1", "HOIGRAPH_THREADS": "many"}
        result = CliRunner(env=env).invoke(cli, args)
        assert result.exit_code == 0
        assert torch.get_num_threads() == 1
    finally:
        torch.set_num_threads(previous)


def test_eval_malformed_detections(tmp_path):
    """Should exit with the data error code on a malformed detection file."""
    detections = tmp_path / "detections.json"
    detections.write_text(json.dumps([{"image_id": "fixture_0001", "hois": 5}]))
    result = CliRunner().invoke(
        cli,
        [
            "eval",
            "--det",
            str(detections),
            "--gt",
            os.path.join(FIXTURES, "annotations.json"),
        ],
    )
    assert result.exit_code == 3
    assert "detections[0].hois" in result.output


def _assert_close(a, b, tol=1e-6):
    if isinstance(a, dict):
        assert sorted(a) == sorted(b)
        for key in a:
            _assert_close(a[key], b[key], tol)
    elif isinstance(a, list):
        assert len(a) == len(b)
        for x, y in zip(a, b):
            _assert_close(x, y, tol)
    elif isinstance(a, float):
        assert abs(a - b) <= tol
    else:
        assert a == b


def test_pipeline_is_reproducible(tmp_path):
    """Should give the same detections from two independent runs."""
    runner = CliRunner()
    outputs = []
    for name in ("a", "b"):
        world, run, detections = (
            tmp_path / name / "world",
            tmp_path / name / "run",
            tmp_path / name / "detections.json",
        )
        commands = [
            ["synth-gen", "--out", str(world), "--num-scenes", "6", "-p", "feature_dim=8"],
            ["train", "--data", str(world), "--out", str(run), "--seed", "3", "--epochs", "2"]
            + SMALL,
            [
                "predict",
                "--checkpoint",
                str(run / "checkpoint.pt"),
                "--data",
                str(world),
                "--out",
                str(detections),
            ],
        ]
        for args in commands:
            result = runner.invoke(cli, args)
            assert result.exit_code == 0, result.output
        with open(detections) as f:
            outputs.append(json.load(f))

    _assert_close(outputs[0], outputs[1])
