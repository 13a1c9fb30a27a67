import json

import pytest
from click.testing import CliRunner

from lobwatch.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """simulate -> label -> train -> scan -> oracle-annotate, chained."""
    root = tmp_path_factory.mktemp("cli")
    runner = CliRunner()
    config = root / "sim.json"
    config.write_text(json.dumps({
        "seed": 41,
        "instruments": 2,
        "session_length": 20_000,
        "episode_count": 10,
    }))
    sim_dir = root / "sim"
    result = runner.invoke(
        main, ["--config", str(config), "--out", str(sim_dir), "simulate"]
    )
    assert result.exit_code == 0, result.output
    return {"root": root, "runner": runner, "config": config, "sim_dir": sim_dir}


class TestSimulate:
    def test_outputs(self, workspace):
        sim_dir = workspace["sim_dir"]
        feeds = sorted(p.name for p in sim_dir.glob("*.lob1"))
        assert feeds == ["feed_00.lob1", "feed_01.lob1"]
        assert (sim_dir / "episodes.jsonl").exists()


class TestLabel:
    def test_dataset_written(self, workspace):
        out = workspace["root"] / "dataset.jsonl"
        result = workspace["runner"].invoke(
            main,
            ["--out", str(out), "label", "--feed", str(workspace["sim_dir"]),
             "--stride", "20"],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output.strip().splitlines()[-1])
        assert payload["windows"] > 0
        assert out.exists()


class TestTrainScanAnnotate:
    def test_full_chain(self, workspace):
        runner = workspace["runner"]
        root = workspace["root"]
        stem = root / "model"
        result = runner.invoke(
            main,
            ["--seed", "0", "--out", str(stem), "train",
             "--feed", str(workspace["sim_dir"]),
             "--classes", "3", "--embed-dim", "16", "--epochs", "4"],
        )
        assert result.exit_code == 0, result.output
        assert stem.with_suffix(".json").exists()
        assert stem.with_suffix(".bin").exists()

        data_dir = root / "data"
        result = runner.invoke(
            main,
            ["scan", "--feed", str(workspace["sim_dir"] / "feed_00.lob1"),
             "--checkpoint", str(stem), "--data-dir", str(data_dir),
             "--threshold", "0.45"],
        )
        assert result.exit_code == 0, result.output
        scanned = json.loads(result.output.strip().splitlines()[-1])
        assert scanned["windows_scanned"] > 0
        assert (data_dir / "alerts.jsonl").exists()

        if scanned["alerts"]:
            result = runner.invoke(
                main,
                ["oracle-annotate", "--feed", str(workspace["sim_dir"]),
                 "--data-dir", str(data_dir)],
            )
            assert result.exit_code == 0, result.output
            annotated = json.loads(result.output.strip().splitlines()[-1])
            assert annotated["annotated"] == scanned["alerts"]

            result = runner.invoke(main, ["rank", "--data-dir", str(data_dir)])
            assert result.exit_code == 0, result.output
            rows = [json.loads(line) for line in result.output.strip().splitlines()]
            ranks = [r["rank"] for r in rows]
            assert ranks == sorted(ranks)

    def test_evaluate(self, workspace):
        runner = workspace["runner"]
        stem = workspace["root"] / "model"
        result = runner.invoke(
            main,
            ["--seed", "0", "evaluate", "--feed", str(workspace["sim_dir"]),
             "--checkpoint", str(stem)],
        )
        assert result.exit_code == 0, result.output
        metrics = json.loads(result.output.strip().splitlines()[-1])
        assert {"accuracy", "macro_f1", "confusion"} <= set(metrics)
