"""Record real service responses into JSON fixtures for the UI contract
tests: a ranked queue, one alert detail, and the re-ranked queue after an
annotation round-trips through the live API.

Run from the repository root with the Python package installed:
    python3 frontend/scripts/record_fixtures.py
"""
from __future__ import annotations

import json
import tempfile
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from lobwatch.pipeline import prepare_datasets, scan_events, train_task
from lobwatch.service import create_app
from lobwatch.simgen import SimConfig, generate
from lobwatch.training import Hyper, save_checkpoint

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def main() -> None:
    cfg = SimConfig(seed=41, instruments=2, session_length=30_000, episode_count=12)
    streams, _ = generate(cfg)
    streams = {i: s for i, s in enumerate(streams)}
    data = prepare_datasets(streams, c=3, seed=0)
    params, config, _, _ = train_task(
        data, c=3, embed_dim=32, seed=0, hyper=Hyper(epochs=10, shuffle_seed=0)
    )

    with tempfile.TemporaryDirectory() as tmp:
        tmp_path = Path(tmp)
        stem = tmp_path / "model"
        save_checkpoint(stem, params, config, {"qty_scale": data.qty_scale})
        from lobwatch.feedio import write_feed

        feed = tmp_path / "feed.lob1"
        write_feed(streams[0][:15_000], feed)
        app = create_app(tmp_path / "data", stem)
        client = TestClient(app)

        job = client.post("/scan", json={"feed_path": str(feed), "threshold": 0.5})
        job_id = job.json()["job_id"]
        import time

        for _ in range(300):
            status = client.get(f"/jobs/{job_id}").json()
            if status["status"] in ("done", "error"):
                break
            time.sleep(0.1)
        assert status["status"] == "done", status

        FIXTURES.mkdir(parents=True, exist_ok=True)
        queue = client.get("/alerts").json()
        assert len(queue) >= 2, "need at least two alerts for ordering fixtures"
        (FIXTURES / "alerts.json").write_text(json.dumps(queue, indent=2))

        target = queue[0]["alert_id"]
        detail = client.get(f"/alerts/{target}").json()
        (FIXTURES / "alert_detail.json").write_text(json.dumps(detail, indent=2))

        posted = client.post(
            f"/alerts/{target}/annotation",
            json={"label": detail["predicted_label"], "source": "Human", "notes": "fixture"},
        )
        assert posted.status_code == 201
        (FIXTURES / "annotation_response.json").write_text(
            json.dumps(posted.json(), indent=2)
        )
        after = client.get("/alerts").json()
        (FIXTURES / "alerts_after_annotation.json").write_text(
            json.dumps(after, indent=2)
        )
        print(f"recorded {len(queue)} alerts; fixtures in {FIXTURES}")


if __name__ == "__main__":
    main()
