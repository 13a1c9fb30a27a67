"""HTTP facade over the scanning pipeline: append-only persistence, alert
queue, analyst annotations, exemplar growth, and background scan jobs.

Storage is plain JSONL in a data directory (alerts, annotations, exemplars,
rank snapshots) replayed into memory at startup; all writes go through one
lock so concurrent annotators serialize cleanly.
"""
from __future__ import annotations

import json
import logging
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .book import PLANE_PRICE, PLANE_QTY
from .ranking import Alert, Exemplar, ExemplarStore, rank_alerts, top_similar

log = logging.getLogger(__name__)

STATUS_NEW = "New"
STATUS_ANNOTATED = "Annotated"
STATUS_DISMISSED = "Dismissed"


class ServiceError(Exception):
    pass


class UnknownAlert(ServiceError):
    pass


class InvalidLabel(ServiceError):
    pass


class AlreadyDismissed(ServiceError):
    pass


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class AlertRecord:
    alert_id: str
    window_ref: dict
    predicted_label: int
    model_score: float
    frames: np.ndarray  # raw (n, depth, 2, 2) ints, denormalized for display
    embedding: np.ndarray
    status: str = STATUS_NEW
    similarity_score: Optional[float] = None
    rank: Optional[int] = None
    annotations: list[dict] = field(default_factory=list)
    created_at: str = ""
    meta: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "alert_id": self.alert_id,
            "instrument_id": self.window_ref.get("instrument_id"),
            "t_end": self.window_ref.get("t_end"),
            "predicted_label": self.predicted_label,
            "model_score": self.model_score,
            "similarity_score": self.similarity_score,
            "rank": self.rank,
            "status": self.status,
        }


def frames_to_rows(frames: np.ndarray) -> list[list[list[int]]]:
    """Per-timestep sparse ladder rows: [level, side, price, qty] non-zero."""
    out = []
    for t in range(frames.shape[0]):
        rows = []
        for level in range(frames.shape[1]):
            for side in (0, 1):
                price = int(frames[t, level, side, PLANE_PRICE])
                qty = int(frames[t, level, side, PLANE_QTY])
                if price != 0:
                    rows.append([level, side, price, qty])
        out.append(rows)
    return out


class SurveillanceStore:
    """Append-only files plus an in-memory index rebuilt at startup."""

    def __init__(self, data_dir: Union[str, Path]) -> None:
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.lock = threading.Lock()
        self.alerts: dict[str, AlertRecord] = {}
        self.exemplars = ExemplarStore()
        self._replay()

    # -- persistence -------------------------------------------------------

    def _path(self, name: str) -> Path:
        return self.data_dir / name

    def _append(self, name: str, obj: dict) -> None:
        with open(self._path(name), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(obj, separators=(",", ":")))
            fh.write("\n")

    def _read_lines(self, name: str) -> list[dict]:
        path = self._path(name)
        if not path.exists():
            return []
        out = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(json.loads(line))
        return out

    def _replay(self) -> None:
        for obj in self._read_lines("alerts.jsonl"):
            record = AlertRecord(
                alert_id=obj["alert_id"],
                window_ref=obj["window_ref"],
                predicted_label=int(obj["predicted_label"]),
                model_score=float(obj["model_score"]),
                frames=np.asarray(obj["frames"], dtype=np.int64),
                embedding=np.asarray(obj["embedding"], dtype=np.float64),
                created_at=obj.get("created_at", ""),
            )
            self.alerts[record.alert_id] = record
        for obj in self._read_lines("exemplars.jsonl"):
            self.exemplars.add(Exemplar.from_json(obj))
        for obj in self._read_lines("annotations.jsonl"):
            record = self.alerts.get(obj["alert_id"])
            if record is None:
                continue
            record.annotations.append(obj)
            self._apply_status(record, int(obj["label"]))
        for obj in self._read_lines("ranks.jsonl"):
            for entry in obj.get("ranked", []):
                record = self.alerts.get(entry["alert_id"])
                if record is not None:
                    record.similarity_score = entry.get("similarity_score")
                    record.rank = entry.get("rank")

    @staticmethod
    def _apply_status(record: AlertRecord, label: int) -> None:
        if record.status == STATUS_DISMISSED:
            return
        record.status = STATUS_DISMISSED if label == 0 else STATUS_ANNOTATED

    # -- mutations ---------------------------------------------------------

    def add_alert(
        self,
        alert_id: str,
        window_ref: dict,
        predicted_label: int,
        model_score: float,
        frames: np.ndarray,
        embedding: np.ndarray,
    ) -> AlertRecord:
        with self.lock:
            record = AlertRecord(
                alert_id=alert_id,
                window_ref=window_ref,
                predicted_label=predicted_label,
                model_score=model_score,
                frames=np.asarray(frames, dtype=np.int64),
                embedding=np.asarray(embedding, dtype=np.float64),
                created_at=_now_iso(),
            )
            self.alerts[alert_id] = record
            self._append(
                "alerts.jsonl",
                {
                    "alert_id": record.alert_id,
                    "window_ref": record.window_ref,
                    "predicted_label": record.predicted_label,
                    "model_score": record.model_score,
                    "frames": record.frames.tolist(),
                    "embedding": record.embedding.tolist(),
                    "created_at": record.created_at,
                },
            )
            return record

    def annotate(
        self,
        alert_id: str,
        label: int,
        source: str = "Human",
        notes: str = "",
        rationale: Optional[list[str]] = None,
    ) -> AlertRecord:
        if label not in (0, 1, 2):
            raise InvalidLabel(f"label must be 0, 1 or 2, got {label}")
        with self.lock:
            record = self.alerts.get(alert_id)
            if record is None:
                raise UnknownAlert(alert_id)
            if record.status == STATUS_DISMISSED:
                raise AlreadyDismissed(alert_id)
            annotation = {
                "alert_id": alert_id,
                "label": label,
                "source": source,
                "notes": notes,
                "rationale": rationale or [],
                "created_at": _now_iso(),
            }
            record.annotations.append(annotation)
            self._apply_status(record, label)
            self._append("annotations.jsonl", annotation)
            if label in (1, 2):
                exemplar = Exemplar(
                    exemplar_id=f"ex-{uuid.uuid4().hex[:12]}",
                    embedding=record.embedding,
                    label=label,
                    source=source,
                    window_ref=record.window_ref,
                )
                self.exemplars.add(exemplar)
                self._append("exemplars.jsonl", exemplar.to_json())
        self.refresh_ranking()
        return record

    def refresh_ranking(self) -> None:
        """Re-rank every stored alert against the current exemplar store."""
        with self.lock:
            records = list(self.alerts.values())
            if not records:
                return
            if len(self.exemplars) == 0:
                ordered = sorted(
                    records, key=lambda r: (-r.model_score, r.alert_id)
                )
                for i, record in enumerate(ordered):
                    record.rank = i + 1
            else:
                proxies = [
                    Alert(
                        alert_id=r.alert_id,
                        window_ref=r.window_ref,
                        predicted_label=r.predicted_label,
                        model_score=r.model_score,
                    )
                    for r in records
                ]
                ranked = rank_alerts(
                    proxies, [r.embedding for r in records], self.exemplars
                )
                for proxy in ranked:
                    record = self.alerts[proxy.alert_id]
                    record.similarity_score = proxy.similarity_score
                    record.rank = proxy.rank
            self._append(
                "ranks.jsonl",
                {
                    "created_at": _now_iso(),
                    "ranked": [
                        {
                            "alert_id": r.alert_id,
                            "similarity_score": r.similarity_score,
                            "rank": r.rank,
                        }
                        for r in records
                    ],
                },
            )

    # -- queries -----------------------------------------------------------

    def list_alerts(
        self, status: Optional[str] = None, limit: Optional[int] = None
    ) -> list[AlertRecord]:
        records = list(self.alerts.values())
        if status:
            records = [r for r in records if r.status == status]
        records.sort(key=lambda r: (r.rank is None, r.rank, r.alert_id))
        if limit is not None:
            records = records[:limit]
        return records

    def get(self, alert_id: str) -> AlertRecord:
        record = self.alerts.get(alert_id)
        if record is None:
            raise UnknownAlert(alert_id)
        return record


def create_app(
    data_dir: Union[str, Path],
    checkpoint_stem: Optional[Union[str, Path]] = None,
    ui_dir: Optional[Union[str, Path]] = None,
):
    """Build the FastAPI application over a data directory.

    A checkpoint is only needed for POST /scan; the queue, annotation and
    exemplar endpoints work on persisted state alone. When ``ui_dir`` points
    at a built frontend (index.html plus dist/), it is served under /ui.
    """
    from fastapi import Body, FastAPI, HTTPException, Query

    from .pipeline import load_feed_events, scan_events
    from .training import load_checkpoint

    app = FastAPI(title="lobwatch surveillance")
    if ui_dir is not None and Path(ui_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")
    store = SurveillanceStore(data_dir)
    jobs: dict[str, dict] = {}
    app.state.store = store
    app.state.jobs = jobs

    model: dict = {}
    if checkpoint_stem is not None:
        params, config, norm, _ = load_checkpoint(checkpoint_stem)
        model.update(params=params, config=config, norm=norm)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/alerts")
    def list_alerts(
        status: Optional[str] = Query(default=None),
        limit: Optional[int] = Query(default=None),
    ) -> list[dict]:
        return [r.summary() for r in store.list_alerts(status, limit)]

    @app.get("/alerts/{alert_id}")
    def get_alert(alert_id: str) -> dict:
        try:
            record = store.get(alert_id)
        except UnknownAlert:
            raise HTTPException(status_code=404, detail="unknown alert")
        similar = [
            {
                "exemplar_id": ex.exemplar_id,
                "similarity": sim,
                "label": ex.label,
                "source": ex.source,
                "window_ref": ex.window_ref,
            }
            for ex, sim in top_similar(record.embedding, store.exemplars, k=5)
        ]
        out = record.summary()
        out["frames"] = frames_to_rows(record.frames)
        out["annotations"] = record.annotations
        out["similar_exemplars"] = similar
        out["window_ref"] = record.window_ref
        return out

    @app.post("/alerts/{alert_id}/annotation", status_code=201)
    def post_annotation(alert_id: str, body: dict = Body(...)) -> dict:
        label = body.get("label")
        if label not in (0, 1, 2):
            raise HTTPException(status_code=422, detail="label must be 0, 1 or 2")
        try:
            record = store.annotate(
                alert_id,
                int(label),
                source=str(body.get("source", "Human")),
                notes=str(body.get("notes", "")),
            )
        except UnknownAlert:
            raise HTTPException(status_code=404, detail="unknown alert")
        except AlreadyDismissed:
            raise HTTPException(status_code=409, detail="alert already dismissed")
        out = record.summary()
        out["annotations"] = record.annotations
        return out

    @app.get("/exemplars")
    def list_exemplars() -> list[dict]:
        return [e.to_json() for e in store.exemplars.all()]

    @app.post("/scan", status_code=202)
    def start_scan(body: dict = Body(...)) -> dict:
        if "params" not in model:
            raise HTTPException(status_code=409, detail="no checkpoint loaded")
        feed_path = body.get("feed_path")
        if not feed_path or not Path(feed_path).exists():
            raise HTTPException(status_code=422, detail="feed_path missing or absent")
        threshold = float(body.get("threshold", 0.7))
        job_id = f"job-{uuid.uuid4().hex[:12]}"
        jobs[job_id] = {"status": "running", "progress": 0.0, "alerts_added": 0}

        def run() -> None:
            try:
                streams = load_feed_events(feed_path)
                result = scan_events(
                    streams,
                    model["params"],
                    model["config"],
                    float(model["norm"]["qty_scale"]),
                    threshold=threshold,
                    alert_prefix=f"{job_id}",
                )
                jobs[job_id]["progress"] = 0.9
                for alert in result.alerts:
                    store.add_alert(
                        alert.alert_id,
                        alert.window_ref,
                        alert.predicted_label,
                        alert.model_score,
                        result.frames[alert.alert_id],
                        result.embeddings[alert.alert_id],
                    )
                store.refresh_ranking()
                jobs[job_id].update(
                    status="done",
                    progress=1.0,
                    alerts_added=len(result.alerts),
                    windows_scanned=result.windows_scanned,
                )
            except Exception as exc:  # surfaced through the job endpoint
                log.exception("scan job %s failed", job_id)
                jobs[job_id].update(status="error", error=str(exc))

        thread = threading.Thread(target=run, daemon=True)
        thread.start()
        return {"job_id": job_id}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str) -> dict:
        if job_id not in jobs:
            raise HTTPException(status_code=404, detail="unknown job")
        return {"job_id": job_id, **jobs[job_id]}

    return app
