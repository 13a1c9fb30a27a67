"""End-to-end orchestration: replaying feeds into snapshot tensors, building
labeled window datasets, training, and scanning feeds into ranked alerts.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .book import DEPTH, BookEvent, OrderBook, PLANE_PRICE, PLANE_QTY
from .feedio import read_feed
from .labeler import LabelerParams, label_stream, variant_params
from .ranking import Alert, ExemplarStore, rank_alerts, unit_vector
from .simgen import SimConfig, generate_instrument
from .tcn import TcnConfig, TcnParameters, forward_batch, softmax
from .training import Hyper, evaluate, train
from .windows import (
    PRICE_SCALE_TICKS,
    WindowSample,
    build_windows,
    class_filter,
    fit_qty_scale,
    normalize_many,
)

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 10
TRAIN_STRIDE = 5
SCAN_STRIDE = 1
DEFAULT_ALERT_THRESHOLD = 0.7


def reconstruct(
    events: Sequence[BookEvent], depth: int = DEPTH, instrument_id: Optional[int] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Replay one instrument's events into aligned snapshot frames.

    Returns (frames (T, depth, 2, 2) int64, timestamps (T,) int64) where
    frames[i] is the book immediately after events[i].
    """
    book = OrderBook(instrument_id if instrument_id is not None else 0)
    total = len(events)
    frames = np.zeros((total, depth * 4), dtype=np.int64)
    timestamps = np.zeros(total, dtype=np.int64)
    for i, ev in enumerate(events):
        book.apply(ev)
        frames[i] = book.snapshot_row(depth)
        timestamps[i] = ev.timestamp
    return frames.reshape(total, depth, 2, 2), timestamps


def group_by_instrument(events: Iterable[BookEvent]) -> dict[int, list[BookEvent]]:
    out: dict[int, list[BookEvent]] = {}
    for ev in events:
        out.setdefault(ev.instrument_id, []).append(ev)
    return out


def load_feed_events(path: Union[str, Path]) -> dict[int, list[BookEvent]]:
    """Read one feed file or a directory of *.lob1 files, keyed by instrument."""
    path = Path(path)
    if path.is_dir():
        merged: dict[int, list[BookEvent]] = {}
        for feed in sorted(path.glob("*.lob1")):
            for iid, evs in group_by_instrument(read_feed(feed)).items():
                merged.setdefault(iid, []).extend(evs)
        return merged
    return group_by_instrument(read_feed(path))


@dataclass
class PreparedData:
    """Normalized tensors for one classification task (c=2 or c=3)."""

    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    qty_scale: float
    skipped_windows: int


def windows_from_stream(
    events: Sequence[BookEvent],
    params: LabelerParams,
    n: int = DEFAULT_WINDOW,
    stride: int = TRAIN_STRIDE,
    instrument_id: int = 0,
    frames: Optional[np.ndarray] = None,
    timestamps: Optional[np.ndarray] = None,
) -> list[WindowSample]:
    """Reconstruct, weak-label, and window one instrument stream."""
    if frames is None or timestamps is None:
        frames, timestamps = reconstruct(events, instrument_id=instrument_id)
    labels = label_stream(events, frames, params)
    return build_windows(frames, labels, timestamps, n, stride, instrument_id)


def prepare_datasets(
    streams: dict[int, list[BookEvent]],
    c: int,
    train_params: Optional[LabelerParams] = None,
    n: int = DEFAULT_WINDOW,
    stride: int = TRAIN_STRIDE,
    train_frac: float = 0.8,
    seed: int = 0,
) -> PreparedData:
    """Split every stream by time, label the training part with the base
    rule and the validation part with the perturbed variant, then window,
    class-filter and normalize.

    The quantity scale comes from the training windows only.
    """
    train_params = train_params or LabelerParams()
    val_params = variant_params(train_params)
    train_windows: list[WindowSample] = []
    val_windows: list[WindowSample] = []
    for iid, events in sorted(streams.items()):
        frames, timestamps = reconstruct(events, instrument_id=iid)
        cut = int(len(events) * train_frac)
        # Label the whole stream per rule (episodes near the split need full
        # order history), then slice; no window ever spans the split.
        train_labels = label_stream(events, frames, train_params)
        val_labels = label_stream(events, frames, val_params)
        if cut >= n:
            train_windows.extend(
                build_windows(
                    frames[:cut], train_labels[:cut], timestamps[:cut], n, stride, iid
                )
            )
        if len(events) - cut >= n:
            val_windows.extend(
                build_windows(
                    frames[cut:], val_labels[cut:], timestamps[cut:], n, stride, iid
                )
            )
    train_windows = class_filter(train_windows, c, seed=seed)
    val_windows = class_filter(val_windows, c, seed=seed + 1)
    qty_scale = fit_qty_scale(train_windows)
    train_x, train_y, _, skipped_t = normalize_many(train_windows, qty_scale)
    val_x, val_y, _, skipped_v = normalize_many(val_windows, qty_scale)
    return PreparedData(
        train_x=train_x,
        train_y=train_y,
        val_x=val_x,
        val_y=val_y,
        qty_scale=qty_scale,
        skipped_windows=skipped_t + skipped_v,
    )


def train_task(
    data: PreparedData,
    c: int,
    embed_dim: int = 256,
    seed: int = 0,
    hyper: Optional[Hyper] = None,
) -> tuple[TcnParameters, TcnConfig, list[dict], dict]:
    """Train one classification task and evaluate it on its validation split."""
    config = TcnConfig(embed_dim=embed_dim, classes=c, seed=seed)
    best, history = train(
        (data.train_x, data.train_y),
        config,
        hyper or Hyper(shuffle_seed=seed),
        val_set=(data.val_x, data.val_y),
    )
    metrics = evaluate(best, config, data.val_x, data.val_y)
    return best, config, history, metrics


@dataclass
class ScanResult:
    alerts: list[Alert]
    embeddings: dict[str, np.ndarray]
    frames: dict[str, np.ndarray]  # raw (n, depth, 2, 2) per alert, for display
    windows_scanned: int
    windows_skipped: int


def _sliding_windows(arr: np.ndarray, n: int) -> np.ndarray:
    """All length-n windows of arr along axis 0 (view, no copy)."""
    from numpy.lib.stride_tricks import sliding_window_view

    view = sliding_window_view(arr, n, axis=0)
    return np.moveaxis(view, -1, 1)


def scan_events(
    streams: dict[int, list[BookEvent]],
    params: TcnParameters,
    config: TcnConfig,
    qty_scale: float,
    n: int = DEFAULT_WINDOW,
    threshold: float = DEFAULT_ALERT_THRESHOLD,
    stride: int = SCAN_STRIDE,
    batch_size: int = 1024,
    alert_prefix: str = "alert",
) -> ScanResult:
    """Run the classifier over every window of every instrument stream.

    Windows whose final-timestep predicted class is non-neutral with softmax
    probability >= threshold become alerts; overlapping alerts on one
    instrument within a window length are merged keeping the highest-probability
    one. Alerts are returned unranked (rank with an exemplar store).
    """
    alerts: list[Alert] = []
    embeddings: dict[str, np.ndarray] = {}
    frames_by_alert: dict[str, np.ndarray] = {}
    scanned = 0
    skipped = 0
    counter = 0
    for iid, events in sorted(streams.items()):
        frames, timestamps = reconstruct(events, instrument_id=iid)
        if frames.shape[0] < n:
            continue
        wins = _sliding_windows(frames, n)[::stride]  # (W, n, depth, 2, 2)
        ts_end = timestamps[n - 1 :][::stride]
        offsets = np.arange(0, frames.shape[0] - n + 1, stride)
        scanned += wins.shape[0]

        best_bid = wins[:, 0, 0, 0, PLANE_PRICE].astype(np.float64)
        best_ask = wins[:, 0, 0, 1, PLANE_PRICE].astype(np.float64)
        valid = (best_bid > 0) & (best_ask > 0)
        skipped += int((~valid).sum())

        candidates: list[tuple[int, int, float, np.ndarray]] = []
        idx_valid = np.flatnonzero(valid)
        for lo in range(0, idx_valid.size, batch_size):
            sel = idx_valid[lo : lo + batch_size]
            raw = wins[sel].astype(np.float64)
            mid0 = 0.5 * (best_bid[sel] + best_ask[sel])
            price = raw[..., PLANE_PRICE]
            normed = np.empty_like(raw)
            normed[..., PLANE_PRICE] = np.where(
                price != 0.0,
                (price - mid0[:, None, None, None]) / PRICE_SCALE_TICKS,
                0.0,
            )
            normed[..., PLANE_QTY] = np.log1p(raw[..., PLANE_QTY]) / qty_scale
            x = normed.reshape(sel.size, n, -1)
            logits, embs, _ = forward_batch(params, config, x)
            probs = softmax(logits[:, -1, :])
            pred = probs.argmax(axis=1)
            flag = (pred != 0) & (probs[np.arange(sel.size), pred] >= threshold)
            for j in np.flatnonzero(flag):
                w_idx = int(sel[j])
                candidates.append(
                    (
                        w_idx,
                        int(pred[j]),
                        float(probs[j, pred[j]]),
                        embs[j],
                    )
                )

        # Merge overlapping flags: keep the max-probability window per cluster.
        candidates.sort(key=lambda cand: cand[0])
        clusters: list[list[tuple[int, int, float, np.ndarray]]] = []
        for cand in candidates:
            if clusters and cand[0] - clusters[-1][-1][0] <= n // stride:
                clusters[-1].append(cand)
            else:
                clusters.append([cand])
        for cluster in clusters:
            w_idx, pred, prob, emb = max(cluster, key=lambda cand: (cand[2], -cand[0]))
            counter += 1
            alert_id = f"{alert_prefix}-{counter:06d}"
            offset = int(offsets[w_idx])
            alerts.append(
                Alert(
                    alert_id=alert_id,
                    window_ref={
                        "instrument_id": iid,
                        "t_end": int(ts_end[w_idx]),
                        "offset": offset,
                        "t_start": int(timestamps[offset]),
                    },
                    predicted_label=pred,
                    model_score=prob,
                    meta={},
                )
            )
            embeddings[alert_id] = unit_vector(emb)
            frames_by_alert[alert_id] = wins[w_idx].copy()
    return ScanResult(
        alerts=alerts,
        embeddings=embeddings,
        frames=frames_by_alert,
        windows_scanned=scanned,
        windows_skipped=skipped,
    )


def rank_scan(
    result: ScanResult, store: ExemplarStore, k: int = 5
) -> list[Alert]:
    """Rank a scan's alerts against the exemplar store."""
    embs = [result.embeddings[a.alert_id] for a in result.alerts]
    return rank_alerts(result.alerts, embs, store, k)


def simulate_to_dir(config: SimConfig, out_dir: Union[str, Path]) -> dict:
    """Generate a full synthetic session into feed files plus ground truth."""
    from .feedio import write_feed
    from .simgen import write_episodes

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    episodes = []
    counts = {}
    for iid in range(config.instruments):
        events, eps = generate_instrument(config, iid)
        write_feed(events, out / f"feed_{iid:02d}.lob1")
        episodes.extend(eps)
        counts[iid] = len(events)
    write_episodes(episodes, out / "episodes.jsonl")
    return {"events": counts, "episodes": len(episodes)}
