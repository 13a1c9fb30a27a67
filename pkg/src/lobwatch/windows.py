"""Stacked window tensors: slicing labeled snapshot streams into training
samples and normalizing them for the model.

A sample is (n, depth, 2, 2): n frames, 30 levels, [bid, ask] sides and
[qty, price] planes. Prices are centered on the first frame's mid and scaled
by a fixed tick constant; quantities are log-compressed against a 95th
percentile fitted once on the training split.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .book import DEPTH, PLANE_PRICE, PLANE_QTY

log = logging.getLogger(__name__)

PRICE_SCALE_TICKS = 50.0

# Per-timestep label used by the 2-class head for frames that carry no
# spoofing label; the loss skips these positions.
LABEL_IGNORE = -1


class WindowError(Exception):
    pass


class TooShort(WindowError):
    pass


class DegenerateBook(WindowError):
    pass


class EmptyClass(WindowError):
    pass


@dataclass
class WindowSample:
    """n stacked book frames plus per-timestep labels; the training unit."""

    frames: np.ndarray  # (n, depth, 2, 2)
    labels: np.ndarray  # (n,)
    instrument_id: int = 0
    t_end: int = 0
    meta: dict = field(default_factory=dict)


def build_windows(
    frames: np.ndarray,
    labels: np.ndarray,
    timestamps: np.ndarray,
    n: int = 10,
    stride: int = 1,
    instrument_id: int = 0,
) -> list[WindowSample]:
    """Slice an aligned (T, depth, 2, 2) stream into windows [i, i+n).

    Windows start at 0, stride, 2*stride, ...; frames are views into the
    source array, so building is cheap. Raises TooShort when T < n.
    """
    frames = np.asarray(frames)
    labels = np.asarray(labels)
    timestamps = np.asarray(timestamps)
    total = frames.shape[0]
    if labels.shape[0] != total or timestamps.shape[0] != total:
        raise WindowError(
            f"misaligned stream: {total} frames, {labels.shape[0]} labels, "
            f"{timestamps.shape[0]} timestamps"
        )
    if stride < 1:
        raise WindowError(f"stride must be >= 1, got {stride}")
    if total < n:
        raise TooShort(f"{total} snapshots < window length {n}")
    out = []
    for start in range(0, total - n + 1, stride):
        end = start + n
        out.append(
            WindowSample(
                frames=frames[start:end],
                labels=labels[start:end],
                instrument_id=instrument_id,
                t_end=int(timestamps[end - 1]),
                meta={"offset": start, "t_start": int(timestamps[start])},
            )
        )
    return out


def fit_qty_scale(samples: Sequence[WindowSample], percentile: float = 95.0) -> float:
    """Fit the quantity log-scale log(1 + Q_p) over a training set.

    The percentile is taken over filled levels only (zero entries are
    absent levels, not sizes). Computed once on the training split and
    persisted with the model so validation and scanning never leak
    statistics.
    """
    if not samples:
        raise WindowError("cannot fit quantity scale on an empty training set")
    qtys = np.concatenate(
        [np.asarray(s.frames)[..., PLANE_QTY].ravel() for s in samples]
    )
    qtys = qtys[qtys > 0]
    if qtys.size == 0:
        raise WindowError("training set has no resting quantity anywhere")
    q = float(np.percentile(qtys, percentile))
    scale = float(np.log1p(q))
    if scale <= 0.0:
        raise WindowError(f"degenerate quantity scale from Q{percentile:g}={q:g}")
    return scale


def window_mid(frames: np.ndarray) -> float:
    """Mid price of frame 0 (mean of best bid and best ask prices)."""
    best_bid = float(frames[0, 0, 0, PLANE_PRICE])
    best_ask = float(frames[0, 0, 1, PLANE_PRICE])
    if best_bid <= 0.0 or best_ask <= 0.0:
        raise DegenerateBook("frame 0 has an empty side; mid undefined")
    return 0.5 * (best_bid + best_ask)


def normalize(
    frames: np.ndarray,
    qty_scale: float,
    price_scale: float = PRICE_SCALE_TICKS,
) -> np.ndarray:
    """Normalize one raw (n, depth, 2, 2) window to model input.

    Price plane -> (price - mid0) / price_scale with zero-filled levels kept
    at exactly 0; qty plane -> log1p(qty) / qty_scale. Raises DegenerateBook
    when frame 0 has an empty side.
    """
    frames = np.asarray(frames)
    mid0 = window_mid(frames)
    out = np.empty(frames.shape, dtype=np.float64)
    price = frames[..., PLANE_PRICE].astype(np.float64)
    filled = price != 0.0
    out[..., PLANE_PRICE] = np.where(filled, (price - mid0) / price_scale, 0.0)
    out[..., PLANE_QTY] = np.log1p(frames[..., PLANE_QTY].astype(np.float64)) / qty_scale
    return out


def normalize_many(
    samples: Sequence[WindowSample],
    qty_scale: float,
    price_scale: float = PRICE_SCALE_TICKS,
) -> tuple[np.ndarray, np.ndarray, list[int], int]:
    """Normalize a batch of windows, skipping degenerate ones with a count.

    Returns (X, Y, kept_indices, skipped) where X is (N, n, depth*2*2)
    float64 model input and Y the aligned (N, n) integer labels.
    """
    xs: list[np.ndarray] = []
    ys: list[np.ndarray] = []
    kept: list[int] = []
    skipped = 0
    for i, sample in enumerate(samples):
        try:
            normed = normalize(sample.frames, qty_scale, price_scale)
        except DegenerateBook:
            skipped += 1
            continue
        xs.append(normed.reshape(normed.shape[0], -1))
        ys.append(np.asarray(sample.labels, dtype=np.int64))
        kept.append(i)
    if skipped:
        log.warning("skipped %d degenerate windows (empty side in frame 0)", skipped)
    if not xs:
        return (
            np.empty((0, 0, DEPTH * 4)),
            np.empty((0, 0), dtype=np.int64),
            kept,
            skipped,
        )
    return np.stack(xs), np.stack(ys), kept, skipped


def final_label(sample: WindowSample) -> int:
    return int(np.asarray(sample.labels)[-1])


def class_filter(
    samples: Sequence[WindowSample],
    c: int,
    seed: int = 0,
    neutral_cap: int = 3,
) -> list[WindowSample]:
    """Restrict a window set to the c-class task.

    c=2 keeps only windows whose final-timestep label is 1 or 2 and remaps
    per-timestep labels {1,2} -> {0,1} (neutral positions become
    LABEL_IGNORE and are masked out of the loss). c=3 keeps everything but
    downsamples all-neutral windows to at most ``neutral_cap`` times the
    non-neutral count, with a seeded draw.
    """
    if c not in (2, 3):
        raise WindowError(f"c must be 2 or 3, got {c}")
    finals = np.array([final_label(s) for s in samples])
    if c == 2:
        kept = [s for s, f in zip(samples, finals) if f in (1, 2)]
        n_buy = int(np.sum(finals == 1))
        n_sell = int(np.sum(finals == 2))
        if n_buy == 0 or n_sell == 0:
            raise EmptyClass(
                f"2-class task needs both spoof sides; got buy={n_buy} sell={n_sell}"
            )
        out = []
        for s in kept:
            labels = np.asarray(s.labels, dtype=np.int64)
            remapped = np.full_like(labels, LABEL_IGNORE)
            remapped[labels == 1] = 0
            remapped[labels == 2] = 1
            out.append(
                WindowSample(s.frames, remapped, s.instrument_id, s.t_end, dict(s.meta))
            )
        return out
    non_neutral = [s for s, f in zip(samples, finals) if f != 0]
    if not non_neutral:
        raise EmptyClass("3-class task found no non-neutral windows")
    neutral_idx = np.flatnonzero(finals == 0)
    cap = neutral_cap * len(non_neutral)
    if len(neutral_idx) > cap:
        rng = np.random.default_rng(seed)
        neutral_idx = np.sort(rng.choice(neutral_idx, size=cap, replace=False))
    keep = set(neutral_idx.tolist())
    out = [
        s
        for i, (s, f) in enumerate(zip(samples, finals))
        if f != 0 or i in keep
    ]
    return out
