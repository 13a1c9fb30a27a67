"""Expert-substitute annotator: the weak-labeler rules with three
relaxations so it also catches top-of-book spoof orders, removals spread
over many delete bursts, and continuous same-side cycles.

Used in place of a human reviewer to turn flagged windows into
high-confidence annotations for the exemplar store.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Optional, Sequence, Union

import numpy as np

from .book import BookEvent, Side
from .labeler import (
    LabelerParams,
    _Episode,
    detect_episodes,
    frames_from_snapshots,
    resolve_overlaps,
)
from .windows import WindowSample

ORACLE_BAND = (0, 12)  # relaxed level band: catches spoofs at the inside
BURST_CHAIN_LIMIT = 5  # removal matching may chain across this many bursts
MIN_LINKED_CYCLES = 3  # same-side episodes linked into one continuous pattern

TAG_CLASSIC = "Classic"
TAG_MULTI_DELETION = "MultiDeletion"
TAG_TOP_OF_BOOK = "TopOfBook"
TAG_CONTINUOUS = "ContinuousPattern"


class OracleError(Exception):
    pass


class InsufficientContext(OracleError):
    pass


@dataclass
class Annotation:
    window_ref: dict
    label: int  # 0 none, 1 buy-side, 2 sell-side
    confidence: float
    source: str  # "Human" | "Oracle"
    rationale: tuple[str, ...]
    created_at: str

    def to_json(self) -> dict:
        return {
            "window_ref": self.window_ref,
            "label": self.label,
            "confidence": self.confidence,
            "source": self.source,
            "rationale": list(self.rationale),
            "created_at": self.created_at,
        }


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def relaxed_params(params: LabelerParams) -> LabelerParams:
    return replace(params, level_band=ORACLE_BAND)


@dataclass
class _Finding:
    side: Side
    first_idx: int
    last_idx: int
    first_ts: int
    last_ts: int
    total_qty: int
    confidence_ratio: float
    tags: tuple[str, ...]
    cycles: int


def _tag_episode(ep: _Episode, params: LabelerParams) -> list[str]:
    tags = []
    if ep.min_offset < params.level_band[0]:
        tags.append(TAG_TOP_OF_BOOK)
    if ep.removal_bursts >= 3:
        tags.append(TAG_MULTI_DELETION)
    return tags


def oracle_findings(
    events: Sequence[BookEvent],
    snapshots: Union[np.ndarray, Sequence],
    params: LabelerParams,
) -> list[_Finding]:
    """Run the relaxed rules over a stream and link same-side cycles.

    Candidacy widens to the oracle band but the rolling-depth reference
    keeps the base labeler's width, so oracle positives stay a superset of
    weak-labeler positives by construction.
    """
    frames = frames_from_snapshots(snapshots)
    episodes = resolve_overlaps(
        detect_episodes(
            events,
            frames,
            relaxed_params(params),
            burst_chain_limit=BURST_CHAIN_LIMIT,
            reference_band=params.level_band[1],
        )
    )
    episodes.sort(key=lambda e: e.first_idx)
    # Back-to-back cycles sit milliseconds apart; one cancel horizon links
    # them while staying far below the spacing of unrelated episodes.
    link_gap_ns = params.cancel_horizon_ns
    findings: list[_Finding] = []
    group: list[_Episode] = []

    def flush(chain: list[_Episode]) -> None:
        if not chain:
            return
        total = sum(e.total_qty for e in chain)
        tags: list[str] = []
        for e in chain:
            for t in _tag_episode(e, params):
                if t not in tags:
                    tags.append(t)
        if len(chain) >= MIN_LINKED_CYCLES:
            tags.append(TAG_CONTINUOUS)
        if not tags:
            tags.append(TAG_CLASSIC)
        ratio = max(
            e.total_qty / (params.size_mult * max(1.0, e.reference_depth))
            for e in chain
        )
        findings.append(
            _Finding(
                side=chain[0].side,
                first_idx=chain[0].first_idx,
                last_idx=chain[-1].last_idx,
                first_ts=chain[0].first_ts,
                last_ts=chain[-1].last_ts,
                total_qty=total,
                confidence_ratio=ratio,
                tags=tuple(tags),
                cycles=len(chain),
            )
        )

    for ep in episodes:
        if (
            group
            and ep.side == group[-1].side
            and ep.first_ts - group[-1].last_ts <= link_gap_ns
        ):
            group.append(ep)
            continue
        flush(group)
        group = [ep]
    flush(group)
    return findings


def assess(
    window: WindowSample,
    events: Sequence[BookEvent],
    snapshots: Union[np.ndarray, Sequence],
    params: Optional[LabelerParams] = None,
    created_at: Optional[str] = None,
) -> Annotation:
    """Annotate one window given the event context around it.

    The context must cover the window's timespan (plus the labeler horizons
    on each side for reliable matching). Positive confidence is the burst
    prominence ratio mapped onto [0.5, 1.0]; a clean window gets label 0
    at confidence 0.9.
    """
    params = params or LabelerParams()
    if len(events) == 0:
        raise InsufficientContext("empty event context")
    t_hi = int(window.t_end)
    t_lo = int(window.meta.get("t_start", t_hi))
    if events[0].timestamp > t_lo or events[-1].timestamp < t_hi:
        raise InsufficientContext(
            f"context [{events[0].timestamp}, {events[-1].timestamp}] does not "
            f"cover window [{t_lo}, {t_hi}]"
        )
    findings = oracle_findings(events, snapshots, params)
    overlapping = [f for f in findings if f.first_ts <= t_hi and f.last_ts >= t_lo]
    ref = {
        "instrument_id": window.instrument_id,
        "t_end": window.t_end,
        "offset": window.meta.get("offset"),
    }
    stamp = created_at or _now_iso()
    if not overlapping:
        return Annotation(ref, 0, 0.9, "Oracle", (), stamp)
    best = max(overlapping, key=lambda f: f.total_qty)
    confidence = 0.5 + 0.5 * min(1.0, best.confidence_ratio)
    label = 1 if best.side == Side.BID else 2
    return Annotation(ref, label, confidence, "Oracle", best.tags, stamp)


def oracle_label_stream(
    events: Sequence[BookEvent],
    snapshots: Union[np.ndarray, Sequence],
    params: Optional[LabelerParams] = None,
) -> np.ndarray:
    """Timestep labels from the relaxed rules; a strict superset of the weak
    labeler's positives on the same stream."""
    params = params or LabelerParams()
    frames = frames_from_snapshots(snapshots)
    findings = oracle_findings(events, frames, params)
    labels = np.zeros(len(events), dtype=np.int64)
    for f in findings:
        labels[f.first_idx : f.last_idx + 1] = 1 if f.side == Side.BID else 2
    return labels
