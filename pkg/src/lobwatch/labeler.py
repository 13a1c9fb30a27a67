"""Weak labelling of spoofing episodes over aligned event/snapshot streams.

The rule: a burst of prominent same-side adds placed away from the inside,
followed quickly by an opposite-side execution, followed by removal of most
of the burst, marks every timestep from the first burst add through the last
removal as buy-side (1, spoof orders resting on the bid) or sell-side (2)
spoofing. Everything else is 0. A deliberately perturbed variant of the
parameters labels the validation split.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .book import BookEvent, EventKind, PLANE_PRICE, PLANE_QTY, Side, Snapshot

# Adds within this many ns of each other can form one candidate burst.
GROUP_LOOKBACK_NS = 1_000_000_000

# A single add only joins a candidate burst if its own size is at least this
# fraction of the rolling in-band depth; keeps dribbles of ordinary flow from
# diluting burst boundaries so confirmed spans line up with the true episode.
MIN_ORDER_FRAC = 0.12


class LabelerError(Exception):
    pass


class AlignmentError(LabelerError):
    pass


class InvalidParams(LabelerError):
    pass


@dataclass(frozen=True)
class LabelerParams:
    size_mult: float = 3.0  # burst qty threshold as multiple of rolling depth
    level_band: tuple[int, int] = (2, 10)  # ticks from best, inclusive
    exec_horizon_ns: int = 500_000_000
    cancel_horizon_ns: int = 2_000_000_000
    cancel_frac: float = 0.75  # fraction of burst qty that must be removed
    depth_window: int = 100  # snapshots in the rolling depth mean

    def validate(self) -> None:
        if self.size_mult <= 1.0:
            raise InvalidParams("size_mult must be > 1")
        lo, hi = self.level_band
        if lo > hi or lo < 0:
            raise InvalidParams(f"bad level band [{lo}, {hi}]")
        if not 0.0 < self.cancel_frac <= 1.0:
            raise InvalidParams("cancel_frac must be in (0, 1]")
        if self.exec_horizon_ns <= 0 or self.cancel_horizon_ns <= 0:
            raise InvalidParams("horizons must be positive")
        if self.depth_window < 1:
            raise InvalidParams("depth_window must be >= 1")

    def to_json(self) -> dict:
        return {
            "size_mult": self.size_mult,
            "level_band": list(self.level_band),
            "exec_horizon_ns": self.exec_horizon_ns,
            "cancel_horizon_ns": self.cancel_horizon_ns,
            "cancel_frac": self.cancel_frac,
            "depth_window": self.depth_window,
        }

    @classmethod
    def from_json(cls, source: Union[str, Path, dict]) -> "LabelerParams":
        if isinstance(source, (str, Path)):
            with open(source, "r", encoding="utf-8") as fh:
                source = json.load(fh)
        params = cls(
            size_mult=float(source.get("size_mult", 3.0)),
            level_band=tuple(source.get("level_band", (2, 10))),
            exec_horizon_ns=int(source.get("exec_horizon_ns", 500_000_000)),
            cancel_horizon_ns=int(source.get("cancel_horizon_ns", 2_000_000_000)),
            cancel_frac=float(source.get("cancel_frac", 0.75)),
            depth_window=int(source.get("depth_window", 100)),
        )
        params.validate()
        return params


def variant_params(p: LabelerParams) -> LabelerParams:
    """The validation labeler: same rule, deliberately loosened thresholds."""
    p.validate()
    lo, hi = p.level_band
    return replace(
        p,
        size_mult=0.85 * p.size_mult,
        level_band=(max(1, lo - 1), hi + 2),
        cancel_frac=0.9 * p.cancel_frac,
        exec_horizon_ns=int(p.exec_horizon_ns * 1.5),
        cancel_horizon_ns=int(p.cancel_horizon_ns * 1.5),
    )


def frames_from_snapshots(
    snapshots: Union[np.ndarray, Sequence[Snapshot]]
) -> np.ndarray:
    """Coerce a snapshot sequence to a (T, depth, 2, 2) int array."""
    if isinstance(snapshots, np.ndarray):
        if snapshots.ndim != 4 or snapshots.shape[2:] != (2, 2):
            raise AlignmentError(f"bad snapshot tensor shape {snapshots.shape}")
        return snapshots
    return np.stack([s.to_frame() for s in snapshots])


def in_band_depth(frames: np.ndarray, band_ticks: int) -> np.ndarray:
    """Per-snapshot total qty within ``band_ticks`` of each side's best.

    Returns (T, 2) float64. A side with an empty book contributes 0.
    """
    prices = frames[..., PLANE_PRICE]
    qtys = frames[..., PLANE_QTY]
    best = prices[:, 0, :]  # (T, 2); row 0 is the top of book
    filled = prices != 0
    bid_ok = prices[:, :, 0] >= (best[:, None, 0] - band_ticks)
    ask_ok = prices[:, :, 1] <= (best[:, None, 1] + band_ticks)
    mask = np.stack([bid_ok, ask_ok], axis=-1) & filled & (best[:, None, :] != 0)
    return (qtys * mask).sum(axis=1).astype(np.float64)


def rolling_depth_mean(depth: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean of the previous ``window`` snapshots, excluding t itself.

    roll[0] falls back to depth[0] so the very first events have a finite
    reference.
    """
    total = depth.shape[0]
    csum = np.concatenate(
        [np.zeros((1, depth.shape[1])), np.cumsum(depth, axis=0)], axis=0
    )
    t = np.arange(total)
    lo = np.maximum(0, t - window)
    span = np.maximum(1, t - lo)
    roll = (csum[t] - csum[lo]) / span[:, None]
    if total > 0:
        roll[0] = depth[0]
    return roll


@dataclass
class _Episode:
    side: Side
    first_idx: int
    last_idx: int
    total_qty: int
    # Diagnostics consumed by the expert oracle's rationale and confidence.
    min_offset: int
    removal_bursts: int
    exec_ts: int
    first_ts: int
    last_ts: int
    reference_depth: float


class _SideState:
    """Burst detection state machine for one side of the book."""

    __slots__ = ("pending", "armed", "resolving")

    def __init__(self) -> None:
        self.pending: list[tuple[int, int, int, int, int]] = []  # idx, ts, oid, qty, off
        self.armed: Optional[dict] = None
        self.resolving: Optional[dict] = None


def _close_resolution(state: _SideState, side: Side, out: list[_Episode]) -> None:
    res = state.resolving
    state.resolving = None
    if res is None or not res["confirmed"] or res["last_removal_idx"] is None:
        return
    out.append(
        _Episode(
            side=side,
            first_idx=res["first_idx"],
            last_idx=res["last_removal_idx"],
            total_qty=res["total"],
            min_offset=res["min_offset"],
            removal_bursts=res["bursts"],
            exec_ts=res["exec_ts"],
            first_ts=res["first_ts"],
            last_ts=res["last_removal_ts"],
            reference_depth=res["ref"],
        )
    )


def detect_episodes(
    events: Sequence[BookEvent],
    frames: np.ndarray,
    params: LabelerParams,
    burst_chain_limit: int = 1,
    reference_band: Optional[int] = None,
) -> list[_Episode]:
    """Scan one instrument's aligned stream for spoofing episodes.

    ``burst_chain_limit`` > 1 lets removal matching chain across that many
    separate delete bursts (each within the cancel horizon of the previous
    one); the weak labeler uses 1, the expert oracle relaxes it.
    ``reference_band`` overrides the band width of the rolling-depth
    statistic; the oracle widens candidacy without inflating the reference.
    """
    total = len(events)
    if frames.shape[0] != total:
        raise AlignmentError(f"{total} events vs {frames.shape[0]} snapshots")
    params.validate()
    if total == 0:
        return []
    lo_band, hi_band = params.level_band
    alpha = params.size_mult
    depth = in_band_depth(frames, reference_band or hi_band)
    roll = rolling_depth_mean(depth, params.depth_window)
    prices = frames[:, 0, :, PLANE_PRICE]  # best per side, post-event

    orders: dict[int, tuple[Side, int]] = {}  # oid -> (side, remaining)
    states = (_SideState(), _SideState())
    episodes: list[_Episode] = []

    for i, ev in enumerate(events):
        ts = ev.timestamp

        # Expire armed groups and close removal windows before the event.
        for side in (Side.BID, Side.ASK):
            st = states[side]
            if st.armed is not None and ts - st.armed["last_add_ts"] > params.exec_horizon_ns:
                st.armed = None
            res = st.resolving
            if res is not None and ts > res["window_end"]:
                _close_resolution(st, side, episodes)

        kind = ev.kind
        if kind == EventKind.ADD:
            side = Side(ev.side)
            qty = int(ev.qty)
            orders[ev.order_id] = (side, qty)
            # The rolling depth reference needs a full window before any
            # prominence comparison is meaningful.
            if i < params.depth_window:
                continue
            best = int(prices[i, side])
            if best <= 0:
                continue
            offset = best - ev.price if side == Side.BID else ev.price - best
            if not lo_band <= offset <= hi_band:
                continue
            ref = max(1.0, float(roll[i, side]))
            if qty < MIN_ORDER_FRAC * ref:
                continue
            st = states[side]
            member = (i, ts, ev.order_id, qty, offset)
            if st.armed is not None:
                members = st.armed["members"]
                members.append(member)
                members = [m for m in members if ts - m[1] <= GROUP_LOOKBACK_NS]
                first = members[0]
                ref = max(1.0, float(roll[first[0], side]))
                agg = sum(m[3] for m in members)
                if agg >= alpha * ref:
                    st.armed["members"] = members
                    st.armed["last_add_ts"] = ts
                else:  # group slid below threshold: back to plain pending
                    st.armed = None
                    st.pending = members
                continue
            st.pending.append(member)
            st.pending = [p for p in st.pending if ts - p[1] <= GROUP_LOOKBACK_NS]
            if st.resolving is not None:
                continue
            first = st.pending[0]
            ref = max(1.0, float(roll[first[0], side]))
            agg = sum(p[3] for p in st.pending)
            if agg >= alpha * ref:
                st.armed = {
                    "members": list(st.pending),
                    "last_add_ts": ts,
                    "ref": ref,
                }
                st.pending = []
        else:
            entry = orders.get(ev.order_id)
            if entry is None:
                continue
            side_o, rem = entry
            amount = rem if kind == EventKind.DELETE else min(int(ev.qty), rem)
            left = rem - amount
            if left > 0:
                orders[ev.order_id] = (side_o, left)
            else:
                del orders[ev.order_id]

            if kind == EventKind.EXECUTE:
                st = states[side_o.opposite]
                if (
                    st.armed is not None
                    and ts - st.armed["last_add_ts"] <= params.exec_horizon_ns
                    and st.resolving is None
                ):
                    members = st.armed["members"]
                    spoof_side = side_o.opposite
                    st.armed = None
                    st.pending = []
                    st.resolving = {
                        "ids": {m[2] for m in members},
                        "total": sum(m[3] for m in members),
                        "removed": 0,
                        "first_idx": members[0][0],
                        "first_ts": members[0][1],
                        "ref": max(1.0, float(roll[members[0][0], spoof_side])),
                        "min_offset": min(m[4] for m in members),
                        "exec_ts": ts,
                        "window_end": ts + params.cancel_horizon_ns,
                        "last_removal_idx": None,
                        "last_removal_ts": ts,
                        "confirmed": False,
                        "bursts": 0,
                        "prev_removal_idx": None,
                    }
            else:  # Cancel or Delete may count toward burst removal
                st = states[side_o]
                res = st.resolving
                if res is not None and ev.order_id in res["ids"] and ts <= res["window_end"]:
                    prev = res["prev_removal_idx"]
                    # Removals separated by any other event start a new burst.
                    if prev is None or i - prev > 1:
                        res["bursts"] += 1
                    res["prev_removal_idx"] = i
                    res["removed"] += amount
                    res["last_removal_idx"] = i
                    res["last_removal_ts"] = ts
                    # Chained matching: each counted removal keeps the window
                    # open another cancel horizon, up to the burst limit.
                    if burst_chain_limit > 1 and res["bursts"] < burst_chain_limit:
                        res["window_end"] = max(
                            res["window_end"], ts + params.cancel_horizon_ns
                        )
                    if res["removed"] >= params.cancel_frac * res["total"]:
                        res["confirmed"] = True
                    if res["removed"] >= res["total"]:
                        _close_resolution(st, side_o, episodes)

    for side in (Side.BID, Side.ASK):
        _close_resolution(states[side], side, episodes)
    return episodes


def resolve_overlaps(episodes: list[_Episode]) -> list[_Episode]:
    """Opposite-side episodes with overlapping spans: keep the larger burst
    (ties go to the earlier start)."""
    ordered = sorted(episodes, key=lambda e: (e.first_idx, -e.total_qty))
    kept: list[_Episode] = []
    for ep in ordered:
        winner = True
        for other in kept:
            if other.side == ep.side:
                continue
            if ep.first_idx <= other.last_idx and other.first_idx <= ep.last_idx:
                if (ep.total_qty, -ep.first_idx) > (other.total_qty, -other.first_idx):
                    kept.remove(other)
                else:
                    winner = False
                break
        if winner:
            kept.append(ep)
    return kept


def label_stream(
    events: Sequence[BookEvent],
    snapshots: Union[np.ndarray, Sequence[Snapshot]],
    params: LabelerParams,
) -> np.ndarray:
    """Per-snapshot labels: 0 none, 1 buy-side spoofing, 2 sell-side spoofing.

    snapshots[i] must be the book state immediately after events[i].
    """
    frames = frames_from_snapshots(snapshots)
    if len(events) != frames.shape[0]:
        raise AlignmentError(
            f"{len(events)} events vs {frames.shape[0]} snapshots"
        )
    episodes = resolve_overlaps(detect_episodes(events, frames, params))
    labels = np.zeros(len(events), dtype=np.int64)
    for ep in episodes:
        labels[ep.first_idx : ep.last_idx + 1] = 1 if ep.side == Side.BID else 2
    return labels
