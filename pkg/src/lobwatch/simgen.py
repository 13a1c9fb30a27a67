"""Seeded synthetic market: background order flow plus injected spoofing
episodes with exact ground truth.

Every instrument is generated by its own splitmix-derived PRNG stream and
applied to a live OrderBook as it is emitted, so streams are valid by
construction (uncrossed, monotone timestamps, no unknown ids). Episode
variants: classic layering away from the inside, deletions split across
several bursts, spoof orders at the top of the book, and continuous
back-to-back cycles on one side.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from random import Random
from typing import Iterable, Optional, Sequence, Union

from .book import BookEvent, EventKind, OrderBook, Side


class InvalidConfig(Exception):
    pass


class Liquidity(str, Enum):
    LIQUID = "Liquid"
    ILLIQUID = "Illiquid"


class Variant(str, Enum):
    CLASSIC = "Classic"
    MULTI_DELETION = "MultiDeletion"
    TOP_OF_BOOK = "TopOfBook"
    CONTINUOUS_PATTERN = "ContinuousPattern"


DEFAULT_EPISODE_MIX = {
    Variant.CLASSIC: 0.4,
    Variant.MULTI_DELETION: 0.2,
    Variant.TOP_OF_BOOK: 0.2,
    Variant.CONTINUOUS_PATTERN: 0.2,
}

# Mean qty of one background limit order by liquidity profile; liquid books
# carry >=5x the resting depth of illiquid ones mostly through order size.
QTY_MEAN = {Liquidity.LIQUID: 60.0, Liquidity.ILLIQUID: 9.0}
# Geometric placement parameter: smaller p spreads orders over more levels.
OFFSET_P = {Liquidity.LIQUID: 0.45, Liquidity.ILLIQUID: 0.30}

SPOOF_BAND = (2, 10)  # ticks from best for away-from-inside spoof orders
SPOOF_MULT = (3.0, 6.0)  # spoof size as a multiple of rolling in-band depth
DEPTH_SAMPLE_WINDOW = 100  # events of in-band depth history for spoof sizing
IN_BAND_TICKS = 10


@dataclass
class SimConfig:
    seed: int = 42
    instruments: int = 5
    session_length: int = 200_000
    base_price: int = 10_000
    tick_volatility: float = 1.5  # ticks per sqrt(second) of mid diffusion
    liquidity_profiles: Optional[Sequence[Liquidity]] = None  # default alternates
    add_rate: float = 0.55
    cancel_rate: float = 0.35
    execute_rate: float = 0.10
    episode_count: int = 40
    episode_mix: dict = field(default_factory=lambda: dict(DEFAULT_EPISODE_MIX))
    mean_event_gap_ns: int = 1_000_000

    def validate(self) -> None:
        rates = self.add_rate + self.cancel_rate + self.execute_rate
        if abs(rates - 1.0) > 1e-9:
            raise InvalidConfig(f"event rates sum to {rates}, expected 1")
        if min(self.add_rate, self.cancel_rate, self.execute_rate) < 0:
            raise InvalidConfig("event rates must be non-negative")
        if self.episode_count < 0:
            raise InvalidConfig("episode_count must be >= 0")
        if self.instruments < 1:
            raise InvalidConfig("need at least one instrument")
        if self.session_length < 1000:
            raise InvalidConfig("session_length must be >= 1000")
        if self.base_price < 100:
            raise InvalidConfig("base_price must be >= 100 ticks")
        if self.mean_event_gap_ns <= 0:
            raise InvalidConfig("mean_event_gap_ns must be positive")
        if not self.episode_mix or any(w < 0 for w in self.episode_mix.values()):
            raise InvalidConfig("episode_mix weights must be non-negative")
        if sum(self.episode_mix.values()) <= 0:
            raise InvalidConfig("episode_mix weights must not all be zero")
        if self.liquidity_profiles is not None and len(
            self.liquidity_profiles
        ) != self.instruments:
            raise InvalidConfig("liquidity_profiles length must match instruments")

    def profile(self, instrument_id: int) -> Liquidity:
        if self.liquidity_profiles is not None:
            return Liquidity(self.liquidity_profiles[instrument_id])
        return Liquidity.LIQUID if instrument_id % 2 == 0 else Liquidity.ILLIQUID

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "SimConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if "episode_mix" in raw:
            raw["episode_mix"] = {Variant(k): v for k, v in raw["episode_mix"].items()}
        if raw.get("liquidity_profiles") is not None:
            raw["liquidity_profiles"] = [Liquidity(p) for p in raw["liquidity_profiles"]]
        return cls(**raw)


@dataclass
class EpisodeRecord:
    """Ground truth for one injected spoofing episode."""

    instrument_id: int
    variant: Variant
    spoof_side: Side
    t_start: int
    t_end: int
    spoof_order_ids: frozenset[int]
    exec_order_id: int
    intended_label: int

    def to_json(self) -> dict:
        return {
            "instrument_id": self.instrument_id,
            "variant": self.variant.value,
            "spoof_side": "Bid" if self.spoof_side == Side.BID else "Ask",
            "t_start": self.t_start,
            "t_end": self.t_end,
            "spoof_order_ids": sorted(self.spoof_order_ids),
            "exec_order_id": self.exec_order_id,
            "intended_label": self.intended_label,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EpisodeRecord":
        return cls(
            instrument_id=int(obj["instrument_id"]),
            variant=Variant(obj["variant"]),
            spoof_side=Side.BID if obj["spoof_side"] == "Bid" else Side.ASK,
            t_start=int(obj["t_start"]),
            t_end=int(obj["t_end"]),
            spoof_order_ids=frozenset(int(i) for i in obj["spoof_order_ids"]),
            exec_order_id=int(obj["exec_order_id"]),
            intended_label=int(obj["intended_label"]),
        )


def write_episodes(episodes: Iterable[EpisodeRecord], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ep in episodes:
            fh.write(json.dumps(ep.to_json(), separators=(",", ":")))
            fh.write("\n")


def read_episodes(path: Union[str, Path]) -> list[EpisodeRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(EpisodeRecord.from_json(json.loads(line)))
    return out


def _splitmix64(x: int) -> int:
    """One splitmix64 step; used to derive independent per-instrument seeds."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def instrument_seed(seed: int, instrument_id: int) -> int:
    s = _splitmix64(seed & 0xFFFFFFFFFFFFFFFF)
    for _ in range(instrument_id + 1):
        s = _splitmix64(s)
    return s


class _InstrumentSim:
    """Event generator for one instrument; owns its PRNG and book mirror."""

    def __init__(self, config: SimConfig, instrument_id: int) -> None:
        self.config = config
        self.instrument_id = instrument_id
        self.rng = Random(instrument_seed(config.seed, instrument_id))
        self.book = OrderBook(instrument_id)
        self.profile = config.profile(instrument_id)
        self.qty_mean = QTY_MEAN[self.profile]
        self.offset_p = OFFSET_P[self.profile]
        self.mid = float(config.base_price)
        self.lo = 0.6 * config.base_price
        self.hi = 1.4 * config.base_price
        self.ts = 0
        self.next_order_id = 1
        self.events: list[BookEvent] = []
        self.episodes: list[EpisodeRecord] = []
        # Background orders eligible for random cancel/delete/execute; spoof
        # orders never enter this pool.
        self.pool: list[int] = []
        self.pool_index: dict[int, int] = {}
        self.ids_at_price: dict[tuple[Side, int], list[int]] = {}
        self.depth_hist: tuple[list[int], list[int]] = ([], [])

    # -- plumbing ---------------------------------------------------------

    def _new_id(self) -> int:
        oid = self.next_order_id
        self.next_order_id += 1
        return oid

    def _advance_time(self) -> None:
        gap = self.rng.expovariate(1.0 / self.config.mean_event_gap_ns)
        dt = max(1, int(gap))
        self.ts += dt
        step = self.config.tick_volatility * math.sqrt(dt / 1e9)
        self.mid += self.rng.gauss(0.0, step)
        if self.mid < self.lo:
            self.mid = 2 * self.lo - self.mid
        elif self.mid > self.hi:
            self.mid = 2 * self.hi - self.mid

    def _emit(self, ev: BookEvent) -> None:
        self.book.apply(ev)
        self.events.append(ev)
        for side in (Side.BID, Side.ASK):
            hist = self.depth_hist[side]
            hist.append(self.book.depth_within(side, IN_BAND_TICKS))
            if len(hist) > DEPTH_SAMPLE_WINDOW:
                del hist[0]

    def rolling_depth(self, side: Side) -> float:
        hist = self.depth_hist[side]
        if not hist:
            return 1.0
        return max(1.0, sum(hist) / len(hist))

    def _pool_add(self, oid: int, side: Side, price: int) -> None:
        self.pool_index[oid] = len(self.pool)
        self.pool.append(oid)
        self.ids_at_price.setdefault((side, price), []).append(oid)

    def _pool_remove(self, oid: int, side: Side, price: int) -> None:
        idx = self.pool_index.pop(oid)
        last = self.pool.pop()
        if last != oid:
            self.pool[idx] = last
            self.pool_index[last] = idx
        ids = self.ids_at_price[(side, price)]
        ids.remove(oid)
        if not ids:
            del self.ids_at_price[(side, price)]

    # -- background flow --------------------------------------------------

    def _background_price(self, side: Side) -> Optional[int]:
        g = 0
        while self.rng.random() > self.offset_p and g < 25:
            g += 1
        if side == Side.BID:
            price = int(math.floor(self.mid)) - g
            best_ask = self.book.best_price(Side.ASK)
            if best_ask is not None and price >= best_ask:
                price = best_ask - 1
        else:
            price = int(math.ceil(self.mid)) + g
            best_bid = self.book.best_price(Side.BID)
            if best_bid is not None and price <= best_bid:
                price = best_bid + 1
        return price if price >= 1 else None

    def _background_qty(self) -> int:
        # Bounded sizes ([0.25, 1.75] x mean) keep ordinary orders cleanly
        # below spoof-order prominence at any rolling depth.
        return 1 + int(self.qty_mean * (0.25 + 1.5 * self.rng.random()))

    def background_add(self, side: Optional[Side] = None) -> None:
        if side is None:
            side = Side.BID if self.rng.random() < 0.5 else Side.ASK
        price = self._background_price(side)
        if price is None:
            side = side.opposite
            price = self._background_price(side)
            if price is None:
                return
        oid = self._new_id()
        self._advance_time()
        self._emit(
            BookEvent(
                EventKind.ADD, self.ts, oid, side, price, self._background_qty(),
                self.instrument_id,
            )
        )
        self._pool_add(oid, side, price)

    def background_remove(self) -> None:
        if not self.pool:
            self.background_add()
            return
        oid = self.pool[self.rng.randrange(len(self.pool))]
        order = self.book.orders[oid]
        side, price, rem = order.side, order.price, order.qty
        self._advance_time()
        if rem >= 2 and self.rng.random() < 0.5:
            cut = self.rng.randint(1, rem - 1)
            self._emit(
                BookEvent(
                    EventKind.CANCEL, self.ts, oid, None, None, cut, self.instrument_id
                )
            )
        else:
            self._emit(
                BookEvent(
                    EventKind.DELETE, self.ts, oid, None, None, None, self.instrument_id
                )
            )
            self._pool_remove(oid, side, price)

    def _executable_at_best(self, side: Side) -> Optional[int]:
        best = self.book.best_price(side)
        if best is None:
            return None
        ids = self.ids_at_price.get((side, best))
        if not ids:
            return None
        return ids[self.rng.randrange(len(ids))]

    def background_execute(self, side: Optional[Side] = None) -> Optional[int]:
        sides = [side] if side is not None else (
            [Side.BID, Side.ASK] if self.rng.random() < 0.5 else [Side.ASK, Side.BID]
        )
        for s in sides:
            oid = self._executable_at_best(s)
            if oid is None:
                continue
            order = self.book.orders[oid]
            price, rem = order.price, order.qty
            amount = self.rng.randint(1, rem)
            self._advance_time()
            self._emit(
                BookEvent(
                    EventKind.EXECUTE, self.ts, oid, None, None, amount,
                    self.instrument_id,
                )
            )
            if amount == rem:
                self._pool_remove(oid, s, price)
            return oid
        self.background_add()
        return None

    def background_step(self, allow_exec: bool = True) -> None:
        roll = self.rng.random()
        if roll < self.config.add_rate:
            self.background_add()
        elif roll < self.config.add_rate + self.config.cancel_rate:
            self.background_remove()
        elif allow_exec:
            self.background_execute()
        else:
            self.background_add()

    def _background_run(self, count: int, allow_exec: bool = True) -> None:
        for _ in range(count):
            self.background_step(allow_exec)

    # -- spoofing episodes ------------------------------------------------

    def _split_qty(self, total: int, parts: int) -> list[int]:
        # Near-even split: every slice of a spoof burst stays individually
        # prominent against the rolling depth reference.
        weights = [0.7 + 0.6 * self.rng.random() for _ in range(parts)]
        scale = total / sum(weights)
        out = [max(1, int(w * scale)) for w in weights]
        out[-1] = max(1, total - sum(out[:-1]))
        return out

    def _spoof_price(self, side: Side, offset: int) -> int:
        best = self.book.best_price(side)
        if best is None:
            anchor = int(round(self.mid))
            best = anchor - 1 if side == Side.BID else anchor + 1
        price = best - offset if side == Side.BID else best + offset
        if side == Side.BID:
            best_ask = self.book.best_price(Side.ASK)
            if best_ask is not None and price >= best_ask:
                price = best_ask - 1
        else:
            best_bid = self.book.best_price(Side.BID)
            if best_bid is not None and price <= best_bid:
                price = best_bid + 1
        return max(1, price)

    def _spoof_cycle(
        self, side: Side, top_of_book: bool, delete_bursts: int
    ) -> tuple[list[int], int, int, int]:
        """Run one add/execute/delete cycle; returns (spoof ids, exec id,
        first add ts, last delete ts)."""
        ref = self.rolling_depth(side)
        alpha = self.rng.uniform(*SPOOF_MULT)
        parts = self.rng.randint(3, 8)
        total = max(parts, int(math.ceil(alpha * ref)))
        spoof_ids: list[int] = []
        first_add_ts = 0
        for qty in self._split_qty(total, parts):
            offset = 0 if top_of_book else self.rng.randint(*SPOOF_BAND)
            price = self._spoof_price(side, offset)
            oid = self._new_id()
            self._advance_time()
            self._emit(
                BookEvent(
                    EventKind.ADD, self.ts, oid, side, price, qty, self.instrument_id
                )
            )
            if not spoof_ids:
                first_add_ts = self.ts
            spoof_ids.append(oid)
            # No background executions while the burst builds: the episode's
            # own opposite-side trade is the one that follows the layering.
            self._background_run(self.rng.randint(1, 2), allow_exec=False)
        # Execute on the other side of the book; guarantee a resting target.
        opp = side.opposite
        exec_id = self._executable_at_best(opp)
        if exec_id is None:
            self.background_add(opp)
            exec_id = self._executable_at_best(opp)
        if exec_id is None:  # opposite side still empty: force a resting order
            price = self._spoof_price(opp, 1)
            exec_id = self._new_id()
            self._advance_time()
            self._emit(
                BookEvent(
                    EventKind.ADD, self.ts, exec_id, opp, price,
                    self._background_qty(), self.instrument_id,
                )
            )
            self._pool_add(exec_id, opp, price)
        order = self.book.orders[exec_id]
        opp_price, rem = order.price, order.qty
        amount = self.rng.randint(1, rem)
        self._advance_time()
        self._emit(
            BookEvent(
                EventKind.EXECUTE, self.ts, exec_id, None, None, amount,
                self.instrument_id,
            )
        )
        if amount == rem:
            self._pool_remove(exec_id, opp, opp_price)
        self._background_run(self.rng.randint(1, 3))
        # Remove every spoof order, optionally across several bursts.
        bursts: list[list[int]] = [[] for _ in range(delete_bursts)]
        for i, oid in enumerate(spoof_ids):
            bursts[i % delete_bursts].append(oid)
        bursts = [b for b in bursts if b]
        last_delete_ts = self.ts
        for i, burst in enumerate(bursts):
            if i > 0:
                self._background_run(self.rng.randint(2, 6))
            for oid in burst:
                self._advance_time()
                self._emit(
                    BookEvent(
                        EventKind.DELETE, self.ts, oid, None, None, None,
                        self.instrument_id,
                    )
                )
                last_delete_ts = self.ts
        return spoof_ids, exec_id, first_add_ts, last_delete_ts

    def run_episode(self, variant: Variant) -> None:
        side = Side.BID if self.rng.random() < 0.5 else Side.ASK
        cycles = self.rng.randint(3, 6) if variant == Variant.CONTINUOUS_PATTERN else 1
        top = variant == Variant.TOP_OF_BOOK
        if variant == Variant.MULTI_DELETION:
            delete_bursts = self.rng.randint(3, 5)
        else:
            delete_bursts = 1
        all_ids: list[int] = []
        t_start = 0
        t_end = 0
        exec_id = 0
        for cycle in range(cycles):
            if cycle > 0:
                self._background_run(self.rng.randint(3, 8))
            ids, exec_id, first_ts, last_ts = self._spoof_cycle(
                side, top, delete_bursts
            )
            all_ids.extend(ids)
            if cycle == 0:
                t_start = first_ts
            t_end = last_ts
        self.episodes.append(
            EpisodeRecord(
                instrument_id=self.instrument_id,
                variant=variant,
                spoof_side=side,
                t_start=t_start,
                t_end=t_end,
                spoof_order_ids=frozenset(all_ids),
                exec_order_id=exec_id,
                intended_label=1 if side == Side.BID else 2,
            )
        )

    # -- session ----------------------------------------------------------

    def _warmup(self, count: int) -> None:
        # Pure adds: builds resting depth before any churn so rolling depth
        # references are meaningful from the first background removal on.
        for _ in range(count):
            self.background_add()

    def run(self) -> tuple[list[BookEvent], list[EpisodeRecord]]:
        cfg = self.config
        length = cfg.session_length
        self._warmup(min(600, length // 10))
        margin_lo = max(3000, length // 20)
        margin_hi = length - 2000
        starts: list[int] = []
        if cfg.episode_count > 0 and margin_hi > margin_lo:
            slot = (margin_hi - margin_lo) / cfg.episode_count
            jitter = max(1, int(slot // 2))
            starts = [
                margin_lo + int(i * slot) + self.rng.randrange(jitter)
                for i in range(cfg.episode_count)
            ]
        variants = list(cfg.episode_mix.keys())
        weights = [cfg.episode_mix[v] for v in variants]
        schedule = [
            (start, self.rng.choices(variants, weights)[0]) for start in starts
        ]
        for start, variant in schedule:
            while len(self.events) < start:
                self.background_step()
            self.run_episode(variant)
        while len(self.events) < length:
            self.background_step()
        return self.events[:length], self.episodes


def generate_instrument(
    config: SimConfig, instrument_id: int
) -> tuple[list[BookEvent], list[EpisodeRecord]]:
    """Generate one instrument's stream; independent of all other instruments."""
    config.validate()
    if not 0 <= instrument_id < config.instruments:
        raise InvalidConfig(f"instrument_id {instrument_id} out of range")
    return _InstrumentSim(config, instrument_id).run()


def generate(
    config: SimConfig,
) -> tuple[list[list[BookEvent]], list[EpisodeRecord]]:
    """Generate all instrument streams plus the combined episode ground truth."""
    config.validate()
    streams = []
    episodes: list[EpisodeRecord] = []
    for iid in range(config.instruments):
        ev, ep = generate_instrument(config, iid)
        streams.append(ev)
        episodes.extend(ep)
    return streams, episodes
