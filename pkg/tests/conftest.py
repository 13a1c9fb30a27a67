"""Shared fixtures: small synthetic sessions and reconstruction helpers."""
from __future__ import annotations

import numpy as np
import pytest

from lobwatch.book import BookEvent, EventKind, OrderBook, Side
from lobwatch.pipeline import reconstruct
from lobwatch.simgen import SimConfig, generate_instrument


def replay(events):
    """Reconstruct one stream; returns (frames, timestamps)."""
    return reconstruct(events)


def brute_force_snapshot(book: OrderBook, depth: int = 30) -> np.ndarray:
    """Re-aggregate every resting order from scratch: the snapshot oracle."""
    ladders = ({}, {})
    for order in book.orders.values():
        ladders[order.side][order.price] = (
            ladders[order.side].get(order.price, 0) + order.qty
        )
    frame = np.zeros((depth, 2, 2), dtype=np.int64)
    bids = sorted(ladders[Side.BID].items(), key=lambda kv: -kv[0])[:depth]
    asks = sorted(ladders[Side.ASK].items(), key=lambda kv: kv[0])[:depth]
    for i, (price, qty) in enumerate(bids):
        frame[i, 0, 0] = qty
        frame[i, 0, 1] = price
    for i, (price, qty) in enumerate(asks):
        frame[i, 1, 0] = qty
        frame[i, 1, 1] = price
    return frame


class RandomBookFeed:
    """Valid random event generator used by reconstruction oracle tests."""

    def __init__(self, seed: int, base_price: int = 5000):
        import random

        self.rng = random.Random(seed)
        self.book = OrderBook()
        self.next_id = 1
        self.ts = 0
        self.resting: list[int] = []

    def next_event(self) -> BookEvent:
        rng = self.rng
        self.ts += rng.randint(0, 3)
        roll = rng.random()
        book = self.book
        if roll < 0.55 or not self.resting:
            side = Side.BID if rng.random() < 0.5 else Side.ASK
            best_bid = book.best_price(Side.BID)
            best_ask = book.best_price(Side.ASK)
            if side == Side.BID:
                hi = (best_ask - 1) if best_ask is not None else 5000
                price = max(1, hi - rng.randint(0, 40))
            else:
                lo = (best_bid + 1) if best_bid is not None else 5000
                price = lo + rng.randint(0, 40)
            oid = self.next_id
            self.next_id += 1
            self.resting.append(oid)
            return BookEvent(EventKind.ADD, self.ts, oid, side, price, rng.randint(1, 500))
        oid = self.resting[rng.randrange(len(self.resting))]
        rem = book.orders[oid].qty
        sub = rng.random()
        if sub < 0.4:
            self.resting.remove(oid)
            return BookEvent(EventKind.DELETE, self.ts, oid)
        kind = EventKind.CANCEL if sub < 0.7 else EventKind.EXECUTE
        amount = rng.randint(1, rem)
        if amount == rem:
            self.resting.remove(oid)
        return BookEvent(kind, self.ts, oid, None, None, amount)

    def run(self, count: int):
        for _ in range(count):
            ev = self.next_event()
            self.book.apply(ev)
            yield ev


@pytest.fixture(scope="session")
def small_session():
    """One seeded instrument with a handful of episodes, reconstructed."""
    cfg = SimConfig(seed=7, instruments=1, session_length=30_000, episode_count=8)
    events, episodes = generate_instrument(cfg, 0)
    frames, timestamps = reconstruct(events)
    return {
        "config": cfg,
        "events": events,
        "episodes": episodes,
        "frames": frames,
        "timestamps": timestamps,
    }
