"""Order-level limit order book: event types, deterministic reconstruction,
depth-capped snapshot extraction.

Prices are integer ticks and quantities integer units end to end; nothing in
this module touches floats, so replays are bit-reproducible. Each instrument
owns one book; books share no state and can be replayed in parallel.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

import numpy as np

DEPTH = 30

# Tensor layout used everywhere downstream: frame[level, side, plane].
PLANE_QTY = 0
PLANE_PRICE = 1


class EventKind(IntEnum):
    ADD = 1
    CANCEL = 2
    DELETE = 3
    EXECUTE = 4


class Side(IntEnum):
    BID = 0
    ASK = 1

    @property
    def opposite(self) -> "Side":
        return Side.ASK if self is Side.BID else Side.BID


class BookError(Exception):
    """Base class for reconstruction failures."""


class UnknownOrderId(BookError):
    pass


class DuplicateOrderId(BookError):
    pass


class OverReduce(BookError):
    pass


class CrossingAdd(BookError):
    pass


class StaleTimestamp(BookError):
    pass


class MalformedEvent(BookError):
    pass


@dataclass(frozen=True, slots=True)
class BookEvent:
    """One order-level feed message.

    ``side`` and ``price`` are present only on Add; Cancel/Delete/Execute
    resolve them through ``order_id``. ``qty`` is the added size for Add, the
    reduction for Cancel, the executed amount for Execute, and None for
    Delete (full removal).
    """

    kind: EventKind
    timestamp: int
    order_id: int
    side: Optional[Side] = None
    price: Optional[int] = None
    qty: Optional[int] = None
    instrument_id: int = 0


def validate_event(ev: BookEvent) -> None:
    """Raise MalformedEvent when kind-dependent fields are missing or bad."""
    if ev.timestamp < 0 or ev.order_id < 0 or ev.instrument_id < 0:
        raise MalformedEvent(f"negative field in {ev!r}")
    if ev.kind == EventKind.ADD:
        if ev.side is None or ev.price is None or ev.qty is None:
            raise MalformedEvent(f"Add requires side/price/qty: {ev!r}")
        if ev.price <= 0 or ev.qty <= 0:
            raise MalformedEvent(f"Add price and qty must be positive: {ev!r}")
    elif ev.kind in (EventKind.CANCEL, EventKind.EXECUTE):
        if ev.qty is None or ev.qty <= 0:
            raise MalformedEvent(f"{ev.kind.name} requires qty > 0: {ev!r}")
    elif ev.kind == EventKind.DELETE:
        if ev.qty not in (None, 0):
            raise MalformedEvent(f"Delete carries no qty: {ev!r}")
    else:
        raise MalformedEvent(f"unknown kind {ev.kind!r}")


class _Order:
    __slots__ = ("side", "price", "qty")

    def __init__(self, side: Side, price: int, qty: int) -> None:
        self.side = side
        self.price = price
        self.qty = qty


class OrderBook:
    """Per-instrument book state: price ladders plus order-level remainders.

    Ladders are (price -> aggregate resting qty) dicts with a sorted price
    list per side kept in sync via bisect, so best-price lookups and top-N
    snapshots are cheap on every event.
    """

    __slots__ = ("instrument_id", "orders", "_qty", "_prices", "last_timestamp")

    def __init__(self, instrument_id: int = 0) -> None:
        self.instrument_id = instrument_id
        self.orders: dict[int, _Order] = {}
        self._qty: tuple[dict[int, int], dict[int, int]] = ({}, {})
        self._prices: tuple[list[int], list[int]] = ([], [])  # ascending
        self.last_timestamp = 0

    def best_price(self, side: Side) -> Optional[int]:
        prices = self._prices[side]
        if not prices:
            return None
        return prices[-1] if side == Side.BID else prices[0]

    def level_qty(self, side: Side, price: int) -> int:
        return self._qty[side].get(price, 0)

    def level_count(self, side: Side) -> int:
        return len(self._prices[side])

    def depth_within(self, side: Side, ticks: int) -> int:
        """Total resting qty at levels within ``ticks`` of the side's best."""
        prices = self._prices[side]
        if not prices:
            return 0
        qmap = self._qty[side]
        total = 0
        if side == Side.BID:
            floor = prices[-1] - ticks
            for p in reversed(prices):
                if p < floor:
                    break
                total += qmap[p]
        else:
            ceil = prices[0] + ticks
            for p in prices:
                if p > ceil:
                    break
                total += qmap[p]
        return total

    def apply(self, ev: BookEvent) -> "OrderBook":
        """Apply one event in place; the book is untouched on any error."""
        if ev.timestamp < self.last_timestamp:
            raise StaleTimestamp(
                f"event ts {ev.timestamp} < book ts {self.last_timestamp}"
            )
        kind = ev.kind
        if kind == EventKind.ADD:
            self._apply_add(ev)
        elif kind == EventKind.DELETE:
            order = self.orders.get(ev.order_id)
            if order is None:
                raise UnknownOrderId(f"Delete of unknown order {ev.order_id}")
            self._reduce(ev.order_id, order, order.qty)
        elif kind in (EventKind.CANCEL, EventKind.EXECUTE):
            order = self.orders.get(ev.order_id)
            if order is None:
                raise UnknownOrderId(f"{kind.name} of unknown order {ev.order_id}")
            if ev.qty is None or ev.qty <= 0:
                raise MalformedEvent(f"{kind.name} requires qty > 0: {ev!r}")
            if ev.qty > order.qty:
                raise OverReduce(
                    f"{kind.name} qty {ev.qty} exceeds remaining {order.qty}"
                )
            self._reduce(ev.order_id, order, ev.qty)
        else:
            raise MalformedEvent(f"unknown kind {ev.kind!r}")
        self.last_timestamp = ev.timestamp
        return self

    def _apply_add(self, ev: BookEvent) -> None:
        if ev.side is None or ev.price is None or ev.qty is None:
            raise MalformedEvent(f"Add requires side/price/qty: {ev!r}")
        if ev.qty <= 0 or ev.price <= 0:
            raise MalformedEvent(f"Add price and qty must be positive: {ev!r}")
        if ev.order_id in self.orders:
            raise DuplicateOrderId(f"order id {ev.order_id} already resting")
        side = Side(ev.side)
        if side == Side.BID:
            best_ask = self.best_price(Side.ASK)
            if best_ask is not None and ev.price >= best_ask:
                raise CrossingAdd(f"bid {ev.price} >= best ask {best_ask}")
        else:
            best_bid = self.best_price(Side.BID)
            if best_bid is not None and ev.price <= best_bid:
                raise CrossingAdd(f"ask {ev.price} <= best bid {best_bid}")
        qmap = self._qty[side]
        if ev.price in qmap:
            qmap[ev.price] += ev.qty
        else:
            qmap[ev.price] = ev.qty
            bisect.insort(self._prices[side], ev.price)
        self.orders[ev.order_id] = _Order(side, ev.price, ev.qty)

    def _reduce(self, order_id: int, order: _Order, amount: int) -> None:
        side = order.side
        qmap = self._qty[side]
        order.qty -= amount
        left = qmap[order.price] - amount
        if left > 0:
            qmap[order.price] = left
        else:
            del qmap[order.price]
            prices = self._prices[side]
            del prices[bisect.bisect_left(prices, order.price)]
        if order.qty == 0:
            del self.orders[order_id]

    def snapshot_row(self, depth: int = DEPTH) -> list[int]:
        """Flat [level, side, plane] row of the top ``depth`` levels per side.

        Layout matches the (depth, 2, 2) frame tensor: index 4*level + 2*side
        + plane, plane 0 = qty, plane 1 = price. Missing levels stay zero.
        """
        row = [0] * (depth * 4)
        bid_prices = self._prices[Side.BID]
        qmap = self._qty[Side.BID]
        i = 0
        for p in reversed(bid_prices[-depth:]):
            base = 4 * i
            row[base] = qmap[p]
            row[base + 1] = p
            i += 1
        qmap = self._qty[Side.ASK]
        for i, p in enumerate(self._prices[Side.ASK][:depth]):
            base = 4 * i
            row[base + 2] = qmap[p]
            row[base + 3] = p
        return row


@dataclass(frozen=True)
class Snapshot:
    """One book state: top-of-book-ordered qty and price planes.

    Rows are levels from the top of the book, column 0 is the bid side and
    column 1 the ask side; levels beyond book depth are zero in both planes.
    """

    timestamp: int
    qty_plane: np.ndarray  # (depth, 2) int64
    price_plane: np.ndarray  # (depth, 2) int64

    def to_frame(self) -> np.ndarray:
        """Stack into the canonical (depth, 2, 2) frame tensor."""
        return np.stack([self.qty_plane, self.price_plane], axis=-1)


def apply_event(book: OrderBook, ev: BookEvent) -> OrderBook:
    """Apply one event to the book; see OrderBook.apply for error semantics."""
    return book.apply(ev)


def take_snapshot(book: OrderBook, depth: int = DEPTH) -> Snapshot:
    """Copy the top ``depth`` levels per side; the book is not modified."""
    arr = np.asarray(book.snapshot_row(depth), dtype=np.int64).reshape(depth, 2, 2)
    return Snapshot(
        timestamp=book.last_timestamp,
        qty_plane=arr[:, :, PLANE_QTY].copy(),
        price_plane=arr[:, :, PLANE_PRICE].copy(),
    )
