import numpy as np
import pytest

from lobwatch.book import (
    BookEvent,
    CrossingAdd,
    DuplicateOrderId,
    EventKind,
    OrderBook,
    OverReduce,
    Side,
    StaleTimestamp,
    UnknownOrderId,
    apply_event,
    take_snapshot,
)

from conftest import RandomBookFeed, brute_force_snapshot


def add(ts, oid, side, price, qty, instr=0):
    return BookEvent(EventKind.ADD, ts, oid, side, price, qty, instr)


class TestApplyEvent:
    def test_single_add(self):
        book = OrderBook()
        apply_event(book, add(0, 1, Side.BID, 100, 50))
        assert book.best_price(Side.BID) == 100
        assert book.level_qty(Side.BID, 100) == 50

    def test_overreduce_on_execute(self):
        book = OrderBook()
        book.apply(add(0, 1, Side.BID, 100, 50))
        with pytest.raises(OverReduce):
            book.apply(BookEvent(EventKind.EXECUTE, 1, 1, None, None, 60))

    def test_layering_sequence_clears_spoof_orders(self):
        # Large away-from-inside adds on one side, an opposite-side execute,
        # then deletes: the manipulative orders end up gone from the book.
        book = OrderBook()
        book.apply(add(0, 1, Side.BID, 100, 10))
        book.apply(add(1, 2, Side.ASK, 101, 10))
        spoof_ids = [10, 11, 12]
        for i, oid in enumerate(spoof_ids):
            book.apply(add(2 + i, oid, Side.BID, 97 - i, 500))
        book.apply(BookEvent(EventKind.EXECUTE, 6, 2, None, None, 10))
        for i, oid in enumerate(spoof_ids):
            book.apply(BookEvent(EventKind.DELETE, 7 + i, oid))
        assert all(oid not in book.orders for oid in spoof_ids)
        assert book.level_qty(Side.BID, 97) == 0
        assert 1 in book.orders  # genuine order still resting

    def test_cancel_partial_then_full(self):
        book = OrderBook()
        book.apply(add(0, 1, Side.ASK, 105, 30))
        book.apply(BookEvent(EventKind.CANCEL, 1, 1, None, None, 10))
        assert book.orders[1].qty == 20
        book.apply(BookEvent(EventKind.CANCEL, 2, 1, None, None, 20))
        assert 1 not in book.orders
        assert book.best_price(Side.ASK) is None

    def test_unknown_order(self):
        book = OrderBook()
        with pytest.raises(UnknownOrderId):
            book.apply(BookEvent(EventKind.DELETE, 0, 99))

    def test_crossing_add_rejected(self):
        book = OrderBook()
        book.apply(add(0, 1, Side.ASK, 101, 5))
        with pytest.raises(CrossingAdd):
            book.apply(add(1, 2, Side.BID, 101, 5))
        book.apply(add(2, 3, Side.BID, 100, 5))
        with pytest.raises(CrossingAdd):
            book.apply(add(3, 4, Side.ASK, 99, 5))

    def test_stale_timestamp(self):
        book = OrderBook()
        book.apply(add(10, 1, Side.BID, 100, 5))
        with pytest.raises(StaleTimestamp):
            book.apply(add(9, 2, Side.BID, 99, 5))

    def test_duplicate_add_id(self):
        book = OrderBook()
        book.apply(add(0, 1, Side.BID, 100, 5))
        with pytest.raises(DuplicateOrderId):
            book.apply(add(1, 1, Side.BID, 99, 5))

    def test_equal_timestamp_allowed(self):
        book = OrderBook()
        book.apply(add(5, 1, Side.BID, 100, 5))
        book.apply(add(5, 2, Side.BID, 99, 5))
        assert book.last_timestamp == 5

    def test_error_leaves_book_unchanged(self):
        book = OrderBook()
        book.apply(add(0, 1, Side.BID, 100, 50))
        before = take_snapshot(book)
        with pytest.raises(OverReduce):
            book.apply(BookEvent(EventKind.CANCEL, 1, 1, None, None, 60))
        after = take_snapshot(book)
        assert np.array_equal(before.qty_plane, after.qty_plane)
        assert np.array_equal(before.price_plane, after.price_plane)


class TestTakeSnapshot:
    def test_empty_book(self):
        snap = take_snapshot(OrderBook())
        assert snap.qty_plane.shape == (30, 2)
        assert not snap.qty_plane.any()
        assert not snap.price_plane.any()

    def test_small_book_direct_copy(self):
        book = OrderBook()
        book.apply(add(0, 1, Side.BID, 100, 5))
        book.apply(add(1, 2, Side.BID, 99, 7))
        book.apply(add(2, 3, Side.ASK, 101, 3))
        snap = take_snapshot(book)
        assert snap.price_plane[0, 0] == 100 and snap.qty_plane[0, 0] == 5
        assert snap.price_plane[1, 0] == 99 and snap.qty_plane[1, 0] == 7
        assert snap.price_plane[0, 1] == 101 and snap.qty_plane[0, 1] == 3
        assert not snap.qty_plane[2:, :].any()
        assert not snap.price_plane[1:, 1].any()

    def test_deep_book_truncates_to_top_levels(self):
        book = OrderBook()
        for i in range(40):
            book.apply(add(i, i + 1, Side.ASK, 200 + i, 10 + i))
        snap = take_snapshot(book)
        oracle = brute_force_snapshot(book)
        assert np.array_equal(snap.to_frame(), oracle)
        assert snap.price_plane[29, 1] == 229
        assert (snap.price_plane[:30, 1] > 0).all()

    def test_snapshot_invariants(self):
        feed = RandomBookFeed(seed=3)
        for _ in feed.run(2000):
            pass
        snap = take_snapshot(feed.book)
        bid_prices = snap.price_plane[:, 0]
        ask_prices = snap.price_plane[:, 1]
        nz_bid = bid_prices[bid_prices > 0]
        nz_ask = ask_prices[ask_prices > 0]
        assert (np.diff(nz_bid) < 0).all()  # strictly descending
        assert (np.diff(nz_ask) > 0).all()  # strictly ascending
        # qty row is zero iff price row is zero
        assert ((snap.qty_plane == 0) == (snap.price_plane == 0)).all()

    def test_book_not_modified(self):
        book = OrderBook()
        book.apply(add(0, 1, Side.BID, 100, 5))
        take_snapshot(book)
        assert book.orders[1].qty == 5


class TestOracleEquivalence:
    @pytest.mark.parametrize("seed", range(3))
    def test_random_replay_matches_brute_force(self, seed):
        feed = RandomBookFeed(seed=seed)
        for i, _ in enumerate(feed.run(20_000)):
            if i % 1000 == 0:
                snap = take_snapshot(feed.book)
                assert np.array_equal(snap.to_frame(), brute_force_snapshot(feed.book))
        snap = take_snapshot(feed.book)
        assert np.array_equal(snap.to_frame(), brute_force_snapshot(feed.book))

    def test_replay_twice_bit_identical(self):
        def run(seed):
            feed = RandomBookFeed(seed=seed)
            events = list(feed.run(5000))
            book = OrderBook()
            frames = []
            for ev in events:
                book.apply(ev)
                frames.append(take_snapshot(book).to_frame())
            return np.stack(frames)

        assert np.array_equal(run(11), run(11))
