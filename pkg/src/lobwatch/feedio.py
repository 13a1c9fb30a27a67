"""Bit-exact "LOB1" binary feed codec and JSONL dataset persistence.

The wire format is fixed little-endian: an 8-byte header (magic "LOB1",
u32 version) followed by 34-byte records. Derived window datasets are
JSON-lines, one sample per line, so they stay inspectable and appendable.
"""
from __future__ import annotations

import io
import json
import struct
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Sequence, Union

import numpy as np

from .book import BookEvent, EventKind, Side
from .windows import WindowSample

MAGIC = b"LOB1"
VERSION = 1

_HEADER = struct.Struct("<4sI")
_RECORD = struct.Struct("<BQQBqII")  # kind, ts, order_id, side, price, qty, instrument
RECORD_SIZE = _RECORD.size
SIDE_NONE = 255

assert RECORD_SIZE == 34


class FeedError(Exception):
    """Base class for codec failures."""


class BadMagic(FeedError):
    pass


class UnsupportedVersion(FeedError):
    pass


class TruncatedMessage(FeedError):
    pass


class UnknownKind(FeedError):
    pass


class DatasetError(Exception):
    """Base class for dataset persistence failures."""


class ShapeMismatch(DatasetError):
    pass


class MalformedLine(DatasetError):
    pass


def encode_event(ev: BookEvent) -> bytes:
    """Pack one event into its fixed 34-byte record."""
    if ev.kind == EventKind.ADD:
        side = int(ev.side)  # type: ignore[arg-type]
        price = int(ev.price)  # type: ignore[arg-type]
        qty = int(ev.qty)  # type: ignore[arg-type]
    elif ev.kind == EventKind.DELETE:
        side, price, qty = SIDE_NONE, 0, 0
    else:  # Cancel / Execute carry the reduction amount
        side, price, qty = SIDE_NONE, 0, int(ev.qty)  # type: ignore[arg-type]
    return _RECORD.pack(
        int(ev.kind), ev.timestamp, ev.order_id, side, price, qty, ev.instrument_id
    )


def _event_from_fields(
    kind: int, ts: int, order_id: int, side: int, price: int, qty: int, instrument: int
) -> BookEvent:
    try:
        k = EventKind(kind)
    except ValueError:
        raise UnknownKind(f"kind byte {kind}") from None
    if k == EventKind.ADD:
        return BookEvent(k, ts, order_id, Side(side), price, qty, instrument)
    if k == EventKind.DELETE:
        return BookEvent(k, ts, order_id, None, None, None, instrument)
    return BookEvent(k, ts, order_id, None, None, qty, instrument)


def decode_event(record: bytes) -> BookEvent:
    """Unpack one 34-byte record; inverse of encode_event."""
    if len(record) != RECORD_SIZE:
        raise TruncatedMessage(f"record is {len(record)} bytes, need {RECORD_SIZE}")
    return _event_from_fields(*_RECORD.unpack(record))


def write_feed(events: Iterable[BookEvent], dest: Union[str, Path, BinaryIO]) -> int:
    """Write header plus records; returns the number of events written."""
    if isinstance(dest, (str, Path)):
        with open(dest, "wb") as fh:
            return write_feed(events, fh)
    dest.write(_HEADER.pack(MAGIC, VERSION))
    count = 0
    for ev in events:
        dest.write(encode_event(ev))
        count += 1
    return count


def read_feed(src: Union[str, Path, BinaryIO, bytes]) -> Iterator[BookEvent]:
    """Yield events from a feed stream, stopping cleanly on a record boundary.

    Raises BadMagic / UnsupportedVersion on a bad header and TruncatedMessage
    when the stream ends mid-record.
    """
    if isinstance(src, (str, Path)):
        with open(src, "rb") as fh:
            yield from read_feed(fh)
        return
    if isinstance(src, bytes):
        yield from read_feed(io.BytesIO(src))
        return
    header = src.read(_HEADER.size)
    if len(header) < _HEADER.size:
        raise TruncatedMessage("stream shorter than feed header")
    magic, version = _HEADER.unpack(header)
    if magic != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"version {version}")
    carry = b""
    while True:
        chunk = src.read(1 << 16)
        if not chunk:
            break
        buf = carry + chunk
        usable = len(buf) - len(buf) % RECORD_SIZE
        for fields in _RECORD.iter_unpack(buf[:usable]):
            yield _event_from_fields(*fields)
        carry = buf[usable:]
    if carry:
        raise TruncatedMessage(f"{len(carry)} stray trailing bytes")


def write_dataset(samples: Sequence[WindowSample], path: Union[str, Path]) -> int:
    """Write window samples as JSONL; all samples must share one shape."""
    shape = None
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            frames = np.asarray(sample.frames)
            if shape is None:
                shape = frames.shape
                if frames.ndim != 4 or frames.shape[2:] != (2, 2):
                    raise ShapeMismatch(f"bad sample shape {frames.shape}")
            elif frames.shape != shape:
                raise ShapeMismatch(f"{frames.shape} != first sample {shape}")
            labels = np.asarray(sample.labels)
            if labels.shape != (frames.shape[0],):
                raise ShapeMismatch(
                    f"labels {labels.shape} do not match {frames.shape[0]} frames"
                )
            line = {
                "instrument_id": sample.instrument_id,
                "t_end": sample.t_end,
                "frames": frames.tolist(),
                "labels": labels.tolist(),
                "meta": sample.meta,
            }
            fh.write(json.dumps(line, separators=(",", ":")))
            fh.write("\n")
    return len(samples)


def read_dataset(path: Union[str, Path]) -> list[WindowSample]:
    """Read a JSONL dataset back; inverse of write_dataset."""
    out: list[WindowSample] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
                sample = WindowSample(
                    frames=np.asarray(obj["frames"]),
                    labels=np.asarray(obj["labels"]),
                    instrument_id=int(obj["instrument_id"]),
                    t_end=int(obj["t_end"]),
                    meta=dict(obj.get("meta", {})),
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise MalformedLine(f"{path}:{lineno}: {exc}") from exc
            out.append(sample)
    return out
