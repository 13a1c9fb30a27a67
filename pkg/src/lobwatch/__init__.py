"""lobwatch: order-book spoofing surveillance.

Reconstructs limit order books from an event feed, weak-labels spoofing
episodes, trains a causal temporal convolutional classifier over stacked
book states, and ranks fresh alerts by embedding similarity to
expert-confirmed exemplars.
"""

from .book import (
    BookEvent,
    EventKind,
    OrderBook,
    Side,
    Snapshot,
    apply_event,
    take_snapshot,
)
from .labeler import LabelerParams, label_stream, variant_params
from .simgen import EpisodeRecord, SimConfig, Variant, generate
from .tcn import TcnConfig, TcnParameters, forward
from .windows import WindowSample, build_windows, class_filter, normalize

__version__ = "0.1.0"

__all__ = [
    "BookEvent",
    "EventKind",
    "OrderBook",
    "Side",
    "Snapshot",
    "apply_event",
    "take_snapshot",
    "LabelerParams",
    "label_stream",
    "variant_params",
    "EpisodeRecord",
    "SimConfig",
    "Variant",
    "generate",
    "TcnConfig",
    "TcnParameters",
    "forward",
    "WindowSample",
    "build_windows",
    "class_filter",
    "normalize",
    "__version__",
]
