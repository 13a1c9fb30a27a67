"""Exemplar store and similarity ranking of classifier alerts against
expert-confirmed window embeddings.

Search is exact cosine over the full store (desk-scale exemplar counts make
approximate indexes unnecessary); an alert scores the mean of its top-k
similarities among exemplars sharing its predicted side.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .tcn import TcnConfig, TcnParameters, forward

DEFAULT_TOP_K = 5


class RankingError(Exception):
    pass


class ZeroEmbedding(RankingError):
    pass


class DimMismatch(RankingError):
    pass


class EmptyStore(RankingError):
    pass


@dataclass
class Exemplar:
    exemplar_id: str
    embedding: np.ndarray  # unit L2 norm
    label: int  # 1 buy-side, 2 sell-side
    source: str  # "Human" | "Oracle"
    window_ref: dict

    def to_json(self) -> dict:
        return {
            "exemplar_id": self.exemplar_id,
            "embedding": np.asarray(self.embedding).tolist(),
            "label": self.label,
            "source": self.source,
            "window_ref": self.window_ref,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Exemplar":
        return cls(
            exemplar_id=str(obj["exemplar_id"]),
            embedding=np.asarray(obj["embedding"], dtype=np.float64),
            label=int(obj["label"]),
            source=str(obj["source"]),
            window_ref=dict(obj["window_ref"]),
        )


@dataclass
class Alert:
    alert_id: str
    window_ref: dict
    predicted_label: int
    model_score: float  # softmax probability of the predicted class
    similarity_score: Optional[float] = None
    rank: Optional[int] = None
    meta: dict = field(default_factory=dict)


def unit_vector(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ZeroEmbedding("cannot normalize the zero vector")
    return v / norm


def embed(
    params: TcnParameters, config: TcnConfig, normalized_window: np.ndarray
) -> np.ndarray:
    """Unit-norm embedding of one normalized window (final-timestep state)."""
    out = forward(params, config, normalized_window)
    return unit_vector(out.embedding)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit vectors."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimMismatch(f"{a.shape} vs {b.shape}")
    return float(np.dot(a, b))


class ExemplarStore:
    """In-memory exemplar collection with JSONL persistence."""

    def __init__(self, exemplars: Optional[Iterable[Exemplar]] = None) -> None:
        self._exemplars: list[Exemplar] = list(exemplars or [])
        self._check_dims()

    def _check_dims(self) -> None:
        dims = {e.embedding.shape for e in self._exemplars}
        if len(dims) > 1:
            raise DimMismatch(f"mixed embedding shapes in store: {dims}")

    def __len__(self) -> int:
        return len(self._exemplars)

    def add(self, exemplar: Exemplar) -> None:
        if self._exemplars and exemplar.embedding.shape != self._exemplars[0].embedding.shape:
            raise DimMismatch(
                f"{exemplar.embedding.shape} vs store "
                f"{self._exemplars[0].embedding.shape}"
            )
        self._exemplars.append(exemplar)

    def all(self) -> list[Exemplar]:
        return list(self._exemplars)

    def by_label(self, label: int) -> list[Exemplar]:
        return [e for e in self._exemplars if e.label == label]

    def save(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self._exemplars:
                fh.write(json.dumps(e.to_json(), separators=(",", ":")))
                fh.write("\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExemplarStore":
        out = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(Exemplar.from_json(json.loads(line)))
        return cls(out)


def similarity_to_store(
    embedding: np.ndarray,
    store: ExemplarStore,
    predicted_label: int,
    k: int = DEFAULT_TOP_K,
) -> tuple[float, bool]:
    """Mean of the top-k cosine similarities among label-matching exemplars.

    Falls back to the whole store when no exemplar shares the label; the
    flag in the return value reports that fallback.
    """
    if len(store) == 0:
        raise EmptyStore("no exemplars to rank against")
    matching = store.by_label(predicted_label)
    fallback = not matching
    pool = store.all() if fallback else matching
    embs = np.stack([e.embedding for e in pool])
    if embs.shape[1] != np.asarray(embedding).shape[0]:
        raise DimMismatch(f"alert dim {np.asarray(embedding).shape} vs store {embs.shape[1]}")
    sims = embs @ np.asarray(embedding, dtype=np.float64)
    # An alert that IS a stored exemplar scores exactly 1.0 regardless of k:
    # self-similarity must dominate the neighborhood average.
    if sims.max() >= 1.0 - 1e-9:
        return 1.0, fallback
    top = np.sort(sims)[::-1][: max(1, k)]
    return float(top.mean()), fallback


def rank_alerts(
    alerts: Sequence[Alert],
    embeddings: Sequence[np.ndarray],
    store: ExemplarStore,
    k: int = DEFAULT_TOP_K,
) -> list[Alert]:
    """Score and order alerts by exemplar similarity.

    Sorts descending by similarity score, breaking ties by model score then
    alert id; ranks are assigned 1..N. Returns the alerts in rank order.
    """
    if len(alerts) != len(embeddings):
        raise RankingError(f"{len(alerts)} alerts vs {len(embeddings)} embeddings")
    if len(store) == 0:
        raise EmptyStore("no exemplars to rank against")
    for alert, emb in zip(alerts, embeddings):
        score, fallback = similarity_to_store(emb, store, alert.predicted_label, k)
        alert.similarity_score = score
        if fallback:
            alert.meta["similarity_fallback_all_exemplars"] = True
    ordered = sorted(
        alerts,
        key=lambda a: (-a.similarity_score, -a.model_score, a.alert_id),
    )
    for i, alert in enumerate(ordered):
        alert.rank = i + 1
    return ordered


def top_similar(
    embedding: np.ndarray, store: ExemplarStore, k: int = DEFAULT_TOP_K
) -> list[tuple[Exemplar, float]]:
    """The k most similar exemplars (any label) with their similarities."""
    if len(store) == 0:
        return []
    pool = store.all()
    embs = np.stack([e.embedding for e in pool])
    sims = embs @ np.asarray(embedding, dtype=np.float64)
    order = np.argsort(-sims)[:k]
    return [(pool[int(i)], float(sims[int(i)])) for i in order]
