"""Training loop (Adam, seeded shuffling, early stopping), evaluation
metrics, and the checkpoint format: a JSON manifest next to raw
little-endian float64 arrays in declared parameter order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .tcn import (
    TcnConfig,
    TcnParameters,
    backward,
    cross_entropy_loss,
    forward_batch,
    init_parameters,
    zero_gradients,
)


class TrainingError(Exception):
    pass


class EmptyDataset(TrainingError):
    pass


class DivergedLoss(TrainingError):
    pass


class CheckpointError(Exception):
    pass


@dataclass
class Hyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 20
    patience: Optional[int] = 3  # early stop on validation loss; None disables
    shuffle_seed: int = 0


def class_weights_from_labels(labels: np.ndarray, classes: int) -> np.ndarray:
    """Inverse-frequency weights over supervised timesteps, mean-normalized.

    Classes absent from the data get weight 0 (they can never contribute to
    the loss anyway).
    """
    flat = np.asarray(labels).ravel()
    flat = flat[flat >= 0]
    if flat.size == 0:
        raise EmptyDataset("no supervised timesteps")
    counts = np.bincount(flat, minlength=classes).astype(np.float64)
    present = counts > 0
    w = np.zeros(classes)
    w[present] = flat.size / (present.sum() * counts[present])
    return w


class _Adam:
    def __init__(self, params: TcnParameters, hyper: Hyper) -> None:
        self.hyper = hyper
        self.step_count = 0
        self.m = zero_gradients(params)
        self.v = zero_gradients(params)

    def step(self, params: TcnParameters, grads: TcnParameters) -> None:
        h = self.hyper
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - h.beta1**t
        bias2 = 1.0 - h.beta2**t
        for (_, p), (_, g), (_, m), (_, v) in zip(
            params.named_arrays(),
            grads.named_arrays(),
            self.m.named_arrays(),
            self.v.named_arrays(),
        ):
            m *= h.beta1
            m += (1.0 - h.beta1) * g
            v *= h.beta2
            v += (1.0 - h.beta2) * g * g
            p -= h.lr * (m / bias1) / (np.sqrt(v / bias2) + h.eps)


def _batched_logits(
    params: TcnParameters, config: TcnConfig, x: np.ndarray, batch_size: int = 512
) -> np.ndarray:
    outs = []
    for lo in range(0, x.shape[0], batch_size):
        logits, _, _ = forward_batch(params, config, x[lo : lo + batch_size])
        outs.append(logits)
    return np.concatenate(outs, axis=0)


def confusion_matrix(true: np.ndarray, pred: np.ndarray, classes: int) -> np.ndarray:
    cm = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    return cm


def macro_f1(cm: np.ndarray) -> float:
    """Unweighted mean of per-class F1, in percent; empty denominators -> 0."""
    f1s = []
    for c in range(cm.shape[0]):
        tp = cm[c, c]
        denom = 2 * tp + cm[c, :].sum() - tp + cm[:, c].sum() - tp
        f1s.append(0.0 if denom == 0 else 2.0 * tp / denom)
    return 100.0 * float(np.mean(f1s))


def per_class_f1(cm: np.ndarray) -> list[float]:
    out = []
    for c in range(cm.shape[0]):
        tp = cm[c, c]
        denom = 2 * tp + cm[c, :].sum() - tp + cm[:, c].sum() - tp
        out.append(0.0 if denom == 0 else 100.0 * 2.0 * tp / denom)
    return out


def evaluate(
    params: TcnParameters,
    config: TcnConfig,
    x: np.ndarray,
    y: np.ndarray,
) -> dict:
    """Window-level metrics: prediction = argmax of final-timestep logits.

    Returns accuracy and macro-F1 in percent plus the confusion matrix.
    """
    if x.shape[0] == 0:
        raise EmptyDataset("cannot evaluate an empty dataset")
    logits = _batched_logits(params, config, x)
    pred = logits[:, -1, :].argmax(axis=1)
    true = np.asarray(y)[:, -1]
    if true.min() < 0:
        raise TrainingError("final-timestep labels must be supervised")
    cm = confusion_matrix(true, pred, config.classes)
    accuracy = 100.0 * float((pred == true).mean())
    return {
        "accuracy": accuracy,
        "macro_f1": macro_f1(cm),
        "per_class_f1": per_class_f1(cm),
        "confusion": cm.tolist(),
    }


def _epoch_metrics(loss: float, cm: np.ndarray) -> dict:
    total = cm.sum()
    acc = 100.0 * float(np.trace(cm)) / total if total else 0.0
    return {"loss": loss, "accuracy": acc, "macro_f1": macro_f1(cm)}


def train(
    train_set: tuple[np.ndarray, np.ndarray],
    config: TcnConfig,
    hyper: Optional[Hyper] = None,
    val_set: Optional[tuple[np.ndarray, np.ndarray]] = None,
    class_weights: Optional[np.ndarray] = None,
    log_every: int = 0,
) -> tuple[TcnParameters, list[dict]]:
    """Train from scratch; deterministic given config.seed, hyper and data.

    train_set / val_set are (X (N, n, in_features) float64, Y (N, n) int)
    pairs. Returns the best-validation-loss parameters (final parameters
    when no validation set is given) and the per-epoch history.
    """
    hyper = hyper or Hyper()
    x_train, y_train = train_set
    if x_train.shape[0] == 0:
        raise EmptyDataset("empty training set")
    if val_set is not None and val_set[0].shape[0] == 0:
        raise EmptyDataset("empty validation set")
    y_train = np.asarray(y_train, dtype=np.int64)
    if class_weights is None:
        class_weights = class_weights_from_labels(y_train, config.classes)

    params = init_parameters(config)
    adam = _Adam(params, hyper)
    rng = np.random.default_rng(hyper.shuffle_seed)
    history: list[dict] = []
    best_val = np.inf
    best_params = params.copy()
    since_best = 0

    for epoch in range(hyper.epochs):
        order = rng.permutation(x_train.shape[0])
        epoch_loss = 0.0
        cm = np.zeros((config.classes, config.classes), dtype=np.int64)
        batches = 0
        for lo in range(0, order.size, hyper.batch_size):
            idx = order[lo : lo + hyper.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            logits, _, cache = forward_batch(params, config, xb, want_cache=True)
            loss, grad = cross_entropy_loss(logits, yb, class_weights)
            if not np.isfinite(loss):
                raise DivergedLoss(f"non-finite loss at epoch {epoch}")
            grads = backward(params, config, cache, grad)
            adam.step(params, grads)
            epoch_loss += loss
            batches += 1
            final_true = yb[:, -1]
            ok = final_true >= 0
            if ok.any():
                pred = logits[ok, -1, :].argmax(axis=1)
                np.add.at(cm, (final_true[ok], pred), 1)
        record = {"epoch": epoch, "train": _epoch_metrics(epoch_loss / batches, cm)}

        if val_set is not None:
            val_logits = _batched_logits(params, config, val_set[0])
            val_loss, _ = cross_entropy_loss(
                val_logits, np.asarray(val_set[1], dtype=np.int64), class_weights
            )
            pred = val_logits[:, -1, :].argmax(axis=1)
            true = np.asarray(val_set[1])[:, -1]
            vcm = confusion_matrix(true, pred, config.classes)
            record["val"] = _epoch_metrics(val_loss, vcm)
            if val_loss < best_val:
                best_val = val_loss
                best_params = params.copy()
                since_best = 0
            else:
                since_best += 1
        history.append(record)
        if log_every and (epoch % log_every == 0):
            print(f"epoch {epoch}: {record}")
        if (
            val_set is not None
            and hyper.patience is not None
            and since_best >= hyper.patience
        ):
            break

    if val_set is None:
        best_params = params
    return best_params, history


def save_checkpoint(
    stem: Union[str, Path],
    params: TcnParameters,
    config: TcnConfig,
    norm: dict,
    metrics: Optional[dict] = None,
) -> tuple[Path, Path]:
    """Write <stem>.json (manifest) and <stem>.bin (raw little-endian f64).

    Arrays are concatenated in declared parameter order; the manifest lists
    each name and shape so the blob can be sliced back.
    """
    stem = Path(stem)
    named = params.named_arrays()
    manifest = {
        "config": config.to_json(),
        "norm": norm,
        "metrics": metrics or {},
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in named],
    }
    json_path = stem.with_suffix(".json")
    bin_path = stem.with_suffix(".bin")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    with open(bin_path, "wb") as fh:
        for _, a in named:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return json_path, bin_path


def load_checkpoint(
    stem: Union[str, Path],
) -> tuple[TcnParameters, TcnConfig, dict, dict]:
    """Read a checkpoint pair back; inverse of save_checkpoint."""
    stem = Path(stem)
    json_path = stem.with_suffix(".json")
    bin_path = stem.with_suffix(".bin")
    if not json_path.exists() or not bin_path.exists():
        raise CheckpointError(f"missing checkpoint files at {stem}")
    with open(json_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    config = TcnConfig.from_json(manifest["config"])
    params = init_parameters(config)
    blob = np.frombuffer(Path(bin_path).read_bytes(), dtype="<f8")
    offset = 0
    by_name = dict(params.named_arrays())
    for entry in manifest["arrays"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        if entry["name"] not in by_name:
            raise CheckpointError(f"unknown array {entry['name']}")
        target = by_name[entry["name"]]
        if target.shape != shape:
            raise CheckpointError(
                f"{entry['name']}: manifest shape {shape} != expected {target.shape}"
            )
        target[...] = blob[offset : offset + size].reshape(shape)
        offset += size
    if offset != blob.size:
        raise CheckpointError(f"checkpoint blob has {blob.size - offset} extra values")
    return params, config, manifest.get("norm", {}), manifest.get("metrics", {})
