"""Causal temporal convolutional classifier with an embedding head, written
directly on numpy (float64): forward, exact reverse-mode backward, loss.

Architecture: per-frame features flow through one residual block per
dilation (kernel-2 causal conv -> swish -> residual add, with a 1x1
projection where the channel count changes), then a shared swish embedding
projection and a linear class head applied at every timestep. Output at
time t depends only on inputs at times <= t.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.special import expit as _sigmoid


class TcnError(Exception):
    pass


class ShapeMismatch(TcnError):
    pass


class NonFiniteActivation(TcnError):
    pass


class LabelOutOfRange(TcnError):
    pass


class CacheMismatch(TcnError):
    pass


@dataclass(frozen=True)
class TcnConfig:
    in_features: int = 120  # 30 levels x 2 sides x 2 planes per frame
    filters: int = 128
    kernel: int = 2
    dilations: tuple[int, ...] = (1, 2, 4, 8, 16, 32, 64)
    embed_dim: int = 256
    classes: int = 3
    seed: int = 0

    def validate(self) -> None:
        if self.kernel < 1:
            raise TcnError("kernel must be >= 1")
        if self.kernel != 2:
            raise TcnError("only kernel size 2 is implemented")
        if any(b >= a for a, b in zip(self.dilations[1:], self.dilations)) or not self.dilations:
            raise TcnError("dilations must be non-empty and strictly increasing")
        if self.classes not in (2, 3):
            raise TcnError("classes must be 2 or 3")
        if self.embed_dim < 1 or self.filters < 1 or self.in_features < 1:
            raise TcnError("dimensions must be positive")

    @property
    def receptive_field(self) -> int:
        """Frames that can influence one output: 1 + (kernel-1) * sum(dilations)."""
        return 1 + (self.kernel - 1) * sum(self.dilations)

    def to_json(self) -> dict:
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "TcnConfig":
        obj = dict(obj)
        obj["dilations"] = tuple(obj["dilations"])
        return cls(**obj)


@dataclass
class TcnParameters:
    """All learnable weights, in the declared checkpoint order."""

    conv_w: list[np.ndarray]  # per block: (filters, in_ch, kernel)
    conv_b: list[np.ndarray]  # per block: (filters,)
    proj_w: list[Optional[np.ndarray]]  # (filters, in_ch) where channels change
    embed_w: np.ndarray  # (embed_dim, filters)
    embed_b: np.ndarray  # (embed_dim,)
    head_w: np.ndarray  # (classes, embed_dim)
    head_b: np.ndarray  # (classes,)

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        out: list[tuple[str, np.ndarray]] = []
        for b in range(len(self.conv_w)):
            out.append((f"block{b}.conv_w", self.conv_w[b]))
            out.append((f"block{b}.conv_b", self.conv_b[b]))
            if self.proj_w[b] is not None:
                out.append((f"block{b}.proj_w", self.proj_w[b]))
        out.append(("embed_w", self.embed_w))
        out.append(("embed_b", self.embed_b))
        out.append(("head_w", self.head_w))
        out.append(("head_b", self.head_b))
        return out

    def copy(self) -> "TcnParameters":
        return TcnParameters(
            conv_w=[w.copy() for w in self.conv_w],
            conv_b=[b.copy() for b in self.conv_b],
            proj_w=[None if p is None else p.copy() for p in self.proj_w],
            embed_w=self.embed_w.copy(),
            embed_b=self.embed_b.copy(),
            head_w=self.head_w.copy(),
            head_b=self.head_b.copy(),
        )


@dataclass
class ForwardOutput:
    logits: np.ndarray  # (n, classes) per timestep
    embedding: np.ndarray  # (embed_dim,) at the final timestep
    cache: Optional[dict] = None


def init_parameters(config: TcnConfig) -> TcnParameters:
    """He-style fan-in scaled uniform init, deterministic in config.seed."""
    config.validate()
    rng = np.random.default_rng(config.seed)

    def uniform(shape: tuple[int, ...], fan_in: int) -> np.ndarray:
        limit = np.sqrt(6.0 / fan_in)
        return rng.uniform(-limit, limit, size=shape)

    conv_w, conv_b, proj_w = [], [], []
    in_ch = config.in_features
    for _ in config.dilations:
        conv_w.append(uniform((config.filters, in_ch, config.kernel), in_ch * config.kernel))
        conv_b.append(np.zeros(config.filters))
        proj_w.append(uniform((config.filters, in_ch), in_ch) if in_ch != config.filters else None)
        in_ch = config.filters
    return TcnParameters(
        conv_w=conv_w,
        conv_b=conv_b,
        proj_w=proj_w,
        embed_w=uniform((config.embed_dim, config.filters), config.filters),
        embed_b=np.zeros(config.embed_dim),
        head_w=uniform((config.classes, config.embed_dim), config.embed_dim),
        head_b=np.zeros(config.classes),
    )


def zero_gradients(params: TcnParameters) -> TcnParameters:
    return TcnParameters(
        conv_w=[np.zeros_like(w) for w in params.conv_w],
        conv_b=[np.zeros_like(b) for b in params.conv_b],
        proj_w=[None if p is None else np.zeros_like(p) for p in params.proj_w],
        embed_w=np.zeros_like(params.embed_w),
        embed_b=np.zeros_like(params.embed_b),
        head_w=np.zeros_like(params.head_w),
        head_b=np.zeros_like(params.head_b),
    )


def swish(x: np.ndarray) -> np.ndarray:
    """x * sigmoid(x)."""
    return x * _sigmoid(x)


def swish_grad(x: np.ndarray) -> np.ndarray:
    """d/dx swish = sigmoid(x) + x * sigmoid(x) * (1 - sigmoid(x))."""
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def causal_dilated_conv(
    x: np.ndarray, weights: np.ndarray, bias: np.ndarray, dilation: int
) -> np.ndarray:
    """Kernel-2 causal convolution: out[t] = W1 x[t] + W0 x[t-d] + b.

    x is (..., n, in_ch); tap index 0 reads the lagged frame (zero-padded
    where t - d < 0), tap index 1 reads the current frame.
    """
    if weights.ndim != 3 or weights.shape[2] != 2:
        raise ShapeMismatch(f"weights must be (filters, in_ch, 2), got {weights.shape}")
    if x.shape[-1] != weights.shape[1]:
        raise ShapeMismatch(
            f"input channels {x.shape[-1]} != weight channels {weights.shape[1]}"
        )
    # Tap slices of the (filters, in_ch, 2) weights are strided views that
    # would knock matmul off the BLAS fast path; materialize them.
    w_lag = np.ascontiguousarray(weights[:, :, 0].T)
    w_now = np.ascontiguousarray(weights[:, :, 1].T)
    n, c_in = x.shape[-2], x.shape[-1]
    lead = x.shape[:-2]
    filters = weights.shape[0]
    # One flat GEMM over all (batch, time) rows beats many tiny batched ones.
    out = (x.reshape(-1, c_in) @ w_now).reshape(*lead, n, filters)
    if dilation < n:  # otherwise the lag tap only ever sees the zero padding
        lagged = np.ascontiguousarray(x[..., : n - dilation, :]).reshape(-1, c_in)
        out[..., dilation:, :] += (lagged @ w_lag).reshape(
            *lead, n - dilation, filters
        )
    out += bias
    return out


def forward_batch(
    params: TcnParameters,
    config: TcnConfig,
    x: np.ndarray,
    want_cache: bool = False,
) -> tuple[np.ndarray, np.ndarray, Optional[dict]]:
    """Run the network over a (batch, n, in_features) tensor.

    Returns (logits (batch, n, classes), embeddings (batch, embed_dim) taken
    at the final timestep, cache for backward when requested).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != config.in_features:
        raise ShapeMismatch(
            f"expected (batch, n, {config.in_features}), got {x.shape}"
        )
    if x.shape[1] < 1:
        raise ShapeMismatch("need at least one timestep")
    batch, n, _ = x.shape

    def timewise(h: np.ndarray, w: np.ndarray) -> np.ndarray:
        return (h.reshape(batch * n, -1) @ w.T).reshape(batch, n, -1)

    h = x
    block_in: list[np.ndarray] = []
    block_pre: list[np.ndarray] = []
    for b, dilation in enumerate(config.dilations):
        if want_cache:
            block_in.append(h)
        z = causal_dilated_conv(h, params.conv_w[b], params.conv_b[b], dilation)
        if want_cache:
            block_pre.append(z)
        residual = h if params.proj_w[b] is None else timewise(h, params.proj_w[b])
        h = swish(z) + residual
    embed_pre = timewise(h, params.embed_w) + params.embed_b
    embed_act = swish(embed_pre)
    logits = timewise(embed_act, params.head_w) + params.head_b
    if not np.all(np.isfinite(logits)):
        raise NonFiniteActivation("non-finite logits")
    embeddings = embed_act[:, -1, :].copy()
    cache = None
    if want_cache:
        cache = {
            "x_shape": x.shape,
            "block_in": block_in,
            "block_pre": block_pre,
            "h_final": h,
            "embed_pre": embed_pre,
            "embed_act": embed_act,
        }
    return logits, embeddings, cache


def forward(
    params: TcnParameters,
    config: TcnConfig,
    window: np.ndarray,
    want_cache: bool = False,
) -> ForwardOutput:
    """Run the network over one normalized (n, in_features) window."""
    logits, embeddings, cache = forward_batch(
        params, config, np.asarray(window)[None, ...], want_cache
    )
    return ForwardOutput(logits=logits[0], embedding=embeddings[0], cache=cache)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss(
    logits: np.ndarray,
    labels: np.ndarray,
    class_weights: Optional[np.ndarray] = None,
) -> tuple[float, np.ndarray]:
    """Weighted mean NLL over timesteps plus the gradient w.r.t. logits.

    Accepts (n, c) or (batch, n, c) logits; batches average over windows.
    Labels of -1 mark positions excluded from the loss (used by the 2-class
    task where neutral frames carry no class).
    """
    logits = np.asarray(logits, dtype=np.float64)
    squeeze = logits.ndim == 2
    if squeeze:
        logits = logits[None, ...]
        labels = np.asarray(labels)[None, ...]
    batch, n, c = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (batch, n):
        raise ShapeMismatch(f"labels {labels.shape} do not match logits {logits.shape}")
    if labels.max() >= c or labels.min() < -1:
        raise LabelOutOfRange(f"labels outside [-1, {c - 1}]")
    if class_weights is None:
        class_weights = np.ones(c)
    class_weights = np.asarray(class_weights, dtype=np.float64)
    if class_weights.shape != (c,):
        raise ShapeMismatch(f"class_weights must be ({c},)")

    probs = softmax(logits)
    mask = labels >= 0
    counts = mask.sum(axis=1)  # valid timesteps per window
    if np.any(counts == 0):
        raise LabelOutOfRange("a window has no supervised timesteps")
    safe_labels = np.where(mask, labels, 0)
    w = class_weights[safe_labels] * mask  # (batch, n)
    idx_b, idx_n = np.indices(labels.shape)
    logp = np.log(probs[idx_b, idx_n, safe_labels])
    per_window = -(w * logp).sum(axis=1) / counts
    loss = float(per_window.mean())

    grad = probs.copy()
    grad[idx_b, idx_n, safe_labels] -= 1.0
    grad *= (w / counts[:, None])[..., None]
    grad /= batch
    if squeeze:
        grad = grad[0]
    return loss, grad


def backward(
    params: TcnParameters,
    config: TcnConfig,
    cache: dict,
    grad_logits: np.ndarray,
) -> TcnParameters:
    """Exact reverse-mode gradients for every parameter.

    ``cache`` must come from a forward_batch(want_cache=True) call with the
    same params; grad_logits is (batch, n, classes).
    """
    if cache is None or "embed_act" not in cache:
        raise CacheMismatch("cache missing or not produced by forward_batch")
    grad_logits = np.asarray(grad_logits, dtype=np.float64)
    embed_act = cache["embed_act"]
    if grad_logits.shape[:2] != embed_act.shape[:2]:
        raise CacheMismatch(
            f"grad shape {grad_logits.shape} does not match cache {embed_act.shape}"
        )
    grads = zero_gradients(params)
    batch, n = embed_act.shape[:2]

    def flat(t: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(t).reshape(-1, t.shape[-1])

    def timewise(t: np.ndarray, w: np.ndarray) -> np.ndarray:
        return (t.reshape(batch * n, -1) @ w).reshape(batch, n, -1)

    # Class head.
    grads.head_w[...] = flat(grad_logits).T @ flat(embed_act)
    grads.head_b[...] = grad_logits.sum(axis=(0, 1))
    d_embed_act = timewise(grad_logits, params.head_w)

    # Embedding projection.
    d_embed_pre = d_embed_act * swish_grad(cache["embed_pre"])
    grads.embed_w[...] = flat(d_embed_pre).T @ flat(cache["h_final"])
    grads.embed_b[...] = d_embed_pre.sum(axis=(0, 1))
    dh = timewise(d_embed_pre, params.embed_w)

    # Residual blocks, reversed.
    for b in reversed(range(len(config.dilations))):
        dilation = config.dilations[b]
        h_in = cache["block_in"][b]
        z = cache["block_pre"][b]
        dz = dh * swish_grad(z)
        w_lag = np.ascontiguousarray(params.conv_w[b][:, :, 0])
        w_now = np.ascontiguousarray(params.conv_w[b][:, :, 1])
        grads.conv_b[b][...] = dz.sum(axis=(0, 1))
        grads.conv_w[b][:, :, 1] = flat(dz).T @ flat(h_in)
        d_in = timewise(dz, w_now)
        if dilation < n:
            dz_late = flat(dz[:, dilation:, :])
            h_early = flat(h_in[:, : n - dilation, :])
            grads.conv_w[b][:, :, 0] = dz_late.T @ h_early
            d_in[:, : n - dilation, :] += (dz_late @ w_lag).reshape(
                batch, n - dilation, -1
            )
        if params.proj_w[b] is None:
            d_in += dh
        else:
            grads.proj_w[b][...] = flat(dh).T @ flat(h_in)
            d_in += timewise(dh, params.proj_w[b])
        dh = d_in
    return grads
