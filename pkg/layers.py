"""Parameter registry and the transformer building blocks shared by all variants."""

from __future__ import annotations

import math
from collections import OrderedDict
from typing import Iterator

import numpy as np

from errors import ConfigError, DimensionError
from tensor import (
    Tensor, add, add_bias, concat_cols, dropout, layer_norm, matmul, relu,
    scale, softmax_rows, transpose,
)

LN_EPS = 1e-5


class ParameterStore:
    """Ordered name -> Tensor registry; every trainable tensor is registered once."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self._params: OrderedDict[str, Tensor] = OrderedDict()

    def __len__(self) -> int:
        return len(self._params)

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ConfigError(f"parameter {name!r} registered twice")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def uniform(self, name: str, shape: tuple[int, ...], fan_in: int) -> Tensor:
        """U(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation."""
        bound = 1.0 / math.sqrt(fan_in)
        return self.add(name, self.rng.uniform(-bound, bound, size=shape))

    def ones(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self.add(name, np.ones(shape))

    def zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self.add(name, np.zeros(shape))

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def count(self) -> int:
        """Total number of trainable scalars."""
        return sum(t.size for t in self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.zero_grad()


class Linear:
    """y = x W (+ b) over the last axis."""

    def __init__(self, store: ParameterStore, name: str, d_in: int, d_out: int, bias: bool = True):
        self.weight = store.uniform(f"{name}.weight", (d_in, d_out), fan_in=d_in)
        self.bias = store.uniform(f"{name}.bias", (d_out,), fan_in=d_in) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = matmul(x, self.weight)
        return add_bias(y, self.bias) if self.bias is not None else y


class LayerNorm:
    def __init__(self, store: ParameterStore, name: str, dim: int):
        self.gain = store.ones(f"{name}.gain", (dim,))
        self.bias = store.zeros(f"{name}.bias", (dim,))

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, LN_EPS)


class FeedForward:
    """Position-wise W2 relu(W1 x), bias-free."""

    def __init__(self, store: ParameterStore, name: str, dim: int, hidden: int):
        self.w1 = Linear(store, f"{name}.w1", dim, hidden, bias=False)
        self.w2 = Linear(store, f"{name}.w2", hidden, dim, bias=False)

    def __call__(self, x: Tensor) -> Tensor:
        return self.w2(relu(self.w1(x)))


class RunContext:
    """Mode flags threaded through a forward pass."""

    def __init__(self, training: bool = False, rng: np.random.Generator | None = None, capture: bool = False):
        self.training = training
        self.rng = rng
        self.capture = capture


def attention_head(query_src: Tensor, kv_src: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor,
                   ctx: RunContext | None = None, attn_dropout: float = 0.0) -> tuple[Tensor, np.ndarray]:
    """softmax((X_q W_Q)(X_kv W_K)^T / sqrt(d_k)) (X_kv W_V).

    Returns the head output and the (pre-dropout) score matrix.
    """
    if w_q.shape[-1] != w_k.shape[-1]:
        raise ConfigError(f"query width {w_q.shape[-1]} differs from key width {w_k.shape[-1]}")
    if query_src.shape[-1] != w_q.shape[0] or kv_src.shape[-1] != w_k.shape[0]:
        raise DimensionError(
            f"attention inputs {query_src.shape} / {kv_src.shape} do not match projections {w_q.shape} / {w_k.shape}"
        )
    d_k = w_q.shape[-1]
    q = matmul(query_src, w_q)
    k = matmul(kv_src, w_k)
    v = matmul(kv_src, w_v)
    scores = softmax_rows(scale(matmul(q, transpose(k)), 1.0 / math.sqrt(d_k)))
    weights = scores.data
    if ctx is not None and ctx.training:
        scores = dropout(scores, attn_dropout, True, ctx.rng)
    return matmul(scores, v), weights


class MultiHeadAttention:
    """m parallel heads, concatenated and projected back to the model width by W_O."""

    def __init__(self, store: ParameterStore, name: str, dim: int, heads: int, d_k: int, d_v: int,
                 dropout_rate: float = 0.0):
        self.heads = []
        for h in range(heads):
            prefix = f"{name}.head{h}"
            self.heads.append((
                store.uniform(f"{prefix}.w_q", (dim, d_k), fan_in=dim),
                store.uniform(f"{prefix}.w_k", (dim, d_k), fan_in=dim),
                store.uniform(f"{prefix}.w_v", (dim, d_v), fan_in=dim),
            ))
        self.w_o = store.uniform(f"{name}.w_o", (heads * d_v, dim), fan_in=heads * d_v)
        self.dropout_rate = dropout_rate

    def __call__(self, query_src: Tensor, kv_src: Tensor, ctx: RunContext) -> tuple[Tensor, np.ndarray]:
        outputs, weights = [], []
        for w_q, w_k, w_v in self.heads:
            out, w = attention_head(query_src, kv_src, w_q, w_k, w_v, ctx, self.dropout_rate)
            outputs.append(out)
            weights.append(w)
        joined = concat_cols(outputs) if len(outputs) > 1 else outputs[0]
        # weights: [heads, ..., rows, cols] -> [..., heads, rows, cols]
        return matmul(joined, self.w_o), np.moveaxis(np.stack(weights), 0, -3)


class CrossModalLayer:
    """One pre-norm cross-modal block:

        Z_hat = MHA(LN_q(Z), LN_kv(source)) ; Z_dot = Z_hat + LN_q(Z)
        Z'    = FFN(LN_f(Z_dot)) + LN_f(Z_dot)
    """

    def __init__(self, store: ParameterStore, name: str, dim: int, heads: int, d_k: int, d_v: int,
                 ffn_dim: int, attn_dropout: float):
        self.norm_q = LayerNorm(store, f"{name}.norm_q", dim)
        self.norm_kv = LayerNorm(store, f"{name}.norm_kv", dim)
        self.attn = MultiHeadAttention(store, f"{name}.attn", dim, heads, d_k, d_v, attn_dropout)
        self.norm_ffn = LayerNorm(store, f"{name}.norm_ffn", dim)
        self.ffn = FeedForward(store, f"{name}.ffn", dim, ffn_dim)

    def __call__(self, target: Tensor, source: Tensor, ctx: RunContext) -> tuple[Tensor, np.ndarray]:
        q = self.norm_q(target)
        attended, weights = self.attn(q, self.norm_kv(source), ctx)
        z_dot = self.norm_ffn(add(attended, q))
        return add(self.ffn(z_dot), z_dot), weights


class CrossModalTransformer:
    """U stacked cross-modal layers; the key/value source is never updated."""

    def __init__(self, store: ParameterStore, name: str, layers: int, dim: int, heads: int, d_k: int,
                 d_v: int, ffn_dim: int, attn_dropout: float):
        if layers < 1:
            raise ConfigError(f"{name}: needs at least one layer, got {layers}")
        self.layers = [
            CrossModalLayer(store, f"{name}.layer{u}", dim, heads, d_k, d_v, ffn_dim, attn_dropout)
            for u in range(layers)
        ]

    def __call__(self, target: Tensor, source: Tensor, ctx: RunContext) -> tuple[Tensor, list[np.ndarray]]:
        z = target
        captured = []
        for layer in self.layers:
            z, weights = layer(z, source, ctx)
            captured.append(weights)
        return z, captured


class SelfAttentionLayer:
    """Encoder layer in the same pre-norm residual form as CrossModalLayer, with Q=K=V."""

    def __init__(self, store: ParameterStore, name: str, dim: int, heads: int, d_k: int, d_v: int,
                 ffn_dim: int, attn_dropout: float):
        self.norm_attn = LayerNorm(store, f"{name}.norm_attn", dim)
        self.attn = MultiHeadAttention(store, f"{name}.attn", dim, heads, d_k, d_v, attn_dropout)
        self.norm_ffn = LayerNorm(store, f"{name}.norm_ffn", dim)
        self.ffn = FeedForward(store, f"{name}.ffn", dim, ffn_dim)

    def __call__(self, x: Tensor, ctx: RunContext) -> tuple[Tensor, np.ndarray]:
        h = self.norm_attn(x)
        attended, weights = self.attn(h, h, ctx)
        z_dot = self.norm_ffn(add(attended, h))
        return add(self.ffn(z_dot), z_dot), weights


class SelfAttentionEncoder:
    def __init__(self, store: ParameterStore, name: str, layers: int, dim: int, heads: int, d_k: int,
                 d_v: int, ffn_dim: int, attn_dropout: float):
        self.layers = [
            SelfAttentionLayer(store, f"{name}.layer{u}", dim, heads, d_k, d_v, ffn_dim, attn_dropout)
            for u in range(layers)
        ]

    def __call__(self, x: Tensor, ctx: RunContext) -> tuple[Tensor, list[np.ndarray]]:
        captured = []
        for layer in self.layers:
            x, weights = layer(x, ctx)
            captured.append(weights)
        return x, captured
