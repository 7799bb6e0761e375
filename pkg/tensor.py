"""Dense real64 tensors with tape-based reverse-mode differentiation.

Every operation is a plain function returning a new Tensor. When a
ComputationTape is active on the current thread and any input requires a
gradient, the op records a backward rule on the tape; `tape.backward(loss)`
replays those rules in reverse execution order and accumulates into `.grad`.
Ops accept leading batch axes; matrices live on the last two axes.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from errors import ConfigError, DimensionError, EvaluationError

logger = logging.getLogger(__name__)

DTYPE = np.float64

BackwardRule = Callable[[np.ndarray], tuple]


class Tensor:
    """Row-major real64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=DTYPE)
        self.data = arr if arr.flags.c_contiguous else np.ascontiguousarray(arr)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray):
        """Sum g into the gradient buffer (tensors feeding several consumers)."""
        if g.shape != self.data.shape:
            raise DimensionError(f"gradient shape {g.shape} does not match tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad += g

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class TapeEntry:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardRule


_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> "ComputationTape | None":
    """The innermost tape on this thread, or None when recording is off."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class ComputationTape:
    """Ordered record of executed ops; use as a context manager."""

    def __init__(self):
        self.entries: list[TapeEntry] = []

    def __enter__(self) -> "ComputationTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, op: str, inputs: tuple[Tensor, ...], output: Tensor, backward: BackwardRule):
        self.entries.append(TapeEntry(op, inputs, output, backward))

    def backward(self, loss: Tensor):
        """Populate .grad for every requires_grad tensor reachable from loss."""
        if loss.size != 1:
            raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
        loss.accumulate_grad(np.ones_like(loss.data))
        for entry in reversed(self.entries):
            g = entry.output.grad
            if g is None:
                continue
            grads = entry.backward(g)
            for t, gi in zip(entry.inputs, grads):
                if gi is not None and t.requires_grad:
                    t.accumulate_grad(gi)

    def clear(self):
        self.entries.clear()


class no_grad:
    """Disable recording inside the block, even under an outer tape."""

    def __enter__(self):
        _tape_stack().append(None)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False


def _result(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], backward: BackwardRule) -> Tensor:
    tape = active_tape()
    requires = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires)
    if requires:
        tape.record(op, inputs, out, backward)
    return out


def _same_shape(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _sum_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum leading batch axes away so g matches a shared (unbatched) operand."""
    extra = g.ndim - len(shape)
    return g.sum(axis=tuple(range(extra))) if extra > 0 else g


# Elementwise and structural ops

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _result("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _result("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    return _result("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(x: Tensor, s: float) -> Tensor:
    return _result("scale", x.data * s, (x,), lambda g: (g * s,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def absolute(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return _result("abs", np.abs(x.data), (x,), lambda g: (g * sign,))


def sum_all(x: Tensor) -> Tensor:
    return _result("sum", np.array(x.data.sum()), (x,), lambda g: (np.full(x.shape, g.item()),))


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """x[..., N] + bias[N], the only row broadcast besides layer_norm's affine."""
    if bias.ndim != 1 or x.shape[-1] != bias.shape[0]:
        raise DimensionError(f"add_bias: cannot add bias {bias.shape} to {x.shape}")
    return _result(
        "add_bias", x.data + bias.data, (x, bias),
        lambda g: (g, g.reshape(-1, bias.shape[0]).sum(axis=0)),
    )


def transpose(x: Tensor) -> Tensor:
    if x.ndim < 2:
        raise DimensionError(f"transpose needs at least 2 axes, got {x.shape}")
    return _result("transpose", np.swapaxes(x.data, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}") from None
    return _result("reshape", data, (x,), lambda g: (g.reshape(x.shape),))


def _concat(op: str, tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise DimensionError(f"{op}: nothing to concatenate")
    ref = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(ref) or other[:axis] + other[axis + 1:] != ref[:axis] + ref[axis + 1:]:
            raise DimensionError(f"{op}: incompatible shapes {tensors[0].shape} and {t.shape}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(op, np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack along the length axis (second to last), preserving order."""
    if tensors and tensors[0].ndim < 2:
        raise DimensionError(f"concat_rows needs matrices, got {tensors[0].shape}")
    return _concat("concat_rows", tensors, tensors[0].ndim - 2 if tensors else 0)


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    """Stack along the feature axis (last), used to join attention heads."""
    return _concat("concat_cols", tensors, tensors[0].ndim - 1 if tensors else 0)


# Linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a[..., M, K] @ b[K, N] or batched b[..., K, N]."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    if b.ndim > 2 and b.shape[:-2] != a.shape[:-2]:
        raise DimensionError(f"matmul: batch axes differ in {a.shape} and {b.shape}")

    def backward(g):
        ga = _sum_to(g @ np.swapaxes(b.data, -1, -2), a.shape)
        gb = _sum_to(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _result("matmul", a.data @ b.data, (a, b), backward)


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis with row-max subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _result("softmax_rows", s, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to mean 0, variance 1, then gain * x + bias."""
    if eps < 0:
        raise ConfigError(f"layer_norm eps must be >= 0, got {eps}")
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match last axis of {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    denom = var + eps
    inv_std = np.where(denom > 0, 1.0 / np.sqrt(np.where(denom > 0, denom, 1.0)), 0.0)
    xhat = centered * inv_std

    def backward(g):
        dxhat = g * gain.data
        dx = inv_std * (
            dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        dgain = (g * xhat).reshape(-1, d).sum(axis=0)
        dbias = g.reshape(-1, d).sum(axis=0)
        return dx, dgain, dbias

    return _result("layer_norm", xhat * gain.data + bias.data, (x, gain, bias), backward)


def conv1d(x: Tensor, kernels: Tensor) -> Tensor:
    """Same-padded 1-D convolution along the time axis, mixing channels.

    x is [..., L_in, D_in], kernels [L_out, L_in, k]; the result is [..., L_out, D_in].
    """
    if kernels.ndim != 3:
        raise DimensionError(f"conv1d: kernels must be L_out x L_in x k, got {kernels.shape}")
    l_out, l_in, k = kernels.shape
    if k % 2 == 0:
        raise ConfigError(f"conv1d: kernel width must be odd, got {k}")
    if x.ndim < 2 or x.shape[-2] != l_in:
        raise DimensionError(f"conv1d: input {x.shape} does not have {l_in} channels for kernels {kernels.shape}")
    pad = (k - 1) // 2
    t = x.shape[-1]
    widths = [(0, 0)] * (x.ndim - 1) + [(pad, pad)]
    padded = np.pad(x.data, widths)
    windows = sliding_window_view(padded, k, axis=-1)  # [..., L_in, D_in, k]
    out = np.einsum("...ltk,olk->...ot", windows, kernels.data)

    def backward(g):
        gk = np.einsum("...ot,...ltk->olk", g, windows)
        gpad = np.zeros_like(padded)
        for j in range(k):
            gpad[..., j:j + t] += np.einsum("...ot,ol->...lt", g, kernels.data[:, :, j])
        return gpad[..., pad:pad + t], gk

    return _result("conv1d", out, (x, kernels), backward)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: zero with probability rate, scale survivors by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs a seeded generator")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _result("dropout", x.data * mask, (x,), lambda g: (g * mask,))


# Verification

def _finite_scalar(t: Tensor) -> float:
    if t.size != 1:
        raise DimensionError(f"gradient_check needs a scalar function, got shape {t.shape}")
    value = t.item()
    if not np.isfinite(value):
        raise EvaluationError(f"function under check returned {value!r}")
    return value


def gradient_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5) -> float:
    """Max relative error between taped gradients and central differences.

    f must rebuild its graph from params on every call and be deterministic.
    """
    for p in params:
        p.zero_grad()
    with ComputationTape() as tape:
        loss = f()
        _finite_scalar(loss)
        tape.backward(loss)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]

    worst = 0.0
    with no_grad():
        for p, grad in zip(params, analytic):
            flat = p.data.reshape(-1)
            gflat = grad.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                f_plus = _finite_scalar(f())
                flat[i] = orig - h
                f_minus = _finite_scalar(f())
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2.0 * h)
                err = abs(gflat[i] - numeric) / max(abs(gflat[i]), abs(numeric), 1e-8)
                worst = max(worst, err)
    logger.debug("gradient check over %d tensors: max relative error %.3e", len(params), worst)
    return worst
