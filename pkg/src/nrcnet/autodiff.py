"""Minimal reverse-mode differentiation engine.

A Tensor wraps a C-order numpy buffer plus an optional gradient; operations
record a tape of backward closures. The operator set is exactly what the
classifier needs: conv2d, batchnorm, relu, maxpool2x2, channel concat,
flatten, dense, dropout, LSTM, softmax cross-entropy, and an Adam step.

Training runs in float32 by default; gradient-check configurations switch to
float64 via ``set_default_dtype``. Ops inherit the dtype of their inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericsError, ShapeError

_DEFAULT_DTYPE = np.float32


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ConfigError(f"default dtype must be float32 or float64, got {dtype}")
    _DEFAULT_DTYPE = dtype.type


def default_dtype():
    return _DEFAULT_DTYPE


class Tensor:
    """Array value with an optional gradient and a backward closure."""

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.asarray(values)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(_DEFAULT_DTYPE)
        self.values = np.ascontiguousarray(arr)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray, fresh: bool = False) -> None:
        """Add a gradient contribution. ``fresh`` marks a newly allocated
        array the caller hands over, letting the first contribution bind
        without a defensive copy."""
        if self.grad is None:
            self.grad = grad if fresh else grad.copy()
        else:
            self.grad += grad

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Reverse-mode sweep from this node. Scalar outputs seed with 1."""
        if seed is None:
            if self.values.size != 1:
                raise ShapeError("backward() without a seed needs a scalar output")
            seed = np.ones_like(self.values)
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad:
                    stack.append((parent, False))
        self._accumulate(np.asarray(seed, dtype=self.values.dtype))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, dtype={self.values.dtype})"


def parameter(values) -> Tensor:
    """Trainable tensor in the configured default dtype."""
    arr = np.asarray(values).astype(_DEFAULT_DTYPE)
    t = Tensor(arr)
    t.requires_grad = True
    return t


_GRAD_ENABLED = True


class no_grad:
    """Context manager: ops inside build no tape (inference-only forwards)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev


def _wrap(values: np.ndarray, parents, backward) -> Tensor:
    out = Tensor(values)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

def _pad_amounts(size: int, kernel: int, stride: int, padding: str):
    if padding == "same":
        out = -(-size // stride)
        total = max((out - 1) * stride + kernel - size, 0)
        return total // 2, total - total // 2
    if padding == "valid":
        if size < kernel:
            raise ShapeError(f"input {size} smaller than kernel {kernel}")
        return 0, 0
    raise ConfigError(f"unknown padding {padding!r}")


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int):
    n, h, w, c = x.shape
    out_h = (h - kh) // stride + 1
    out_w = (w - kw) // stride + 1
    sn, sh, sw, sc = x.strides
    view = np.lib.stride_tricks.as_strided(
        x, shape=(n, out_h, out_w, kh, kw, c),
        strides=(sn, sh * stride, sw * stride, sh, sw, sc), writeable=False)
    return view.reshape(n * out_h * out_w, kh * kw * c), out_h, out_w


def conv2d(x, kernel, bias=None, stride: int = 1, padding: str = "same") -> Tensor:
    """2-D cross-correlation on NHWC input with an HWIO kernel."""
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.values.ndim != 4 or kernel.values.ndim != 4:
        raise ShapeError("conv2d expects NHWC input and HWIO kernel")
    kh, kw, c_in, c_out = kernel.values.shape
    if x.values.shape[3] != c_in:
        raise ShapeError(f"channel mismatch: input {x.values.shape[3]}, kernel {c_in}")
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.values.shape != (c_out,):
            raise ShapeError(f"bias must have shape ({c_out},)")

    pt, pb = _pad_amounts(x.values.shape[1], kh, stride, padding)
    pl, pr = _pad_amounts(x.values.shape[2], kw, stride, padding)
    if pt or pb or pl or pr:
        padded = np.pad(x.values, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    else:
        padded = x.values
    cols, out_h, out_w = _im2col(padded, kh, kw, stride)
    w_flat = kernel.values.reshape(kh * kw * c_in, c_out)
    flat = cols @ w_flat
    if bias is not None:
        flat += bias.values
    n = x.values.shape[0]
    out_values = flat.reshape(n, out_h, out_w, c_out)

    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def backward(grad):
        grad_flat = grad.reshape(-1, c_out)
        if kernel.requires_grad:
            kernel._accumulate((cols.T @ grad_flat).reshape(kernel.values.shape),
                               fresh=True)
        if bias is not None and bias.requires_grad:
            bias._accumulate(grad_flat.sum(axis=0), fresh=True)
        if x.requires_grad:
            dcols = (grad_flat @ w_flat.T).reshape(n, out_h, out_w, kh, kw, c_in)
            dpad = np.zeros_like(padded)
            for i in range(kh):
                for j in range(kw):
                    dpad[:, i:i + out_h * stride:stride,
                         j:j + out_w * stride:stride, :] += dcols[:, :, :, i, j, :]
            h_in, w_in = x.values.shape[1], x.values.shape[2]
            x._accumulate(dpad[:, pt:pt + h_in, pl:pl + w_in, :], fresh=True)

    return _wrap(out_values, parents, backward)


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------

@dataclass
class BNState:
    """Running statistics, one entry per channel. Updated only in train mode."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5

    @classmethod
    def for_channels(cls, channels: int, momentum: float = 0.9, eps: float = 1e-5):
        return cls(np.zeros(channels, dtype=_DEFAULT_DTYPE),
                   np.ones(channels, dtype=_DEFAULT_DTYPE), momentum, eps)


def batchnorm(x, gamma, beta, state: BNState, mode: str = "train") -> Tensor:
    """Per-channel normalization over all leading axes (channels last)."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    channels = x.values.shape[-1]
    if gamma.values.shape != (channels,) or beta.values.shape != (channels,):
        raise ShapeError("gamma/beta must be per-channel vectors")
    axes = tuple(range(x.values.ndim - 1))
    m = int(np.prod([x.values.shape[a] for a in axes])) if axes else 1
    if m == 0:
        raise ShapeError("batchnorm over an empty batch")
    eps = state.eps

    flat_view = x.values.reshape(m, channels)
    if mode == "train":
        mean = flat_view.mean(axis=0)
        centered = x.values - mean
        cflat = centered.reshape(m, channels)
        var = np.einsum("nc,nc->c", cflat, cflat) / m
        inv_std = 1.0 / np.sqrt(var + eps)
        mom = state.momentum
        state.running_mean = (mom * state.running_mean + (1 - mom) * mean).astype(
            state.running_mean.dtype)
        state.running_var = (mom * state.running_var + (1 - mom) * var).astype(
            state.running_var.dtype)
    elif mode == "eval":
        inv_std = 1.0 / np.sqrt(state.running_var.astype(x.values.dtype) + eps)
        centered = x.values - state.running_mean.astype(x.values.dtype)
        cflat = centered.reshape(m, channels)
    else:
        raise ConfigError(f"unknown mode {mode!r}")

    scale = (gamma.values * inv_std).astype(x.values.dtype)
    out_values = centered * scale
    out_values += beta.values

    def backward(grad):
        gflat = grad.reshape(m, channels)
        if gamma.requires_grad:
            gamma._accumulate(np.einsum("nc,nc->c", gflat, cflat) * inv_std,
                              fresh=True)
        if beta.requires_grad:
            beta._accumulate(gflat.sum(axis=0), fresh=True)
        if x.requires_grad:
            if mode == "eval":
                x._accumulate(grad * scale, fresh=True)
            else:
                mean_g = gflat.mean(axis=0)
                mean_gc = np.einsum("nc,nc->c", gflat, cflat) / m
                dx = grad - mean_g
                dx -= centered * (mean_gc * inv_std * inv_std)
                dx *= scale
                x._accumulate(dx, fresh=True)

    return _wrap(out_values, (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# Pointwise / shape ops
# ---------------------------------------------------------------------------

def relu(x) -> Tensor:
    x = _as_tensor(x)
    out_values = np.maximum(x.values, 0)

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad * (out_values > 0), fresh=True)

    return _wrap(out_values, (x,), backward)


def maxpool2x2(x) -> Tensor:
    """2x2 max pooling, stride 2. Odd trailing rows/columns are dropped.

    Pooling runs as two pairwise maxima (height then width); gradients route
    to the first element of any tied pair.
    """
    x = _as_tensor(x)
    if x.values.ndim != 4:
        raise ShapeError("maxpool2x2 expects NHWC input")
    n, h, w, c = x.values.shape
    ho, wo = h // 2, w // 2
    if ho == 0 or wo == 0:
        raise ShapeError(f"spatial dims too small to pool: {h}x{w}")
    v = x.values
    row_max = np.maximum(v[:, 0:ho * 2:2, :wo * 2, :], v[:, 1:ho * 2:2, :wo * 2, :])
    out_values = np.maximum(row_max[:, :, 0::2, :], row_max[:, :, 1::2, :])

    def backward(grad):
        if not x.requires_grad:
            return
        first_col = row_max[:, :, 0::2, :] >= out_values
        drow = np.zeros_like(row_max)
        drow[:, :, 0::2, :] = grad * first_col
        drow[:, :, 1::2, :] = grad * ~first_col
        first_row = v[:, 0:ho * 2:2, :wo * 2, :] >= row_max
        dx = np.zeros_like(v)
        dx[:, 0:ho * 2:2, :wo * 2, :] = drow * first_row
        dx[:, 1:ho * 2:2, :wo * 2, :] = drow * ~first_row
        x._accumulate(dx, fresh=True)

    return _wrap(out_values, (x,), backward)


def channel_concat(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.values.shape[:-1] != b.values.shape[:-1]:
        raise ShapeError(f"cannot concat {a.values.shape} with {b.values.shape}")
    split = a.values.shape[-1]

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad[..., :split])
        if b.requires_grad:
            b._accumulate(grad[..., split:])

    return _wrap(np.concatenate([a.values, b.values], axis=-1), (a, b), backward)


def flatten(x) -> Tensor:
    x = _as_tensor(x)
    shape = x.values.shape

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad.reshape(shape))

    return _wrap(x.values.reshape(shape[0], -1), (x,), backward)


def reshape(x, new_shape) -> Tensor:
    x = _as_tensor(x)
    shape = x.values.shape

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad.reshape(shape))

    return _wrap(x.values.reshape(new_shape), (x,), backward)


def transpose(x, axes) -> Tensor:
    x = _as_tensor(x)
    inverse = np.argsort(axes)

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad.transpose(inverse))

    return _wrap(np.ascontiguousarray(x.values.transpose(axes)), (x,), backward)


def dense(x, weight, bias=None) -> Tensor:
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.values.ndim != 2 or weight.values.ndim != 2:
        raise ShapeError("dense expects 2-D input and weight")
    if x.values.shape[1] != weight.values.shape[0]:
        raise ShapeError(f"dense mismatch: {x.values.shape} @ {weight.values.shape}")
    out_values = x.values @ weight.values
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.values.shape != (weight.values.shape[1],):
            raise ShapeError("dense bias shape mismatch")
        out_values = out_values + bias.values
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad @ weight.values.T, fresh=True)
        if weight.requires_grad:
            weight._accumulate(x.values.T @ grad, fresh=True)
        if bias is not None and bias.requires_grad:
            bias._accumulate(grad.sum(axis=0), fresh=True)

    return _wrap(out_values, parents, backward)


def dropout(x, rate: float, rng: np.random.Generator, mode: str = "train") -> Tensor:
    """Inverted dropout: train-mode survivors are scaled by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0,1), got {rate}")
    x = _as_tensor(x)
    if mode == "eval" or rate == 0.0:
        return x
    keep = (rng.random(x.values.shape) >= rate)
    scale = 1.0 / (1.0 - rate)
    factor = (keep * scale).astype(x.values.dtype)

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad * factor, fresh=True)

    return _wrap(x.values * factor, (x,), backward)


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    s = _sigmoid(x.values)

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad * s * (1.0 - s))

    return _wrap(s, (x,), backward)


def global_avg_pool(x) -> Tensor:
    """(N, H, W, C) -> (N, C) spatial mean."""
    x = _as_tensor(x)
    if x.values.ndim != 4:
        raise ShapeError("global_avg_pool expects NHWC input")
    n, h, w, c = x.values.shape
    area = h * w

    def backward(grad):
        if x.requires_grad:
            x._accumulate(np.broadcast_to(grad[:, None, None, :] / area,
                                          x.values.shape).astype(grad.dtype))

    return _wrap(x.values.mean(axis=(1, 2)), (x,), backward)


def scale_channels(x, scales) -> Tensor:
    """Multiply each channel of (N, H, W, C) by a per-sample (N, C) factor."""
    x, scales = _as_tensor(x), _as_tensor(scales)
    if x.values.ndim != 4 or scales.values.ndim != 2:
        raise ShapeError("scale_channels expects NHWC input and (N, C) scales")
    if x.values.shape[0] != scales.values.shape[0] \
            or x.values.shape[3] != scales.values.shape[1]:
        raise ShapeError(f"cannot scale {x.values.shape} by {scales.values.shape}")
    s4 = scales.values[:, None, None, :]

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad * s4)
        if scales.requires_grad:
            scales._accumulate((grad * x.values).sum(axis=(1, 2)))

    return _wrap(x.values * s4, (x, scales), backward)


def last_step(x) -> Tensor:
    """(N, T, H) -> (N, H), the final timestep."""
    x = _as_tensor(x)
    if x.values.ndim != 3:
        raise ShapeError("last_step expects a (N, T, H) sequence")

    def backward(grad):
        if x.requires_grad:
            dx = np.zeros_like(x.values)
            dx[:, -1, :] = grad
            x._accumulate(dx)

    return _wrap(x.values[:, -1, :].copy(), (x,), backward)


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------

def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm(x, w_input, w_hidden, bias) -> Tensor:
    """Single-layer LSTM over a (N, T, D) batch (a (T, D) input is treated as
    one sequence and returns (T, H)). Gates are packed [i, f, g, o]; initial
    hidden and cell states are zero; every timestep's hidden state is returned.
    """
    x, w_input, w_hidden, bias = map(_as_tensor, (x, w_input, w_hidden, bias))
    squeeze = x.values.ndim == 2
    xv = x.values[None] if squeeze else x.values
    if xv.ndim != 3:
        raise ShapeError("lstm expects a (N, T, D) input")
    n, t_len, d = xv.shape
    if t_len < 1:
        raise ShapeError("lstm needs at least one timestep")
    hidden = w_hidden.values.shape[0]
    if w_input.values.shape != (d, 4 * hidden):
        raise ShapeError(f"w_input must be ({d}, {4 * hidden})")
    if w_hidden.values.shape != (hidden, 4 * hidden):
        raise ShapeError(f"w_hidden must be ({hidden}, {4 * hidden})")
    if bias.values.shape != (4 * hidden,):
        raise ShapeError(f"bias must be ({4 * hidden},)")

    h_prev = np.zeros((n, hidden), dtype=xv.dtype)
    c_prev = np.zeros((n, hidden), dtype=xv.dtype)
    steps = []
    hs = np.empty((n, t_len, hidden), dtype=xv.dtype)
    for t in range(t_len):
        z = xv[:, t, :] @ w_input.values + h_prev @ w_hidden.values + bias.values
        i = _sigmoid(z[:, :hidden])
        f = _sigmoid(z[:, hidden:2 * hidden])
        g = np.tanh(z[:, 2 * hidden:3 * hidden])
        o = _sigmoid(z[:, 3 * hidden:])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        steps.append((h_prev, c_prev, i, f, g, o, tc))
        h_prev, c_prev = h, c
        hs[:, t, :] = h

    out_values = hs[0] if squeeze else hs

    def backward(grad):
        dh_all = grad[None] if squeeze else grad
        dwx = np.zeros_like(w_input.values)
        dwh = np.zeros_like(w_hidden.values)
        db = np.zeros_like(bias.values)
        dx = np.zeros_like(xv) if x.requires_grad else None
        dh_next = np.zeros((n, hidden), dtype=xv.dtype)
        dc_next = np.zeros((n, hidden), dtype=xv.dtype)
        for t in range(t_len - 1, -1, -1):
            h_in, c_in, i, f, g, o, tc = steps[t]
            dh = dh_all[:, t, :] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            di = dc * g
            df = dc * c_in
            dg = dc * i
            dz = np.concatenate([di * i * (1 - i), df * f * (1 - f),
                                 dg * (1 - g * g), do * o * (1 - o)], axis=1)
            dwx += xv[:, t, :].T @ dz
            dwh += h_in.T @ dz
            db += dz.sum(axis=0)
            if dx is not None:
                dx[:, t, :] = dz @ w_input.values.T
            dh_next = dz @ w_hidden.values.T
            dc_next = dc * f
        if x.requires_grad:
            x._accumulate(dx[0] if squeeze else dx)
        if w_input.requires_grad:
            w_input._accumulate(dwx)
        if w_hidden.requires_grad:
            w_hidden._accumulate(dwh)
        if bias.requires_grad:
            bias._accumulate(db)

    return _wrap(out_values, (x, w_input, w_hidden, bias), backward)


# ---------------------------------------------------------------------------
# Loss, softmax, Adam
# ---------------------------------------------------------------------------

def softmax_probs(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, onehot) -> Tensor:
    """Mean categorical cross-entropy. Gradient is (softmax - onehot)/N."""
    logits = _as_tensor(logits)
    target = np.asarray(onehot, dtype=logits.values.dtype)
    if logits.values.shape != target.shape or logits.values.ndim != 2:
        raise ShapeError(f"logits {logits.values.shape} vs labels {target.shape}")
    n = logits.values.shape[0]
    shifted = logits.values - logits.values.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = -float(np.sum(target * log_probs)) / n
    probs = np.exp(log_probs)

    def backward(grad):
        if logits.requires_grad:
            logits._accumulate(grad * (probs - target) / n)

    return _wrap(np.asarray(loss, dtype=logits.values.dtype), (logits,), backward)


@dataclass
class AdamState:
    """Bias-corrected Adam. Accumulators are list-aligned with the parameters."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr: float = 1e-4, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-7) -> "AdamState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        state.m = [np.zeros_like(p.values) for p in params]
        state.v = [np.zeros_like(p.values) for p in params]
        return state


def adam_step(params, state: AdamState) -> None:
    """One in-place Adam update: p -= lr * m_hat / (sqrt(v_hat) + eps)."""
    if len(params) != len(state.m):
        raise ShapeError("optimizer state does not match parameter list")
    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for idx, p in enumerate(params):
        grad = p.grad
        if grad is None:
            continue
        if not np.all(np.isfinite(grad)):
            raise NumericsError(f"non-finite gradient in parameter {idx}")
        state.m[idx] = state.beta1 * state.m[idx] + (1.0 - state.beta1) * grad
        state.v[idx] = state.beta2 * state.v[idx] + (1.0 - state.beta2) * grad * grad
        m_hat = state.m[idx] / correction1
        v_hat = state.v[idx] / correction2
        p.values -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(
            p.values.dtype)


# ---------------------------------------------------------------------------
# Checkpoints: JSON manifest line + raw little-endian buffers in order
# ---------------------------------------------------------------------------

_DTYPE_CODES = {np.dtype(np.float32): "<f4", np.dtype(np.float64): "<f8"}


def save_checkpoint(path, arrays: dict, meta: dict | None = None) -> None:
    entries = []
    buffers = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        code = _DTYPE_CODES.get(arr.dtype)
        if code is None:
            raise ConfigError(f"cannot checkpoint dtype {arr.dtype} for {name!r}")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": code})
        buffers.append(np.ascontiguousarray(arr).astype(code).tobytes())
    manifest = json.dumps({"meta": meta or {}, "tensors": entries}, sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(manifest.encode("utf-8") + b"\n")
        for buf in buffers:
            fh.write(buf)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        manifest = json.loads(fh.readline().decode("utf-8"))
        arrays = {}
        for entry in manifest["tensors"]:
            shape = tuple(entry["shape"])
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * dtype.itemsize)
            if len(buf) != count * dtype.itemsize:
                raise ConfigError(f"{path}: truncated checkpoint at {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
    return arrays, manifest["meta"]
