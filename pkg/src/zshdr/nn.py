"""Dense 4-D tensor ops with hand-written forward/backward passes, plus Adam.

Tensors are plain ``numpy.ndarray`` objects in NCHW layout (batch, channels,
height, width), float64 by default. Every operation here is a pure function;
the ``*_backward`` companions take the forward inputs they need plus the
upstream gradient and return input/parameter gradients computed analytically.

The op set is exactly what the residual-prediction network requires:
stride-1 zero-padded convolution, ReLU, sigmoid, 2x2 max/avg pooling,
bilinear 2x upsampling, and channel concatenation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64


def _check_nchw(x: np.ndarray, name: str = "input") -> None:
    if x.ndim != 4:
        raise ValueError(f"{name} must be 4-D (batch, channels, height, width), got shape {x.shape}")
    if min(x.shape) < 1:
        raise ValueError(f"{name} has an empty dimension: shape {x.shape}")


# ---------------------------------------------------------------------------
# Convolution (cross-correlation, stride 1)
# ---------------------------------------------------------------------------

def _correlate(xpad: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Valid cross-correlation of a padded NCHW tensor with OIkk weights.

    Decomposed into k*k shifted 1x1 products so each term is a single GEMM;
    avoids materialising the full im2col buffer.
    """
    n, c, hp, wp = xpad.shape
    out_c, _, k, _ = w.shape
    ho, wo = hp - k + 1, wp - k + 1
    y = np.zeros((n, out_c, ho, wo), dtype=DTYPE)
    for a in range(k):
        for b in range(k):
            xs = xpad[:, :, a:a + ho, b:b + wo]
            y += np.einsum("nchw,oc->nohw", xs, w[:, :, a, b], optimize=True)
    return y


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, padding: int) -> np.ndarray:
    """2-D convolution (cross-correlation), stride 1, zero padding.

    x: (N, inC, H, W); w: (outC, inC, k, k); b: (outC,).
    Output spatial size is H + 2*padding - k + 1.
    """
    _check_nchw(x)
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ValueError(f"weight must be (outC, inC, k, k) with square kernel, got {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ValueError(
            f"conv2d channel mismatch: input has {x.shape[1]} channels, weight expects {w.shape[1]}"
        )
    k = w.shape[2]
    if x.shape[2] + 2 * padding < k or x.shape[3] + 2 * padding < k:
        raise ValueError(f"input {x.shape} too small for kernel {k} with padding {padding}")
    xpad = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    y = _correlate(xpad, w)
    y += b[None, :, None, None]
    return y


def conv2d_backward(
    x: np.ndarray, w: np.ndarray, gy: np.ndarray, padding: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv2d w.r.t. input, weight and bias.

    gy has the forward output's shape. Returns (gx, gw, gb).
    """
    out_c, c, k, _ = w.shape
    n, _, h, width = x.shape
    ho, wo = gy.shape[2], gy.shape[3]

    gb = gy.sum(axis=(0, 2, 3))

    # Weight gradient as a single GEMM over the im2col matrix of the input.
    xpad = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(xpad, (k, k), axis=(2, 3))  # (n, c, ho, wo, k, k)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    gy_mat = gy.transpose(1, 0, 2, 3).reshape(out_c, n * ho * wo)
    gw = (gy_mat @ cols).reshape(out_c, c, k, k)

    # dL/dx is a full correlation of gy with the flipped kernel, channels swapped.
    w_t = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    gy_pad = np.pad(gy, ((0, 0), (0, 0), (k - 1, k - 1), (k - 1, k - 1)))
    gx_full = _correlate(gy_pad, w_t)  # gradient w.r.t. the padded input
    gx = gx_full[:, :, padding:padding + h, padding:padding + width]
    return gx, gw, gb


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, gy: np.ndarray) -> np.ndarray:
    # Subgradient at exactly 0 is defined as 0.
    return np.where(x > 0.0, gy, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Branch on sign so neither exp() can overflow.
    out = np.empty_like(x, dtype=DTYPE)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(y: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Backward pass given the forward *output* y = sigmoid(x)."""
    return gy * y * (1.0 - y)


# ---------------------------------------------------------------------------
# 2x2 pooling
# ---------------------------------------------------------------------------

def _pool_blocks(x: np.ndarray) -> np.ndarray:
    """Rearrange (N,C,H,W) into (N,C,H/2,W/2,4) blocks, row-major within each block."""
    n, c, h, w = x.shape
    if h % 2 != 0 or w % 2 != 0:
        raise ValueError(f"pool2x2 requires even spatial dims, got {h}x{w}")
    b = x.reshape(n, c, h // 2, 2, w // 2, 2)
    return b.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)


def pool2x2(x: np.ndarray, mode: str) -> np.ndarray:
    """Non-overlapping 2x2 pooling; mode is 'max' or 'avg'. Halves H and W."""
    blocks = _pool_blocks(x)
    if mode == "max":
        return blocks.max(axis=-1)
    if mode == "avg":
        return blocks.mean(axis=-1)
    raise ValueError(f"unknown pool mode {mode!r}")


def pool2x2_backward(x: np.ndarray, mode: str, gy: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    blocks = _pool_blocks(x)
    gblocks = np.zeros_like(blocks)
    if mode == "max":
        # argmax returns the first maximum, which is the row-major tie-break.
        idx = blocks.argmax(axis=-1)
        np.put_along_axis(gblocks, idx[..., None], gy[..., None], axis=-1)
    elif mode == "avg":
        gblocks[...] = gy[..., None] * 0.25
    else:
        raise ValueError(f"unknown pool mode {mode!r}")
    g = gblocks.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return g.reshape(n, c, h, w)


# ---------------------------------------------------------------------------
# Bilinear 2x upsampling
# ---------------------------------------------------------------------------

_resize_cache: dict[int, np.ndarray] = {}


def _upsample_matrix(n_in: int) -> np.ndarray:
    """(2n, n) interpolation matrix for half-pixel-center 2x upsampling."""
    m = _resize_cache.get(n_in)
    if m is not None:
        return m
    m = np.zeros((2 * n_in, n_in), dtype=DTYPE)
    for dst in range(2 * n_in):
        src = (dst + 0.5) / 2.0 - 0.5
        src = min(max(src, 0.0), float(n_in - 1))
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        t = src - lo
        m[dst, lo] += 1.0 - t
        m[dst, hi] += t
    _resize_cache[n_in] = m
    return m


def bilinear_upsample2x(x: np.ndarray) -> np.ndarray:
    """Doubles H and W with bilinear interpolation at half-pixel centers."""
    _check_nchw(x)
    ry = _upsample_matrix(x.shape[2])
    rx = _upsample_matrix(x.shape[3])
    return np.matmul(np.matmul(ry, x), rx.T)


def bilinear_upsample2x_backward(gy: np.ndarray, in_h: int, in_w: int) -> np.ndarray:
    """Transpose of the upsampling map: scatters gy back with the same weights."""
    ry = _upsample_matrix(in_h)
    rx = _upsample_matrix(in_w)
    return np.matmul(np.matmul(ry.T, gy), rx)


# ---------------------------------------------------------------------------
# Channel concatenation
# ---------------------------------------------------------------------------

def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Concatenate along the channel axis; a's channels come first."""
    _check_nchw(a, "a")
    _check_nchw(b, "b")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(f"concat_channels spatial/batch mismatch: {a.shape} vs {b.shape}")
    return np.concatenate([a, b], axis=1)


def concat_channels_backward(gy: np.ndarray, a_channels: int) -> tuple[np.ndarray, np.ndarray]:
    return gy[:, :a_channels], gy[:, a_channels:]


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError(f"betas must lie in (0, 1), got {self.beta1}, {self.beta2}")
        if self.epsilon <= 0.0 or self.learning_rate <= 0.0:
            raise ValueError("learning_rate and epsilon must be positive")


@dataclass
class Parameter:
    """A trainable tensor with its gradient buffer and Adam moment state."""

    value: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]
    m: np.ndarray = field(default=None)  # type: ignore[assignment]
    v: np.ndarray = field(default=None)  # type: ignore[assignment]
    step_count: int = 0

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=DTYPE)
        for name in ("grad", "m", "v"):
            buf = getattr(self, name)
            if buf is None:
                setattr(self, name, np.zeros_like(self.value))
            elif buf.shape != self.value.shape:
                raise ValueError(f"{name} shape {buf.shape} != value shape {self.value.shape}")

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def adam_step(param: Parameter, config: AdamConfig) -> Parameter:
    """One bias-corrected Adam update in place; zeroes the gradient afterwards."""
    param.step_count += 1
    t = param.step_count
    g = param.grad
    param.m *= config.beta1
    param.m += (1.0 - config.beta1) * g
    param.v *= config.beta2
    param.v += (1.0 - config.beta2) * g * g
    m_hat = param.m / (1.0 - config.beta1 ** t)
    v_hat = param.v / (1.0 - config.beta2 ** t)
    param.value -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    param.zero_grad()
    return param
