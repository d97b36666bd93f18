"""Residual-predicting UNet.

A 9-convolution encoder/decoder with skip connections. Downsampling uses a
learnable blend of max- and average-pooling (one mixing scalar per pooling
stage); upsampling is bilinear. The head is a sigmoid constrained below 1 and
floored at ``DELTA_MIN`` so the predicted per-pixel multiplicative residual
can safely divide an image.

Weights serialize to a little-endian binary format (magic ``ZSHDRW01``)
documented in :func:`save_weights`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import nn
from .nn import DTYPE, Parameter

DELTA_MIN = 1e-3

WEIGHTS_MAGIC = b"ZSHDRW01"
_HEADER = struct.Struct("<8s5IBBHQ")
_CONFIG_PACK = struct.Struct("<5I")


@dataclass(frozen=True)
class ModelConfig:
    base_channels: int = 32
    depth: int = 3
    kernel_size: int = 3
    input_channels: int = 3
    output_channels: int = 3

    def __post_init__(self):
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.depth != 3:
            raise ValueError("topology is fixed at 3 pooling levels")
        if self.kernel_size != 3:
            raise ValueError("kernel size is fixed at 3")

    def layer_plan(self) -> list[tuple[str, int, int]]:
        """(name, in_channels, out_channels) for the 9 convolutions in order."""
        bc = self.base_channels
        return [
            ("enc1", self.input_channels, bc),
            ("enc2", bc, 2 * bc),
            ("enc3", 2 * bc, 4 * bc),
            ("bott1", 4 * bc, 8 * bc),
            ("bott2", 8 * bc, 8 * bc),
            ("dec3", 12 * bc, 4 * bc),
            ("dec2", 6 * bc, 2 * bc),
            ("dec1", 3 * bc, bc),
            ("head", bc, self.output_channels),
        ]

    def packed(self) -> bytes:
        return _CONFIG_PACK.pack(
            self.base_channels, self.depth, self.kernel_size,
            self.input_channels, self.output_channels,
        )


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def config_fingerprint(config: ModelConfig) -> int:
    return fnv1a64(config.packed())


class ResidualUNet:
    """Maps an SDR frame tensor (N,3,H,W) in [0,1] to residuals in [1e-3, 1)."""

    _CONV_ORDER = ("enc1", "enc2", "enc3", "bott1", "bott2", "dec3", "dec2", "dec1", "head")
    _POOLED = ("enc1", "enc2", "enc3")

    def __init__(self, config: ModelConfig, conv_params: dict[str, tuple[Parameter, Parameter]],
                 pool_logits: list[Parameter]):
        self.config = config
        self.conv_params = conv_params
        self.pool_logits = pool_logits
        self.padding = config.kernel_size // 2
        self.fingerprint = config_fingerprint(config)

    @classmethod
    def init(cls, config: ModelConfig, seed: int) -> "ResidualUNet":
        """He-style normal conv weights (std = sqrt(2 / fan_in)), zero biases,
        zero pooling-mix logits (blend starts at 0.5). Deterministic per seed."""
        rng = np.random.default_rng(seed)
        k = config.kernel_size
        convs: dict[str, tuple[Parameter, Parameter]] = {}
        for name, c_in, c_out in config.layer_plan():
            std = np.sqrt(2.0 / (c_in * k * k))
            w = Parameter(rng.normal(0.0, std, size=(c_out, c_in, k, k)))
            b = Parameter(np.zeros(c_out, dtype=DTYPE))
            convs[name] = (w, b)
        logits = [Parameter(np.zeros(1, dtype=DTYPE)) for _ in range(config.depth)]
        return cls(config, convs, logits)

    def parameters(self) -> list[Parameter]:
        """All trainable tensors in serialization order."""
        out: list[Parameter] = []
        for i, name in enumerate(self._CONV_ORDER):
            w, b = self.conv_params[name]
            out.extend([w, b])
            if name in self._POOLED:
                out.append(self.pool_logits[i])
        return out

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    # -- forward ------------------------------------------------------------

    def _check_input(self, x: np.ndarray) -> None:
        if x.ndim != 4 or x.shape[1] != self.config.input_channels:
            raise ValueError(
                f"expected input (N, {self.config.input_channels}, H, W), got {x.shape}"
            )
        if x.shape[2] % 8 != 0 or x.shape[3] % 8 != 0:
            raise ValueError(
                f"spatial dims must be multiples of 8, got {x.shape[2]}x{x.shape[3]}; pad first"
            )

    def _conv(self, name: str, x: np.ndarray) -> np.ndarray:
        w, b = self.conv_params[name]
        return nn.conv2d(x, w.value, b.value, self.padding)

    def _mix(self, level: int) -> float:
        return float(1.0 / (1.0 + np.exp(-self.pool_logits[level].value[0])))

    def forward(self, x: np.ndarray, tape: dict | None = None) -> np.ndarray:
        """Run the network; pass ``tape={}`` to record intermediates for backward."""
        self._check_input(x)
        t = tape if tape is not None else {}
        t["x"] = x

        skips = []
        h = x
        for level, name in enumerate(("enc1", "enc2", "enc3")):
            pre = self._conv(name, h)
            act = nn.relu(pre)
            skips.append(act)
            mx = nn.pool2x2(act, "max")
            av = nn.pool2x2(act, "avg")
            m = self._mix(level)
            h = m * mx + (1.0 - m) * av
            t[f"{name}_pre"], t[f"{name}_act"] = pre, act
            t[f"pool{level}_max"], t[f"pool{level}_avg"], t[f"pool{level}_mix"] = mx, av, m
            t[f"pool{level}_out"] = h

        b1_pre = self._conv("bott1", h)
        b1 = nn.relu(b1_pre)
        b2_pre = self._conv("bott2", b1)
        b2 = nn.relu(b2_pre)
        t["bott1_in"], t["bott1_pre"] = h, b1_pre
        t["bott2_in"], t["bott2_pre"] = b1, b2_pre

        h = b2
        for level, name in zip((2, 1, 0), ("dec3", "dec2", "dec1")):
            up = nn.bilinear_upsample2x(h)
            cat = nn.concat_channels(skips[level], up)
            pre = self._conv(name, cat)
            h = nn.relu(pre)
            t[f"{name}_in"], t[f"{name}_pre"] = cat, pre
            t[f"{name}_up_src_hw"] = (up.shape[2] // 2, up.shape[3] // 2)
            t[f"{name}_skip_channels"] = skips[level].shape[1]

        z = self._conv("head", h)
        s = nn.sigmoid(z)
        delta = np.maximum(s, DELTA_MIN)
        t["head_in"], t["head_sig"] = h, s
        return delta

    # -- backward -----------------------------------------------------------

    def _conv_backward(self, name: str, x: np.ndarray, gy: np.ndarray) -> np.ndarray:
        w, b = self.conv_params[name]
        gx, gw, gb = nn.conv2d_backward(x, w.value, gy, self.padding)
        w.grad += gw
        b.grad += gb
        return gx

    def _pool_backward(self, level: int, tape: dict, gy: np.ndarray) -> np.ndarray:
        act = tape[f"enc{level + 1}_act"]
        mx, av, m = tape[f"pool{level}_max"], tape[f"pool{level}_avg"], tape[f"pool{level}_mix"]
        g_mixed = np.sum(gy * (mx - av))
        self.pool_logits[level].grad += g_mixed * m * (1.0 - m)
        gx = nn.pool2x2_backward(act, "max", m * gy)
        gx += nn.pool2x2_backward(act, "avg", (1.0 - m) * gy)
        return gx

    def backward(self, tape: dict, g_delta: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients from dLoss/dResidual; returns dLoss/dInput."""
        s = tape["head_sig"]
        g_s = np.where(s > DELTA_MIN, g_delta, 0.0)  # floor clamp blocks gradient
        g_z = nn.sigmoid_backward(s, g_s)
        g = self._conv_backward("head", tape["head_in"], g_z)

        skip_grads: dict[int, np.ndarray] = {}
        for level, name in zip((0, 1, 2), ("dec1", "dec2", "dec3")):
            g = nn.relu_backward(tape[f"{name}_pre"], g)
            g_cat = self._conv_backward(name, tape[f"{name}_in"], g)
            g_skip, g_up = nn.concat_channels_backward(g_cat, tape[f"{name}_skip_channels"])
            skip_grads[level] = g_skip
            src_h, src_w = tape[f"{name}_up_src_hw"]
            g = nn.bilinear_upsample2x_backward(g_up, src_h, src_w)

        g = nn.relu_backward(tape["bott2_pre"], g)
        g = self._conv_backward("bott2", tape["bott2_in"], g)
        g = nn.relu_backward(tape["bott1_pre"], g)
        g = self._conv_backward("bott1", tape["bott1_in"], g)

        for level, name in zip((2, 1, 0), ("enc3", "enc2", "enc1")):
            g = self._pool_backward(level, tape, g)
            g += skip_grads[level]
            g = nn.relu_backward(tape[f"{name}_pre"], g)
            src = tape["x"] if level == 0 else tape[f"pool{level - 1}_out"]
            g = self._conv_backward(name, src, g)
        return g


# ---------------------------------------------------------------------------
# Weights file
# ---------------------------------------------------------------------------

def save_weights(model: ResidualUNet, path, include_moments: bool = False,
                 dtype=np.float64) -> None:
    """Write the weights file.

    Layout (all little-endian):
      magic ``ZSHDRW01`` (8 bytes); u32 base_channels, depth, kernel_size,
      input_channels, output_channels; u8 float byte width (4 or 8);
      u8 moments flag; u16 parameter tensor count; u64 FNV-1a fingerprint of
      the packed config fields; then each parameter tensor's raw float data
      in architecture order; then, if the moments flag is set, per tensor:
      u64 step count, first-moment floats, second-moment floats.
    """
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError("weights dtype must be float32 or float64")
    params = model.parameters()
    header = _HEADER.pack(
        WEIGHTS_MAGIC,
        model.config.base_channels, model.config.depth, model.config.kernel_size,
        model.config.input_channels, model.config.output_channels,
        dtype.itemsize, 1 if include_moments else 0, len(params),
        config_fingerprint(model.config),
    )
    le = dtype.newbyteorder("<")
    with open(path, "wb") as fh:
        fh.write(header)
        for p in params:
            fh.write(np.ascontiguousarray(p.value, dtype=le).tobytes())
        if include_moments:
            for p in params:
                fh.write(struct.pack("<Q", p.step_count))
                fh.write(np.ascontiguousarray(p.m, dtype=le).tobytes())
                fh.write(np.ascontiguousarray(p.v, dtype=le).tobytes())


def load_weights(path) -> ResidualUNet:
    """Read a weights file written by :func:`save_weights`; validates the
    magic, the config fingerprint, and the exact file length."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"weights file truncated: {len(raw)} bytes < {_HEADER.size}-byte header")
    (magic, bc, depth, k, c_in, c_out, itemsize, has_moments, n_params,
     stored_fp) = _HEADER.unpack_from(raw, 0)
    if magic != WEIGHTS_MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {WEIGHTS_MAGIC!r}")
    config = ModelConfig(bc, depth, k, c_in, c_out)
    expected_fp = config_fingerprint(config)
    if stored_fp != expected_fp:
        raise ValueError(
            f"architecture fingerprint mismatch: file has {stored_fp:#018x}, "
            f"config implies {expected_fp:#018x}"
        )
    if itemsize not in (4, 8):
        raise ValueError(f"unsupported float width {itemsize}")
    float_dt = np.dtype(np.float32 if itemsize == 4 else np.float64).newbyteorder("<")

    model = ResidualUNet.init(config, seed=0)
    params = model.parameters()
    if n_params != len(params):
        raise ValueError(f"file declares {n_params} parameter tensors, architecture has {len(params)}")

    n_values = sum(p.value.size for p in params)
    expected_len = _HEADER.size + n_values * itemsize
    if has_moments:
        expected_len += len(params) * 8 + 2 * n_values * itemsize
    if len(raw) != expected_len:
        raise ValueError(
            f"weights file length {len(raw)} != expected {expected_len} "
            f"(truncated or trailing garbage)"
        )

    off = _HEADER.size

    def take(shape) -> np.ndarray:
        nonlocal off
        count = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype=float_dt, count=count, offset=off)
        off += count * itemsize
        return arr.astype(DTYPE).reshape(shape)

    for p in params:
        p.value[...] = take(p.value.shape)
    if has_moments:
        for p in params:
            (p.step_count,) = struct.unpack_from("<Q", raw, off)
            off += 8
            p.m[...] = take(p.m.shape)
            p.v[...] = take(p.v.shape)
    else:
        for p in params:
            p.m[...] = 0.0
            p.v[...] = 0.0
            p.step_count = 0
    model.zero_grads()
    return model
