"""Exposure-stack synthesis by residual chaining, and fusion to linear HDR.

The trained network predicts the residual that darkens a frame by two stops;
chaining it (and its reciprocal) builds a bracket of synthetic exposures,
which a weighted average in the linear domain turns into relative radiance.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exposure import GAMMA, HdrFrame, SdrFrame
from .model import ResidualUNet

SATURATION_LEVEL = 254.5 / 255.0
STEP_STOPS = 2.0  # each chained network application moves the exposure by 2 stops


@dataclass
class ExposureStack:
    """Synthetic exposures of one frame, ordered by increasing f-stop offset."""

    frames: list[np.ndarray]
    offsets: list[float]

    def __post_init__(self):
        if len(self.frames) != len(self.offsets):
            raise ValueError("one offset per frame required")
        if not self.frames:
            raise ValueError("empty exposure stack")
        if any(b <= a for a, b in zip(self.offsets, self.offsets[1:])):
            raise ValueError(f"offsets must be strictly increasing, got {self.offsets}")
        if 0.0 not in self.offsets:
            raise ValueError("stack must contain the 0-offset input frame")


@dataclass
class FusionConfig:
    weight_floor: float = 1e-4
    gamma: float = GAMMA

    def __post_init__(self):
        if self.weight_floor <= 0.0:
            raise ValueError("weight_floor must be positive")


# ---------------------------------------------------------------------------
# Padding helpers (the network wants spatial multiples of 8)
# ---------------------------------------------------------------------------

def pad_to_multiple(pixels: np.ndarray, multiple: int = 8) -> np.ndarray:
    """Edge-replicate pad (H, W, 3) pixels up to the next spatial multiple."""
    h, w = pixels.shape[:2]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return pixels
    return np.pad(pixels, ((0, ph), (0, pw), (0, 0)), mode="edge")


def crop_to(pixels: np.ndarray, h: int, w: int) -> np.ndarray:
    return pixels[:h, :w]


# ---------------------------------------------------------------------------
# Residual chaining
# ---------------------------------------------------------------------------

def _predict(model: ResidualUNet, pixels: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(pixels.transpose(2, 0, 1))[None]
    delta = model.forward(x)
    return delta[0].transpose(1, 2, 0)


def step_down(model: ResidualUNet, pixels: np.ndarray) -> np.ndarray:
    """Render the frame two stops darker: multiply by the predicted residual.

    Input must already be padded to spatial multiples of 8. The output stays
    in [0, 1) because the residual is below 1 everywhere.
    """
    return _predict(model, pixels) * pixels


def step_up(model: ResidualUNet, pixels: np.ndarray) -> np.ndarray:
    """Render the frame two stops brighter: divide by the predicted residual
    and clamp; values pinned at 1 model sensor saturation at that exposure."""
    return np.clip(pixels / _predict(model, pixels), 0.0, 1.0)


def expand_stack(model: ResidualUNet, frame: SdrFrame, n_down: int = 2, n_up: int = 2) -> ExposureStack:
    """Chain the network n_down times below and n_up times above the input.

    Each chained step re-runs the network on the previous synthetic exposure.
    Frames are padded for inference and cropped back to the input size.
    """
    if n_down < 0 or n_up < 0:
        raise ValueError("chain lengths must be >= 0")
    h, w = frame.pixels.shape[:2]
    padded = pad_to_multiple(frame.pixels)

    downs = []
    cur = padded
    for _ in range(n_down):
        cur = step_down(model, cur)
        downs.append(crop_to(cur, h, w))
    ups = []
    cur = padded
    for _ in range(n_up):
        cur = step_up(model, cur)
        ups.append(crop_to(cur, h, w))

    frames = list(reversed(downs)) + [frame.pixels] + ups
    offsets = [STEP_STOPS * k for k in range(-n_down, n_up + 1)]
    return ExposureStack(frames, offsets)


def expand_stack_offsets(model: ResidualUNet, frame: SdrFrame, offsets: list[float]) -> ExposureStack:
    """Build a stack holding exactly the requested offsets (multiples of 2,
    including 0); intermediate chain steps are computed but not kept."""
    if not offsets:
        raise ValueError("no offsets requested")
    ordered = sorted(offsets)
    if any(o % STEP_STOPS != 0.0 for o in ordered):
        raise ValueError(f"offsets must be multiples of {STEP_STOPS}, got {offsets}")
    if 0.0 not in ordered:
        raise ValueError("offsets must include 0")
    n_down = int(-ordered[0] // STEP_STOPS)
    n_up = int(ordered[-1] // STEP_STOPS)
    full = expand_stack(model, frame, n_down=n_down, n_up=n_up)
    keep = [i for i, off in enumerate(full.offsets) if off in ordered]
    return ExposureStack([full.frames[i] for i in keep], [full.offsets[i] for i in keep])


# ---------------------------------------------------------------------------
# Fusion
# ---------------------------------------------------------------------------

def fuse_stack(stack: ExposureStack, config: FusionConfig | None = None) -> HdrFrame:
    """Weighted average of linearized exposures into relative radiance.

    Each exposure contributes z**gamma * 2**(-offset) with a hat weight
    max(floor, min(z, 1-z)). Pixels saturated in every exposure fall back to
    the lowest exposure alone. Radiance is anchored so the 0-offset frame's
    mid-grey 0.5 maps to 0.5**gamma.
    """
    config = config or FusionConfig()
    z = np.stack(stack.frames)                       # (K, H, W, 3)
    scales = np.array([2.0 ** (-v) for v in stack.offsets])[:, None, None, None]
    weights = np.maximum(config.weight_floor, np.minimum(z, 1.0 - z))
    radiance = np.power(z, config.gamma) * scales
    fused = np.sum(weights * radiance, axis=0) / np.sum(weights, axis=0)

    all_saturated = np.all(z >= SATURATION_LEVEL, axis=0)
    if np.any(all_saturated):
        fused = np.where(all_saturated, radiance[0], fused)
    return HdrFrame(fused)


def expand_video(
    model: ResidualUNet,
    video: list[SdrFrame],
    config: FusionConfig | None = None,
    offsets: list[float] | None = None,
    threads: int = 1,
) -> list[HdrFrame]:
    """Per-frame expand + fuse; frames are independent and order-preserving."""
    offsets = offsets if offsets is not None else [-4.0, -2.0, 0.0, 2.0, 4.0]

    def one(frame: SdrFrame) -> HdrFrame:
        return fuse_stack(expand_stack_offsets(model, frame, offsets), config)

    if threads <= 1 or len(video) <= 1:
        return [one(f) for f in video]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, video))
