"""Synthetic HDR test scene with analytic ground truth.

Bright disks of fixed radiance drift over a textured wall whose brightness
swells and fades. The auto-exposure tracks the wall, so the disks saturate
the 0-stop rendering in the dim phases but are captured cleanly in the
bright ones; that alternation is exactly what the self-supervised training
exploits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .exposure import HdrFrame

# fixed-radiance objects: (radiance, radius fraction, orbit fraction, phase offset)
_DISKS = (
    (1.6, 0.09, 0.26, 0.0),
    (2.1, 0.10, 0.18, 2.1),
    (2.6, 0.06, 0.30, 4.2),
)


@dataclass
class FixtureConfig:
    n_frames: int = 64
    size: int = 64
    seed: int = 7
    fps: float = 24.0
    disk_radiance: float = 1.0        # scales every disk's radiance
    wall_level: float = 0.55          # median wall radiance at full brightness
    wall_texture_sigma: float = 0.4   # log-radiance texture spread
    brightness_floor: float = 0.12    # dim-frame multiplier on the wall
    brightness_cycles: int = 1        # dim/bright swells over the sequence

    def __post_init__(self):
        if self.n_frames < 2 or self.size < 16 or self.size % 8 != 0:
            raise ValueError("need >= 2 frames and size a multiple of 8, >= 16")
        if self.disk_radiance <= 0.0 or self.wall_level <= 0.0:
            raise ValueError("radiances must be positive")


def _smooth_texture(size: int, rng: np.random.Generator) -> np.ndarray:
    """Band-limited random texture, roughly unit-variance: coarse noise
    bilinearly upsampled to full resolution. Built oversized so frames can
    pan over it."""
    field = rng.standard_normal((1, 3, size // 4, size // 4))
    while field.shape[2] < size:
        field = nn.bilinear_upsample2x(field)
    field = field[0].transpose(1, 2, 0)
    return (field - field.mean()) / max(1e-9, field.std())


def generate_fixture(config: FixtureConfig | None = None) -> list[HdrFrame]:
    """Deterministic list of linear-radiance ground-truth frames."""
    config = config or FixtureConfig()
    n, size = config.n_frames, config.size
    rng = np.random.default_rng(config.seed)

    pad = size // 2
    texture = _smooth_texture(size + 2 * pad, rng)
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)

    frames = []
    for i in range(n):
        phase = i / (n - 1)
        # wall brightness swells periodically, dragging the auto-exposure
        # down; narrow plateaus keep most frames in the dim regime where the
        # disks clip, while each plateau still lasts long enough for the
        # smoothed exposure to settle and capture the disks cleanly
        wave = np.sin(np.pi * phase * config.brightness_cycles) ** 2
        swell = min(1.0, max(0.0, 5.0 * (wave - 0.65)))
        brightness = config.brightness_floor + (1.0 - config.brightness_floor) * swell

        # camera pans diagonally across the oversized texture; the wall scales
        # with the swell, so the auto-exposure keeps it clear of clipping
        shift = int(round(phase * pad))
        tex = texture[shift:shift + size, shift:shift + size]
        sigma = config.wall_texture_sigma
        pixels = config.wall_level * np.exp(sigma * tex - 0.5 * sigma * sigma) * brightness

        # disks keep constant absolute radiance while orbiting, so they clip
        # at the dim-phase exposures and are captured cleanly in bright ones
        for radiance, radius_frac, orbit_frac, phi in _DISKS:
            angle = 2.0 * np.pi * phase + phi
            cy = size / 2.0 + orbit_frac * size * np.sin(angle)
            cx = size / 2.0 + orbit_frac * size * np.cos(angle)
            dist = np.sqrt((ys - cy) ** 2 + (xs - cx) ** 2)
            coverage = np.clip(radius_frac * size + 0.5 - dist, 0.0, 1.0)[..., None]
            color = config.disk_radiance * radiance * np.array([1.0, 0.95, 0.85])
            pixels = pixels * (1.0 - coverage) + coverage * color

        frames.append(HdrFrame(pixels))
    return frames
