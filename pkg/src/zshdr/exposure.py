"""Camera and exposure simulation.

Re-exposure of 8-bit frames through a gamma-2.2 response with quantization,
multiplicative residual targets, the per-epoch training-set builder, and
SDR synthesis from linear HDR radiance with temporally smoothed auto-exposure.

All images are (H, W, 3) float64 arrays. SDR pixel values are display-referred
in [0, 1] and always exact multiples of 1/255; HDR values are linear radiance,
non-negative and unbounded.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

GAMMA = 2.2
EXPOSURE_STEP = 2.0          # f-stop gap between training input and target
SHIFT_RANGE = 0.25           # augmentation shift s ~ U(0, 0.25)
TRAIN_FPS = 6.0              # temporal subsampling rate for training frames
LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])  # Rec. 709
MID_GREY = 0.5


def quantize8(x: np.ndarray) -> np.ndarray:
    """Round to the 8-bit grid in [0,1]; halves round away from zero."""
    return np.floor(np.asarray(x, dtype=np.float64) * 255.0 + 0.5) / 255.0


def is_quantized8(x: np.ndarray) -> bool:
    return bool(np.all(quantize8(x) == x))


@dataclass
class SdrFrame:
    """8-bit-quantized display-referred RGB in [0,1], with its exposure value
    in f-stops relative to the sequence base."""

    pixels: np.ndarray
    exposure_value: float = 0.0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"SdrFrame pixels must be (H, W, 3), got {self.pixels.shape}")
        if not np.isfinite(self.exposure_value):
            raise ValueError("exposure_value must be finite")

    def validate(self) -> "SdrFrame":
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise ValueError("SDR pixels must lie in [0, 1]")
        if not is_quantized8(self.pixels):
            raise ValueError("SDR pixels must be exact multiples of 1/255")
        return self


@dataclass
class HdrFrame:
    """Linear scene-referred radiance, non-negative, unbounded above."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"HdrFrame pixels must be (H, W, 3), got {self.pixels.shape}")

    def validate(self) -> "HdrFrame":
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError("HDR pixels must be finite")
        if self.pixels.min() < 0.0:
            raise ValueError("HDR pixels must be non-negative")
        return self


@dataclass
class TrainingPair:
    """One self-supervision sample: the over-exposed input, the shifted base
    target, and the multiplicative residual between them."""

    input: SdrFrame          # exposure b + EXPOSURE_STEP + s
    target_base: SdrFrame    # exposure b + s
    target_residual: np.ndarray
    shift: float

    def __post_init__(self):
        if not (0.0 <= self.shift < SHIFT_RANGE):
            raise ValueError(f"shift must lie in [0, {SHIFT_RANGE}), got {self.shift}")


def apply_exposure(frame: SdrFrame, delta_v: float) -> SdrFrame:
    """Re-expose by delta_v f-stops through the gamma-2.2 response, then clip
    to [0,1] and re-quantize to 8 bits.

    In the display domain a delta_v change multiplies values by
    2 ** (delta_v / GAMMA).
    """
    factor = 2.0 ** (delta_v / GAMMA)
    out = quantize8(np.clip(frame.pixels * factor, 0.0, 1.0))
    return SdrFrame(out, frame.exposure_value + delta_v)


def compute_residual(base: SdrFrame, high: SdrFrame) -> np.ndarray:
    """Per-channel ratio base/high in [0,1]; defined as 1 where high == 0."""
    if base.pixels.shape != high.pixels.shape:
        raise ValueError(
            f"residual shape mismatch: base {base.pixels.shape} vs high {high.pixels.shape}"
        )
    zero = high.pixels == 0.0
    delta = np.where(zero, 1.0, base.pixels / np.where(zero, 1.0, high.pixels))
    return np.clip(delta, 0.0, 1.0)


def subsample_indices(n_frames: int, fps: float) -> list[int]:
    """Indices retained at TRAIN_FPS, always starting from frame 0."""
    if n_frames < 1:
        raise ValueError("empty video")
    if fps <= 0.0:
        raise ValueError(f"fps must be positive, got {fps}")
    stride = max(1, round(fps / TRAIN_FPS))
    return list(range(0, n_frames, stride))


def build_training_set(video: list[SdrFrame], fps: float, seed: int) -> list[TrainingPair]:
    """Subsample the video to TRAIN_FPS and build one pair per retained frame.

    Each frame gets an independent shift s ~ U(0, SHIFT_RANGE): the input is
    the frame pushed to +(EXPOSURE_STEP + s) stops, the target base to +s, and
    the target residual is their ratio. Call once per epoch with a fresh seed
    so the shifts act as augmentation.
    """
    if not video:
        raise ValueError("empty video")
    rng = np.random.default_rng(seed)
    pairs = []
    for idx in subsample_indices(len(video), fps):
        s = float(rng.uniform(0.0, SHIFT_RANGE))
        frame = video[idx]
        high = apply_exposure(frame, EXPOSURE_STEP + s)
        base = apply_exposure(frame, s)
        pairs.append(TrainingPair(high, base, compute_residual(base, high), s))
    return pairs


# ---------------------------------------------------------------------------
# SDR synthesis from HDR ground truth
# ---------------------------------------------------------------------------

@dataclass
class AutoExposureState:
    """Exponential-smoothing state for the automatic exposure."""

    alpha: float = 0.9
    smoothed_f: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")


def luminance(pixels: np.ndarray) -> np.ndarray:
    return pixels @ LUMA_WEIGHTS


def auto_exposure_value(frame: HdrFrame, state: AutoExposureState) -> tuple[float, AutoExposureState]:
    """Exposure (f-stops) that maps the frame's mean luminance to display
    mid-grey, smoothed over time: f = alpha*prev + (1-alpha)*f_raw."""
    mean_lum = float(luminance(frame.pixels).mean())
    if mean_lum <= 0.0:
        raise ValueError("auto exposure undefined for an all-black frame")
    f_raw = float(np.log2(MID_GREY ** GAMMA / mean_lum))
    if state.smoothed_f is None:
        f = f_raw
    else:
        f = state.alpha * state.smoothed_f + (1.0 - state.alpha) * f_raw
    return f, replace(state, smoothed_f=f)


def simulate_sdr(frame: HdrFrame, f: float, base: float = 0.0) -> SdrFrame:
    """Expose linear radiance at f stops: ((E * 2^f) ** (1/GAMMA)) clipped to
    [0,1] and quantized. The recorded exposure_value is relative to ``base``."""
    if not np.isfinite(f):
        raise ValueError(f"exposure must be finite, got {f}")
    encoded = np.clip(np.power(frame.pixels * 2.0 ** f, 1.0 / GAMMA), 0.0, 1.0)
    return SdrFrame(quantize8(encoded), f - base)


def simulate_sdr_sequence(
    frames: list[HdrFrame], alpha: float = 0.9
) -> tuple[list[SdrFrame], list[float]]:
    """Auto-expose a temporally ordered HDR sequence to SDR.

    Returns the SDR frames (exposure_value stored relative to the first
    frame's exposure, the sequence base) and the absolute per-frame exposures.
    """
    if not frames:
        raise ValueError("empty video")
    state = AutoExposureState(alpha=alpha)
    fs: list[float] = []
    for frame in frames:
        f, state = auto_exposure_value(frame, state)
        fs.append(f)
    base = fs[0]
    sdr = [simulate_sdr(frame, f, base=base) for frame, f in zip(frames, fs)]
    return sdr, fs
