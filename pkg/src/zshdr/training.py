"""Per-video self-supervised optimization.

The loss couples a mean-squared residual term with an image term on the
reconstructed base exposure (L1 plus a cosine color-consistency penalty).
Training rebuilds the augmented pair set every epoch, shuffles it, and runs
Adam with batch size 1; everything is deterministic given the seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .exposure import SdrFrame, TrainingPair, build_training_set
from .model import ModelConfig, ResidualUNet, save_weights
from .nn import AdamConfig, adam_step


@dataclass
class TrainConfig:
    max_epochs: int = 128
    adam: AdamConfig = field(default_factory=AdamConfig)
    lambda_cos: float = 5.0
    batch_size: int = 1
    seed: int = 0
    early_stop_patience: int = 0  # 0 disables early stopping
    checkpoint_every: int = 0     # 0 disables checkpoints
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.lambda_cos < 0.0:
            raise ValueError("lambda_cos must be >= 0")
        if self.batch_size != 1:
            raise ValueError("batch size is fixed at 1")


@dataclass
class EpochStats:
    epoch: int
    total_loss: float
    residual_loss: float
    image_loss: float
    seconds: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)

    @property
    def final_epoch(self) -> int:
        return self.epochs[-1].epoch if self.epochs else 0

    def log_lines(self) -> list[str]:
        return [
            f"epoch={e.epoch} total={e.total_loss:.10g} residual={e.residual_loss:.10g} "
            f"image={e.image_loss:.10g} seconds={e.seconds:.3f}"
            for e in self.epochs
        ]


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def residual_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error over all elements."""
    if pred.shape != target.shape:
        raise ValueError(f"residual loss shape mismatch: {pred.shape} vs {target.shape}")
    d = pred - target
    return float(np.mean(d * d))


def residual_loss_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    return 2.0 * (pred - target) / pred.size


def _pixel_cosine(pred: np.ndarray, target: np.ndarray):
    """Per-pixel RGB cosine over channel axis 1 of an NCHW tensor.

    Returns (cos, dot, norm_p, norm_t, valid); pixels where either vector has
    zero norm get cos = 1 and are masked out of the gradient.
    """
    dot = np.sum(pred * target, axis=1, keepdims=True)
    norm_p = np.sqrt(np.sum(pred * pred, axis=1, keepdims=True))
    norm_t = np.sqrt(np.sum(target * target, axis=1, keepdims=True))
    valid = (norm_p > 0.0) & (norm_t > 0.0)
    denom = np.where(valid, norm_p * norm_t, 1.0)
    cos = np.where(valid, dot / denom, 1.0)
    return cos, dot, norm_p, norm_t, valid


def image_loss(pred: np.ndarray, target: np.ndarray, lambda_cos: float) -> float:
    """Mean absolute error plus lambda_cos * (1 - mean per-pixel RGB cosine)."""
    if pred.shape != target.shape:
        raise ValueError(f"image loss shape mismatch: {pred.shape} vs {target.shape}")
    if pred.shape[1] != 3:
        raise ValueError(f"image loss expects 3 channels, got {pred.shape[1]}")
    l1 = float(np.mean(np.abs(pred - target)))
    cos, *_ = _pixel_cosine(pred, target)
    return l1 + lambda_cos * (1.0 - float(np.mean(cos)))


def image_loss_grad(pred: np.ndarray, target: np.ndarray, lambda_cos: float) -> np.ndarray:
    """Gradient of image_loss w.r.t. pred; L1 subgradient at 0 is 0."""
    g = np.sign(pred - target) / pred.size
    if lambda_cos != 0.0:
        cos, dot, norm_p, norm_t, valid = _pixel_cosine(pred, target)
        n_pixels = pred.shape[0] * pred.shape[2] * pred.shape[3]
        safe_p = np.where(valid, norm_p, 1.0)
        safe_t = np.where(valid, norm_t, 1.0)
        d_cos = target / (safe_p * safe_t) - dot * pred / (safe_p ** 3 * safe_t)
        g += np.where(valid, -lambda_cos / n_pixels * d_cos, 0.0)
    return g


@dataclass
class LossParts:
    total: float
    residual: float
    image: float


def _to_tensor(pixels: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(pixels.transpose(2, 0, 1))[None]


def total_loss(model: ResidualUNet, pair: TrainingPair, lambda_cos: float,
               accumulate: bool = True) -> LossParts:
    """Forward the pair's input, score residual and reconstruction terms, and
    (by default) backpropagate, accumulating into the model's gradients.

    The base reconstruction multiplies the predicted residual onto the
    network's own over-exposed input frame.
    """
    x = _to_tensor(pair.input.pixels)
    target_res = _to_tensor(pair.target_residual)
    target_base = _to_tensor(pair.target_base.pixels)

    tape: dict | None = {} if accumulate else None
    delta = model.forward(x, tape)
    recon = delta * x

    res_l = residual_loss(delta, target_res)
    img_l = image_loss(recon, target_base, lambda_cos)
    if accumulate:
        g_delta = residual_loss_grad(delta, target_res)
        g_delta += image_loss_grad(recon, target_base, lambda_cos) * x
        model.backward(tape, g_delta)
    return LossParts(res_l + img_l, res_l, img_l)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def _epoch_seed(seed: int, epoch: int, stream: int) -> int:
    mixed = (seed * 0x9E3779B97F4A7C15 + epoch * 0xBF58476D1CE4E5B9 + stream) & 0x7FFFFFFFFFFFFFFF
    return int(mixed)


def train_video(
    video: list[SdrFrame],
    fps: float,
    config: TrainConfig,
    log_path=None,
    checkpoint_dir=None,
) -> tuple[ResidualUNet, TrainReport]:
    """Train a fresh network on one video.

    Pairs are rebuilt with fresh augmentation shifts and reshuffled every
    epoch (both seeded). Optionally appends one log line per epoch to
    ``log_path`` and writes weight checkpoints every ``checkpoint_every``
    epochs into ``checkpoint_dir``.
    """
    if not video:
        raise ValueError("empty video")
    model = ResidualUNet.init(config.model, config.seed)
    report = TrainReport()
    log_fh = open(log_path, "w") if log_path is not None else None
    best = np.inf
    stale = 0
    try:
        for epoch in range(1, config.max_epochs + 1):
            t0 = time.perf_counter()
            pairs = build_training_set(video, fps, seed=_epoch_seed(config.seed, epoch, 0))
            order = np.random.default_rng(_epoch_seed(config.seed, epoch, 1)).permutation(len(pairs))
            sums = np.zeros(3)
            for idx in order:
                parts = total_loss(model, pairs[idx], config.lambda_cos)
                if not np.isfinite(parts.total):
                    raise FloatingPointError(f"non-finite loss at epoch {epoch}: {parts}")
                for p in model.parameters():
                    adam_step(p, config.adam)
                sums += (parts.total, parts.residual, parts.image)
            means = sums / len(pairs)
            stats = EpochStats(epoch, means[0], means[1], means[2], time.perf_counter() - t0)
            report.epochs.append(stats)
            if log_fh is not None:
                log_fh.write(report.log_lines()[-1] + "\n")
                log_fh.flush()
            if checkpoint_dir is not None and config.checkpoint_every > 0 \
                    and epoch % config.checkpoint_every == 0:
                save_weights(model, f"{checkpoint_dir}/checkpoint_{epoch:04d}.zw", include_moments=True)
            if config.early_stop_patience > 0:
                if stats.total_loss < best * 0.99:
                    best = stats.total_loss
                    stale = 0
                else:
                    stale += 1
                    if stale >= config.early_stop_patience:
                        break
    finally:
        if log_fh is not None:
            log_fh.close()
    return model, report
