"""Perceptually uniform HDR quality metrics.

Relative radiance is calibrated to absolute display luminance through a
reference-derived percentile scale (a 1400 cd/m^2 peak, 0.02 cd/m^2 black
display), encoded with a perceptually uniform luminance transform, and scored
with PSNR/SSIM using the encoded peak-to-black span as the dynamic range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exposure import HdrFrame, luminance


@dataclass
class DisplayModel:
    peak_luminance: float = 1400.0
    black_level: float = 0.02
    scale_percentile: float = 99.9

    def __post_init__(self):
        if self.black_level <= 0.0 or self.peak_luminance <= self.black_level:
            raise ValueError("need 0 < black_level < peak_luminance")
        if not (0.0 < self.scale_percentile <= 100.0):
            raise ValueError("scale_percentile must lie in (0, 100]")


# Rational-power fit from luminance in cd/m^2 to perceptually uniform units,
# scaled so ~100 cd/m^2 encodes near 256. Valid over [0.005, 10000] cd/m^2.
_PU_COEFFS = (
    0.353487901,
    0.3734658629,
    8.277049286e-05,
    0.9062562627,
    0.09150303166,
    0.9099130146,
    596.3148142,
)
_PU_DOMAIN = (0.005, 10000.0)


@dataclass
class PuCurve:
    """Perceptually uniform luminance encoding with an out-of-domain counter."""

    coeffs: tuple = _PU_COEFFS
    domain: tuple = _PU_DOMAIN
    clamp_count: int = field(default=0, compare=False)


def pu_encode(y: np.ndarray, curve: PuCurve) -> np.ndarray:
    """Map luminance (cd/m^2) to PU units; out-of-domain inputs are clamped
    to the fit's valid range and counted on the curve."""
    y = np.asarray(y, dtype=np.float64)
    lo, hi = curve.domain
    out_of_domain = int(np.count_nonzero((y < lo) | (y > hi)))
    if out_of_domain:
        curve.clamp_count += out_of_domain
        y = np.clip(y, lo, hi)
    p1, p2, p3, p4, p5, p6, p7 = curve.coeffs
    yp = np.power(y, p4)
    return p7 * (np.power((p1 + p2 * yp) / (1.0 + p3 * yp), p5) - p6)


def display_map(frame, reference, model: DisplayModel) -> np.ndarray:
    """Map relative radiance to display luminance in cd/m^2.

    The scale anchors the reference's scale_percentile luminance at the
    display peak; the same scale must be used for prediction and reference,
    so pass the reference for both arguments when mapping the reference.
    """
    ref_pixels = reference.pixels if isinstance(reference, HdrFrame) else reference
    pixels = frame.pixels if isinstance(frame, HdrFrame) else frame
    if pixels.shape != ref_pixels.shape:
        raise ValueError(f"frame/reference shape mismatch: {pixels.shape} vs {ref_pixels.shape}")
    ref_lum = luminance(ref_pixels)
    anchor = float(np.percentile(ref_lum, model.scale_percentile))
    if anchor <= 0.0:
        raise ValueError("reference luminance percentile is zero; cannot derive display scale")
    scale = model.peak_luminance / anchor
    return np.clip(scale * luminance(pixels), model.black_level, model.peak_luminance)


def pu_dynamic_range(model: DisplayModel, curve: PuCurve) -> float:
    span = pu_encode(np.array([model.peak_luminance, model.black_level]), curve)
    return float(span[0] - span[1])


def _pu_mse(pred, ref, model: DisplayModel, curve: PuCurve) -> float:
    p = pu_encode(display_map(pred, ref, model), curve)
    r = pu_encode(display_map(ref, ref, model), curve)
    return float(np.mean((p - r) ** 2))


def pu_psnr(pred, ref, model: DisplayModel | None = None, curve: PuCurve | None = None) -> float:
    """PSNR of PU-encoded display luminance, in dB; +inf for identical inputs."""
    model = model or DisplayModel()
    curve = curve or PuCurve()
    mse = _pu_mse(pred, ref, model, curve)
    if mse == 0.0:
        return math.inf
    peak = pu_dynamic_range(model, curve)
    return 10.0 * math.log10(peak * peak / mse)


def pu_psnr_sequence(preds: list, refs: list,
                     model: DisplayModel | None = None,
                     curve: PuCurve | None = None) -> float:
    """Sequence-level PU-PSNR: one number for a whole video, pooling the
    squared PU error over every pixel of every frame (per-frame display
    scales still come from each reference frame)."""
    if len(preds) != len(refs) or not preds:
        raise ValueError("need equal, non-empty prediction/reference sequences")
    model = model or DisplayModel()
    curve = curve or PuCurve()
    mse = float(np.mean([_pu_mse(p, r, model, curve) for p, r in zip(preds, refs)]))
    if mse == 0.0:
        return math.inf
    peak = pu_dynamic_range(model, curve)
    return 10.0 * math.log10(peak * peak / mse)


# -- SSIM --------------------------------------------------------------------

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _gaussian_taps(n: int = _SSIM_WINDOW, sigma: float = _SSIM_SIGMA) -> np.ndarray:
    x = np.arange(n, dtype=np.float64) - (n - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _windowed_mean(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable Gaussian-weighted mean over valid (fully interior) windows."""
    tmp = sliding_window_view(img, len(taps), axis=0) @ taps
    return sliding_window_view(tmp, len(taps), axis=1) @ taps


def pu_ssim(pred, ref, model: DisplayModel | None = None, curve: PuCurve | None = None) -> float:
    """Mean SSIM over valid 11x11 Gaussian windows of PU-encoded luminance."""
    model = model or DisplayModel()
    curve = curve or PuCurve()
    p = pu_encode(display_map(pred, ref, model), curve)
    r = pu_encode(display_map(ref, ref, model), curve)
    if p.shape[0] < _SSIM_WINDOW or p.shape[1] < _SSIM_WINDOW:
        raise ValueError(f"images must be at least {_SSIM_WINDOW}x{_SSIM_WINDOW}, got {p.shape}")

    peak = pu_dynamic_range(model, curve)
    c1 = (_SSIM_K1 * peak) ** 2
    c2 = (_SSIM_K2 * peak) ** 2
    taps = _gaussian_taps()

    mu_p = _windowed_mean(p, taps)
    mu_r = _windowed_mean(r, taps)
    var_p = _windowed_mean(p * p, taps) - mu_p * mu_p
    var_r = _windowed_mean(r * r, taps) - mu_r * mu_r
    cov = _windowed_mean(p * r, taps) - mu_p * mu_r

    ssim_map = ((2.0 * mu_p * mu_r + c1) * (2.0 * cov + c2)) / (
        (mu_p * mu_p + mu_r * mu_r + c1) * (var_p + var_r + c2)
    )
    return float(np.mean(ssim_map))


# -- Sequence evaluation ------------------------------------------------------

def _format_metric(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.6f}"


def evaluate_sequence(preds: list[HdrFrame], refs: list[HdrFrame],
                      model: DisplayModel | None = None,
                      curve: PuCurve | None = None) -> tuple[list[tuple], str]:
    """Per-frame PU-PSNR / PU-SSIM plus a mean summary row.

    Returns (rows, csv_text); rows hold (index, psnr, ssim) tuples and the
    CSV finishes with a ``mean`` row, no header line.
    """
    if len(preds) != len(refs):
        raise ValueError(f"frame count mismatch: {len(preds)} predictions vs {len(refs)} references")
    if not preds:
        raise ValueError("nothing to evaluate")
    model = model or DisplayModel()
    curve = curve or PuCurve()
    rows = []
    for i, (p, r) in enumerate(zip(preds, refs)):
        rows.append((i, pu_psnr(p, r, model, curve), pu_ssim(p, r, model, curve)))
    mean_psnr = float(np.mean([row[1] for row in rows]))
    mean_ssim = float(np.mean([row[2] for row in rows]))
    lines = [f"{i},{_format_metric(a)},{_format_metric(b)}" for i, a, b in rows]
    lines.append(f"mean,{_format_metric(mean_psnr)},{_format_metric(mean_ssim)}")
    return rows + [("mean", mean_psnr, mean_ssim)], "\n".join(lines) + "\n"
