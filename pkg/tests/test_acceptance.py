"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with -s or -v to see them).

Criteria:
  1 gradient correctness (layer ops and full network vs finite differences)
  2 exposure-model exactness (exhaustive 8-bit scan)
  3 fusion oracle (analytic stacks fuse back to the source radiance)
  4 overfit sanity (single-frame MAE and fixture loss decay)
  5 end-to-end dynamic-range recovery vs the naive baseline
  6 pipeline determinism (byte-identical artifacts across runs)
  7 metric self-consistency (independent reimplementation agreement)
  8 format conformance (PFM / RGBE round-trips and header bytes)
"""

import time

import numpy as np
import pytest

from zshdr import nn
from zshdr.cli import main as cli_main
from zshdr.exposure import (
    GAMMA,
    HdrFrame,
    SdrFrame,
    apply_exposure,
    build_training_set,
    compute_residual,
    quantize8,
    simulate_sdr,
    simulate_sdr_sequence,
)
from zshdr.fixture import FixtureConfig, generate_fixture
from zshdr.fusion import ExposureStack, expand_video, fuse_stack
from zshdr.media_io import read_pfm, read_rgbe, write_hdr_frame, write_pfm
from zshdr.metrics import (
    DisplayModel,
    PuCurve,
    pu_encode,
    pu_psnr,
    pu_psnr_sequence,
    pu_ssim,
)
from zshdr.model import ModelConfig, ResidualUNet
from zshdr.training import TrainConfig, total_loss, train_video
from conftest import assert_grad_close, central_difference


def report(criterion: int, name: str, passed: bool, detail: str = ""):
    status = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {criterion} [{name}]: {status} {detail}".rstrip())
    assert passed, f"criterion {criterion} ({name}) failed: {detail}"


# -- 1: gradient correctness --------------------------------------------------

def test_c1_gradient_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)

    # layer-level checks at 64-bit, h = 1e-4, rel err < 1e-5
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    up = rng.standard_normal((1, 3, 5, 5))
    loss = lambda: float(np.sum(nn.conv2d(x, w, b, 1) * up))
    gx, gw, gb = nn.conv2d_backward(x, w, up, 1)
    assert_grad_close(gx, central_difference(loss, x), rtol=1e-5)
    assert_grad_close(gw, central_difference(loss, w), rtol=1e-5)
    assert_grad_close(gb, central_difference(loss, b), rtol=1e-5)

    xr = rng.standard_normal((1, 2, 4, 4))
    xr[np.abs(xr) < 1e-3] = 0.5
    upr = rng.standard_normal(xr.shape)
    loss = lambda: float(np.sum(nn.relu(xr) * upr))
    assert_grad_close(nn.relu_backward(xr, upr), central_difference(loss, xr), rtol=1e-5)

    xs = rng.standard_normal((1, 2, 4, 4))
    loss = lambda: float(np.sum(nn.sigmoid(xs) * upr))
    assert_grad_close(nn.sigmoid_backward(nn.sigmoid(xs), upr), central_difference(loss, xs), rtol=1e-5)

    xp = rng.standard_normal((1, 1, 6, 6))
    upp = rng.standard_normal((1, 1, 3, 3))
    for mode in ("max", "avg"):
        loss = lambda: float(np.sum(nn.pool2x2(xp, mode) * upp))
        assert_grad_close(nn.pool2x2_backward(xp, mode, upp), central_difference(loss, xp), rtol=1e-5)

    xu = rng.standard_normal((1, 1, 3, 3))
    upu = rng.standard_normal((1, 1, 6, 6))
    loss = lambda: float(np.sum(nn.bilinear_upsample2x(xu) * upu))
    assert_grad_close(nn.bilinear_upsample2x_backward(upu, 3, 3), central_difference(loss, xu), rtol=1e-5)

    # end-to-end: total training loss on an 8x8 pair, 20 sampled weights
    model = ResidualUNet.init(ModelConfig(), seed=42)
    frame = SdrFrame(quantize8(np.random.default_rng(1).random((8, 8, 3)) * 0.7))
    (pair,) = build_training_set([frame], 6.0, seed=4)
    model.zero_grads()
    total_loss(model, pair, 5.0)
    params = model.parameters()
    picker = np.random.default_rng(7)
    h = 1e-4
    analytic, numeric = [], []
    for _ in range(20):
        p = params[picker.integers(len(params))]
        flat = p.value.reshape(-1)
        i = picker.integers(flat.size)
        orig = flat[i]
        flat[i] = orig + h
        fp = total_loss(model, pair, 5.0, accumulate=False).total
        flat[i] = orig - h
        fm = total_loss(model, pair, 5.0, accumulate=False).total
        flat[i] = orig
        numeric.append((fp - fm) / (2 * h))
        analytic.append(p.grad.reshape(-1)[i])
    assert_grad_close(np.array(analytic), np.array(numeric), rtol=1e-4)

    elapsed = time.perf_counter() - start
    report(1, "gradient-correctness", elapsed < 60.0, f"({elapsed:.1f}s < 60s)")


# -- 2: exposure-model exactness ----------------------------------------------

def test_c2_exposure_exactness():
    start = time.perf_counter()
    values = np.arange(256) / 255.0
    frame = SdrFrame(np.repeat(values, 3).reshape(1, 256, 3))

    # round-trip identity on the non-clipped, non-underflow band at v = 2
    factor = 2.0 ** (-2.0 / GAMMA)
    back = apply_exposure(apply_exposure(frame, 2.0), -2.0)
    safe = (values > factor / 510.0) & (values < factor)
    roundtrip_ok = bool(np.all(back.pixels[0, safe, 0] == values[safe]))

    # residual in [0, 1] for every byte value across a spread of exposures
    residual_ok = True
    for dv in (2.0, 2.125, 2.25):
        high = apply_exposure(frame, dv)
        base = apply_exposure(frame, dv - 2.0)
        delta = compute_residual(base, high)
        residual_ok &= bool(delta.min() >= 0.0 and delta.max() <= 1.0)

    elapsed = time.perf_counter() - start
    report(2, "exposure-exactness", roundtrip_ok and residual_ok and elapsed < 1.0,
           f"(band of {int(safe.sum())} byte values, {elapsed:.3f}s < 1s)")


# -- 3: fusion oracle ----------------------------------------------------------

def test_c3_fusion_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(77)
    radiances = np.exp(rng.uniform(np.log(0.02), np.log(5.0), size=50))
    offsets = [-4.0, -2.0, 0.0, 2.0, 4.0]

    rel_errors = []
    for lum in radiances:
        source = HdrFrame(np.full((1, 1, 3), lum))
        frames = [simulate_sdr(source, v).pixels for v in offsets]
        unclipped = sum(1 for v in offsets if (lum * 2.0 ** v) ** (1.0 / GAMMA) < 1.0)
        if unclipped < 2:
            continue
        fused = fuse_stack(ExposureStack(frames, offsets))
        rel_errors.append(abs(fused.pixels[0, 0, 0] - lum) / lum)
    mean_err = float(np.mean(rel_errors))
    elapsed = time.perf_counter() - start
    report(3, "fusion-oracle", mean_err < 0.02 and elapsed < 5.0,
           f"(mean rel err {mean_err:.4f} over {len(rel_errors)} values, {elapsed:.2f}s < 5s)")


# -- 4 & 5 share a trained model on the bundled fixture ------------------------

@pytest.fixture(scope="module")
def fixture_scene():
    config = FixtureConfig()
    truth = generate_fixture(config)
    sdr, exposures = simulate_sdr_sequence(truth)
    return config, truth, sdr, exposures


def test_c4_overfit_sanity(fixture_scene):
    start = time.perf_counter()

    # (a) single repeated frame: base reconstruction reaches MAE < 2/255
    frame = SdrFrame(quantize8(np.random.default_rng(5).random((64, 64, 3)) * 0.8))
    video = [frame] * 8
    best_mae, reached_at = np.inf, None
    model = None
    config = TrainConfig(max_epochs=16, seed=11)
    # train in 16-epoch slices so the check can stop as soon as it passes
    from zshdr.nn import adam_step
    from zshdr.training import _epoch_seed

    model = ResidualUNet.init(config.model, config.seed)
    epochs_run = 0
    while epochs_run < 128 and reached_at is None:
        for epoch in range(epochs_run + 1, epochs_run + 17):
            pairs = build_training_set(video, 48.0, seed=_epoch_seed(config.seed, epoch, 0))
            for pair in pairs:
                model.zero_grads()
                total_loss(model, pair, 5.0)
                for p in model.parameters():
                    adam_step(p, config.adam)
        epochs_run += 16
        (probe,) = build_training_set(video, 48.0, seed=_epoch_seed(config.seed, 1, 0))
        x = probe.input.pixels.transpose(2, 0, 1)[None]
        recon = (model.forward(x) * x)[0].transpose(1, 2, 0)
        mae = float(np.mean(np.abs(recon - probe.target_base.pixels)))
        best_mae = min(best_mae, mae)
        if mae < 2.0 / 255.0:
            reached_at = epochs_run
    overfit_ok = reached_at is not None

    # (b) loss decay on a reduced cut of the bundled fixture over 128 epochs
    truth = generate_fixture(FixtureConfig(n_frames=16))
    sdr, _ = simulate_sdr_sequence(truth)
    _, decay_report = train_video(sdr, 24.0, TrainConfig(max_epochs=128, seed=3))
    first = decay_report.epochs[0].total_loss
    last = decay_report.epochs[-1].total_loss
    best = min(e.total_loss for e in decay_report.epochs)
    decay_ok = last < 0.25 * first and best < first

    elapsed = time.perf_counter() - start
    report(4, "overfit-sanity", overfit_ok and decay_ok and elapsed < 600.0,
           f"(MAE {best_mae:.5f} < {2/255:.5f} at epoch {reached_at}; "
           f"loss {first:.4f} -> {last:.4f}; {elapsed:.0f}s < 600s)")


def test_c5_dynamic_range_recovery(fixture_scene):
    """Sequence-level PU-PSNR (squared PU error pooled over all frames, the
    one-number-per-video aggregation) of the trained pipeline vs the naive
    0-stop linearization, both exposure-compensated to absolute radiance."""
    start = time.perf_counter()
    config, truth, sdr, exposures = fixture_scene

    model, _ = train_video(sdr, config.fps, TrainConfig(max_epochs=32, seed=0))
    fused = expand_video(model, sdr)

    display, curve = DisplayModel(), PuCurve()
    ours_abs = [HdrFrame(fr.pixels * 2.0 ** (-f)) for fr, f in zip(fused, exposures)]
    naive_abs = [HdrFrame(np.power(s.pixels, GAMMA) * 2.0 ** (-f)) for s, f in zip(sdr, exposures)]
    ours = pu_psnr_sequence(ours_abs, truth, display, curve)
    naive = pu_psnr_sequence(naive_abs, truth, display, curve)
    gain = ours - naive
    elapsed = time.perf_counter() - start
    report(5, "dynamic-range-recovery", gain >= 1.5 and elapsed < 1200.0,
           f"(ours {ours:.2f} dB vs naive {naive:.2f} dB, "
           f"gain {gain:+.2f} >= 1.5 dB; {elapsed:.0f}s < 1200s)")


# -- 6: determinism -------------------------------------------------------------

def test_c6_pipeline_determinism(tmp_path):
    """Two full CLI runs with one seed must produce byte-identical artifacts.

    The training log is excluded: its records include wall-clock seconds by
    design. Everything else (PNG frames, exposure sidecar, weights file, HDR
    frames, metrics CSV) must match exactly.
    """
    start = time.perf_counter()
    gt = tmp_path / "gt"
    assert cli_main(["fixture-gen", "--output", str(gt), "--frames", "8", "--size", "32"]) == 0

    def run(tag):
        base = tmp_path / tag
        sdr, out = base / "sdr", base / "hdr"
        weights = base / "weights.zw"
        csv = base / "scores.csv"
        assert cli_main(["simulate-sdr", "--input", str(gt), "--output", str(sdr), "--fps", "24"]) == 0
        assert cli_main(["train", "--input", str(sdr), "--weights-out", str(weights),
                         "--max-epochs", "4", "--fps", "24", "--seed", "9",
                         "--base-channels", "8", "--log", str(base / "train.log")]) == 0
        assert cli_main(["expand", "--input", str(sdr), "--weights", str(weights),
                         "--output", str(out),
                         "--exposure-sidecar", str(sdr / "exposures.txt")]) == 0
        assert cli_main(["evaluate", "--pred", str(out), "--ref", str(gt),
                         "--out", str(csv)]) == 0
        artifacts = sorted(
            p for p in base.rglob("*") if p.is_file() and p.name != "train.log"
        )
        return {str(p.relative_to(base)): p.read_bytes() for p in artifacts}

    first = run("run1")
    second = run("run2")
    identical = first.keys() == second.keys() and all(first[k] == second[k] for k in first)
    elapsed = time.perf_counter() - start
    report(6, "determinism", identical, f"({len(first)} artifacts byte-identical, {elapsed:.0f}s)")


# -- 7: metric self-consistency --------------------------------------------------

def test_c7_metric_self_consistency():
    from test_metrics import psnr_reference, pu_reference, ssim_reference

    start = time.perf_counter()
    rng = np.random.default_rng(123)
    display, curve = DisplayModel(), PuCurve()
    lum = np.array([0.2126, 0.7152, 0.0722])

    psnr_ok, ssim_ok = True, True
    for _ in range(10):
        ref = HdrFrame(rng.random((16, 16, 3)) * 3.0 + 1e-3)
        pred = HdrFrame(np.clip(ref.pixels * (1.0 + 0.08 * rng.standard_normal(ref.pixels.shape)), 1e-5, None))
        got_psnr = pu_psnr(pred, ref, display, curve)
        got_ssim = pu_ssim(pred, ref, display, curve)

        anchor = np.percentile(ref.pixels @ lum, 99.9)
        scale = 1400.0 / anchor
        to_pu = np.vectorize(pu_reference)
        a = to_pu(np.clip(scale * (pred.pixels @ lum), 0.02, 1400.0))
        b = to_pu(np.clip(scale * (ref.pixels @ lum), 0.02, 1400.0))
        peak = pu_reference(1400.0) - pu_reference(0.02)
        psnr_ok &= abs(got_psnr - psnr_reference(a, b, peak)) < 1e-6
        ssim_ok &= abs(got_ssim - ssim_reference(a, b, peak)) < 1e-9

    grid = np.logspace(np.log10(0.02), np.log10(1400.0), 1000)
    monotone = bool(np.all(np.diff(pu_encode(grid, PuCurve())) > 0.0))

    elapsed = time.perf_counter() - start
    report(7, "metric-self-consistency", psnr_ok and ssim_ok and monotone,
           f"(10 pairs, 1e-6 dB / 1e-9; monotone grid; {elapsed:.1f}s)")


# -- 8: format conformance --------------------------------------------------------

def test_c8_format_conformance(tmp_path):
    start = time.perf_counter()
    rng = np.random.default_rng(31)
    frame = HdrFrame(rng.random((5, 7, 3)) * 8.0)

    pfm_path = tmp_path / "f.pfm"
    write_pfm(frame, pfm_path)
    pfm_ok = pfm_path.read_bytes().startswith(b"PF\n7 5\n-1.0\n")
    pfm_ok &= bool(np.allclose(read_pfm(pfm_path).pixels, frame.pixels, rtol=1e-7))

    hdr_path = tmp_path / "f.hdr"
    write_hdr_frame(frame, hdr_path, "hdr")
    raw = hdr_path.read_bytes()
    # header bytes a third-party Radiance viewer requires: magic, FORMAT
    # declaration, blank separator, then the resolution line
    hdr_ok = raw.startswith(b"#?RADIANCE\n")
    hdr_ok &= b"\nFORMAT=32-bit_rle_rgbe\n\n-Y 5 +X 7\n" in raw
    back = read_rgbe(hdr_path)
    # shared-exponent encoding: per-channel error is bounded by the pixel's
    # dominant channel over 128
    bound = frame.pixels.max(axis=2, keepdims=True) / 128.0
    hdr_ok &= bool(np.all(np.abs(back.pixels - frame.pixels) <= bound))

    # monochrome log sweep keeps plain relative error under 1%
    sweep = HdrFrame(np.repeat(np.logspace(-3, 3, 64), 3).reshape(1, 64, 3))
    write_hdr_frame(sweep, tmp_path / "sweep.hdr", "hdr")
    sweep_back = read_rgbe(tmp_path / "sweep.hdr")
    hdr_ok &= bool(np.max(np.abs(sweep_back.pixels - sweep.pixels) / sweep.pixels) < 0.01)

    ones = HdrFrame(np.ones((2, 2, 3)))
    write_hdr_frame(ones, tmp_path / "one.hdr", "hdr")
    hdr_ok &= bool(np.array_equal(read_rgbe(tmp_path / "one.hdr").pixels, np.ones((2, 2, 3))))

    elapsed = time.perf_counter() - start
    report(8, "format-conformance", pfm_ok and hdr_ok, f"({elapsed:.2f}s)")
