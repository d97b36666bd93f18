"""Exposure model: quantized re-exposure, residuals, dataset builder, auto-exposure."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zshdr.exposure import (
    AutoExposureState,
    HdrFrame,
    SdrFrame,
    apply_exposure,
    auto_exposure_value,
    build_training_set,
    compute_residual,
    quantize8,
    simulate_sdr,
    simulate_sdr_sequence,
    subsample_indices,
)

MID_GREY_LUM = 0.5 ** 2.2  # ~0.21764


def grey(value, hw=(2, 2)):
    return SdrFrame(np.full(hw + (3,), value))


def byte_frame(b, hw=(2, 2)):
    return grey(b / 255.0, hw)


class TestQuantize8:
    def test_half_rounds_away_from_zero(self):
        # 0.5 * 255 = 127.5 -> 128
        assert quantize8(np.array([0.5]))[0] == 128 / 255

    def test_idempotent_on_grid(self):
        grid = np.arange(256) / 255.0
        np.testing.assert_array_equal(quantize8(grid), grid)

    @given(st.floats(0.0, 1.0))
    @settings(max_examples=100, deadline=None)
    def test_idempotent_property(self, x):
        q = quantize8(np.array([x]))
        np.testing.assert_array_equal(quantize8(q), q)


class TestApplyExposure:
    def test_one_gamma_stop_doubles(self):
        # 0.25 * 2^(2.2/2.2) = 0.5, which quantizes upward to 128/255
        out = apply_exposure(grey(0.25), 2.2)
        assert np.all(out.pixels == 128 / 255)

    def test_zero_delta_is_identity_on_quantized(self):
        frame = byte_frame(137)
        out = apply_exposure(frame, 0.0)
        np.testing.assert_array_equal(out.pixels, frame.pixels)

    def test_over_range_clips(self):
        # 0.9 * 2^(2/2.2) ~ 1.69 clips to 1
        out = apply_exposure(grey(0.9), 2.0)
        assert np.all(out.pixels == 1.0)

    def test_exposure_value_bookkeeping(self):
        out = apply_exposure(SdrFrame(np.zeros((1, 1, 3)), exposure_value=1.0), 2.5)
        assert out.exposure_value == 3.5

    def test_roundtrip_identity_inside_safe_region(self):
        # all 256 byte values; the +2/-2 stop loop must restore every value in
        # the band that neither clips nor underflows to zero
        factor = 2.0 ** (-2.0 / 2.2)
        values = np.arange(256) / 255.0
        frame = SdrFrame(np.repeat(values, 3).reshape(1, 256, 3))
        back = apply_exposure(apply_exposure(frame, 2.0), -2.0)
        safe = (values > factor / 510.0) & (values < factor)
        np.testing.assert_array_equal(back.pixels[0, safe, 0], values[safe])
        assert safe.sum() > 100  # the band is wide, this is a real check

    @given(st.integers(0, 255), st.floats(-4.0, 4.0))
    @settings(max_examples=200, deadline=None)
    def test_output_is_quantized_and_in_range(self, b, dv):
        out = apply_exposure(byte_frame(b), dv).validate()
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0


class TestComputeResidual:
    def test_definition(self):
        assert compute_residual(grey(0.5), grey(1.0))[0, 0, 0] == 0.5

    def test_equal_frames_give_one(self):
        f = byte_frame(77)
        assert np.all(compute_residual(f, f) == 1.0)

    def test_zero_denominator_convention(self):
        assert np.all(compute_residual(grey(0.0), grey(0.0)) == 1.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            compute_residual(grey(0.5), grey(0.5, hw=(3, 3)))

    @given(st.integers(0, 255), st.floats(0.0, 4.0))
    @settings(max_examples=200, deadline=None)
    def test_residual_in_unit_interval(self, b, extra):
        base = byte_frame(b)
        high = apply_exposure(base, 2.0 + extra)
        delta = compute_residual(base, high)
        assert delta.min() >= 0.0 and delta.max() <= 1.0


class TestBuildTrainingSet:
    def test_subsampling_30fps(self):
        assert subsample_indices(30, 30.0) == [0, 5, 10, 15, 20, 25]

    def test_subsampling_24fps(self):
        assert subsample_indices(10, 24.0) == [0, 4, 8]

    def test_low_fps_keeps_every_frame(self):
        assert subsample_indices(4, 6.0) == [0, 1, 2, 3]

    def test_empty_video_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            build_training_set([], 30.0, seed=0)

    def test_pair_construction_consistent_with_shift(self):
        video = [byte_frame(102, hw=(4, 4))]
        (pair,) = build_training_set(video, 30.0, seed=5)
        assert 0.0 <= pair.shift < 0.25
        expected_high = apply_exposure(video[0], 2.0 + pair.shift)
        expected_base = apply_exposure(video[0], pair.shift)
        np.testing.assert_array_equal(pair.input.pixels, expected_high.pixels)
        np.testing.assert_array_equal(pair.target_base.pixels, expected_base.pixels)
        np.testing.assert_array_equal(
            pair.target_residual, compute_residual(expected_base, expected_high)
        )

    def test_zero_shift_base_is_quantized_original(self):
        frame = byte_frame(93)
        base = apply_exposure(frame, 0.0)
        np.testing.assert_array_equal(base.pixels, quantize8(frame.pixels))

    def test_constant_grey_residual_hand_value(self):
        # 0.4 -> base 102/255; high quantize8(0.4 * 2^(2/2.2)) = 192/255;
        # residual = 102/192 = 0.53125 with zero shift
        video = [grey(0.4)]
        high = apply_exposure(video[0], 2.0)
        base = apply_exposure(video[0], 0.0)
        assert base.pixels[0, 0, 0] == 102 / 255
        assert high.pixels[0, 0, 0] == 192 / 255
        assert compute_residual(base, high)[0, 0, 0] == pytest.approx(0.53125, abs=1e-12)

    def test_reproducible_with_seed(self):
        video = [byte_frame(40, hw=(4, 4)), byte_frame(200, hw=(4, 4))]
        a = build_training_set(video, 6.0, seed=9)
        b = build_training_set(video, 6.0, seed=9)
        assert len(a) == len(b) == 2
        for pa, pb in zip(a, b):
            assert pa.shift == pb.shift
            np.testing.assert_array_equal(pa.input.pixels, pb.input.pixels)

    def test_shifts_vary_between_frames(self):
        video = [byte_frame(40, hw=(4, 4)) for _ in range(8)]
        pairs = build_training_set(video, 6.0, seed=3)
        assert len({p.shift for p in pairs}) > 1


class TestAutoExposure:
    def test_mid_grey_anchor(self):
        f, _ = auto_exposure_value(HdrFrame(np.full((2, 2, 3), MID_GREY_LUM)), AutoExposureState())
        assert f == pytest.approx(0.0, abs=1e-12)

    def test_double_anchor_is_minus_one_stop(self):
        f, _ = auto_exposure_value(HdrFrame(np.full((2, 2, 3), 2 * MID_GREY_LUM)), AutoExposureState())
        assert f == pytest.approx(-1.0, abs=1e-12)

    def test_smoothing_recurrence(self):
        # raw exposures [0, 1, 1] with alpha 0.9 smooth to [0, 0.1, 0.19]
        state = AutoExposureState(alpha=0.9)
        lums = [MID_GREY_LUM, MID_GREY_LUM / 2.0, MID_GREY_LUM / 2.0]
        got = []
        for lum in lums:
            f, state = auto_exposure_value(HdrFrame(np.full((2, 2, 3), lum)), state)
            got.append(f)
        np.testing.assert_allclose(got, [0.0, 0.1, 0.19], atol=1e-12)

    def test_all_black_rejected(self):
        with pytest.raises(ValueError, match="all-black"):
            auto_exposure_value(HdrFrame(np.zeros((2, 2, 3))), AutoExposureState())


class TestSimulateSdr:
    def test_unit_radiance_at_zero_exposure(self):
        out = simulate_sdr(HdrFrame(np.ones((2, 2, 3))), 0.0)
        assert np.all(out.pixels == 1.0)

    def test_mid_grey_anchor_maps_to_128(self):
        out = simulate_sdr(HdrFrame(np.full((2, 2, 3), MID_GREY_LUM)), 0.0)
        assert np.all(out.pixels == 128 / 255)

    def test_over_range_clips(self):
        out = simulate_sdr(HdrFrame(np.full((2, 2, 3), 4.0)), 0.0)
        assert np.all(out.pixels == 1.0)

    def test_monotone_in_radiance(self):
        e = np.linspace(0.0, 2.0, 64)
        frame = HdrFrame(np.repeat(e, 3).reshape(1, 64, 3))
        out = simulate_sdr(frame, 0.0).pixels[0, :, 0]
        assert np.all(np.diff(out) >= 0.0)

    def test_sequence_exposures_relative_to_first(self):
        frames = [HdrFrame(np.full((2, 2, 3), MID_GREY_LUM * s)) for s in (1.0, 2.0, 4.0)]
        sdr, fs = simulate_sdr_sequence(frames, alpha=0.0)  # no smoothing
        assert fs == pytest.approx([0.0, -1.0, -2.0])
        assert [s.exposure_value for s in sdr] == pytest.approx([0.0, -1.0, -2.0])

    def test_brightening_sequence_has_non_increasing_exposure(self):
        frames = [HdrFrame(np.full((2, 2, 3), MID_GREY_LUM * (1 + i))) for i in range(5)]
        _, fs = simulate_sdr_sequence(frames, alpha=0.9)
        assert all(b <= a for a, b in zip(fs, fs[1:]))
