import numpy as np
import pytest

from asefd.ingest import SynthKind, synth_trial
from asefd.preprocess import (
    Frame,
    WindowSpec,
    denormalize,
    downsample,
    downsample_values,
    frame_from_bytes,
    frame_to_bytes,
    impact_window,
    load_frame,
    minmax_normalize,
    resample_frame,
    save_frame,
    to_frame,
)


def _trial_from_samples(samples, rate=200.0):
    from asefd.ingest import Label, Trial

    return Trial(subject_id="S01", activity_code="F01", label=Label.FALL,
                 rate_hz=rate, samples=np.asarray(samples, dtype=float))


def oracle_downsample_indices(n: int, alpha: int) -> list[int]:
    """Independent enumeration of the kept 1-based indices k = 1 + 2**alpha * m."""
    step = 2**alpha
    ks = []
    k = 1
    while k <= n:
        ks.append(k - 1)  # back to 0-based
        k += step
    return ks


class TestDownsample:
    def test_enumerated_example(self):
        values = np.arange(5, dtype=float).reshape(5, 1).repeat(3, axis=1)
        out = downsample_values(values, 1)
        np.testing.assert_array_equal(out[:, 0], [0, 2, 4])

    def test_identity_factor(self):
        trial = _trial_from_samples(np.random.default_rng(0).normal(size=(100, 3)))
        assert downsample(trial, 0) is trial

    def test_768_to_6(self):
        values = np.zeros((768, 3))
        assert downsample_values(values, 7).shape[0] == 6

    def test_matches_index_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            n = int(rng.integers(1, 2000))
            alpha = int(rng.integers(0, 8))
            values = rng.normal(size=(n, 3))
            out = downsample_values(values, alpha)
            idx = oracle_downsample_indices(n, alpha)
            assert out.shape[0] == len(idx)
            np.testing.assert_array_equal(out, values[idx])

    def test_composition_law(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = int(rng.integers(1, 1500))
            a1 = int(rng.integers(0, 8))
            a2 = int(rng.integers(0, 8 - a1))
            values = rng.normal(size=(n, 3))
            lhs = downsample_values(downsample_values(values, a2), a1)
            rhs = downsample_values(values, a1 + a2)
            np.testing.assert_array_equal(lhs, rhs)

    def test_rate_halves(self):
        trial = _trial_from_samples(np.zeros((100, 3)) + [0, 0, 1], rate=200)
        assert downsample(trial, 3).rate_hz == pytest.approx(25.0)

    def test_alpha_out_of_range(self):
        trial = _trial_from_samples(np.zeros((10, 3)) + [0, 0, 1])
        with pytest.raises(ValueError):
            downsample(trial, 8)
        with pytest.raises(ValueError):
            downsample(trial, -1)


class TestImpactWindow:
    def test_known_spike_geometry(self):
        samples = np.zeros((1000, 3))
        samples[:, 2] = 1.0
        samples[400] = [0, 0, 5.0]
        trial = _trial_from_samples(samples, rate=200)
        spec = WindowSpec(ws_backward_s=1.44, ws_forward_s=2.0)
        window = impact_window(trial, spec)
        assert window.shape == (689, 3)  # 288 + 1 + 400
        np.testing.assert_array_equal(window[288], samples[400])
        np.testing.assert_array_equal(window[0], samples[112])
        np.testing.assert_array_equal(window[-1], samples[800])

    def test_spike_at_start_pads_backward(self):
        samples = np.zeros((1000, 3))
        samples[:, 2] = 1.0
        samples[0] = [0, 0, 5.0]
        trial = _trial_from_samples(samples, rate=200)
        window = impact_window(trial, WindowSpec(1.44, 2.0))
        assert window.shape == (689, 3)
        np.testing.assert_array_equal(window[:288], 0.0)
        np.testing.assert_array_equal(window[288], samples[0])

    def test_constant_trial_ties_break_first(self):
        samples = np.zeros((500, 3)) + [0, 0, 1.0]
        trial = _trial_from_samples(samples, rate=200)
        window = impact_window(trial, WindowSpec(1.44, 2.0))
        # impact at index 0: everything before it is padding
        np.testing.assert_array_equal(window[:288], 0.0)
        np.testing.assert_array_equal(window[288], [0, 0, 1.0])

    def test_length_independent_of_peak_position(self):
        spec = WindowSpec(1.44, 2.0)
        lengths = set()
        for pos in (0, 100, 500, 999):
            samples = np.zeros((1000, 3)) + [0, 0, 1.0]
            samples[pos] = [0, 0, 9.0]
            lengths.add(impact_window(_trial_from_samples(samples), spec).shape[0])
        assert lengths == {689}


class TestToFrame:
    def test_full_rate_geometry(self):
        window = np.random.default_rng(0).normal(size=(689, 3))
        frame = to_frame(window, 0, 200.0)
        assert frame.values.shape == (3, 256)
        assert frame.n_values == 768

    def test_lowest_rate_geometry(self):
        window = np.random.default_rng(0).normal(size=(6, 3))
        frame = to_frame(window, 7, 200.0 / 128)
        assert frame.values.shape == (3, 2)
        assert frame.n_values == 6

    def test_constant_window_reproduced(self):
        window = np.full((689, 3), 0.7)
        frame = to_frame(window, 2, 50.0)
        np.testing.assert_allclose(frame.values, 0.7)

    def test_linear_ramp_exact(self):
        # linear interpolation of a linear ramp lands back on the line
        n = 689
        window = np.linspace(0, 1, n).reshape(n, 1).repeat(3, axis=1)
        frame = to_frame(window, 0, 200.0)
        expected = np.linspace(0, n - 1, 256) / (n - 1)
        np.testing.assert_allclose(frame.values[0], expected, atol=1e-12)

    def test_alpha_range_checked(self):
        with pytest.raises(ValueError):
            to_frame(np.zeros((10, 3)), 9, 200.0)


class TestNormalization:
    def test_simple_example(self):
        values = np.zeros((3, 4))
        values[0] = [0, 5, 10, 5]
        values[1] = [5, 5, 5, 5]
        values[2] = [5, 5, 5, 5]
        frame = Frame(values=values, source_rate_hz=1.0)
        out = minmax_normalize(frame)
        np.testing.assert_allclose(out.values[0], [0.0, 0.5, 1.0, 0.5])
        assert out.norm_params == (0.0, 10.0)
        assert out.values.min() >= 0.0 and out.values.max() <= 1.0

    def test_constant_frame_guarded(self):
        frame = Frame(values=np.full((3, 8), 2.5), source_rate_hz=1.0)
        out = minmax_normalize(frame)
        np.testing.assert_array_equal(out.values, 0.0)
        assert out.norm_params == (2.5, 2.5)

    def test_negative_range_example(self):
        values = np.full((3, 4), 1.0)
        values[0, 0] = -2.0
        values[0, 1] = 6.0
        values[0, 2] = 0.0
        frame = minmax_normalize(Frame(values=values, source_rate_hz=1.0))
        assert frame.values[0, 2] == pytest.approx(0.25)

    def test_double_normalize_rejected(self):
        frame = minmax_normalize(Frame(values=np.random.rand(3, 16), source_rate_hz=1.0))
        with pytest.raises(ValueError):
            minmax_normalize(frame)

    def test_denormalize_example(self):
        frame = Frame(values=np.array([[0.0, 0.5, 1.0, 0.5]] * 3), source_rate_hz=1.0,
                      norm_params=(0.0, 10.0))
        out = denormalize(frame)
        np.testing.assert_allclose(out.values[0], [0.0, 5.0, 10.0, 5.0])
        assert out.norm_params is None

    def test_denormalize_degenerate(self):
        frame = Frame(values=np.zeros((3, 4)), source_rate_hz=1.0, norm_params=(3.0, 3.0))
        np.testing.assert_array_equal(denormalize(frame).values, 3.0)

    def test_denormalize_without_params(self):
        with pytest.raises(ValueError):
            denormalize(Frame(values=np.zeros((3, 4)), source_rate_hz=1.0))

    def test_roundtrip_property(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            values = rng.normal(scale=rng.uniform(0.1, 10), size=(3, 32))
            frame = Frame(values=values, source_rate_hz=100.0)
            back = denormalize(minmax_normalize(frame))
            np.testing.assert_allclose(back.values, values, rtol=1e-9, atol=1e-12)


class TestFrameRecord:
    def test_roundtrip_with_params(self, tmp_path):
        values = np.random.default_rng(0).random((3, 64))
        frame = Frame(values=values, source_rate_hz=12.5, norm_params=(-1.0, 2.0))
        save_frame(frame, tmp_path / "f.asef")
        back = load_frame(tmp_path / "f.asef")
        assert back.per_axis_len == 64
        assert back.alpha == frame.alpha == 2
        assert back.source_rate_hz == pytest.approx(12.5)
        assert back.norm_params == pytest.approx((-1.0, 2.0))
        np.testing.assert_allclose(back.values, values, atol=1e-6)  # f32 storage

    def test_roundtrip_without_params(self):
        frame = Frame(values=np.zeros((3, 2)), source_rate_hz=1.5625)
        back = frame_from_bytes(frame_to_bytes(frame))
        assert back.norm_params is None
        assert back.per_axis_len == 2

    def test_bad_magic(self):
        blob = frame_to_bytes(Frame(values=np.zeros((3, 4)), source_rate_hz=1.0))
        with pytest.raises(ValueError):
            frame_from_bytes(b"NOPE" + blob[4:])

    def test_truncated(self):
        blob = frame_to_bytes(Frame(values=np.zeros((3, 4)), source_rate_hz=1.0))
        with pytest.raises(ValueError):
            frame_from_bytes(blob[:-3])


class TestResampleFrame:
    def test_identity_at_same_length(self):
        values = np.random.default_rng(1).random((3, 256))
        frame = Frame(values=values, source_rate_hz=200.0)
        np.testing.assert_array_equal(resample_frame(frame, 256).values, values)

    def test_upsample_keeps_endpoints(self):
        values = np.random.default_rng(2).random((3, 2))
        frame = Frame(values=values, source_rate_hz=1.5625, norm_params=(0.0, 1.0))
        up = resample_frame(frame, 256)
        assert up.values.shape == (3, 256)
        np.testing.assert_allclose(up.values[:, 0], values[:, 0])
        np.testing.assert_allclose(up.values[:, -1], values[:, -1])
        assert up.norm_params == frame.norm_params


class TestPipelineGeometry:
    def test_windowed_trial_to_frames_all_alphas(self):
        trial = synth_trial(SynthKind.FALL_LIKE, 0, 200, 8)
        window = impact_window(trial, WindowSpec(1.44, 2.0))
        for alpha in range(8):
            segment = downsample_values(window, alpha)
            frame = to_frame(segment, alpha, trial.rate_hz / 2**alpha)
            assert frame.per_axis_len == 256 >> alpha
            normalized = minmax_normalize(frame)
            assert normalized.values.min() >= 0.0
            assert normalized.values.max() <= 1.0
