import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lead.corpus_io import EpochSample
from lead.errors import ConfigError, DataError
from lead.signal_prep import (
    CHANNEL_ORDER,
    Montage,
    PreprocessConfig,
    RawTrial,
    align_channels,
    bandpass,
    load_montage,
    normalize,
    normalize_array,
    plan_alignment,
    preprocess_trial,
    resample,
    segment,
)


def sine_trial(freq, fs, seconds, n_channels=1, amplitude=1.0):
    t = np.arange(int(fs * seconds)) / fs
    data = amplitude * np.sin(2 * np.pi * freq * t)[:, None].repeat(n_channels, axis=1)
    montage = load_montage()
    names = list(CHANNEL_ORDER[:n_channels])
    coords = montage.coords[:n_channels]
    return RawTrial(data=data, channel_names=names, coords=coords, fs=fs)


def rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


class TestMontage:
    def test_nineteen_channels_unit_norm(self):
        montage = load_montage()
        assert montage.names == CHANNEL_ORDER
        norms = np.linalg.norm(montage.coords, axis=1)
        assert np.abs(norms - 1).max() < 1e-6

    def test_aliases_resolve(self):
        montage = load_montage()
        for alias, target in (("T7", "T3"), ("T8", "T4"), ("P7", "T5"), ("P8", "T6")):
            assert montage.canonical(alias) == target
            assert np.array_equal(montage.coord_of(alias), montage.coord_of(target))

    def test_case_insensitive(self):
        montage = load_montage()
        assert montage.canonical("FP1") == "Fp1"
        assert montage.canonical("fz") == "Fz"


class TestResample:
    def test_two_to_one_length(self):
        trial = sine_trial(10.0, 256.0, 4.0)
        out = resample(trial, 128.0)
        assert out.data.shape[0] == 512
        assert out.fs == 128.0
        assert out.channel_names == trial.channel_names

    def test_rms_preserved_10hz(self):
        trial = sine_trial(10.0, 500.0, 8.0)
        out = resample(trial, 128.0)
        assert abs(rms(out.data) / rms(trial.data) - 1.0) < 0.01

    def test_near_nyquist_preserved(self):
        trial = sine_trial(60.0, 500.0, 8.0)
        out = resample(trial, 128.0)
        assert abs(rms(out.data) / rms(trial.data) - 1.0) < 0.05

    def test_irrational_ratio_rejected(self):
        trial = sine_trial(1.0, np.pi * 100, 1.0)
        with pytest.raises(ConfigError):
            resample(trial, 128.0)

    def test_output_length_formula(self):
        for fs, seconds in ((500.0, 3.0), (1024.0, 2.0), (125.0, 4.0)):
            trial = sine_trial(5.0, fs, seconds)
            out = resample(trial, 128.0)
            assert out.data.shape[0] == round(trial.data.shape[0] * 128.0 / fs)


class TestBandpass:
    def test_passband_10hz_within_1db(self):
        trial = sine_trial(10.0, 128.0, 8.0)
        out = bandpass(trial, 0.5, 45.0)
        ratio_db = 20 * np.log10(rms(out.data) / rms(trial.data))
        assert abs(ratio_db) < 1.0

    def test_stopband_01hz_20db(self):
        trial = sine_trial(0.1, 128.0, 40.0)
        out = bandpass(trial, 0.5, 45.0)
        ratio_db = 20 * np.log10(rms(out.data) / rms(trial.data))
        assert ratio_db <= -20.0

    def test_zero_in_zero_out(self):
        trial = sine_trial(10.0, 128.0, 2.0, amplitude=0.0)
        out = bandpass(trial, 0.5, 45.0)
        assert np.allclose(out.data, 0.0)

    def test_nyquist_edge_rejected(self):
        trial = sine_trial(10.0, 128.0, 2.0)
        with pytest.raises(ConfigError):
            bandpass(trial, 0.5, 64.0)

    def test_zero_phase_no_shift(self):
        # peak of a mid-band sine should stay in place
        trial = sine_trial(8.0, 128.0, 4.0)
        out = bandpass(trial, 0.5, 45.0)
        assert abs(int(np.argmax(out.data[128:256, 0])) - int(np.argmax(trial.data[128:256, 0]))) <= 1


def full_montage_trial(data, names=None):
    montage = load_montage()
    names = names or list(CHANNEL_ORDER)
    coords = np.stack([montage.coord_of(n) for n in names])
    return RawTrial(data=data, channel_names=names, coords=coords, fs=128.0)


class TestAlignment:
    def test_identity_passthrough(self):
        rng = np.random.default_rng(0)
        data = rng.standard_normal((64, 19))
        trial = full_montage_trial(data)
        out = align_channels(trial)
        assert out.channel_names == list(CHANNEL_ORDER)
        assert np.array_equal(out.data, data)

    def test_aliases_are_name_matches(self):
        rng = np.random.default_rng(1)
        data = rng.standard_normal((32, 19))
        names = [{"T3": "T7", "T4": "T8", "T5": "P7", "T6": "P8"}.get(n, n) for n in CHANNEL_ORDER]
        out = align_channels(full_montage_trial(data, names))
        assert np.array_equal(out.data, data)

    def test_apava_style_interpolation(self):
        # drop Fz, Cz, Pz; the 16 remaining channels are copied verbatim and
        # the 3 missing ones are convex combinations of them
        rng = np.random.default_rng(2)
        keep = [n for n in CHANNEL_ORDER if n not in ("Fz", "Cz", "Pz")]
        data = rng.standard_normal((128, 16))
        trial = full_montage_trial(data, keep)
        out = align_channels(trial)
        assert out.channel_names == list(CHANNEL_ORDER)
        for name in keep:
            src = keep.index(name)
            dst = CHANNEL_ORDER.index(name)
            assert np.array_equal(out.data[:, dst], data[:, src])
        for name in ("Fz", "Cz", "Pz"):
            dst = CHANNEL_ORDER.index(name)
            col = out.data[:, dst]
            assert (col <= data.max(axis=1) + 1e-12).all()
            assert (col >= data.min(axis=1) - 1e-12).all()

    def test_equidistant_pair_average(self):
        # only F3 and F4 present: Fz is equidistant from both by symmetry
        rng = np.random.default_rng(3)
        data = rng.standard_normal((64, 2))
        trial = full_montage_trial(data, ["F3", "F4"])
        out = align_channels(trial)
        fz = out.data[:, CHANNEL_ORDER.index("Fz")]
        assert np.allclose(fz, data.mean(axis=1), atol=1e-12)

    def test_surplus_maps_nearest(self):
        # unknown-name channels sitting exactly at montage positions
        montage = load_montage()
        rng = np.random.default_rng(4)
        data = rng.standard_normal((32, 19))
        names = [f"X{i}" for i in range(19)]
        trial = RawTrial(data=data, channel_names=names, coords=montage.coords.copy(), fs=128.0)
        out = align_channels(trial)
        assert np.array_equal(out.data, data)

    def test_idempotence(self):
        rng = np.random.default_rng(5)
        keep = [n for n in CHANNEL_ORDER if n not in ("O1",)]
        trial = full_montage_trial(rng.standard_normal((64, 18)), keep)
        once = align_channels(trial)
        twice = align_channels(once)
        assert np.array_equal(once.data, twice.data)

    def test_zero_channels_rejected(self):
        with pytest.raises(DataError):
            plan_alignment([], np.zeros((0, 3)), load_montage())


class TestSegment:
    def brute_count(self, t, win, stride):
        count = 0
        start = 0
        while start + win <= t:
            count += 1
            start += stride
        return count

    def test_adfsu_arithmetic(self):
        # 8-second trial at 128 Hz, 1-second half-overlapping windows
        trial = sine_trial(5.0, 128.0, 8.0)
        windows = segment(trial, win=128, stride=64)
        assert len(windows) == 15
        assert 15 * 2 * 92 == 2760

    def test_exact_fit(self):
        trial = sine_trial(5.0, 128.0, 1.0)
        assert len(segment(trial, 128, 128)) == 1

    def test_short_trial(self):
        trial = full_montage_trial(np.zeros((127, 19)))
        assert segment(trial, 128, 128) == []

    @given(t=st.integers(0, 512), win=st.integers(1, 512), stride_frac=st.floats(0.01, 1.0))
    @settings(max_examples=200, deadline=None)
    def test_count_formula_matches_brute_force(self, t, win, stride_frac):
        stride = max(1, int(win * stride_frac))
        trial = full_montage_trial(np.zeros((t, 19)))
        got = len(segment(trial, win, stride))
        assert got == self.brute_count(t, win, stride)

    def test_window_content(self):
        data = np.arange(10 * 19, dtype=float).reshape(10, 19)
        trial = full_montage_trial(data)
        windows = segment(trial, win=4, stride=3)
        assert len(windows) == 3
        assert np.array_equal(windows[1].data, data[3:7].astype(np.float32))


class TestNormalize:
    def test_closed_form(self):
        sample = EpochSample(np.array([[1.0], [2.0], [3.0], [4.0]], dtype=np.float32), 1, 0)
        out = normalize(sample)
        assert abs(out.data.mean()) < 1e-6
        assert abs(out.data.std() - 1.0) < 1e-6

    def test_constant_channel_zeros(self):
        sample = EpochSample(np.full((16, 2), 5.0, dtype=np.float32), 1, 0)
        out = normalize(sample)
        assert np.array_equal(out.data, np.zeros((16, 2), dtype=np.float32))

    def test_random_matrix_channel_stats(self):
        rng = np.random.default_rng(7)
        out = normalize_array(rng.standard_normal((128, 19)) * 40 + 3)
        assert np.abs(out.mean(axis=0)).max() < 1e-5
        assert np.abs(out.std(axis=0) - 1).max() < 1e-4

    @given(alpha=st.floats(0.01, 100.0), beta=st.floats(-50.0, 50.0), seed=st.integers(0, 2**31))
    @settings(max_examples=50, deadline=None)
    def test_affine_invariance(self, alpha, beta, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((64, 4))
        a = normalize_array(x)
        b = normalize_array(alpha * x + beta)
        assert np.allclose(a, b, atol=1e-9)

    def test_nonfinite_rejected(self):
        x = np.zeros((8, 2))
        x[3, 1] = np.inf
        with pytest.raises(DataError):
            normalize_array(x)


class TestFullChain:
    def make_trial(self, seconds=10.0, fs=256.0, n_extra=2):
        rng = np.random.default_rng(11)
        montage = load_montage()
        names = list(CHANNEL_ORDER) + [f"EXG{i}" for i in range(n_extra)]
        coords = np.vstack([montage.coords, montage.coords[:n_extra] * [1, -1, 1]])
        coords /= np.linalg.norm(coords, axis=1, keepdims=True)
        data = rng.standard_normal((int(fs * seconds), len(names)))
        return RawTrial(data=data, channel_names=names, coords=coords, fs=fs)

    def test_chain_shapes(self):
        samples = preprocess_trial(self.make_trial(), PreprocessConfig())
        assert len(samples) == 10
        assert all(s.data.shape == (128, 19) for s in samples)

    def test_chain_deterministic(self):
        trial = self.make_trial()
        a = preprocess_trial(trial, PreprocessConfig())
        b = preprocess_trial(trial, PreprocessConfig())
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.data, sb.data)

    def test_dominant_tone_survives(self):
        # 10 Hz tone on every channel: alpha power should dwarf delta power
        fs, seconds = 256.0, 10.0
        t = np.arange(int(fs * seconds)) / fs
        rng = np.random.default_rng(13)
        data = 10 * np.sin(2 * np.pi * 10.0 * t)[:, None] + 0.1 * rng.standard_normal((t.size, 19))
        trial = full_montage_trial(data)
        trial.fs = fs
        samples = preprocess_trial(trial, PreprocessConfig())
        spec = np.abs(np.fft.rfft(np.stack([s.data for s in samples]), axis=1)) ** 2
        freqs = np.fft.rfftfreq(128, 1 / 128.0)
        alpha = spec[:, (freqs >= 8) & (freqs < 12)].sum()
        delta = spec[:, (freqs >= 0.5) & (freqs < 4)].sum()
        assert alpha >= 10 * delta
