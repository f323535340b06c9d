import math

import numpy as np
import pytest

from dedcgan import radar, tfa
from dedcgan.exceptions import BadScale, WindowTooLong
from dedcgan.radar import GestureSpec, IQFrame


def _tone(f, fs=500, n=500, phase=0.0):
    t = np.arange(n) / fs
    return np.exp(1j * (2 * np.pi * f * t + phase))


def _frame(ch0, ch1=None, fs=500):
    ch1 = ch0 if ch1 is None else ch1
    return IQFrame(fs, np.stack([ch0, ch1]), 0, GestureSpec("circle"))


def test_tone_bin():
    power, freqs, _ = tfa.stft_power(_tone(40.0), 500, 125, 5, "rect")
    rows = np.argmax(power, axis=0)
    assert np.all(rows - 125 // 2 == 10)
    assert np.all(freqs[rows] == 40.0)


def test_dc_row():
    x = np.full(300, 2.0 + 1.0j)
    power, freqs, _ = tfa.stft_power(x, 500, 64, 4, "rect")
    dc = np.flatnonzero(freqs == 0)[0]
    others = np.delete(power, dc, axis=0)
    assert np.all(others <= 1e-12 * power[dc])
    # a tapered window leaks into the adjacent bins but still peaks at DC
    hann, _, _ = tfa.stft_power(x, 500, 64, 4, "hann")
    assert np.all(np.argmax(hann, axis=0) == dc)


def test_stft_shape():
    power, freqs, times = tfa.stft_power(np.zeros(500), 500, 64, 4)
    assert power.shape == (64, 1 + (500 - 64) // 4)
    assert np.all(np.diff(freqs) > 0) and np.all(np.diff(times) > 0)


def test_parseval(rng):
    x = rng.standard_normal(400) + 1j * rng.standard_normal(400)
    L, hop = 50, 7
    power, _, _ = tfa.stft_power(x, 500, L, hop, "rect")
    for j in range(power.shape[1]):
        seg = x[j * hop:j * hop + L]
        direct = L * np.sum(np.abs(seg) ** 2)
        assert abs(power[:, j].sum() - direct) <= 1e-6 * direct


def test_dft_matches_direct_sum(rng):
    x = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    n = np.arange(16)
    direct = np.array([np.sum(x * np.exp(-2j * np.pi * k * n / 16)) for k in range(16)])
    np.testing.assert_allclose(tfa.dft(x), direct, atol=1e-10)


def test_time_shift_covariance(rng):
    x = rng.standard_normal(600) + 1j * rng.standard_normal(600)
    hop = 4
    a, _, _ = tfa.stft_power(x[:-hop], 500, 64, hop)
    b, _, _ = tfa.stft_power(x[hop:], 500, 64, hop)
    np.testing.assert_allclose(a[:, 1:], b[:, :-1], rtol=1e-6)


def test_window_too_long():
    with pytest.raises(WindowTooLong):
        tfa.stft(_frame(np.zeros(32, complex)), window_len=64)


def test_image_normalisation(rng):
    fr = _frame(rng.standard_normal(500) + 1j * rng.standard_normal(500))
    s = tfa.stft(fr)
    assert s.image.shape == (2, 64, 64)
    assert s.image.min() == 0.0 and s.image.max() == 1.0
    assert np.all(np.diff(s.freq_axis) > 0) and np.all(np.diff(s.time_axis) > 0)


def test_constant_power_gives_zero_image():
    assert np.all(tfa.to_image(np.full((2, 10, 10), 3.0)) == 0.0)


def test_channel_swap(rng):
    a = rng.standard_normal(500) + 1j * rng.standard_normal(500)
    b = _tone(20.0)
    p1, _, _ = tfa.stft_power(np.stack([a, b]), 500)
    p2, _, _ = tfa.stft_power(np.stack([b, a]), 500)
    np.testing.assert_array_equal(p1[0], p2[1])
    np.testing.assert_array_equal(p1[1], p2[0])
    i1 = tfa.stft(_frame(a, b)).image
    i2 = tfa.stft(_frame(b, a)).image
    np.testing.assert_array_equal(i1[::-1], i2)


def test_interp_matrix_rows_sum_to_one():
    m = tfa._interp_matrix(31, 64)
    np.testing.assert_allclose(m.sum(axis=1), 1.0)
    np.testing.assert_allclose(m @ np.arange(31.0), np.linspace(0, 30, 64))


def test_cwt_tone_scale():
    scales = tfa.default_scales()
    power = tfa.cwt_power(_tone(40.0), 500, scales)
    a_star = scales[np.argmax(power[:, 250])]
    f_hat = 6.0 / (2 * math.pi * a_star)
    assert abs(f_hat - 40.0) / 40.0 <= 0.05


def test_cwt_zero_signal():
    power = tfa.cwt_power(np.zeros(200, complex), 500, tfa.default_scales())
    assert np.all(power == 0)
    assert np.all(tfa.cwt(_frame(np.zeros(200, complex))).image == 0)


def test_cwt_chirp_monotone_ridge():
    fs, n = 500, 500
    t = np.arange(n) / fs
    f0, f1 = 10.0, 40.0
    x = np.exp(2j * np.pi * (f0 * t + 0.5 * (f1 - f0) * t ** 2))
    scales = tfa.default_scales()
    power = tfa.cwt_power(x, fs, scales)
    ridge = scales[np.argmax(power, axis=0)]
    # the log-spaced scale grid is coarser than one sample step, so the full-rate
    # ridge is only non-increasing; spaced columns must strictly decrease
    assert np.all(np.diff(ridge[50:-50]) <= 0)
    assert np.all(np.diff(ridge[50:-50:40]) < 0)


def test_bad_scales():
    with pytest.raises(BadScale):
        tfa.cwt_power(np.ones(10, complex), 500, [0.1])
    with pytest.raises(BadScale):
        tfa.cwt_power(np.ones(10, complex), 500, [0.1, -0.2])


def test_scale_frequency_maps_invert():
    f = np.array([2.0, 10.0, 60.0])
    np.testing.assert_allclose(tfa.scale_to_freq(tfa.freq_to_scale(f)), f)
    s = tfa.default_scales()
    assert tfa.scale_to_freq(s).min() == pytest.approx(2.0) and tfa.scale_to_freq(s).max() == pytest.approx(60.0)


def test_batch_transform_contract():
    ds = radar.make_dataset(4, 3, seed=3)
    st = tfa.batch_transform(ds, "stft")
    cw = tfa.batch_transform(ds, "cwt")
    assert len(st) == len(ds) == len(cw)
    assert [s.source_label for s in st] == list(ds.labels)
    assert st[0].image.shape == cw[0].image.shape == (2, 64, 64)
    again = tfa.batch_transform(ds, "stft")
    assert all(a.image.tobytes() == b.image.tobytes() for a, b in zip(st, again))


def test_batch_matches_single():
    ds = radar.make_dataset(4, 1, seed=4)
    batch = tfa.batch_transform(ds.frames, "cwt")
    single = tfa.cwt(ds.frames[2])
    np.testing.assert_allclose(batch[2].image, single.image, atol=1e-12)


def test_spectrogram_storage(tmp_path):
    ds = radar.make_dataset(4, 2, seed=1)
    specs = tfa.batch_transform(ds, "stft")
    tfa.save_spectrograms(specs, tmp_path / "s", ds.class_names)
    images, labels, man = tfa.load_spectrograms(tmp_path / "s")
    assert images.dtype == np.float32 and images.shape == (8, 2, 64, 64)
    np.testing.assert_array_equal(images, np.stack([s.image for s in specs]).astype(np.float32))
    np.testing.assert_array_equal(labels, ds.labels)
    assert man["class_names"] == ds.class_names and man["method"] == "stft"
