import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dedcgan import radar, tfa
from dedcgan.exceptions import NyquistViolation, UnknownKind
from dedcgan.radar import GestureSpec, synthesize

FC, C = 5.8e9, 2.998e8


def test_circle_is_closed():
    scale, speed = 0.2, 1.0
    period = 2 * math.pi * (scale / 2) / speed
    p0 = radar.trajectory("circle", scale, speed, 0.0)
    p1 = radar.trajectory("circle", scale, speed, period)
    np.testing.assert_allclose(p0, p1, atol=1e-12)


@pytest.mark.parametrize("kind,expected", [("square", 4.0), ("circle", math.pi)])
def test_path_lengths(kind, expected):
    assert radar.path_length(kind, 0.3) == pytest.approx(expected * 0.3)


def test_square_traversal_matches_length():
    scale, speed = 0.2, 0.4
    t = np.linspace(0, 4 * scale / speed, 20001)
    pos = radar.trajectory("square", scale, speed, t)
    walked = np.hypot(*np.diff(pos, axis=0).T).sum()
    assert walked == pytest.approx(4 * scale, rel=1e-6)
    np.testing.assert_allclose(pos[0], pos[-1], atol=1e-9)


@pytest.mark.parametrize("kind", ["square", "tick", "cross", ("circle", "tick")])
def test_paths_are_continuous_with_extent(kind):
    scale, speed = 0.5, 1.0
    t = np.linspace(0, 1, 5001)
    pos = radar.trajectory(kind, scale, speed, t)
    steps = np.hypot(*np.diff(pos, axis=0).T)
    assert steps.max() <= speed * (t[1] - t[0]) * (1 + 1e-6)
    if not isinstance(kind, tuple):
        extent = pos.max(axis=0) - pos.min(axis=0)
        assert extent.max() == pytest.approx(scale, rel=1e-3)


def test_circle_radial_velocity_amplitude():
    scale, speed = 0.2, 1.3
    omega = speed / (scale / 2)
    t = np.linspace(0, 1, 200001)
    vy = np.gradient(radar.trajectory("circle", scale, speed, t)[:, 1], t)
    assert np.abs(vy).max() == pytest.approx((scale / 2) * omega, rel=1e-4)


def test_unknown_kind():
    with pytest.raises(UnknownKind):
        GestureSpec("triangle")
    with pytest.raises(UnknownKind):
        radar.trajectory("triangle", 0.2, 1.0, 0.0)


def test_spec_invariants():
    with pytest.raises(ValueError):
        GestureSpec("circle", distance_m=0.3, scale_m=0.5)
    with pytest.raises(ValueError):
        GestureSpec("circle", duration_s=0)


def test_frame_length_and_determinism():
    spec = GestureSpec("square", 0.5, 0.2, 1.0, duration_s=0.73, seed=9)
    a = synthesize(spec, 333.0, 20)
    b = synthesize(spec, 333.0, 20)
    assert a.channels.shape == (2, round(333 * 0.73))
    assert a.channels.tobytes() == b.channels.tobytes()
    assert np.isfinite(a.channels).all()
    assert (np.sqrt(np.mean(np.abs(a.channels) ** 2, axis=1)) > 0).all()


def test_static_hand_is_dc():
    fr = synthesize(GestureSpec("circle", 0.5, 0.2, speed_mps=0.0), 500, None)
    amp = np.abs(fr.channels)
    np.testing.assert_allclose(amp, amp[:, :1].repeat(amp.shape[1], 1), rtol=1e-12)
    spec = np.abs(np.fft.fft(fr.channels, axis=1)) ** 2
    assert (spec[:, 1:].sum(axis=1) <= 1e-20 * spec[:, 0]).all()


@pytest.mark.parametrize("v", [0.5, 1.0, 2.0])
def test_doppler_line(v):
    expected = 2 * v * FC / C
    fr = synthesize(GestureSpec("linear", 0.9, 0.0, v, duration_s=0.4), 500, None)
    power, freqs, _ = tfa.stft_power(fr.channels[0], 500, 64, 4, "hann")
    peaks = freqs[np.argmax(power, axis=0)]
    assert np.all(np.abs(peaks - expected) <= 500 / 64)


def test_doppler_value_at_one_mps():
    assert radar.doppler_hz(1.0) == pytest.approx(38.69, abs=0.005)


def test_circle_ridge_follows_radial_velocity():
    scale, speed, fs = 0.2, 1.0, 500
    fr = synthesize(GestureSpec("circle", 0.5, scale, speed), fs, None)
    power, freqs, times = tfa.stft_power(fr.channels[0], fs, 32, 2, "hann")
    ridge = freqs[np.argmax(power, axis=0)]
    # analytic Doppler of the circular path: approaching (dR/dt < 0) is positive
    omega = speed / (scale / 2)
    analytic = -2 * (scale / 2) * omega * np.cos(omega * times) * FC / C
    assert np.corrcoef(ridge, analytic)[0, 1] > 0.95
    assert np.abs(ridge - analytic).max() <= 2 * fs / 32


def test_power_law_static():
    near = synthesize(GestureSpec("circle", 0.5, 0.2, 0.0), 500, None)
    far = synthesize(GestureSpec("circle", 1.0, 0.2, 0.0), 500, None)
    ratio = np.mean(np.abs(near.channels) ** 2) / np.mean(np.abs(far.channels) ** 2)
    assert ratio == pytest.approx(16.0, rel=1e-12)


def test_power_law_moving():
    near = synthesize(GestureSpec("circle", 0.5, 0.02, 0.5), 500, None)
    far = synthesize(GestureSpec("circle", 1.0, 0.02, 0.5), 500, None)
    ratio = np.mean(np.abs(near.channels) ** 2) / np.mean(np.abs(far.channels) ** 2)
    assert abs(ratio - 16.0) <= 0.05 * 16.0


def test_reference_amplitude():
    fr = synthesize(GestureSpec("circle", 0.3, 0.2, 0.0), 500, None)
    np.testing.assert_allclose(np.abs(fr.channels), 1.0, rtol=1e-12)


@pytest.mark.parametrize("phi", [math.pi / 2, 0.3])
def test_channel_phase(phi):
    fr = synthesize(GestureSpec(("square", "circle"), 0.5, 0.2, 1.0), 500, None, phase_offset=phi)
    dev = np.abs(fr.channels[1] - fr.channels[0] * np.exp(1j * phi))
    assert dev.max() <= 1e-9 * np.abs(fr.channels[0]).max()


@given(st.sampled_from(["circle", "square", "tick", "cross", "linear"]),
       st.floats(0.1, 5.0), st.floats(-0.2, 0.2).filter(lambda m: abs(m) > 1e-3))
def test_nyquist_guard_iff(kind, speed, margin):
    fd = radar.doppler_hz(radar.max_radial_speed(kind, speed))
    fs = 2 * fd * (1 + margin)
    spec = GestureSpec(kind, 0.9, 0.1 if kind != "linear" else 0.0, speed, duration_s=0.05)
    if fd > fs / 2:
        with pytest.raises(NyquistViolation):
            synthesize(spec, fs, None)
    else:
        synthesize(spec, fs, None)


def test_make_dataset_counts():
    ds = radar.make_dataset(4, 200, seed=1)
    assert len(ds) == 800
    np.testing.assert_array_equal(np.bincount(ds.labels), [200] * 4)
    assert ds.class_names == ["circle", "square", "tick", "cross"]


def test_sample_reproducible_in_isolation():
    ds = radar.make_dataset(4, 5, seed=7)
    cls = radar.gesture_classes(4)[2]
    spec = radar.sample_spec(cls, 2, 3, 7)
    fr = synthesize(spec, 500, 20, label=2)
    assert ds.frames[2 * 5 + 3].channels.tobytes() == fr.channels.astype(np.complex64).tobytes()


def test_dataset_files_bit_identical(tmp_path):
    for name in ("a", "b"):
        radar.save_dataset(radar.make_dataset(4, 3, seed=5), tmp_path / name)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 4 * 3 + 2
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_dataset_round_trip(tmp_path):
    ds = radar.make_dataset(24, 1, seed=2)
    back = radar.load_dataset(radar.save_dataset(ds, tmp_path / "d"))
    assert back.class_names == ds.class_names
    for a, b in zip(ds.frames, back.frames):
        assert a.channels.tobytes() == b.channels.tobytes()
        assert a.label == b.label and a.spec == b.spec


def test_taxonomy():
    classes = radar.gesture_classes(24)
    assert len(classes) == 24 == len({c.name for c in classes})
    ds = radar.make_dataset(24, 1, seed=0)
    assert set(ds.labels) == set(range(24))
    with pytest.raises(ValueError):
        radar.gesture_classes(16)


def test_separability_circle_vs_cross():
    ds = radar.make_dataset(4, 40, seed=11)
    images, _, _ = tfa.transform_array(np.stack([f.channels for f in ds.frames]), ds.fs_hz, tfa.TFAConfig())
    circle, cross = images[ds.labels == 0], images[ds.labels == 3]
    gap = np.linalg.norm(circle.mean(0) - cross.mean(0))
    # pooled per-pixel within-class standard deviation
    within = math.sqrt(0.5 * (circle.var(0, ddof=1).mean() + cross.var(0, ddof=1).mean()))
    assert gap > 5 * within
