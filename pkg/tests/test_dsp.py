import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from aquaradar import dsp, synth
from aquaradar.em import RadarParams, range_to_beat_freq
from aquaradar.synth import SampleSpec


def test_range_fft_peak_at_beat_bin():
    p = RadarParams()
    k = 6
    f_b = k / p.chirp_duration
    tau = np.arange(p.n_samples) * p.sample_interval
    prof = dsp.range_fft(np.exp(2j * np.pi * f_b * tau), p.bandwidth)
    assert np.argmax(np.abs(prof.bins)) == k
    assert prof.bin_width == pytest.approx(p.range_resolution)
    with pytest.raises(ValueError):
        dsp.range_fft(np.zeros(100))


def test_range_fft_is_linear():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, 64)) + 1j * rng.normal(size=(2, 64))
    lhs = dsp.range_fft(2 * a + b).bins
    rhs = 2 * dsp.range_fft(a).bins + dsp.range_fft(b).bins
    assert np.allclose(lhs, rhs)


@settings(max_examples=100, deadline=None)
@given(hnp.arrays(float, st.integers(2, 60), elements=st.floats(-20, 20)))
def test_unwrap_recovers_steps_up_to_2pi(phase):
    wrapped = np.angle(np.exp(1j * phase))
    out = dsp.unwrap_phase(wrapped)
    # consecutive steps never exceed pi in magnitude
    assert np.all(np.abs(np.diff(out)) <= np.pi + 1e-9)
    # every sample still differs from the wrapped one by a multiple of 2 pi
    k = (out - wrapped) / (2 * np.pi)
    assert np.allclose(k, np.round(k), atol=1e-9)


def test_unwrap_smooth_ramp():
    true = np.linspace(0, 30, 200)
    out = dsp.unwrap_phase(np.angle(np.exp(1j * true)))
    assert np.allclose(out, true, atol=1e-9)
    with pytest.raises(ValueError):
        dsp.unwrap_phase([])


def test_capon_finds_single_source():
    rng = np.random.default_rng(1)
    a = dsp.steering_matrix([12.0], 8)[:, 0]
    s = rng.normal(size=200) + 1j * rng.normal(size=200)
    x = s[:, None] * a[None, :] + 0.05 * (rng.normal(size=(200, 8)) + 1j * rng.normal(size=(200, 8)))
    spec = dsp.capon_spectrum(x)
    assert dsp.ANGLE_GRID[np.argmax(spec)] == 12.0
    assert spec.sum() == pytest.approx(1.0)
    assert np.all(spec > 0)


def test_capon_on_silence():
    with pytest.raises(dsp.SingularCovarianceError):
        dsp.capon_spectrum(np.zeros((10, 4)))


def test_capon_centered_ignores_static_part():
    rng = np.random.default_rng(2)
    static = dsp.steering_matrix([-20.0], 8)[:, 0]
    moving = dsp.steering_matrix([10.0], 8)[:, 0]
    s = rng.normal(size=300)
    x = 5 * static[None, :] + s[:, None] * moving[None, :]
    assert dsp.ANGLE_GRID[np.argmax(dsp.capon_spectrum(x, center=True))] == 10.0
    assert dsp.ANGLE_GRID[np.argmax(dsp.capon_spectrum(x))] == -20.0


def _profiles(powers, n_frames=120, seed=0):
    rng = np.random.default_rng(seed)
    amp = np.sqrt(np.asarray(powers, float))
    return amp[None, :] * np.exp(1j * rng.uniform(0, 2 * np.pi, size=(n_frames, amp.size)))


def test_select_bins_picks_peak_and_neighbours():
    powers = np.full(32, 1e-3)
    powers[10], powers[9], powers[11], powers[20] = 10.0, 3.0, 2.0, 5.0
    assert dsp.select_bins(_profiles(powers)) == (9, 10, 11)


def test_select_bins_prefers_stable_bins():
    prof = _profiles(np.full(16, 1.0))
    prof[:, 3] *= np.where(np.arange(120) % 2, 0.1, 1.9)  # same mean, unstable
    assert 3 not in dsp.select_bins(prof)


def test_select_bins_errors():
    with pytest.raises(ValueError):
        dsp.select_bins(np.ones((50, 8)))
    with pytest.raises(dsp.DegenerateInputError):
        dsp.select_bins(np.zeros((120, 8)))


def test_tensor_is_nonnegative_with_expected_shape():
    spec = SampleSpec(((synth.default_materials().names[0], 1.0),), seed=4)
    cap = synth.generate_capture(spec, noise_snr_db=20)
    tensor, parts = dsp.build_tensor(cap)
    assert tensor.values.shape == (101, 3, 31)
    assert tensor.values.min() >= 0
    assert np.allclose(parts.spectra.sum(axis=2), 1.0)
    assert parts.mean_power.max() == pytest.approx(1.0)
    assert np.allclose(tensor.values, parts.combine())


def test_surface_bins_bracket_the_surface_range():
    spec = SampleSpec(((synth.default_materials().names[0], 1.0),))
    cap = synth.generate_capture(spec)
    p = cap.radar
    centre = range_to_beat_freq(synth.DEFAULT_SURFACE_RANGE, p) * p.chirp_duration
    _, bins = dsp.tensor_parts(cap)
    assert min(bins) <= centre <= max(bins)


def test_frame_count_checked():
    spec = SampleSpec(((synth.default_materials().names[0], 1.0),))
    cap = synth.generate_capture(spec)
    short = synth.RawCapture(cap.frames[:500], cap.sweep, cap.radar, cap.truth)
    with pytest.raises(dsp.FrameCountError):
        dsp.tensor_parts(short)


def test_drop_variants_neutralize_one_factor():
    rng = np.random.default_rng(0)
    parts = dsp.TensorParts(rng.uniform(size=(4, 3)), rng.uniform(size=(4, 3)),
                            rng.dirichlet(np.ones(31), size=(4, 3)))
    full = parts.combine()
    no_aoa = parts.combine("aoa")
    assert np.allclose(no_aoa.sum(axis=2), full.sum(axis=2))
    assert np.allclose(parts.combine("phase").sum(axis=2), parts.mean_power)
    assert np.allclose(parts.combine("power").sum(axis=2), parts.sigma_phase)
    with pytest.raises(ValueError):
        parts.combine("colour")


def test_still_water_gives_uniform_spectrum_and_zero_spread():
    spec = SampleSpec(((synth.default_materials().names[0], 1.0),))
    cap = synth.generate_capture(spec, perturb=synth.PerturbConfig(excitation_scale=0.0))
    parts, _ = dsp.tensor_parts(cap, center=True)
    assert np.allclose(parts.sigma_phase, 0.0, atol=1e-12)
    assert np.allclose(parts.spectra, 1 / 31)
