import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aquaradar import em
from aquaradar.em import AIR, MediumSpec, RadarParams


def test_fresnel_matched_impedance_is_transparent():
    c = em.fresnel(50.0, 50.0)
    assert c.r == 0
    assert c.t == 1


def test_fresnel_rejects_cancelling_impedances():
    with pytest.raises(em.DegenerateImpedanceError):
        em.fresnel(10.0, -10.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1.0, 1e4), st.floats(1.0, 1e4))
def test_interface_power_balance(za, zb):
    c = em.fresnel(za, zb)
    assert abs(abs(c.r) ** 2 + (za / zb) * abs(c.t) ** 2 - 1.0) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(1.0, 1e4), st.floats(1.0, 1e4))
def test_reverse_interface_is_negated(za, zb):
    assert em.fresnel(za, zb).r == pytest.approx(-em.fresnel(zb, za).r, abs=1e-15)


def test_half_wave_slab_between_equal_media():
    f = 77e9
    eps = 4.0
    lam_in = em.SPEED_OF_LIGHT / f / np.sqrt(eps)
    slab = MediumSpec(eps, 0.0, lam_in / 2)
    assert abs(em.slab_reflection(AIR, slab, AIR, f)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(1.0, 90.0), st.floats(0.0, 200.0), st.floats(1e-4, 0.05), st.floats(1.0, 90.0))
def test_closed_form_matches_series(eps, alpha, d, eps_b):
    slab = MediumSpec(eps, alpha, d)
    lower = MediumSpec(eps_b)
    closed = em.slab_reflection(AIR, slab, lower, 77e9)
    series = em.slab_reflection_series(AIR, slab, lower, 77e9, n_terms=50)
    # the truncated tail is bounded by |r21 r23|^50
    i21 = em.fresnel(em.intrinsic_impedance(slab), em.intrinsic_impedance(AIR))
    i23 = em.fresnel(em.intrinsic_impedance(slab), em.intrinsic_impedance(lower))
    tail = abs(i21.r * i23.r) ** 50
    assert abs(closed - series) < 1e-10 + 10 * tail


def test_lossless_slab_reflection_bounded():
    for d in np.linspace(1e-4, 5e-3, 40):
        r = em.slab_reflection(AIR, MediumSpec(81.0, 0.0, d), AIR, 77e9)
        assert abs(r) <= 1.0 + 1e-12


def test_thick_lossy_slab_reduces_to_single_interface():
    # round trip attenuation exp(-2 * 500 * 0.1) kills the internal paths
    slab = MediumSpec(81.0, 500.0, 0.1)
    direct = em.fresnel(em.intrinsic_impedance(AIR), em.intrinsic_impedance(slab)).r
    assert em.slab_reflection(AIR, slab, AIR, 77e9) == pytest.approx(direct, abs=1e-12)


def test_medium_validation():
    with pytest.raises(ValueError):
        MediumSpec(0.5)
    with pytest.raises(ValueError):
        MediumSpec(2.0, -1.0)
    with pytest.raises(ValueError):
        MediumSpec(2.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        em.slab_reflection(AIR, MediumSpec(2.0), AIR, 77e9)


def test_wavenumber_has_negative_imaginary_part():
    k = em.complex_wavenumber(MediumSpec(4.0, 3.0), 1e9)
    assert k.imag == -3.0
    assert k.real == pytest.approx(2 * np.pi * 1e9 * 2 / em.SPEED_OF_LIGHT)


def test_phase_of_one_micron():
    lam = RadarParams().wavelength
    assert em.displacement_to_phase(1e-6, lam) == pytest.approx(3.227e-3, rel=1e-3)


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e-3, 1e-3).filter(lambda d: abs(d) > 1e-300))
def test_displacement_phase_round_trip(d):
    lam = RadarParams().wavelength
    back = em.phase_to_displacement(em.displacement_to_phase(d, lam), 0.0, lam)
    assert abs(back - d) <= 1e-12 * abs(d)


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e-3, 1e-3), st.floats(-10, 10))
def test_round_trip_with_reference_phase(d, ref):
    # subtracting the reference costs at most a few ulps of the absolute phase
    lam = RadarParams().wavelength
    phase = em.displacement_to_phase(d, lam) + ref
    back = em.phase_to_displacement(phase, ref, lam)
    assert abs(back - d) <= 4 * np.spacing(abs(phase) + abs(ref)) * lam / (4 * np.pi) + 1e-12 * abs(d)


def test_beat_range_round_trip():
    p = RadarParams()
    r = np.linspace(0.0, 5.0, 11)
    assert np.allclose(em.beat_freq_to_range(em.range_to_beat_freq(r, p), p), r, rtol=1e-14)
    with pytest.raises(ValueError):
        em.range_to_beat_freq(-1.0, p)


def test_range_resolution():
    assert RadarParams().range_resolution == pytest.approx(0.0488, abs=1e-4)


def test_reflected_power():
    assert em.reflected_power(0.5j, 4.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        em.reflected_power(0.5, -1.0)


def test_doppler_phase_is_linear():
    p = RadarParams()
    assert em.doppler_phase(2e-3, p) == pytest.approx(2 * em.doppler_phase(1e-3, p))
