import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aquaradar import synth
from aquaradar.em import RadarParams
from aquaradar.synth import (DatasetManifest, MaterialTable, PerturbConfig, SampleSpec,
                             SweepConfig)

MATERIALS = synth.default_materials()
NAMES = MATERIALS.names


def test_default_table_has_five_pollutants():
    assert len(NAMES) == 5
    for n in NAMES:
        assert 25 <= MATERIALS[n].resonance_freq <= 125


def test_unknown_pollutant():
    with pytest.raises(synth.UnknownPollutantError):
        MATERIALS["plutonium"]


def test_resonator_peak_and_height():
    p = MATERIALS[NAMES[0]]
    f = np.linspace(25, 125, 100001)
    assert f[np.argmax(p.response(f))] == pytest.approx(p.peak_freq, abs=2e-3)
    assert p.response(p.resonance_freq) == pytest.approx(1 / (2 * p.damping_ratio))


def test_pollutant_validation():
    p = MATERIALS[NAMES[0]]
    with pytest.raises(ValueError):
        dataclasses.replace(p, resonance_freq=10.0)
    with pytest.raises(ValueError):
        dataclasses.replace(p, damping_ratio=1.0)
    with pytest.raises(ValueError):
        dataclasses.replace(p, displacement_gain=1.0)


def test_scatterer_angles_are_fixed_per_material():
    p = MATERIALS[NAMES[1]]
    assert np.array_equal(p.scatterer_angles(), p.scatterer_angles())
    assert not np.array_equal(p.scatterer_angles(), MATERIALS[NAMES[2]].scatterer_angles())


@pytest.mark.parametrize("comps", [((("a", 0.6), ("b", 0.6))), (("a", -0.1), ("b", 1.1))])
def test_sample_spec_rejects_bad_ratios(comps):
    with pytest.raises(ValueError):
        SampleSpec(components=comps)


def test_sample_spec_limits():
    with pytest.raises(ValueError):
        SampleSpec(components=(("a", 1.0),), concentration_scale=6.0)
    with pytest.raises(ValueError):
        SampleSpec(components=tuple((str(i), 0.25) for i in range(4)))
    spec = SampleSpec(components=(("Cu", 0.25), ("Fe", 0.75)))
    assert spec.sample_type == "binary"
    assert list(spec.ratio_vector(["Fe", "Mg", "Cu"])) == [0.75, 0.0, 0.25]


def test_sweep_geometry():
    sw = SweepConfig()
    assert sw.n_tones == 101
    assert sw.frames_per_tone == 10
    assert sw.n_frames == 1010
    assert sw.frame_times()[-1] == pytest.approx(100.9)
    with pytest.raises(ValueError):
        SweepConfig(tone_duration=0.15)


def test_perturb_ranges():
    with pytest.raises(synth.PerturbationError):
        PerturbConfig(tilt=45.0)
    with pytest.raises(synth.PerturbationError):
        PerturbConfig(excitation_scale=1.5)
    PerturbConfig(excitation_scale=0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-30, 30), st.floats(0, 1))
def test_perturbation_shifts_angles_and_scales_motion(tilt, scale):
    spec = SampleSpec(components=((NAMES[0], 0.5), (NAMES[3], 0.5)))
    base = synth.build_scatterers(spec, SweepConfig(), RadarParams(), MATERIALS)
    moved = synth.apply_perturbation(base, PerturbConfig(tilt, scale))
    for a, b in zip(base, moved):
        assert b.angle == pytest.approx(a.angle + tilt)
        assert np.allclose(b.displacement_amp, scale * a.displacement_amp)
        assert b.amplitude == a.amplitude


def test_surface_displacement_is_ratio_weighted():
    t = np.linspace(0, 1, 50)
    a, b = NAMES[0], NAMES[1]
    mix = SampleSpec(components=((a, 0.3), (b, 0.7)))
    pa = SampleSpec(components=((a, 1.0),))
    pb = SampleSpec(components=((b, 1.0),))
    f = 60.0
    d = synth.surface_displacement(mix, f, t, MATERIALS)
    expect = 0.3 * synth.surface_displacement(pa, f, t, MATERIALS) \
        + 0.7 * synth.surface_displacement(pb, f, t, MATERIALS)
    assert np.allclose(d, expect, rtol=0, atol=1e-18)
    with pytest.raises(ValueError):
        synth.surface_displacement(mix, 200.0, t, MATERIALS)


def test_effective_medium_shifts_with_concentration():
    lo = synth.effective_medium(SampleSpec(((NAMES[0], 1.0),), 0.5), MATERIALS)
    hi = synth.effective_medium(SampleSpec(((NAMES[0], 1.0),), 5.0), MATERIALS)
    assert hi.attenuation > lo.attenuation > 0


def test_capture_shape_and_noise_seed():
    spec = SampleSpec(((NAMES[2], 1.0),), seed=7)
    a = synth.generate_capture(spec, noise_snr_db=20)
    b = synth.generate_capture(spec, noise_snr_db=20)
    assert a.frames.shape == (1010, 8, 128)
    assert np.array_equal(a.frames, b.frames)
    c = synth.generate_capture(dataclasses.replace(spec, seed=8), noise_snr_db=20)
    assert not np.array_equal(a.frames, c.frames)


def test_capture_snr():
    spec = SampleSpec(((NAMES[2], 1.0),), seed=3)
    clean = synth.generate_capture(spec).frames
    noisy = synth.generate_capture(spec, noise_snr_db=10).frames
    snr = np.mean(np.abs(clean) ** 2) / np.mean(np.abs(noisy - clean) ** 2)
    assert 10 * np.log10(snr) == pytest.approx(10.0, abs=0.1)


def test_still_water_has_constant_slow_time():
    spec = SampleSpec(((NAMES[0], 1.0),))
    cap = synth.generate_capture(spec, perturb=PerturbConfig(excitation_scale=0.0))
    assert np.allclose(cap.frames, cap.frames[0][None], atol=1e-15)


def test_dataset_protocol_counts_and_order():
    specs = synth.dataset_specs(DatasetManifest())
    assert len(specs) == 225
    types = [s.sample_type for s in specs]
    assert types == ["pure"] * 15 + ["binary"] * 90 + ["ternary"] * 120
    assert len({s.seed for s in specs}) == 225
    for s in specs:
        assert 0.4 <= s.concentration_scale <= 5.0


def test_sample_seeds_are_counter_based():
    assert synth.sample_seed(1, 5) == synth.sample_seed(1, 5)
    assert synth.sample_seed(1, 5) != synth.sample_seed(2, 5)
    a = synth.dataset_specs(DatasetManifest(root_seed=9))
    b = synth.dataset_specs(DatasetManifest(root_seed=9, pure_replicates=1))
    # the same counter gives the same seed regardless of the rest of the plan
    assert a[0].seed == b[0].seed


def test_manifest_validation():
    with pytest.raises(synth.ManifestError):
        DatasetManifest(pure_replicates=0)
    with pytest.raises(synth.ManifestError):
        DatasetManifest(binary_ratios=((0.5, 0.6),))
    with pytest.raises(synth.ManifestError):
        DatasetManifest(concentration_range=(0.1, 1.0))


def test_material_table_round_trip(tmp_path):
    import json
    doc = dict(version=1, pollutants=[dataclasses.asdict(MATERIALS[n]) for n in NAMES])
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    table = MaterialTable.load(path)
    assert table.pollutants == MATERIALS.pollutants
