"""Synthetic FMCW captures of a vibrating liquid surface.

A loudspeaker sweeps sinusoidal tones under the container; each pollutant
moves its own set of surface scatterers with a damped second-order
resonance. The radar sees one chirp per frame on an 8-element virtual
array, so every tone contributes ``frame_rate * tone_duration`` frames.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterator, Sequence

import numpy as np

from .em import (AIR, MediumSpec, RadarParams, range_to_beat_freq,
                 slab_reflection)

N_SCATTERERS = 4
DEFAULT_SURFACE_RANGE = 0.30
RATIO_TOL = 1e-12


class UnknownPollutantError(KeyError):
    pass


class ManifestError(ValueError):
    pass


class PerturbationError(ValueError):
    pass


@dataclass(frozen=True)
class PollutantModel:
    """Synthesis parameters of one pollutant (synthetic values)."""

    name: str
    permittivity_delta: float
    attenuation_coeff: float
    resonance_freq: float
    damping_ratio: float
    displacement_gain: float
    angle_mean: float
    angle_spread: float
    material_seed: int = 0

    def __post_init__(self):
        if not 25.0 <= self.resonance_freq <= 125.0:
            raise ValueError(f"{self.name}: resonance_freq must lie in [25, 125] Hz")
        if not 0.0 < self.damping_ratio < 1.0:
            raise ValueError(f"{self.name}: damping_ratio must lie in (0, 1)")
        if not 1e-7 <= self.displacement_gain <= 1e-4:
            raise ValueError(f"{self.name}: displacement_gain must lie in [1e-7, 1e-4] m")
        if not -30.0 <= self.angle_mean <= 30.0:
            raise ValueError(f"{self.name}: angle_mean must lie in [-30, 30] deg")
        if not self.angle_spread > 0:
            raise ValueError(f"{self.name}: angle_spread must be positive")
        if self.attenuation_coeff < 0:
            raise ValueError(f"{self.name}: attenuation_coeff must be >= 0")

    def response(self, freq):
        """Resonator magnitude ``|H(f)|``; equals ``1/(2 zeta)`` at ``f_res``."""
        r = np.asarray(freq, dtype=float) / self.resonance_freq
        return 1.0 / np.sqrt((1.0 - r ** 2) ** 2 + (2.0 * self.damping_ratio * r) ** 2)

    @property
    def peak_freq(self) -> float:
        """Frequency of the displacement maximum, ``f_res sqrt(1 - 2 zeta^2)``."""
        return self.resonance_freq * np.sqrt(1.0 - 2.0 * self.damping_ratio ** 2)

    def scatterer_angles(self, n=N_SCATTERERS):
        """Angles (deg) of this material's scatterers, fixed by ``material_seed``."""
        rng = np.random.default_rng(self.material_seed)
        return rng.normal(self.angle_mean, self.angle_spread, size=n)


@dataclass(frozen=True)
class MaterialTable:
    pollutants: dict
    water_permittivity: float = 81.0
    liquid_depth: float = 0.02
    version: int = 1

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.pollutants)

    def __getitem__(self, name) -> PollutantModel:
        try:
            return self.pollutants[name]
        except KeyError:
            raise UnknownPollutantError(f"unknown pollutant {name!r}") from None

    @classmethod
    def from_dict(cls, doc):
        models = [PollutantModel(**p) for p in doc["pollutants"]]
        return cls(pollutants={m.name: m for m in models},
                   water_permittivity=float(doc.get("water_permittivity", 81.0)),
                   liquid_depth=float(doc.get("liquid_depth", 0.02)),
                   version=int(doc.get("version", 1)))

    @classmethod
    def load(cls, path=None):
        """Load a material table; ``None`` gives the packaged default."""
        if path is None:
            text = resources.files("aquaradar").joinpath("data/materials_v1.json").read_text()
        else:
            with open(path) as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))


def default_materials() -> MaterialTable:
    return MaterialTable.load()


@dataclass(frozen=True)
class SampleSpec:
    components: tuple = ()
    concentration_scale: float = 1.0
    replicate_id: int = 0
    seed: int = 0

    def __post_init__(self):
        comps = tuple((str(n), float(r)) for n, r in self.components)
        object.__setattr__(self, "components", comps)
        if len(comps) > 3:
            raise ValueError("a sample holds at most 3 components")
        if len({n for n, _ in comps}) != len(comps):
            raise ValueError("duplicate component in sample")
        ratios = [r for _, r in comps]
        if any(r < 0 for r in ratios):
            raise ValueError("ratios must be non-negative")
        if comps and abs(sum(ratios) - 1.0) > RATIO_TOL:
            raise ValueError(f"ratios must sum to 1, got {sum(ratios)!r}")
        if not 0.4 <= self.concentration_scale <= 5.0:
            raise ValueError("concentration_scale must lie in [0.4, 5] mg/L")

    @property
    def names(self):
        return tuple(n for n, _ in self.components)

    @property
    def sample_type(self) -> str:
        return {0: "water", 1: "pure", 2: "binary", 3: "ternary"}[len(self.components)]

    def ratio_vector(self, names: Sequence[str]):
        lookup = dict(self.components)
        return np.array([lookup.get(n, 0.0) for n in names])


@dataclass(frozen=True)
class SweepConfig:
    tone_start: float = 25.0
    tone_end: float = 125.0
    tone_step: float = 1.0
    tone_duration: float = 1.0
    frame_rate: float = 10.0

    def __post_init__(self):
        if not (self.tone_step > 0 and self.tone_end >= self.tone_start > 0):
            raise ValueError("invalid tone range")
        if not (self.tone_duration > 0 and self.frame_rate > 0):
            raise ValueError("tone_duration and frame_rate must be positive")
        fpt = self.tone_duration * self.frame_rate
        if abs(fpt - round(fpt)) > 1e-9 or round(fpt) < 2:
            raise ValueError("each tone must span a whole number (>= 2) of frames")

    @property
    def tones(self):
        n = int(round((self.tone_end - self.tone_start) / self.tone_step)) + 1
        return self.tone_start + self.tone_step * np.arange(n)

    @property
    def n_tones(self) -> int:
        return self.tones.size

    @property
    def frames_per_tone(self) -> int:
        return int(round(self.tone_duration * self.frame_rate))

    @property
    def n_frames(self) -> int:
        return self.n_tones * self.frames_per_tone

    def frame_times(self):
        """Exact frame timestamps ``n / frame_rate`` (no jitter)."""
        return np.arange(self.n_frames) / self.frame_rate

    def frame_tones(self):
        return np.repeat(self.tones, self.frames_per_tone)


@dataclass(frozen=True)
class PerturbConfig:
    """Simulated rig changes: radar tilt, speaker level, bottom reflector.

    ``excitation_scale = 0`` is accepted to express still water.
    """

    tilt: float = 0.0
    excitation_scale: float = 1.0
    reflector_permittivity: float = 1.0

    def __post_init__(self):
        if not -30.0 <= self.tilt <= 30.0:
            raise PerturbationError(f"tilt must lie in [-30, 30] deg, got {self.tilt}")
        if not 0.0 <= self.excitation_scale <= 1.0:
            raise PerturbationError(f"excitation_scale must lie in [0, 1], got {self.excitation_scale}")
        if not self.reflector_permittivity >= 1.0:
            raise PerturbationError("reflector_permittivity must be >= 1")


@dataclass(frozen=True)
class Scatterer:
    pollutant: str
    angle: float        # deg
    amplitude: float
    displacement_amp: np.ndarray = field(repr=False)  # per tone, m


@dataclass(frozen=True)
class RawCapture:
    frames: np.ndarray  # [frame, antenna, fast-time]
    sweep: SweepConfig
    radar: RadarParams
    truth: SampleSpec


def effective_medium(spec: SampleSpec, materials: MaterialTable) -> MediumSpec:
    """Liquid layer whose permittivity and loss shift linearly with concentration."""
    eps = materials.water_permittivity
    alpha = 0.0
    for name, ratio in spec.components:
        p = materials[name]
        eps += ratio * spec.concentration_scale * p.permittivity_delta
        alpha += ratio * spec.concentration_scale * p.attenuation_coeff
    return MediumSpec(rel_permittivity_real=eps, attenuation=alpha,
                      thickness=materials.liquid_depth)


def surface_displacement(spec: SampleSpec, tone_freq, t, materials: MaterialTable,
                         excitation_scale=1.0):
    """Ratio-weighted surface displacement ``sum_j c_j g_j |H_j(f)| sin(2 pi f t)``."""
    if not np.all((np.asarray(tone_freq) >= 25.0) & (np.asarray(tone_freq) <= 125.0)):
        raise ValueError("tone_freq must lie in [25, 125] Hz")
    amp = 0.0
    for name, ratio in spec.components:
        p = materials[name]
        amp = amp + ratio * p.displacement_gain * p.response(tone_freq)
    return excitation_scale * amp * np.sin(2.0 * np.pi * np.asarray(tone_freq) * np.asarray(t))


def apply_perturbation(scatterers: Sequence[Scatterer], perturb: PerturbConfig):
    """Tilt offsets every angle; ``excitation_scale`` scales every displacement."""
    if not isinstance(perturb, PerturbConfig):
        raise PerturbationError("expected a PerturbConfig")
    return [Scatterer(s.pollutant, s.angle + perturb.tilt, s.amplitude,
                      s.displacement_amp * perturb.excitation_scale) for s in scatterers]


def build_scatterers(spec: SampleSpec, sweep: SweepConfig, radar: RadarParams,
                     materials: MaterialTable, reflector_permittivity=1.0):
    """Per-pollutant scatterer sets before any perturbation.

    Amplitude is ``|R| * ratio * cos(theta) / N_SCATTERERS`` with ``R`` the
    reflection of the effective liquid layer; all scatterers of one
    pollutant share that pollutant's displacement.
    """
    lower = AIR if reflector_permittivity == 1.0 else MediumSpec(reflector_permittivity)
    refl = abs(slab_reflection(AIR, effective_medium(spec, materials), lower, radar.carrier_freq))
    tones = sweep.tones
    out = []
    for name, ratio in spec.components:
        p = materials[name]
        disp = p.displacement_gain * p.response(tones)
        for angle in p.scatterer_angles():
            weight = np.cos(np.deg2rad(angle)) / N_SCATTERERS
            out.append(Scatterer(name, float(angle), refl * ratio * weight, disp))
    return out


def generate_capture(spec: SampleSpec, sweep: SweepConfig | None = None,
                     radar: RadarParams | None = None, noise_snr_db=np.inf,
                     perturb: PerturbConfig | None = None,
                     materials: MaterialTable | None = None,
                     surface_range=DEFAULT_SURFACE_RANGE) -> RawCapture:
    """Synthesize the IF frames of one sample.

    ``s[n, m, tau] = sum_j A_j exp(j(2 pi f_b tau dt + 4 pi d_j(t_n)/lambda
    + pi m sin(theta_j)))`` plus complex white noise at ``noise_snr_db``
    relative to the mean signal power. Noise is drawn from ``spec.seed``.
    """
    sweep = sweep or SweepConfig()
    radar = radar or RadarParams()
    perturb = perturb or PerturbConfig()
    materials = materials or default_materials()

    scat = build_scatterers(spec, sweep, radar, materials, perturb.reflector_permittivity)
    scat = apply_perturbation(scat, perturb)

    t = sweep.frame_times()
    tone_idx = np.repeat(np.arange(sweep.n_tones), sweep.frames_per_tone)
    osc = np.sin(2.0 * np.pi * sweep.frame_tones() * t)
    m = np.arange(radar.n_antennas)
    kappa = 4.0 * np.pi / radar.wavelength

    # slow-time x antenna response; the fast-time beat tone is common to all
    slow = np.zeros((sweep.n_frames, radar.n_antennas), dtype=complex)
    for s in scat:
        phase = kappa * s.displacement_amp[tone_idx] * osc
        steer = np.exp(1j * np.pi * m * np.sin(np.deg2rad(s.angle)))
        slow += s.amplitude * np.exp(1j * phase)[:, None] * steer[None, :]

    f_b = range_to_beat_freq(surface_range, radar)
    tau = np.arange(radar.n_samples) * radar.sample_interval
    beat = np.exp(2j * np.pi * f_b * tau)
    frames = slow[:, :, None] * beat[None, None, :]

    if np.isfinite(noise_snr_db):
        power = np.mean(np.abs(frames) ** 2)
        sigma = np.sqrt(power / 10.0 ** (noise_snr_db / 10.0) / 2.0)
        rng = np.random.default_rng(spec.seed)
        frames = frames + sigma * (rng.standard_normal(frames.shape)
                                   + 1j * rng.standard_normal(frames.shape))
    return RawCapture(frames=frames, sweep=sweep, radar=radar, truth=spec)


# --------------------------------------------------------------------------
# dataset protocol

BINARY_RATIOS = ((0.25, 0.75), (0.5, 0.5), (0.75, 0.25))
TERNARY_RATIOS = ((1 / 3, 1 / 3, 1 / 3), (0.2, 0.4, 0.4), (0.4, 0.2, 0.4), (0.4, 0.4, 0.2))


@dataclass(frozen=True)
class DatasetManifest:
    root_seed: int = 20240601
    materials_path: str | None = None
    pure_replicates: int = 3
    mixture_replicates: int = 3
    binary_ratios: tuple = BINARY_RATIOS
    ternary_ratios: tuple = TERNARY_RATIOS
    noise_snr_db: float = 20.0
    concentration_range: tuple = (0.4, 5.0)
    perturb: PerturbConfig = PerturbConfig()

    def __post_init__(self):
        if self.pure_replicates < 1 or self.mixture_replicates < 1:
            raise ManifestError("replicate counts must be >= 1")
        for ratios, k in ((self.binary_ratios, 2), (self.ternary_ratios, 3)):
            for r in ratios:
                if len(r) != k or min(r) < 0 or abs(sum(r) - 1.0) > 1e-9:
                    raise ManifestError(f"bad ratio tuple {r!r}")
        lo, hi = self.concentration_range
        if not 0.4 <= lo <= hi <= 5.0:
            raise ManifestError("concentration_range must lie within [0.4, 5]")

    def materials(self) -> MaterialTable:
        return MaterialTable.load(self.materials_path)


def sample_seed(root_seed: int, index: int) -> int:
    """Seed of sample ``index``: a counter-keyed child of the root seed."""
    ss = np.random.SeedSequence(entropy=root_seed, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _normalized(ratios):
    total = sum(ratios)
    return tuple(r / total for r in ratios)


def dataset_specs(manifest: DatasetManifest, materials: MaterialTable | None = None):
    """All sample specs in protocol order: pures, binaries, ternaries."""
    materials = materials or manifest.materials()
    names = materials.names
    if len(names) != 5:
        raise ManifestError(f"the protocol needs 5 pollutants, table has {len(names)}")
    plan = [((n,), (1.0,), manifest.pure_replicates) for n in names]
    for pair in itertools.combinations(names, 2):
        plan += [(pair, r, manifest.mixture_replicates) for r in manifest.binary_ratios]
    for triple in itertools.combinations(names, 3):
        plan += [(triple, r, manifest.mixture_replicates) for r in manifest.ternary_ratios]

    specs = []
    lo, hi = manifest.concentration_range
    for comps, ratios, reps in plan:
        ratios = _normalized(ratios)
        for rep in range(reps):
            index = len(specs)
            seed = sample_seed(manifest.root_seed, index)
            conc_rng = np.random.default_rng(
                np.random.SeedSequence(entropy=manifest.root_seed, spawn_key=(index, 1)))
            specs.append(SampleSpec(components=tuple(zip(comps, ratios)),
                                    concentration_scale=float(conc_rng.uniform(lo, hi)),
                                    replicate_id=rep, seed=seed))
    return specs


def generate_dataset(manifest: DatasetManifest, sweep=None, radar=None) -> Iterator[RawCapture]:
    """Stream the captures of every sample in the manifest."""
    materials = manifest.materials()
    for spec in dataset_specs(manifest, materials):
        yield generate_capture(spec, sweep, radar, manifest.noise_snr_db,
                               manifest.perturb, materials)
