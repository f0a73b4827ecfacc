"""Electromagnetic and kinematic relations for a radar looking at a liquid layer.

Normal incidence only. Impedances use the real part of the relative
permittivity; loss enters through the complex wavenumber of the slab.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
FREE_SPACE_IMPEDANCE = 376.730313668

_DEGENERATE_TOL = 1e-12


class DegenerateImpedanceError(ValueError):
    """Raised when two impedances sum to (numerically) zero."""


class ResonantDenominatorError(ValueError):
    """Raised when the multiple-reflection series has no finite sum."""


@dataclass(frozen=True)
class MediumSpec:
    """One homogeneous, non-magnetic layer.

    ``thickness`` is ``None`` for semi-infinite half-spaces.
    """

    rel_permittivity_real: float = 1.0
    attenuation: float = 0.0
    thickness: float | None = None
    rel_permeability: float = 1.0

    def __post_init__(self):
        if not self.rel_permittivity_real >= 1.0:
            raise ValueError(f"rel_permittivity_real must be >= 1, got {self.rel_permittivity_real}")
        if not self.attenuation >= 0.0:
            raise ValueError(f"attenuation must be >= 0, got {self.attenuation}")
        if self.thickness is not None and not self.thickness > 0.0:
            raise ValueError(f"thickness must be > 0, got {self.thickness}")
        if self.rel_permeability != 1.0:
            raise ValueError("only non-magnetic media (rel_permeability = 1) are supported")


AIR = MediumSpec()


@dataclass(frozen=True)
class InterfaceCoeffs:
    r: complex
    t: complex


@dataclass(frozen=True)
class RadarParams:
    """FMCW chirp and array configuration.

    Defaults approximate a 77 GHz single-chip radar with 4.88 cm range
    resolution, one chirp per frame and an 8-element virtual azimuth array.
    """

    carrier_freq: float = 7.7e10
    bandwidth: float = 3.0737e9
    chirp_duration: float = 50e-6
    chirp_interval: float = 0.1
    n_samples: int = 128
    n_antennas: int = 8

    def __post_init__(self):
        for name in ("carrier_freq", "bandwidth", "chirp_duration", "chirp_interval"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_samples < 2 or self.n_samples & (self.n_samples - 1):
            raise ValueError("n_samples must be a power of two >= 2")
        if self.n_antennas < 2:
            raise ValueError("n_antennas must be >= 2")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def slope(self) -> float:
        return self.bandwidth / self.chirp_duration

    @property
    def sample_interval(self) -> float:
        return self.chirp_duration / self.n_samples

    @property
    def range_resolution(self) -> float:
        return SPEED_OF_LIGHT / (2.0 * self.bandwidth)


def intrinsic_impedance(medium: MediumSpec) -> complex:
    """Wave impedance ``Z0 / sqrt(eps_r')`` of a non-magnetic medium, in ohms."""
    return complex(FREE_SPACE_IMPEDANCE / np.sqrt(medium.rel_permittivity_real))


def fresnel(z_a: complex, z_b: complex) -> InterfaceCoeffs:
    """Normal-incidence reflection and transmission going from medium a into b."""
    total = z_a + z_b
    if abs(total) < _DEGENERATE_TOL:
        raise DegenerateImpedanceError(f"|Z_a + Z_b| = {abs(total):.3e} ohm")
    return InterfaceCoeffs(r=(z_b - z_a) / total, t=2.0 * z_b / total)


def complex_wavenumber(medium: MediumSpec, freq: float) -> complex:
    """``k' = k - j*alpha`` with ``k = 2*pi*f*sqrt(eps_r')/c``."""
    if not freq > 0:
        raise ValueError("freq must be positive")
    k = 2.0 * np.pi * freq * np.sqrt(medium.rel_permittivity_real) / SPEED_OF_LIGHT
    return complex(k, -medium.attenuation)


def _slab_terms(outer_a: MediumSpec, slab: MediumSpec, outer_b: MediumSpec, freq: float):
    if slab.thickness is None:
        raise ValueError("slab medium needs a thickness")
    z1, z2, z3 = (intrinsic_impedance(m) for m in (outer_a, slab, outer_b))
    i12 = fresnel(z1, z2)
    i21 = fresnel(z2, z1)
    i23 = fresnel(z2, z3)
    k2 = complex_wavenumber(slab, freq)
    round_trip = np.exp(-2j * k2 * slab.thickness)
    return i12, i21, i23, round_trip


def slab_reflection(outer_a: MediumSpec, slab: MediumSpec, outer_b: MediumSpec,
                    freq: float) -> complex:
    """Net reflection coefficient of a finite slab between two half-spaces.

    Sums the direct reflection and all internal round trips::

        R = r12 + t12 t21 r23 e / (1 - r21 r23 e),   e = exp(-2j k2' d)

    The wave re-enters the incident medium through the 2->1 interface,
    so the return leg uses ``t21``.
    """
    i12, i21, i23, e = _slab_terms(outer_a, slab, outer_b, freq)
    denom = 1.0 - i21.r * i23.r * e
    if abs(denom) < _DEGENERATE_TOL:
        raise ResonantDenominatorError(f"|1 - r21 r23 e| = {abs(denom):.3e}")
    return complex(i12.r + i12.t * i21.t * i23.r * e / denom)


def slab_reflection_series(outer_a: MediumSpec, slab: MediumSpec, outer_b: MediumSpec,
                           freq: float, n_terms: int = 50) -> complex:
    """Partial sum of the multiple-reflection series (oracle for the closed form)."""
    i12, i21, i23, e = _slab_terms(outer_a, slab, outer_b, freq)
    ratio = i21.r * i23.r * e
    total = 0j
    term = 1.0 + 0j
    for _ in range(n_terms):
        total += term
        term *= ratio
    return complex(i12.r + i12.t * i21.t * i23.r * e * total)


def reflected_power(reflection: complex, incident_power: float) -> float:
    if incident_power < 0:
        raise ValueError("incident_power must be >= 0")
    return float(abs(reflection) ** 2 * incident_power)


def displacement_to_phase(displacement, wavelength: float):
    """Round-trip phase change ``4*pi*d/lambda`` for a surface displacement."""
    if not wavelength > 0:
        raise ValueError("wavelength must be positive")
    return 4.0 * np.pi * np.asarray(displacement) / wavelength


def phase_to_displacement(phase, phase_ref, wavelength: float):
    """Inverse of :func:`displacement_to_phase` relative to ``phase_ref``."""
    if not wavelength > 0:
        raise ValueError("wavelength must be positive")
    return wavelength / (4.0 * np.pi) * (np.asarray(phase) - np.asarray(phase_ref))


def beat_freq_to_range(f_b, params: RadarParams):
    f_b = np.asarray(f_b, dtype=float)
    if np.any(f_b < 0):
        raise ValueError("beat frequency must be >= 0")
    return SPEED_OF_LIGHT * f_b / (2.0 * params.slope)


def range_to_beat_freq(distance, params: RadarParams):
    distance = np.asarray(distance, dtype=float)
    if np.any(distance < 0):
        raise ValueError("range must be >= 0")
    return 2.0 * distance * params.slope / SPEED_OF_LIGHT


def doppler_phase(velocity, params: RadarParams):
    """Chirp-to-chirp phase step ``4*pi*v*T_r/lambda`` of a moving target."""
    return 4.0 * np.pi * np.asarray(velocity) * params.chirp_interval / params.wavelength
