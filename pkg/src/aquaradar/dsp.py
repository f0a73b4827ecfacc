"""Range processing, bin selection, phase unwrapping and Capon angle spectra.

:func:`build_tensor` turns one capture into a non-negative
``tone x range-bin x angle`` tensor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .em import SPEED_OF_LIGHT

N_BINS = 3
ANGLE_GRID = np.linspace(-30.0, 30.0, 31)
DIAGONAL_LOADING = 1e-3


class DegenerateInputError(ValueError):
    pass


class SingularCovarianceError(np.linalg.LinAlgError):
    pass


class FrameCountError(ValueError):
    pass


@dataclass(frozen=True)
class RangeProfile:
    bins: np.ndarray
    bin_width: float


@dataclass(frozen=True)
class PhaseTensor:
    values: np.ndarray
    tone_axis: np.ndarray
    bin_axis: tuple
    angle_axis: np.ndarray


@dataclass(frozen=True)
class TensorParts:
    """Separable factors of a phase tensor, kept so ablations can recombine them."""

    sigma_phase: np.ndarray   # [tone, bin]
    mean_power: np.ndarray    # [tone, bin], unit max
    spectra: np.ndarray       # [tone, bin, angle], unit sum

    def combine(self, drop=None):
        sigma, power, spec = self.sigma_phase, self.mean_power, self.spectra
        if drop == "phase":
            sigma = np.ones_like(sigma)
        elif drop == "power":
            power = np.ones_like(power)
        elif drop == "aoa":
            spec = np.full_like(spec, 1.0 / spec.shape[-1])
        elif drop is not None:
            raise ValueError(f"unknown feature to drop: {drop!r}")
        return (sigma * power)[:, :, None] * spec


def range_fft(frame, bandwidth=None) -> RangeProfile:
    """Unwindowed DFT over fast time (last axis)."""
    frame = np.asarray(frame)
    n = frame.shape[-1]
    if n < 2 or n & (n - 1):
        raise ValueError(f"fast-time length must be a power of two >= 2, got {n}")
    width = SPEED_OF_LIGHT / (2.0 * bandwidth) if bandwidth else np.nan
    return RangeProfile(bins=np.fft.fft(frame, axis=-1), bin_width=width)


def select_bins(profiles, n_select=N_BINS, window=2):
    """Pick the most stable, strongest range bin and its best neighbours.

    ``profiles`` is ``[frame, ..., bin]``; power is averaged over any middle
    axes. Score is ``mean / (1 + CoV)`` of power across frames. The top bin
    is joined by the ``n_select - 1`` best-scoring bins within ``window``
    of it. Ties go to the lower index.
    """
    prof = np.asarray(profiles.bins if isinstance(profiles, RangeProfile) else profiles)
    if prof.shape[0] < 100:
        raise ValueError("bin selection needs at least 100 frames")
    power = np.abs(prof) ** 2
    if power.ndim > 2:
        power = power.mean(axis=tuple(range(1, power.ndim - 1)))
    n_bins = power.shape[1]
    if power.sum() < 1e-15:
        raise DegenerateInputError("total power below 1e-15")
    mean = power.mean(axis=0)
    std = power.std(axis=0)
    cov = np.divide(std, mean, out=np.zeros_like(mean), where=mean > 0)
    score = mean / (1.0 + cov)

    order = np.lexsort((np.arange(n_bins), -score))
    top = int(order[0])
    near = [int(b) for b in order[1:] if abs(int(b) - top) <= window]
    if len(near) < n_select - 1:
        near += [int(b) for b in order[1:] if int(b) not in near]
    return tuple(sorted([top] + near[:n_select - 1]))


def unwrap_phase(wrapped):
    """Unwrap a 1-D phase sequence; each step is folded into ``(-pi, pi]``."""
    p = np.asarray(wrapped, dtype=float)
    if p.size == 0:
        raise ValueError("empty phase sequence")
    d = np.diff(p)
    folded = np.pi - np.mod(np.pi - d, 2.0 * np.pi)
    return np.concatenate([p[:1], p[0] + np.cumsum(folded)])


def steering_matrix(angles_deg, n_antennas, spacing=0.5):
    """Columns ``a(theta)_m = exp(j 2 pi m (delta/lambda) sin theta)``."""
    m = np.arange(n_antennas)[:, None]
    return np.exp(2j * np.pi * spacing * m * np.sin(np.deg2rad(np.asarray(angles_deg)))[None, :])


def capon_spectrum(snapshots, angles=ANGLE_GRID, loading=DIAGONAL_LOADING, center=False):
    """Unit-sum Capon (MVDR) spatial spectrum from ``[snapshot, antenna]`` data.

    ``R = (1/N) sum x x^H + loading * tr(R)/M * I``; ``P = 1 / a^H R^-1 a``.
    With ``center`` the snapshot mean is removed first, so the spectrum
    describes only the moving part of the scene.
    """
    x = np.asarray(snapshots)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least 2 snapshots as [snapshot, antenna]")
    raw_power = np.vdot(x, x).real
    if center:
        x = x - x.mean(axis=0)
    n, m = x.shape
    r = x.T @ x.conj() / n
    tr = np.trace(r).real
    # centering a static scene leaves only rounding residue
    if not tr > 1e-20 * raw_power / n or tr == 0:
        raise SingularCovarianceError("covariance trace is zero; loading cannot regularize")
    r = r + loading * tr / m * np.eye(m)
    a = steering_matrix(angles, m)
    ria = np.linalg.solve(r, a)
    p = 1.0 / np.real(np.einsum("ma,ma->a", a.conj(), ria))
    return p / p.sum()


def tensor_parts(capture, bins=None, center=False) -> tuple[TensorParts, tuple]:
    """Per-tone phase spread, mean power and angle spectra at the selected bins."""
    sweep = capture.sweep
    frames = capture.frames
    if frames.shape[0] != sweep.n_frames:
        raise FrameCountError(f"expected {sweep.n_frames} frames, got {frames.shape[0]}")
    prof = range_fft(frames, capture.radar.bandwidth).bins  # [frame, antenna, bin]
    if bins is None:
        bins = select_bins(prof)
    n_tones, fpt = sweep.n_tones, sweep.frames_per_tone

    ref = prof[:, 0, list(bins)]  # reference antenna
    phase = np.angle(ref).reshape(n_tones, fpt, len(bins))
    sigma = np.empty((n_tones, len(bins)))
    for i in range(n_tones):
        for r in range(len(bins)):
            sigma[i, r] = unwrap_phase(phase[i, :, r]).std()
    power = np.abs(ref).reshape(n_tones, fpt, len(bins)).mean(axis=1)
    peak = power.max()
    power = power / peak if peak > 0 else power

    spectra = np.empty((n_tones, len(bins), ANGLE_GRID.size))
    snaps = prof[:, :, list(bins)].reshape(n_tones, fpt, prof.shape[1], len(bins))
    for i in range(n_tones):
        for r in range(len(bins)):
            try:
                spectra[i, r] = capon_spectrum(snaps[i, :, :, r], center=center)
            except SingularCovarianceError:
                # no signal in this window
                spectra[i, r] = 1.0 / ANGLE_GRID.size
    return TensorParts(sigma, power, spectra), tuple(int(b) for b in bins)


def build_tensor(capture, bins=None, drop=None, center=False):
    """``X[i, r, a] = sigma_phase(i, r) * P_mean(i, r) * S_capon(i, r, a)``.

    Returns the :class:`PhaseTensor` and its :class:`TensorParts`.
    """
    parts, bins = tensor_parts(capture, bins, center)
    values = parts.combine(drop)
    tensor = PhaseTensor(values=values, tone_axis=capture.sweep.tones, bin_axis=bins,
                         angle_axis=ANGLE_GRID.copy())
    return tensor, parts
