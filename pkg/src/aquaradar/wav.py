"""Acoustic sweep WAV: one full-scale sine per second, 25 to 125 Hz."""
from __future__ import annotations

import wave

import numpy as np

SAMPLE_RATE = 44_100
FULL_SCALE = 32_767


def sweep_samples(tone_start=25, tone_end=125, tone_step=1, tone_duration=1.0,
                  sample_rate=SAMPLE_RATE, amplitude=FULL_SCALE):
    """16-bit samples; every tone restarts at phase zero on its own boundary."""
    n = int(round(tone_duration * sample_rate))
    t = np.arange(n) / sample_rate
    tones = np.arange(tone_start, tone_end + tone_step / 2, tone_step)
    segs = [np.round(amplitude * np.sin(2 * np.pi * f * t)) for f in tones]
    return np.concatenate(segs).astype("<i2")


def write_sweep_wav(path, **kwargs):
    samples = sweep_samples(**kwargs)
    rate = kwargs.get("sample_rate", SAMPLE_RATE)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(samples.tobytes())
    return samples.size
