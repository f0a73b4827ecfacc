import wave

import numpy as np

from aquaradar import wav


def test_short_sweep_file(tmp_path):
    path = tmp_path / "s.wav"
    n = wav.write_sweep_wav(path, tone_start=25, tone_end=27, tone_duration=0.5)
    assert n == 3 * 22050
    with wave.open(str(path)) as fh:
        assert fh.getnchannels() == 1
        assert fh.getsampwidth() == 2
        assert fh.getframerate() == 44100
        assert fh.getnframes() == n


def test_each_tone_starts_at_zero_phase():
    s = wav.sweep_samples(tone_start=30, tone_end=32)
    for i in range(3):
        seg = s[i * 44100:(i + 1) * 44100]
        assert seg[0] == 0
        assert seg[1] > 0
        assert np.abs(seg).max() <= 32767
