import numpy as np
import pytest

from tvfx.dsp import AudioBuffer
from tvfx.wav import read_wav, write_wav


@pytest.fixture
def buf(rng):
    return AudioBuffer(np.clip(rng.standard_normal(2000) * 0.3, -1, 1), 16000)


def test_float32_round_trip_bit_exact(tmp_path, buf):
    write_wav(tmp_path / "a.wav", buf, "float32")
    back = read_wav(tmp_path / "a.wav", 16000)
    np.testing.assert_array_equal(back.samples, buf.samples.astype(np.float32).astype(np.float64))
    write_wav(tmp_path / "b.wav", back, "float32")
    np.testing.assert_array_equal(read_wav(tmp_path / "b.wav").samples, back.samples)


@pytest.mark.parametrize("fmt,bits", [("pcm16", 16), ("pcm24", 24)])
def test_pcm_round_trip_within_one_lsb(tmp_path, buf, fmt, bits):
    write_wav(tmp_path / "a.wav", buf, fmt)
    back = read_wav(tmp_path / "a.wav")
    assert back.sample_rate == 16000
    assert np.max(np.abs(back.samples - buf.samples)) <= 2.0 ** -(bits - 1)


def test_rate_checked_on_load(tmp_path, buf):
    write_wav(tmp_path / "a.wav", buf)
    with pytest.raises(ValueError):
        read_wav(tmp_path / "a.wav", expected_rate=44100)


def test_unknown_format(tmp_path, buf):
    with pytest.raises(ValueError):
        write_wav(tmp_path / "a.wav", buf, "pcm8")
