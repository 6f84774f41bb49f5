import numpy as np
import pytest
from scipy.io import wavfile

from fxprofile.errors import WavFormatError
from fxprofile.wavio import read_wav, write_wav


class TestRoundTrip:
    def test_float32_bitwise(self, tmp_path, rng):
        x = rng.uniform(-1, 1, 1000).astype(np.float32)
        write_wav(tmp_path / "a.wav", x, 44100)
        y, fs = read_wav(tmp_path / "a.wav")
        assert fs == 44100.0
        assert np.array_equal(y.astype(np.float32), x)

    def test_pcm16_within_one_lsb(self, tmp_path, rng):
        x = np.concatenate([[0.5, -1.0, 0.0], rng.uniform(-1, 1, 500)])
        write_wav(tmp_path / "b.wav", x, 48000, "pcm16")
        y, fs = read_wav(tmp_path / "b.wav")
        assert fs == 48000.0
        assert y[0] == 0.5
        assert np.max(np.abs(y - x)) <= 2.0 ** -15

    def test_full_scale_positive_clips(self, tmp_path):
        write_wav(tmp_path / "c.wav", np.array([1.0]), 8000, "pcm16")
        y, _ = read_wav(tmp_path / "c.wav")
        assert y[0] == 32767 / 32768

    def test_odd_length_pcm_padding(self, tmp_path):
        # 3 samples of 16 bits are even, so force an odd payload with float32 of 1 sample
        write_wav(tmp_path / "d.wav", np.array([0.25]), 8000)
        assert read_wav(tmp_path / "d.wav")[0].tolist() == [0.25]

    @pytest.mark.parametrize("fmt", ["float32", "pcm16"])
    def test_readable_by_scipy(self, tmp_path, rng, fmt):
        x = rng.uniform(-0.9, 0.9, 256)
        write_wav(tmp_path / "e.wav", x, 22050, fmt)
        fs, y = wavfile.read(tmp_path / "e.wav")
        assert fs == 22050 and y.shape == (256,)


class TestErrors:
    def test_stereo_rejected(self, tmp_path):
        wavfile.write(tmp_path / "s.wav", 44100, np.zeros((10, 2), dtype=np.int16))
        with pytest.raises(WavFormatError, match="channels"):
            read_wav(tmp_path / "s.wav")

    def test_write_rejects_stereo(self, tmp_path):
        with pytest.raises(WavFormatError):
            write_wav(tmp_path / "x.wav", np.zeros((4, 2)), 44100)

    def test_truncated(self, tmp_path, rng):
        write_wav(tmp_path / "t.wav", rng.uniform(-1, 1, 100), 44100)
        raw = (tmp_path / "t.wav").read_bytes()
        (tmp_path / "t.wav").write_bytes(raw[:-50])
        with pytest.raises(WavFormatError, match="declares"):
            read_wav(tmp_path / "t.wav")

    def test_not_riff(self, tmp_path):
        (tmp_path / "n.wav").write_bytes(b"hello world, not audio")
        with pytest.raises(WavFormatError):
            read_wav(tmp_path / "n.wav")

    def test_unsupported_codec(self, tmp_path):
        wavfile.write(tmp_path / "i.wav", 44100, np.zeros(10, dtype=np.int32))
        with pytest.raises(WavFormatError, match="codec"):
            read_wav(tmp_path / "i.wav")

    def test_unknown_write_format(self, tmp_path):
        with pytest.raises(WavFormatError):
            write_wav(tmp_path / "x.wav", np.zeros(4), 44100, "mp3")
