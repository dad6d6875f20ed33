import numpy as np
import pytest
import soundfile as sf

from larsen.core import TimeSignal
from larsen.errors import ConfigurationError, DataError
from larsen.io import Corpus, RunManifest, SyntheticCorpus, read_tensor, read_wav, write_tensor, write_wav
from larsen.io.corpus import split_utterances
from larsen.io.manifest import hash_files
from larsen.io.tensors import decode_tensor, encode_tensor

np.random.seed(0)
signal = TimeSignal(np.random.normal(0, 0.3, 2000))


def test_wav_subtypes(tmp_path):
    write_wav(tmp_path / "double.wav", signal, "double")
    assert np.array_equal(read_wav(tmp_path / "double.wav").samples, signal.samples)

    write_wav(tmp_path / "float.wav", signal)
    read = read_wav(tmp_path / "float.wav", sample_rate=16000)
    assert np.array_equal(read.samples, signal.samples.astype(np.float32).astype(float))

    loud = signal * 10
    write_wav(tmp_path / "pcm.wav", loud, "pcm16")
    pcm = read_wav(tmp_path / "pcm.wav").samples
    assert np.max(pcm) <= 1 and np.min(pcm) >= -1
    np.testing.assert_allclose(pcm, np.clip(loud.samples, -1, 1 - 2**-15), atol=2e-4)

    with pytest.raises(ConfigurationError, match="unknown WAV subtype"):
        write_wav(tmp_path / "x.wav", signal, "mp3")


def test_wav_errors(tmp_path):
    with pytest.raises(DataError, match="does not exist"):
        read_wav(tmp_path / "missing.wav")

    sf.write(str(tmp_path / "stereo.wav"), np.zeros((100, 2)), 16000)
    with pytest.raises(DataError, match="2 channels"):
        read_wav(tmp_path / "stereo.wav")

    write_wav(tmp_path / "8k.wav", TimeSignal(signal.samples, 8000))
    with pytest.raises(DataError, match="8000 Hz"):
        read_wav(tmp_path / "8k.wav", sample_rate=16000)

    (tmp_path / "junk.wav").write_bytes(b"not a wav file")
    with pytest.raises(DataError, match="cannot read"):
        read_wav(tmp_path / "junk.wav")


def test_tensors(tmp_path):
    array = np.random.normal(size=(2, 5, 7))
    path = write_tensor(tmp_path / "t.ahsf", array)
    data = path.read_bytes()
    assert data[:4] == b"AHSF"
    assert np.frombuffer(data[4:20], dtype="<u4").tolist() == [3, 2, 5, 7]
    assert len(data) == 20 + array.size * 4
    assert np.array_equal(read_tensor(path), array.astype(np.float32))

    assert decode_tensor(encode_tensor(np.zeros((0, 3)))).shape == (0, 3)
    with pytest.raises(DataError, match="complex"):
        encode_tensor(np.ones(3, dtype=complex))
    with pytest.raises(DataError, match="magic"):
        decode_tensor(b"XXXX" + data[4:])
    with pytest.raises(DataError, match="payload"):
        decode_tensor(data[:-4])


def test_manifest(tmp_path):
    for name in ("a.wav", "b.wav"):
        write_wav(tmp_path / name, signal)
    manifest = RunManifest(
        spec_hash="0" * 64,
        spec={"seed": 1},
        version="0.1.0",
        scenarios=[{"id": "train/00000", "split": "train", "files": hash_files(tmp_path, ["b.wav", "a.wav"])}],
    )
    manifest.save(tmp_path)
    loaded = RunManifest.load(tmp_path)
    assert loaded == manifest
    assert list(loaded.scenarios[0]["files"]) == ["a.wav", "b.wav"]
    assert loaded.split("train") == manifest.scenarios and loaded.split("test") == []
    assert loaded.verify(tmp_path) == []

    write_wav(tmp_path / "a.wav", signal * 0.5)
    (tmp_path / "b.wav").unlink()
    assert loaded.verify(tmp_path) == ["a.wav", "b.wav"]

    with pytest.raises(DataError, match="no manifest"):
        RunManifest.load(tmp_path / "elsewhere")


def test_corpus(tmp_path):
    (tmp_path / "spk1").mkdir()
    write_wav(tmp_path / "spk1" / "u1.wav", signal)
    write_wav(tmp_path / "u0.wav", signal * 0.5)
    write_wav(tmp_path / "silent.wav", TimeSignal.zeros(100))

    corpus = Corpus(tmp_path)
    assert corpus.ids == ["silent", "spk1/u1", "u0"]
    assert np.array_equal(corpus.load("spk1/u1").samples, signal.samples.astype(np.float32).astype(float))
    assert corpus.describe()["utterances"] == 3
    with pytest.raises(DataError, match="silent"):
        corpus.load("silent")
    with pytest.raises(DataError, match="unknown utterance"):
        corpus.load("u2")

    (tmp_path / "empty").mkdir()
    with pytest.raises(DataError, match="no .wav file"):
        Corpus(tmp_path / "empty")
    with pytest.raises(DataError, match="does not exist"):
        Corpus(tmp_path / "missing")


def test_synthetic_corpus():
    corpus = SyntheticCorpus(3, duration=1.0, seed=4)
    assert len(corpus) == 3
    a = corpus.load("synthetic_00001")
    assert len(a) == 16000
    assert np.array_equal(a.samples, SyntheticCorpus(3, duration=1.0, seed=4).load("synthetic_00001").samples)
    assert not np.array_equal(a.samples, corpus.load("synthetic_00002").samples)
    with pytest.raises(DataError):
        SyntheticCorpus(0)


def test_split_utterances():
    ids = [f"u{i}" for i in range(10)]
    splits = split_utterances(ids, {"train": 8, "val": 1, "test": 1}, np.random.default_rng(0))
    assert [len(splits[name]) for name in ("train", "val", "test")] == [8, 1, 1]
    assert sorted(sum(splits.values(), [])) == sorted(ids)

    small = split_utterances(ids[:3], {"train": 100, "val": 1, "test": 1}, np.random.default_rng(0))
    assert all(len(v) == 1 for v in small.values())
    assert "val" not in split_utterances(ids, {"train": 1, "val": 0}, np.random.default_rng(0))
    with pytest.raises(DataError):
        split_utterances(ids[:2], {"train": 1, "val": 1, "test": 1}, np.random.default_rng(0))
