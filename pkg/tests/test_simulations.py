import json

import numpy as np
import pytest

from larsen import ExperimentSpec, GainSchedule, ScenarioConfig, TimeSignal, example_noise, example_speech
from larsen.errors import ConfigurationError, DataError, ScalingError
from larsen.experiment import SamplingRanges
from larsen.nonlinearity import NonlinearityModel
from larsen.room import RirSampling, RirSet, sample_rir_set
from larsen.simulations import (
    active_mask,
    make_teacher_forced_mixture,
    ratio_scale,
    scalar_scenario,
    set_active_level,
)

fs = 16000
speech = example_speech(1.0, fs, seed=2)


def test_gain_schedule():
    schedule = GainSchedule.preset("severe")
    assert [schedule(t) for t in (-1.0, 0.0, 1.99, 2.0, 3.0, 10.0)] == [1.0, 1.0, 1.0, 2.2, 2.2, 3.2]
    assert schedule.max_gain == 3.2

    unsorted = GainSchedule([(2.0, 1.5), {"time": 0.0, "gain": 0.5}])
    assert unsorted.to_list() == [[0.0, 0.5], [2.0, 1.5]]
    assert GainSchedule.constant(1.3)(100.0) == 1.3

    with pytest.raises(ConfigurationError, match="unknown gain preset"):
        GainSchedule.preset("extreme")
    with pytest.raises(ConfigurationError):
        GainSchedule([])
    with pytest.raises(ConfigurationError, match="non-negative"):
        GainSchedule([(0.0, -1.0)])


def test_gain_schedule_files(tmp_path):
    with open(tmp_path / "list.json", "w") as f:
        json.dump([[0, 1.0], [1.5, 2.0]], f)
    with open(tmp_path / "mapping.yaml", "w") as f:
        f.write("breakpoints:\n  - [0, 1.0]\n  - [1.5, 2.0]\n")
    assert GainSchedule.load(tmp_path / "list.json") == GainSchedule.load(tmp_path / "mapping.yaml")
    assert GainSchedule.load(tmp_path / "list.json")(1.5) == 2.0


def test_active_mask():
    x = TimeSignal(np.concatenate([np.full(512, 0.1), np.zeros(600)]))
    mask = active_mask(x)
    assert mask.sum() == 512 and mask[:512].all()
    assert active_mask(TimeSignal.zeros(1000)).all()


def test_ratio_scale():
    ones = TimeSignal(np.ones(1024))
    assert ratio_scale(ones, ones * 0.5, 0.0) == pytest.approx(2.0)
    assert ratio_scale(ones, ones * 0.5, 20.0) == pytest.approx(0.2)
    assert ratio_scale(ones, TimeSignal.zeros(1024), 10.0) == 1.0
    with pytest.raises(ScalingError):
        ratio_scale(TimeSignal.zeros(1024), ones, 0.0)


def test_set_active_level():
    gapped = TimeSignal(np.concatenate([np.zeros(fs), speech.samples * 1e-3]), fs)
    leveled = set_active_level(gapped, -20.0)
    mask = active_mask(leveled)
    assert not mask[: fs - 512].any()
    assert 10 * np.log10(np.mean(leveled.samples[mask] ** 2)) == pytest.approx(-20.0, abs=0.01)
    with pytest.raises(ScalingError):
        set_active_level(TimeSignal.zeros(100), -20.0)


def test_scenario_properties():
    noise = example_noise(0.5, fs, color="pink", seed=1)
    cfg = ScenarioConfig(speech, RirSet.scalar(1.0, sample_rate=fs), noise=noise, system_delay=0.1, snr_db=10.0, duration=0.8)
    assert cfg.delay_hops == 6 and cfg.delay_samples == 1536
    assert len(cfg.s) == len(cfg.n) == 12800
    mask = active_mask(cfg.s)
    snr = 10 * np.log10(np.mean(cfg.s.samples[mask] ** 2) / np.mean(cfg.n.samples[mask] ** 2))
    assert snr == pytest.approx(10.0)
    assert cfg.playback_scale == 1.0
    assert cfg.schedule.max_gain == 1.0


def test_scenario_errors():
    rirs = RirSet.scalar(1.0, sample_rate=fs)
    with pytest.raises(ConfigurationError, match="gain"):
        ScenarioConfig(speech, rirs, gain=-1.0)
    with pytest.raises(ConfigurationError, match="system_delay"):
        ScenarioConfig(speech, rirs, system_delay=-0.1)
    with pytest.raises(ConfigurationError, match="exceeds"):
        ScenarioConfig(speech, rirs, duration=2.0)
    with pytest.raises(DataError, match="sample rates"):
        ScenarioConfig(speech, RirSet.scalar(1.0, sample_rate=8000))


def test_teacher_forced_mixture():
    cfg = scalar_scenario(speech, loop_gain=0.5, system_delay=0.1)
    y, s, d, n = make_teacher_forced_mixture(cfg)
    assert np.all(d.samples[: cfg.delay_samples] == 0)
    np.testing.assert_allclose(d.samples[cfg.delay_samples :], 0.5 * s.samples[: -cfg.delay_samples], atol=1e-15)
    assert np.array_equal(y.samples, (s.samples + n.samples) + d.samples)

    scaled = scalar_scenario(speech, loop_gain=0.5, system_delay=0.1, spr_db=6.0)
    _, _, d6, _ = make_teacher_forced_mixture(scaled)
    mask = active_mask(s)
    spr = 10 * np.log10(np.mean(s.samples[mask] ** 2) / np.mean((d6.samples / 0.5)[mask] ** 2))
    assert spr == pytest.approx(6.0)


@pytest.mark.parametrize(
    "nonlinearity",
    [NonlinearityModel(), NonlinearityModel("hard_clip", clip_threshold=0.05), NonlinearityModel("sigmoid")],
)
def test_spr_includes_nonlinearity(nonlinearity):
    rirs = sample_rir_set(np.random.default_rng(3), RirSampling(rir_length=2048), fs)
    target = example_speech(2.0, fs, seed=3)
    mask = active_mask(target)
    for spr_db in (-10.0, 1.3, 10.0):
        cfg = ScenarioConfig(target, rirs, gain=1.0, system_delay=0.1, nonlinearity=nonlinearity, spr_db=spr_db)
        d = make_teacher_forced_mixture(cfg).d.samples
        measured = 10 * np.log10(np.mean(target.samples[mask] ** 2) / np.mean(d[mask] ** 2))
        assert measured == pytest.approx(spr_db, abs=1.0)


def test_example_signals():
    assert example_speech(0.5, fs, seed=1).rms == pytest.approx(0.1)
    assert np.array_equal(example_speech(0.5, seed=1).samples, example_speech(0.5, seed=1).samples)
    white = example_noise(2.0, fs, color="white", seed=0)
    pink = example_noise(2.0, fs, color="pink", seed=0)
    assert white.rms == pytest.approx(10 ** (-30 / 20)) and pink.rms == pytest.approx(white.rms)
    low = lambda x: np.sum(np.abs(np.fft.rfft(x.samples))[: len(x) // 16] ** 2)
    assert low(pink) > 4 * low(white)
    with pytest.raises(ConfigurationError, match="noise color"):
        example_noise(color="brown")


def test_experiment_spec(tmp_path):
    spec = ExperimentSpec(seed=4, counts={"train": 3, "val": 1})
    assert spec.counts == {"train": 3, "val": 1, "test": 0} and spec.total == 4
    assert spec.stft.frame_len == 512
    assert ExperimentSpec(seed=4, counts={"train": 3, "val": 1}, output="elsewhere").hash == spec.hash
    assert ExperimentSpec(seed=5, counts={"train": 3, "val": 1}).hash != spec.hash

    with open(tmp_path / "spec.yaml", "w") as f:
        f.write("seed: 4\ncounts: {train: 3, val: 1}\nprofile: deployable\nranges:\n  gain: [1.0, 2.0]\n")
    loaded = ExperimentSpec.load(tmp_path / "spec.yaml")
    assert loaded.ranges.gain == (1.0, 2.0) and loaded.stft.hop == 64
    assert loaded.to_dict()["ranges"]["gain"] == [1.0, 2.0]

    with open(tmp_path / "bad.yaml", "w") as f:
        f.write("seed: 1\nsamples: 3\n")
    with pytest.raises(ConfigurationError, match="unknown keys"):
        ExperimentSpec.load(tmp_path / "bad.yaml")


@pytest.mark.parametrize(
    "kwargs",
    [
        {"counts": {"dev": 1}},
        {"counts": {"train": -1}},
        {"profile": "huge"},
        {"duration": 0.0},
        {"schema_version": 2},
        {"ranges": {"gain": [2.0, 1.0]}},
        {"ranges": {"nonlinearities": ["fuzz"]}},
    ],
)
def test_experiment_spec_errors(kwargs):
    with pytest.raises(ConfigurationError):
        ExperimentSpec(**kwargs)


def test_sampling_ranges():
    ranges = SamplingRanges.from_dict({"spr_db": [0, 5], "unused": 1})
    assert ranges.spr_db == (0.0, 5.0)
    assert ranges.rir_sampling(1024).rir_length == 1024
    with pytest.raises(ConfigurationError, match="non-negative"):
        SamplingRanges(gain=(-1.0, 1.0))
