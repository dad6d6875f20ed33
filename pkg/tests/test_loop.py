import numpy as np
import pytest

from larsen import AcousticLoop, TimeSignal, run_streaming
from larsen.core.suppressor import Suppressor
from larsen.errors import ConfigurationError, DivergenceError, ScalingError
from larsen.howling import detect_howling
from larsen.nonlinearity import NonlinearityModel
from larsen.room import RirSampling, sample_rir_set
from larsen.simulations import (
    GainSchedule,
    ScenarioConfig,
    example_noise,
    example_speech,
    make_teacher_forced_mixture,
    scalar_scenario,
)
from larsen.suppressors import KalmanSuppressor, Oracle, Passthrough

fs = 16000
speech = example_speech(2.0, fs, seed=0)
rirs = sample_rir_set(np.random.default_rng(1), RirSampling(rir_length=2048), fs)


def scene(**kwargs):
    params = dict(
        target=speech,
        rirs=rirs,
        noise=example_noise(2.0, fs, color="pink", seed=2),
        gain=2.0,
        system_delay=0.1,
        nonlinearity=NonlinearityModel("hard_clip", clip_threshold=0.8),
        spr_db=0.0,
        snr_db=20.0,
    )
    params.update(kwargs)
    return ScenarioConfig(**params)


def impulse_scenario(loop_gain, duration=3.0):
    return scalar_scenario(TimeSignal.impulse(int(duration * fs)), loop_gain, system_delay=0.3)


@pytest.mark.parametrize("loop_gain", [1.2, 0.5])
def test_scalar_recursion(loop_gain):
    cfg = impulse_scenario(loop_gain)
    result = run_streaming(cfg, Passthrough())
    lag = cfg.delay_samples
    taps = np.arange(0, len(result.mic), lag)
    np.testing.assert_allclose(result.mic.samples[taps], loop_gain ** np.arange(len(taps)), rtol=1e-12)
    others = np.ones(len(result.mic), dtype=bool)
    others[taps] = False
    assert np.all(result.mic.samples[others] == 0)
    assert result.howling.detected == (loop_gain > 1)


def test_zero_gain():
    cfg = scene(gain=0.0)
    result = run_streaming(cfg, Passthrough())
    assert np.array_equal(result.mic.samples, (cfg.s + cfg.n).samples)
    assert np.all(result.playback.samples == 0)


def test_teacher_forcing_equivalence():
    cfg = scene()
    mixture = make_teacher_forced_mixture(cfg)
    result = run_streaming(cfg, Oracle(cfg.s))
    assert np.array_equal(result.mic.samples, mixture.y.samples)
    assert np.array_equal(result.playback.samples, mixture.d.samples)
    assert np.array_equal(mixture.y.samples, (mixture.s.samples + mixture.n.samples) + mixture.d.samples)


def test_stream_result_shapes():
    cfg = scene()
    result = run_streaming(cfg, Passthrough())
    for signal in (result.mic, result.enhanced, result.loudspeaker, result.playback):
        assert len(signal) == len(cfg.s)
    assert len(result.per_frame) == cfg.stft.n_frames(len(cfg.s))
    assert set(["mic_rms_db", "erle_db", "gain", "guard"]) <= set(result.per_frame.columns)


def test_determinism_and_causality():
    cfg = scalar_scenario(speech, 0.8, system_delay=0.1)
    a = run_streaming(cfg, Passthrough())
    b = run_streaming(cfg, Passthrough())
    assert np.array_equal(a.mic.samples, b.mic.samples)

    t = 12000
    changed = TimeSignal(np.concatenate([speech.samples[:t], np.zeros(len(speech) - t)]), fs)
    c = run_streaming(scalar_scenario(changed, 0.8, system_delay=0.1), Passthrough())
    assert np.array_equal(a.mic.samples[:t], c.mic.samples[:t])
    assert not np.array_equal(a.mic.samples[t:], c.mic.samples[t:])


def test_saturation_guard():
    result = run_streaming(impulse_scenario(3.0, duration=4.0), Passthrough())
    assert result.saturated
    assert np.max(np.abs(result.mic.samples)) <= 10.0


class Diverging(Suppressor):
    def process(self, frame):
        out = np.array(frame, dtype=float)
        if self.runs == 5:
            out[0] = np.nan
        return out


def test_divergence_frame():
    with pytest.raises(DivergenceError, match="frame 5") as exc:
        run_streaming(impulse_scenario(0.5, duration=1.0), Diverging())
    assert exc.value.frame == 5


def test_latency_exceeding_delay():
    class Slow(Passthrough):
        latency = 10

    cfg = scalar_scenario(speech, 0.5, system_delay=0.1)
    with pytest.raises(ConfigurationError, match="must exceed the suppressor latency"):
        run_streaming(cfg, Slow())


def test_kalman_in_the_loop():
    cfg = scene(nonlinearity=NonlinearityModel(), spr_db=0.0, snr_db=None, noise=None, gain=1.5)
    loop = AcousticLoop(KalmanSuppressor(), name="kalman")
    kalman = loop.run(cfg)
    passthrough = run_streaming(cfg, Passthrough())
    assert kalman.mic.rms < passthrough.mic.rms
    assert "KalmanSuppressor" in str(loop)


def test_gain_schedule():
    schedule = GainSchedule([(2.0, 1.5), (0.0, 1.0)])
    assert schedule(0.5) == 1.0 and schedule(2.0) == 1.5 and schedule(10) == 1.5
    assert schedule.max_gain == 1.5
    assert GainSchedule.preset("severe").max_gain == pytest.approx(3.2)
    with pytest.raises(ConfigurationError):
        GainSchedule.preset("extreme")
    with pytest.raises(ConfigurationError):
        GainSchedule([(0.0, -1.0)])


def test_spr_scaling():
    cfg = scene(spr_db=0.0, snr_db=None, noise=None)
    assert cfg.playback_scale > 0
    unscaled = scene(spr_db=None, snr_db=None, noise=None)
    assert unscaled.playback_scale == 1.0
    with pytest.raises(ScalingError):
        make_teacher_forced_mixture(scene(target=TimeSignal.zeros(len(speech))))


def test_detect_howling():
    assert not detect_howling(TimeSignal.zeros(fs)).detected
    assert not detect_howling(example_speech(4.0, fs, seed=3)).detected

    t = np.arange(4 * fs) / fs
    growing = TimeSignal(0.01 * 10 ** (6 * t / 20) * np.sin(2 * np.pi * 2000 * t), fs)
    report = detect_howling(growing)
    assert report.detected
    assert report.onset_frame is not None and report.growth_rate_db_per_s > 0
    assert report.peak_frequency_hz == pytest.approx(2000, abs=fs / 512)


def test_growth_rate():
    cfg = impulse_scenario(1.2)
    report = run_streaming(cfg, Passthrough()).howling
    assert report.detected and report.criterion == "growth"
    expected = 20 * np.log10(1.2) / (cfg.delay_samples / fs)
    assert report.growth_rate_db_per_s == pytest.approx(expected, rel=0.05)


def test_level_changes_are_not_howling():
    noise = example_noise(6.0, fs, color="pink", seed=4).samples * 10 ** (-20 / 20)
    talker = example_speech(4.0, fs, seed=5).samples
    onset = noise + np.concatenate([np.zeros(2 * fs), talker])
    assert not detect_howling(TimeSignal(onset, fs)).detected

    louder = example_speech(6.0, fs, seed=6).samples
    louder[3 * fs :] *= 10 ** (3 / 20)
    assert not detect_howling(TimeSignal(louder, fs)).detected


def test_kalman_keeps_the_loop_stable():
    cfg = scalar_scenario(example_speech(10.0, fs, seed=0), 1.2, system_delay=0.3)
    kalman = AcousticLoop(KalmanSuppressor()).run(cfg)
    assert not kalman.saturated
    assert not kalman.howling.detected

    passthrough = run_streaming(cfg, Passthrough())
    assert passthrough.howling.detected
