import numpy as np
import pytest

from larsen import StftConfig, TimeSignal, run_streaming
from larsen.core import FrameHistory
from larsen.core.suppressor import Suppressor
from larsen.errors import ConfigurationError, ShapeError
from larsen.simulations import example_speech, scalar_scenario
from larsen.suppressors import (
    Cascade,
    GainLimiter,
    KalmanSuppressor,
    NotchBank,
    Oracle,
    Passthrough,
)

fs = 16000
hop = StftConfig().hop
np.random.seed(42)
noise = TimeSignal(np.random.normal(0, 0.1, int(1.5 * fs)))
t = np.arange(2 * fs) / fs

builtins = [
    lambda: Passthrough(),
    lambda: GainLimiter(),
    lambda: NotchBank([1000.0, 3000.0]),
    lambda: Oracle(noise),
    lambda: KalmanSuppressor(reference_delay_hops=4),
    lambda: Cascade(KalmanSuppressor(reference_delay_hops=4), Passthrough(channel=1)),
]


def sine(frequency, amplitude=0.1):
    return TimeSignal(amplitude * np.sin(2 * np.pi * frequency * t), fs)


def level_db(x):
    return 10 * np.log10(np.mean(np.asarray(x) ** 2))


@pytest.mark.parametrize("make", builtins)
def test_reset_determinism(make):
    suppressor = make()
    first = suppressor(noise)
    second = suppressor(noise)
    assert len(first) == len(noise)
    assert np.array_equal(first.samples, second.samples)
    assert np.array_equal(first.samples, make()(noise).samples)


@pytest.mark.parametrize("make", builtins)
def test_causality(make):
    cut = 20 * hop
    changed = TimeSignal(np.concatenate([noise.samples[:cut], -noise.samples[cut:]]), fs)
    a = make()(noise)
    b = make()(changed)
    assert np.array_equal(a.samples[:cut], b.samples[:cut])


def test_process_shape_is_checked():
    class Short(Suppressor):
        def process(self, frame):
            return frame[:-1]

    with pytest.raises(ShapeError, match=r"\[Short\] process must return 256 samples"):
        Short()(noise)


def test_notch_attenuation():
    notch = NotchBank([1000.0], detect=False)
    out = notch(sine(1000))
    assert level_db(out.samples[fs:]) <= level_db(sine(1000).samples[fs:]) - 30
    out = notch(sine(3000))
    assert level_db(out.samples[fs:]) == pytest.approx(level_db(sine(3000).samples[fs:]), abs=1)


def test_notch_at_nyquist():
    with pytest.raises(ConfigurationError, match="Nyquist"):
        NotchBank([8000.0]).init(StftConfig(), fs)


def test_notch_detection():
    t = np.arange(4 * fs) / fs
    growing = TimeSignal(0.01 * 10 ** (6 * t / 20) * np.sin(2 * np.pi * 2000 * t), fs)
    notch = NotchBank()
    notch(growing)
    assert len(notch.notch_frequencies) == 1
    assert notch.notch_frequencies[0] == pytest.approx(2000, abs=fs / 512)


def test_gain_limiter():
    jump = TimeSignal(np.concatenate([noise.samples[:4096] * 0.01, noise.samples[4096:8192] * 10]), fs)
    limiter = GainLimiter(max_growth_db=0.5, floor_db=-40)
    out = limiter(jump).samples.reshape(-1, hop)
    rms = np.sqrt(np.mean(out**2, axis=1))
    allowed = np.maximum(np.concatenate([[0], rms[:-1]]) * 10 ** (0.5 / 20), 10 ** (-40 / 20))
    assert np.all(rms <= allowed * (1 + 1e-9))
    assert np.all(np.abs(out) <= np.abs(jump.samples.reshape(-1, hop)) + 1e-12)
    with pytest.raises(ConfigurationError):
        GainLimiter(max_gain=0)


def test_cascade_identities():
    assert np.array_equal(Cascade(Passthrough(), Passthrough())(noise).samples, noise.samples)
    assert np.array_equal(Cascade(Passthrough(), Passthrough(channel=1))(noise).samples, noise.samples)

    delayed = Cascade(Passthrough(), Passthrough(channel=2), extra_reference_delay=2)(noise)
    assert np.array_equal(delayed.samples[2 * hop :], noise.samples[: -2 * hop])
    assert np.all(delayed.samples[: 2 * hop] == 0)

    class ThreeChannels(Passthrough):
        n_channels = 3

    with pytest.raises(ConfigurationError, match="expects 3 channels"):
        Cascade(Passthrough(), ThreeChannels())(noise)


def test_cascade_latency():
    class Late(Suppressor):
        latency = 2

        def reset(self):
            self._history = FrameHistory(2, (self.hop,))

        def process(self, frame):
            return self._history.push(self._channel(frame))

    cascade = Cascade(Late(), Late())
    assert cascade.latency == 4
    assert np.array_equal(cascade(noise).samples, noise.samples)


def test_cascade_kalman_in_the_loop():
    cfg = scalar_scenario(example_speech(2.0, fs, seed=1), 0.9, system_delay=0.1)
    alone = run_streaming(cfg, KalmanSuppressor())
    cascade = run_streaming(cfg, Cascade(KalmanSuppressor(), Passthrough(channel=1)))
    assert np.array_equal(alone.mic.samples, cascade.mic.samples)
    assert np.array_equal(alone.enhanced.samples, cascade.enhanced.samples)


def test_kalman_needs_a_reference():
    with pytest.raises(ConfigurationError, match="no reference"):
        KalmanSuppressor()(noise)
    with pytest.raises(ConfigurationError, match="at least one hop"):
        KalmanSuppressor(reference_delay_hops=0)(noise)
