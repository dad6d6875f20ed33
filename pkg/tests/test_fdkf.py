import numpy as np
import pytest

from larsen.core import StftConfig, TimeSignal
from larsen.errors import ConfigurationError, NumericError, ShapeError
from larsen.fdkf import (
    FrequencyDomainKalmanFilter,
    KalmanConfig,
    KalmanState,
    misalignment_db,
    predict,
    process_stream,
    update,
)

fs = 16000
config = KalmanConfig()
rng = np.random.default_rng(0)
h_true = rng.normal(size=256) * np.exp(-np.arange(256) / 40)
h_true /= np.linalg.norm(h_true)


def static_path(duration, near_end_db=None, seed=1):
    rng = np.random.default_rng(seed)
    r = rng.normal(0, 0.1, int(duration * fs))
    y = np.convolve(r, h_true)[: len(r)]
    if near_end_db is not None:
        s = rng.normal(0, 1, len(r))
        y = y + s * np.sqrt(np.mean(y**2) * 10 ** (near_end_db / 10))
    return TimeSignal(y, fs), TimeSignal(r, fs)


def erle_db(y, e):
    return 10 * np.log10(np.sum(y**2) / np.sum(e**2))


def nlms(y, r, taps, mu=0.5, delta=1e-8):
    w = np.zeros(taps)
    buffer = np.zeros(taps)
    e = np.zeros(len(y))
    for t in range(len(y)):
        buffer = np.roll(buffer, 1)
        buffer[0] = r[t]
        e[t] = y[t] - w @ buffer
        w += mu * e[t] * buffer / (buffer @ buffer + delta)
    return e


def random_state(rng, bins=config.bins):
    state = KalmanState.initial(config)
    state.h_hat = rng.normal(size=bins) + 1j * rng.normal(size=bins)
    state.h_hat = state.h_hat[None, :]
    return state


def test_predict():
    state = random_state(rng)
    Y = rng.normal(size=config.bins) + 1j * rng.normal(size=config.bins)
    R = rng.normal(size=config.bins) + 1j * rng.normal(size=config.bins)
    assert np.array_equal(predict(KalmanState.initial(config), Y, R), Y)
    assert np.array_equal(predict(state, Y, np.zeros(config.bins)), Y)
    np.testing.assert_allclose(predict(state, R * state.h_hat[0], R), 0, atol=1e-12)
    with pytest.raises(ShapeError):
        predict(state, Y[:-1], R)


def test_update_trivial_cases():
    state = random_state(rng)
    R = rng.normal(size=config.bins) + 1j * rng.normal(size=config.bins)
    decayed = update(state, np.zeros(config.bins), R)
    np.testing.assert_allclose(decayed.h_hat, config.transition * state.h_hat, rtol=1e-12)
    assert decayed.frame_index == 1

    certain = state.copy()
    certain.p_cov[:] = 0
    E = rng.normal(size=config.bins) + 1j * rng.normal(size=config.bins)
    np.testing.assert_allclose(update(certain, E, R).h_hat, config.transition * state.h_hat, rtol=1e-12)


def test_decay_law():
    state = random_state(rng)
    norm = np.linalg.norm(state.h_hat)
    E = rng.normal(size=config.bins) + 1j * rng.normal(size=config.bins)
    for _ in range(50):
        state = update(state, E, np.zeros(config.bins))
    assert np.linalg.norm(state.h_hat) == pytest.approx(config.transition**50 * norm, rel=1e-12)


def test_covariances_stay_non_negative():
    rng = np.random.default_rng(5)
    state = KalmanState.initial(config)
    for _ in range(2000):
        scale = 10 ** rng.uniform(-6, 3)
        R = scale * (rng.normal(size=config.bins) + 1j * rng.normal(size=config.bins))
        E = rng.normal(size=config.bins) + 1j * rng.normal(size=config.bins)
        gain = state.p_cov[0] * np.abs(R) ** 2 / (
            np.abs(R) ** 2 * state.p_cov[0] + 0.9 * state.psi_vv + 0.1 * np.abs(E) ** 2 + state.epsilon
        )
        assert np.all(gain <= 1 + 1e-9)
        state = update(state, E, R)
        for array in (state.p_cov, state.psi_vv, state.psi_dd):
            assert np.all(array >= 0) and np.all(np.isfinite(array))


def test_numeric_error():
    E = np.zeros(config.bins, dtype=complex)
    E[3] = np.nan
    with pytest.raises(NumericError, match="bin 3") as exc:
        update(KalmanState.initial(config), E, np.ones(config.bins))
    assert exc.value.bin == 3


def test_config():
    with pytest.raises(ConfigurationError, match="fft_size = 2 \\* hop"):
        KalmanConfig(stft=StftConfig(512, 128, 512))
    with pytest.raises(ConfigurationError):
        KalmanConfig(transition=0.0)
    with pytest.raises(ConfigurationError):
        KalmanConfig(partitions=0)
    restored = KalmanConfig.from_dict(KalmanConfig(partitions=2).to_dict())
    assert restored == KalmanConfig(partitions=2)
    assert restored.taps == 512


def test_trivial_streams():
    y, r = static_path(1.0)
    e, trace = process_stream(config, y, TimeSignal.zeros(len(y), fs))
    np.testing.assert_allclose(e.samples, y.samples, atol=1e-10)
    assert len(trace) == int(np.ceil(len(y) / config.stft.hop))

    e, _ = process_stream(config, TimeSignal.zeros(len(r), fs), r)
    assert np.linalg.norm(e.samples) <= 1e-6 * np.linalg.norm(r.samples)

    with pytest.raises(ShapeError, match="length mismatch"):
        process_stream(config, y, r[:100])


def test_static_path_convergence():
    y, r = static_path(5.0)
    e, trace = process_stream(config, y, r)
    last = slice(4 * fs, 5 * fs)
    assert erle_db(y.samples[last], e.samples[last]) >= 20
    assert trace.erle_db.iloc[0] == pytest.approx(0, abs=1e-9)
    assert trace.erle_db.iloc[-60:].median() >= 20


def test_double_talk_misalignment():
    y, r = static_path(8.0, near_end_db=-10)
    kf = FrequencyDomainKalmanFilter(config)
    hop = kf.hop
    for k in range(len(y) // hop):
        block = slice(k * hop, (k + 1) * hop)
        kf.filt(y.samples[block], r.samples[block])
    assert misalignment_db(h_true, kf.impulse_response) <= -10


def test_against_time_domain_nlms():
    y, r = static_path(3.0, near_end_db=-30)
    e, _ = process_stream(config, y, r)
    reference = nlms(y.samples, r.samples, len(h_true))
    last = slice(2 * fs, 3 * fs)
    assert erle_db(y.samples[last], e.samples[last]) >= erle_db(y.samples[last], reference[last]) - 3
