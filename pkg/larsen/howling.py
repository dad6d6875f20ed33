from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from larsen.core.signal import TimeSignal
from larsen.core.stft import StftConfig, stft

GROWTH_DB_PER_S = 3.0
GROWTH_SPAN = 0.5
GROWTH_SUSTAIN = 1.5
TONAL_RATIO = 0.5
TONAL_FRAMES = 20
TONAL_MARGIN_DB = 10.0
REFERENCE_SPAN = 1.0
LEVEL_FLOOR_DB = -60.0
SILENCE_DB = -200.0


@dataclass
class HowlingReport:
    """Outcome of :py:func:`detect_howling`"""

    detected: bool = False
    """Whether howling was detected"""

    onset_frame: Optional[int] = None
    """First STFT frame of the growth (or of the tonal run) that triggered the detection"""

    growth_rate_db_per_s: float = 0.0
    """Level growth rate in dB/s (positive when detected)"""

    peak_frequency_hz: Optional[float] = None
    """Dominant frequency of the howl in Hz"""

    criterion: Optional[str] = None
    """:code:`"growth"` (sustained level growth) or :code:`"tonal"` (single loud bin)"""

    onset_time: Optional[float] = None
    """Onset time in seconds"""

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, env):
        return cls(**{k: v for k, v in env.items() if k in cls.__dataclass_fields__})


def _runs(mask, min_length):
    """(start, end) of the first run of at least `min_length` True values, end exclusive"""
    start = None
    for i, value in enumerate(list(mask) + [False]):
        if value and start is None:
            start = i
        elif not value and start is not None:
            if i - start >= min_length:
                return start, i
            start = None
    return None


def _window_slopes(envelope, span, dt):
    """Least-squares slope (dB/s) and minimum of every `span`-frame window of `envelope`"""
    windows = sliding_window_view(envelope, span)
    t = (np.arange(span) - (span - 1) / 2) * dt
    return windows @ t / (t @ t), windows.min(1)


def detect_howling(sig: TimeSignal, stft_config: StftConfig = None) -> HowlingReport:
    """Detect acoustic howling in a signal

    Howling is flagged when either

    - the level keeps growing by at least 3 dB/s. The level is a 0.5 s peak-hold of the frame
      power. A least-squares line is fitted to every 0.5 s window of it, and the slope must
      reach 3 dB/s on all the windows of a 1.5 s stretch, each window staying above -60 dBFS.
      A single level step (a speech onset, a louder talker) only tilts the windows that
      contain it, which is less than 0.5 s of windows.
    - a single bin holds at least 50% of the frame energy for 20 consecutive frames while the
      frame level exceeds the median level of the first second by at least 10 dB.

    Parameters
    ----------
    sig : TimeSignal
        signal to analyse (e.g. the microphone signal of a streaming run)
    stft_config : StftConfig, optional
        analysis STFT, by default :py:meth:`StftConfig.default`

    Returns
    -------
    HowlingReport
    """
    config = stft_config or StftConfig()
    spec = stft(sig, config)
    if spec.frames == 0:
        return HowlingReport()

    weights = np.full(spec.bins, 2.0)
    weights[0] = 1.0
    if config.fft_size % 2 == 0:
        weights[-1] = 1.0
    power = spec.power * weights
    frame_energy = power.sum(1)
    level = 10 * np.log10(frame_energy / (config.fft_size * config.frame_len) + 1e-20)
    level = np.maximum(level, SILENCE_DB)
    dt = config.hop / sig.sample_rate

    # sustained growth
    span = max(2, int(round(GROWTH_SPAN / dt)))
    sustain = max(span, int(round(GROWTH_SUSTAIN / dt)))
    held = np.concatenate([np.full(span - 1, SILENCE_DB), level])
    envelope = sliding_window_view(held, span).max(1)
    growth_run, rate = None, 0.0
    if len(envelope) >= span:
        slopes, floor = _window_slopes(envelope, span, dt)
        rising = (slopes >= GROWTH_DB_PER_S) & (floor >= LEVEL_FLOOR_DB)
        windows = _runs(rising, sustain)
        if windows is not None:
            # window w spans frames w to w + span - 1
            growth_run = (windows[0], windows[1] + span - 1)
            rate = float(np.mean(slopes[windows[0] : windows[1]]))

    # loud tonal component
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(frame_energy > 0, power.max(1) / frame_energy, 0.0)
    reference_frames = spec.times <= min(REFERENCE_SPAN, sig.duration)
    if not np.any(reference_frames):
        reference_frames[:] = True
    reference = np.median(level[reference_frames])
    tonal = (ratio >= TONAL_RATIO) & (level >= reference + TONAL_MARGIN_DB) & (
        level > SILENCE_DB
    )
    tonal_run = _runs(tonal, TONAL_FRAMES)

    if growth_run is None and tonal_run is None:
        return HowlingReport()

    if growth_run is not None and (tonal_run is None or growth_run[0] <= tonal_run[0]):
        criterion, (start, end) = "growth", growth_run
    else:
        criterion, (start, end) = "tonal", tonal_run

    if growth_run is None:
        t_start, _ = tonal_run
        reference_time = min(REFERENCE_SPAN, sig.duration) / 2
        elapsed = max(spec.times[t_start] - reference_time, dt)
        rate = float(level[t_start] - reference) / elapsed

    spectrum = power[start:end].sum(0)
    peak = float(spec.frequencies[int(np.argmax(spectrum))])

    return HowlingReport(
        detected=True,
        onset_frame=int(start),
        growth_rate_db_per_s=float(rate),
        peak_frequency_hz=peak,
        criterion=criterion,
        onset_time=float(spec.times[start]),
    )
