from typing import List, Optional

import numpy as np
from scipy import signal as ssignal

from larsen.console_utils import info
from larsen.core.signal import TimeSignal
from larsen.core.suppressor import Suppressor
from larsen.errors import ConfigurationError
from larsen.howling import detect_howling
from larsen.utils import db_to_amplitude, register_args

__all__ = ["Passthrough", "GainLimiter", "NotchBank", "Oracle"]


class Passthrough(Suppressor):
    @register_args
    def __init__(self, channel: int = 0, name=None):
        """Identity suppressor, outputs its input unchanged

        Parameters
        ----------
        channel : int, optional
            channel to output when fed with multi-channel frames, by default 0
        name : str, optional
            name of the suppressor, by default None
        """
        super().__init__(name=name)
        self.channel = channel

    def process(self, frame):
        return self._channel(frame, self.channel)


class GainLimiter(Suppressor):
    @register_args
    def __init__(
        self, max_gain: float = 1.0, max_growth_db: float = 0.5, floor_db: float = -40.0, name=None
    ):
        """Gain reduction baseline: scales each hop so that its RMS never grows faster than
        `max_growth_db` per hop

        The output RMS of a hop is at most ``max(previous_rms * 10^(max_growth_db / 20), floor)``
        and at most `max_gain` times the input RMS.

        Parameters
        ----------
        max_gain : float, optional
            largest gain applied, by default 1.0
        max_growth_db : float, optional
            largest RMS growth between two consecutive output hops in dB, by default 0.5
        floor_db : float, optional
            RMS level (dBFS) always allowed, by default -40
        name : str, optional
            name of the suppressor, by default None
        """
        super().__init__(name=name)
        if max_gain <= 0 or max_growth_db < 0:
            raise ConfigurationError("max_gain must be positive and max_growth_db non-negative")
        self.max_gain = max_gain
        self.max_growth = db_to_amplitude(max_growth_db)
        self.floor = db_to_amplitude(floor_db)

    def reset(self):
        self._previous_rms = 0.0

    def process(self, frame):
        x = self._channel(frame)
        rms = np.sqrt(np.mean(x**2))
        allowed = max(self._previous_rms * self.max_growth, self.floor)
        gain = self.max_gain
        if rms * gain > allowed:
            gain = allowed / rms
        out = gain * x
        self._previous_rms = float(np.sqrt(np.mean(out**2)))
        return out


class NotchBank(Suppressor):
    @register_args
    def __init__(
        self,
        frequencies: Optional[List[float]] = None,
        q: float = 30.0,
        detect: bool = True,
        history: float = 3.0,
        interval: float = 0.5,
        max_notches: int = 8,
        name=None,
    ):
        """Cascade of second-order IIR notch filters, optionally placed at detected howling
        frequencies

        Parameters
        ----------
        frequencies : list, optional
            notch frequencies in Hz placed from the start, by default None
        q : float, optional
            quality factor of each notch, by default 30
        detect : bool, optional
            whether to run :py:func:`~larsen.howling.detect_howling` on the recent input and add a
            notch at each detected peak frequency, by default True
        history : float, optional
            duration of input (in seconds) analysed by the detection, by default 3.0
        interval : float, optional
            time between two detections in seconds, by default 0.5
        max_notches : int, optional
            maximum number of notches, by default 8
        name : str, optional
            name of the suppressor, by default None
        """
        super().__init__(name=name)
        self.initial_frequencies = [float(f) for f in (frequencies or [])]
        self.q = q
        self.detect = detect
        self.history = history
        self.interval = interval
        self.max_notches = max_notches

    def setup(self):
        nyquist = self.sample_rate / 2
        for f in self.initial_frequencies:
            if not 0 < f < nyquist:
                raise ConfigurationError(
                    f"notch frequency {f} Hz must lie in (0, {nyquist:g}) Hz (Nyquist)"
                )
        self._history_len = int(round(self.history * self.sample_rate))
        self._interval_hops = max(1, int(round(self.interval * self.sample_rate / self.hop)))

    def reset(self):
        self.notches = []
        for f in self.initial_frequencies:
            self.add_notch(f)
        self._recent = np.zeros(0)
        self._calls = 0

    @property
    def notch_frequencies(self):
        return [f for f, _, _, _ in self.notches]

    def add_notch(self, frequency):
        """Insert a notch at `frequency` (Hz) unless an existing notch already covers it"""
        for f, _, _, _ in self.notches:
            if abs(f - frequency) <= f / self.q:
                return False
        if len(self.notches) >= self.max_notches:
            return False
        b, a = ssignal.iirnotch(frequency, self.q, self.sample_rate)
        self.notches.append((frequency, b, a, np.zeros(max(len(a), len(b)) - 1)))
        return True

    def _detect(self):
        report = detect_howling(TimeSignal(self._recent, self.sample_rate), self.config)
        nyquist = self.sample_rate / 2
        if report.detected and 0 < report.peak_frequency_hz < nyquist:
            if self.add_notch(report.peak_frequency_hz):
                info(f"{self!r}: notch added at {report.peak_frequency_hz:.0f} Hz")

    def process(self, frame):
        x = self._channel(frame)
        if self.detect:
            self._recent = np.concatenate([self._recent, x])[-self._history_len :]
            self._calls += 1
            if self._calls % self._interval_hops == 0 and len(self._recent) >= self._history_len:
                self._detect()

        notches = []
        for f, b, a, zi in self.notches:
            x, zi = ssignal.lfilter(b, a, x, zi=zi)
            notches.append((f, b, a, zi))
        self.notches = notches
        return x


class Oracle(Suppressor):
    @register_args
    def __init__(self, target: TimeSignal, name=None):
        """Ideal suppressor returning the clean target, hop after hop

        Placed in the loop it plays back exactly what a one-shot (teacher-forced) mixture
        assumes.

        Parameters
        ----------
        target : TimeSignal
            clean target signal
        name : str, optional
            name of the suppressor, by default None
        """
        super().__init__(name=name)
        self.target = target

    def reset(self):
        self._index = 0

    def process(self, frame):
        hop = self.hop
        out = self.target.samples[self._index * hop : (self._index + 1) * hop]
        self._index += 1
        return np.pad(out, (0, hop - len(out)))
