from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import signal as ssignal

from larsen.errors import ConfigurationError, DataError, ShapeError

DEFAULT_SAMPLE_RATE = 16000


@dataclass(frozen=True, eq=False)
class TimeSignal:
    """
    Mono sampled waveform.

    This is a frozen Python Data Class: samples are stored as a read-only float64 array
    and every operation returns a new object, so signals can be shared freely.
    """

    samples: np.ndarray = field(default_factory=lambda: np.zeros(0))
    """Real amplitudes, nominal range [-1, 1] (full scale = 1)"""

    sample_rate: int = DEFAULT_SAMPLE_RATE
    """Sample rate in Hz"""

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float).reshape(-1)
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise DataError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            bad = int(np.flatnonzero(~np.isfinite(samples))[0])
            raise DataError(f"signal has non-finite samples (first at index {bad})")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @classmethod
    def zeros(cls, n, sample_rate=DEFAULT_SAMPLE_RATE):
        return cls(np.zeros(int(n)), sample_rate)

    @classmethod
    def impulse(cls, n, position=0, amplitude=1.0, sample_rate=DEFAULT_SAMPLE_RATE):
        x = np.zeros(int(n))
        x[position] = amplitude
        return cls(x, sample_rate)

    def __len__(self):
        return len(self.samples)

    def __array__(self, dtype=None):
        return np.asarray(self.samples, dtype=dtype)

    @property
    def duration(self):
        """Duration in seconds"""
        return len(self) / self.sample_rate

    @property
    def energy(self):
        return float(np.sum(self.samples**2))

    @property
    def rms(self):
        if len(self) == 0:
            return 0.0
        return float(np.sqrt(np.mean(self.samples**2)))

    def _check_rate(self, other):
        if other.sample_rate != self.sample_rate:
            raise ShapeError(
                f"sample rate mismatch ({self.sample_rate} Hz vs {other.sample_rate} Hz)"
            )

    def _binary(self, other, op):
        if isinstance(other, TimeSignal):
            self._check_rate(other)
            if len(other) != len(self):
                raise ShapeError(f"length mismatch ({len(self)} vs {len(other)})")
            other = other.samples
        return TimeSignal(op(self.samples, other), self.sample_rate)

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return TimeSignal(-self.samples, self.sample_rate)

    def __getitem__(self, item):
        """Slice in samples, returning a TimeSignal"""
        if not isinstance(item, slice):
            raise TypeError("TimeSignal only supports slicing")
        return TimeSignal(self.samples[item], self.sample_rate)

    def fit(self, n):
        """Truncate or zero-pad to exactly `n` samples"""
        n = int(n)
        if n <= len(self):
            return self[:n]
        return TimeSignal(np.pad(self.samples, (0, n - len(self))), self.sample_rate)

    def tile(self, n):
        """Repeat (or truncate) to exactly `n` samples"""
        n = int(n)
        if len(self) == 0:
            return TimeSignal.zeros(n, self.sample_rate)
        reps = int(np.ceil(n / len(self)))
        return TimeSignal(np.tile(self.samples, reps)[:n], self.sample_rate)

    def scaled(self, factor):
        return TimeSignal(self.samples * factor, self.sample_rate)


def convolve(signal: TimeSignal, kernel: TimeSignal) -> TimeSignal:
    """Full linear convolution of a signal with a kernel (e.g. a room impulse response)

    Parameters
    ----------
    signal : TimeSignal
        input signal
    kernel : TimeSignal
        convolution kernel, must share the sample rate of `signal`

    Returns
    -------
    TimeSignal
        signal of length ``len(signal) + len(kernel) - 1``
    """
    if signal.sample_rate != kernel.sample_rate:
        raise ShapeError(
            f"cannot convolve signals sampled at {signal.sample_rate} Hz and {kernel.sample_rate} Hz"
        )
    if len(signal) == 0 or len(kernel) == 0:
        return TimeSignal.zeros(max(len(signal) + len(kernel) - 1, 0), signal.sample_rate)
    return TimeSignal(
        ssignal.convolve(signal.samples, kernel.samples, mode="full", method="auto"),
        signal.sample_rate,
    )


def delay(signal: TimeSignal, n: int, truncate: bool = False) -> TimeSignal:
    """Delay a signal by `n` samples

    Parameters
    ----------
    signal : TimeSignal
        signal to delay
    n : int
        delay in samples (>= 0)
    truncate : bool, optional
        whether to keep the original length (dropping the last `n` samples), by default False

    Returns
    -------
    TimeSignal
    """
    if int(n) != n or n < 0:
        raise ConfigurationError(f"delay must be a non-negative integer, got {n}")
    n = int(n)
    delayed = np.concatenate([np.zeros(n), signal.samples])
    if truncate:
        delayed = delayed[: len(signal)]
    return TimeSignal(delayed, signal.sample_rate)


class FrameHistory:
    def __init__(self, depth: int, frame_shape=(), dtype=float):
        """Fixed-depth delay line of frames

        Pushing a frame returns the one pushed `depth` calls earlier (zeros at the start),
        so a history of depth 0 is a pass-through.

        Parameters
        ----------
        depth : int
            number of frames held
        frame_shape : tuple, optional
            shape of a frame, by default () for scalars
        dtype : optional
            frame dtype, by default float

        Example
        -------
        .. code-block:: python

            history = FrameHistory(2)
            [history.push(i) for i in range(1, 5)]  # [0, 0, 1, 2]

        """
        assert depth >= 0, "depth must be non-negative"
        self.depth = int(depth)
        self.frame_shape = frame_shape
        self.dtype = dtype
        self.reset()

    def reset(self):
        self.items = deque(
            [np.zeros(self.frame_shape, dtype=self.dtype) for _ in range(self.depth)]
        )

    def __len__(self):
        return self.depth

    def __getitem__(self, i):
        """Frame pushed ``i + 1`` calls ago (``i = 0`` is the most recent held frame)"""
        return self.items[-1 - i]

    def push(self, frame):
        frame = np.array(frame, dtype=self.dtype)
        if self.depth == 0:
            return frame
        self.items.append(frame)
        return self.items.popleft()

    def stack(self):
        """Held frames, oldest first"""
        return np.array(list(self.items))


def as_signal(x, sample_rate: Optional[int] = None) -> TimeSignal:
    if isinstance(x, TimeSignal):
        return x
    return TimeSignal(np.asarray(x, dtype=float), sample_rate or DEFAULT_SAMPLE_RATE)
