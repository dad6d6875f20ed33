from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from larsen.core.signal import DEFAULT_SAMPLE_RATE, TimeSignal
from larsen.errors import ConfigurationError, DataError, ShapeError
from larsen.utils import from_dict

WINDOWS = ("sqrt_hann", "hann", "rect")

COLA_TOLERANCE = 1e-10


@dataclass(frozen=True)
class StftConfig:
    """Framing and transform sizes of the short-time Fourier transform

    This is a frozen Python Data Class, so that all attributes described below can be used as
    keyword-arguments when instantiating a StftConfig. The analysis/synthesis window pair is
    checked for the constant-overlap-add property at the configured hop.
    """

    frame_len: int = 512
    """Frame length in samples, default is :code:`512` (32 ms at 16 kHz)"""

    hop: int = 256
    """Frame shift in samples, default is :code:`256` (16 ms at 16 kHz)"""

    fft_size: int = 512
    """FFT size in samples (frames are zero-padded up to it), default is :code:`512`"""

    window: str = "sqrt_hann"
    """Analysis/synthesis window pair: :code:`"sqrt_hann"` (both), :code:`"hann"` (analysis
    only, rectangular synthesis) or :code:`"rect"`, default is :code:`"sqrt_hann"`"""

    def __post_init__(self):
        for name in ("frame_len", "hop", "fft_size"):
            value = getattr(self, name)
            if int(value) != value or value <= 0:
                raise ConfigurationError(f"{name} must be a positive integer, got {value}")
            object.__setattr__(self, name, int(value))
        if not self.hop <= self.frame_len <= self.fft_size:
            raise ConfigurationError(
                f"STFT requires hop <= frame_len <= fft_size, got {self.hop}/{self.frame_len}/{self.fft_size}"
            )
        if self.window not in WINDOWS:
            raise ConfigurationError(
                f"unknown window '{self.window}' (available: {', '.join(WINDOWS)})"
            )
        _synthesis_scale(self)

    @classmethod
    def default(cls):
        """32 ms frames, 16 ms hop, 512-point FFT"""
        return cls(512, 256, 512)

    @classmethod
    def deployable(cls):
        """8 ms frames, 4 ms hop, 128-point FFT"""
        return cls(128, 64, 128)

    @classmethod
    def from_profile(cls, name):
        profiles = {"default": cls.default, "deployable": cls.deployable}
        if name not in profiles:
            raise ConfigurationError(
                f"unknown STFT profile '{name}' (available: {', '.join(profiles)})"
            )
        return profiles[name]()

    @classmethod
    def from_dict(cls, env):
        return from_dict(cls, env)

    @property
    def bins(self):
        return self.fft_size // 2 + 1

    @property
    def start_padding(self):
        """Zeros prepended before framing (``frame_len - hop``)"""
        return self.frame_len - self.hop

    @property
    def latency_frames(self):
        """Streaming latency of an analysis/synthesis pair, in hops"""
        return int(np.ceil(self.start_padding / self.hop))

    def n_frames(self, length):
        """Number of frames produced for a signal of `length` samples"""
        if length == 0:
            return 0
        return int(np.ceil((length + self.start_padding) / self.hop))

    def padded_length(self, length):
        n = self.n_frames(length)
        if n == 0:
            return 0
        return (n - 1) * self.hop + self.frame_len

    @property
    def analysis_window(self):
        return _windows(self)[0]

    @property
    def synthesis_window(self):
        """Synthesis window, normalized so that the overlap-added window product is 1"""
        return _windows(self)[1] / _synthesis_scale(self)

    def to_dict(self):
        return {
            "frame_len": self.frame_len,
            "hop": self.hop,
            "fft_size": self.fft_size,
            "window": self.window,
        }


@lru_cache(maxsize=None)
def _windows(config):
    n = config.frame_len
    if config.window == "sqrt_hann":
        w = np.sqrt(get_window("hann", n))
        return w, w
    elif config.window == "hann":
        return get_window("hann", n), np.ones(n)
    else:
        return np.ones(n), np.ones(n)


@lru_cache(maxsize=None)
def _synthesis_scale(config):
    analysis, synthesis = _windows(config)
    product = analysis * synthesis
    n_periods = int(np.ceil(config.frame_len / config.hop))
    folded = np.pad(product, (0, n_periods * config.hop - config.frame_len))
    cola = folded.reshape(n_periods, config.hop).sum(0)
    mean = np.mean(cola)
    if mean <= 0 or (np.max(cola) - np.min(cola)) > COLA_TOLERANCE * mean:
        raise ConfigurationError(
            f"window '{config.window}' is not constant-overlap-add with frame_len={config.frame_len} and hop={config.hop}"
        )
    return float(mean)


@dataclass(eq=False)
class Spectrogram:
    """
    Complex one-sided time-frequency matrix (frames x bins).

    This is a Python Data Class, so that all attributes described below can be used as
    keyword-arguments when instantiated.
    """

    data: np.ndarray
    """Complex matrix of shape (frames, fft_size // 2 + 1)"""

    config: StftConfig = field(default_factory=StftConfig)
    """STFT configuration that produced (or will invert) the data"""

    length: Optional[int] = None
    """Length in samples of the analysed signal, by default the longest length matching
    the number of frames"""

    sample_rate: int = DEFAULT_SAMPLE_RATE
    """Sample rate of the analysed signal in Hz"""

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 1 and data.size == 0:
            data = data.reshape(0, self.config.bins)
        if data.ndim != 2 or data.shape[1] != self.config.bins:
            raise ShapeError(
                f"spectrogram must have {self.config.bins} bins (fft_size={self.config.fft_size}), got shape {data.shape}"
            )
        if not np.all(np.isfinite(data)):
            raise DataError("spectrogram has non-finite entries")
        self.data = data.astype(complex)
        if self.length is None:
            self.length = max(self.frames * self.config.hop - self.config.start_padding, 0)

    @property
    def frames(self):
        return self.data.shape[0]

    @property
    def bins(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    @property
    def magnitude(self):
        return np.abs(self.data)

    @property
    def power(self):
        return np.abs(self.data) ** 2

    @property
    def frequencies(self):
        """Bin center frequencies in Hz"""
        return np.fft.rfftfreq(self.config.fft_size, 1 / self.sample_rate)

    @property
    def times(self):
        """Time of the newest sample of each frame, in seconds"""
        return (np.arange(self.frames) + 1) * self.config.hop / self.sample_rate

    def copy(self, data=None):
        return Spectrogram(
            self.data.copy() if data is None else data,
            self.config,
            self.length,
            self.sample_rate,
        )


def frame_signal(signal: TimeSignal, config: StftConfig, window: bool = True):
    """Frames of a signal as seen by :py:func:`stft` (before the FFT)

    Parameters
    ----------
    signal : TimeSignal
        signal to frame
    config : StftConfig
        framing configuration
    window : bool, optional
        whether to apply the analysis window, by default True

    Returns
    -------
    np.ndarray
        array of shape (frames, frame_len)
    """
    n = len(signal)
    if n == 0:
        return np.zeros((0, config.frame_len))
    padded = np.zeros(config.padded_length(n))
    padded[config.start_padding : config.start_padding + n] = signal.samples
    frames = sliding_window_view(padded, config.frame_len)[:: config.hop]
    if window:
        return frames * config.analysis_window
    return frames.copy()


def stft(signal: TimeSignal, config: StftConfig = None) -> Spectrogram:
    """Short-time Fourier transform

    The signal is zero-padded with ``frame_len - hop`` samples at the start and up to
    ``frames * hop + frame_len - hop`` samples in total, with
    ``frames = ceil((len + frame_len - hop) / hop)``, so that every input sample is covered by a
    complete overlap-add. The forward transform is not normalized.

    Parameters
    ----------
    signal : TimeSignal
        signal to transform
    config : StftConfig, optional
        STFT configuration, by default :py:meth:`StftConfig.default`

    Returns
    -------
    Spectrogram
    """
    config = config or StftConfig()
    frames = frame_signal(signal, config)
    data = np.fft.rfft(frames, n=config.fft_size, axis=1)
    return Spectrogram(data, config, len(signal), signal.sample_rate)


def overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    n_frames, frame_len = frames.shape
    if n_frames == 0:
        return np.zeros(0)
    out = np.zeros((n_frames - 1) * hop + frame_len)
    for k in range(n_frames):
        out[k * hop : k * hop + frame_len] += frames[k]
    return out


def istft(spec: Spectrogram, trim: bool = True) -> TimeSignal:
    """Inverse short-time Fourier transform (weighted overlap-add)

    Parameters
    ----------
    spec : Spectrogram
        spectrogram to invert
    trim : bool, optional
        whether to remove the analysis padding and return ``spec.length`` samples, by default
        True. Otherwise the full overlap-added buffer is returned.

    Returns
    -------
    TimeSignal
    """
    config = spec.config
    if spec.bins != config.bins:
        raise ShapeError(f"expected {config.bins} bins, got {spec.bins}")
    frames = np.fft.irfft(spec.data, n=config.fft_size, axis=1)[:, : config.frame_len]
    out = overlap_add(frames * config.synthesis_window, config.hop)
    if trim:
        start = config.start_padding
        out = np.pad(out, (0, max(start + spec.length - len(out), 0)))
        out = out[start : start + spec.length]
    return TimeSignal(out, spec.sample_rate)
