from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
import yaml
from scipy import signal as ssignal

from larsen.core.signal import DEFAULT_SAMPLE_RATE, TimeSignal
from larsen.core.stft import StftConfig
from larsen.errors import ConfigurationError, DataError, ScalingError
from larsen.nonlinearity import NonlinearityModel, apply_nonlinearity
from larsen.room import RirSet
from larsen.utils import db_to_amplitude

ACTIVE_THRESHOLD_DB = -40.0

GAIN_PRESETS = {
    "soft": [(0.0, 1.0), (2.0, 1.1), (4.0, 1.2)],
    "moderate": [(0.0, 1.0), (2.0, 1.5), (4.0, 2.0)],
    "severe": [(0.0, 1.0), (2.0, 2.2), (4.0, 3.2)],
}
"""Step schedules of gradually increasing amplification gain (time in s, gain)"""


@dataclass
class GainSchedule:
    """Piecewise-constant amplification gain over time

    The gain at time ``t`` is the gain of the last breakpoint at or before ``t`` (the first
    breakpoint's gain before it).
    """

    breakpoints: List[Tuple[float, float]] = field(default_factory=lambda: [(0.0, 1.0)])
    """List of (time in seconds, gain) pairs"""

    def __post_init__(self):
        points = []
        for point in self.breakpoints:
            if isinstance(point, dict):
                point = (point["time"], point["gain"])
            time, gain = point
            points.append((float(time), float(gain)))
        if len(points) == 0:
            raise ConfigurationError("a gain schedule needs at least one breakpoint")
        points.sort(key=lambda p: p[0])
        if min(g for _, g in points) < 0:
            raise ConfigurationError("gains must be non-negative")
        self.breakpoints = points
        self._times = np.array([t for t, _ in points])
        self._gains = np.array([g for _, g in points])

    @classmethod
    def constant(cls, gain):
        return cls([(0.0, gain)])

    @classmethod
    def preset(cls, name):
        if name not in GAIN_PRESETS:
            raise ConfigurationError(
                f"unknown gain preset '{name}' (available: {', '.join(GAIN_PRESETS)})"
            )
        return cls(list(GAIN_PRESETS[name]))

    @classmethod
    def load(cls, filename):
        """Load a schedule from a JSON (or YAML) list of ``[time_s, gain]`` breakpoints"""
        with open(filename, "r") as f:
            content = yaml.safe_load(f)
        if isinstance(content, dict):
            content = content.get("breakpoints", content.get("schedule"))
        return cls(content)

    def __call__(self, time):
        i = np.searchsorted(self._times, time, side="right") - 1
        return float(self._gains[max(i, 0)])

    @property
    def max_gain(self):
        return float(self._gains.max())

    def to_list(self):
        return [list(p) for p in self.breakpoints]


@dataclass
class ScenarioConfig:
    """Full description of one amplification-loop experiment

    This is a Python Data Class, so that all attributes described below can be used as
    keyword-arguments when instantiated.
    """

    target: TimeSignal
    """Near-end speech as received at the microphone (s)"""

    rirs: RirSet
    """Impulse responses of the scene, ``rirs.h_loudspeaker`` closes the loop"""

    noise: Optional[TimeSignal] = None
    """Background noise at the microphone (n), tiled or truncated to the scenario length"""

    gain: float = 1.0
    """Amplification gain G"""

    system_delay: float = 0.2
    """Delay from microphone to loudspeaker in seconds, rounded to a whole number of hops"""

    nonlinearity: NonlinearityModel = field(default_factory=NonlinearityModel)
    """Amplifier/loudspeaker nonlinearity, applied after the gain"""

    spr_db: Optional[float] = None
    """Signal-to-playback ratio of the unit-gain playback (nonlinearity included), None for a
    physical loop (no playback scaling)"""

    snr_db: Optional[float] = None
    """Signal-to-noise ratio, None to keep the noise level unchanged"""

    stft: StftConfig = field(default_factory=StftConfig)
    """STFT configuration (its hop is the loop granularity)"""

    duration: Optional[float] = None
    """Duration in seconds, by default the target duration"""

    gain_schedule: Optional[GainSchedule] = None
    """Gain over time, overrides `gain` when provided"""

    def __post_init__(self):
        if self.gain < 0:
            raise ConfigurationError(f"gain must be non-negative, got {self.gain}")
        if self.system_delay < 0:
            raise ConfigurationError(f"system_delay must be non-negative, got {self.system_delay}")
        rates = {self.target.sample_rate, self.rirs.sample_rate}
        if self.noise is not None:
            rates.add(self.noise.sample_rate)
        if len(rates) != 1:
            raise DataError(f"scenario signals have different sample rates {sorted(rates)}")
        if self.duration is not None and self.n_samples > len(self.target):
            raise ConfigurationError(
                f"duration {self.duration} s exceeds the target duration ({self.target.duration:.3f} s)"
            )

    @property
    def sample_rate(self):
        return self.target.sample_rate

    @property
    def n_samples(self):
        if self.duration is None:
            return len(self.target)
        return int(round(self.duration * self.sample_rate))

    @property
    def hop(self):
        return self.stft.hop

    @property
    def delay_hops(self):
        """System delay in hops"""
        return int(round(self.system_delay * self.sample_rate / self.hop))

    @property
    def delay_samples(self):
        return self.delay_hops * self.hop

    @property
    def schedule(self):
        if self.gain_schedule is not None:
            return self.gain_schedule
        return GainSchedule.constant(self.gain)

    @property
    def s(self):
        """Target restricted to the scenario duration"""
        return self.target[: self.n_samples]

    @property
    def n(self):
        """Noise at the scenario length, scaled to `snr_db`"""
        if self.noise is None:
            return TimeSignal.zeros(self.n_samples, self.sample_rate)
        noise = self.noise.tile(self.n_samples)
        if self.snr_db is None:
            return noise
        return noise.scaled(ratio_scale(self.s, noise, self.snr_db, self.stft.frame_len))

    @property
    def playback_scale(self):
        """Factor applied to the playback path so that the playback at unit gain, nonlinearity
        included, meets `spr_db` against `s` (1 when `spr_db` is None)

        The gain schedule then scales the loudspeaker signal on top of it."""
        if self.spr_db is None:
            return 1.0
        s = self.s
        once = PlaybackPath(
            self.rirs.h_loudspeaker,
            self.nonlinearity,
            GainSchedule.constant(1.0),
            self.delay_hops,
            self.hop,
            len(s),
        ).run(s)[1]
        return ratio_scale(s, once, self.spr_db, self.stft.frame_len)

    def playback_path(self, n_samples=None):
        return PlaybackPath(
            self.rirs.h_loudspeaker,
            self.nonlinearity,
            self.schedule,
            self.delay_hops,
            self.hop,
            n_samples or self.n_samples,
            scale=self.playback_scale,
        )


def active_mask(s: TimeSignal, frame_len: int = 512, threshold_db=ACTIVE_THRESHOLD_DB):
    """Samples belonging to non-overlapping frames whose level exceeds `threshold_db` dBFS

    All samples are considered active when no frame exceeds the threshold.
    """
    n = len(s)
    n_frames = int(np.ceil(n / frame_len))
    padded = np.pad(s.samples, (0, n_frames * frame_len - n)).reshape(n_frames, frame_len)
    level = 10 * np.log10(np.mean(padded**2, axis=1) + 1e-30)
    active = np.repeat(level > threshold_db, frame_len)[:n]
    if not np.any(active):
        active[:] = True
    return active


def ratio_scale(
    reference: TimeSignal, component: TimeSignal, ratio_db: float, frame_len: int = 512
) -> float:
    """Factor to apply to `component` so that ``reference / component`` is `ratio_db` dB

    Powers are measured on the active region of `reference` (frames above -40 dBFS).

    Parameters
    ----------
    reference : TimeSignal
        reference signal (the target speech)
    component : TimeSignal
        signal to scale (playback or noise), same length as `reference`
    ratio_db : float
        requested ratio in dB
    frame_len : int, optional
        frame length of the activity detection, by default 512

    Returns
    -------
    float
    """
    mask = active_mask(reference, frame_len)
    reference_power = np.mean(reference.samples[mask] ** 2)
    if reference_power == 0:
        raise ScalingError(
            f"cannot scale to {ratio_db} dB against a zero-energy target"
        )
    component_power = np.mean(component.samples[: len(mask)][mask] ** 2)
    if component_power == 0:
        return 1.0
    return float(np.sqrt(reference_power / (component_power * 10 ** (ratio_db / 10))))


def set_active_level(s: TimeSignal, level_db: float, frame_len: int = 512) -> TimeSignal:
    """`s` scaled so that its active region (frames above -40 dBFS once the whole signal
    sits at `level_db`) has an RMS of `level_db` dBFS"""
    if s.rms == 0:
        raise ScalingError(f"cannot bring a zero-energy signal to {level_db} dBFS")
    target = db_to_amplitude(level_db)
    s = s.scaled(target / s.rms)
    mask = active_mask(s, frame_len)
    return s.scaled(target / np.sqrt(np.mean(s.samples[mask] ** 2)))


class PlaybackPath:
    def __init__(
        self,
        rir: TimeSignal,
        nonlinearity: NonlinearityModel,
        schedule: GainSchedule,
        delay_hops: int,
        hop: int,
        n_samples: int,
        scale: float = 1.0,
    ):
        """Amplifier, loudspeaker and room path from the processed signal back to the microphone

        Blocks of processed samples are pushed hop by hop. Block ``j`` leaves the loudspeaker
        at hop ``j + delay_hops`` as ``NL(G(t) * block)``, and ``scale * rir`` convolved with it
        accumulates into the future microphone playback.

        Parameters
        ----------
        rir : TimeSignal
            loudspeaker to microphone impulse response
        nonlinearity : NonlinearityModel
            amplifier/loudspeaker nonlinearity
        schedule : GainSchedule
            amplification gain over time (evaluated at the loudspeaker time)
        delay_hops : int
            system delay in hops
        hop : int
            block size in samples
        n_samples : int
            number of microphone samples to simulate
        scale : float, optional
            playback scale factor, by default 1.0
        """
        self.rir = rir
        self.nonlinearity = nonlinearity
        self.schedule = schedule
        self.delay_hops = int(delay_hops)
        self.hop = int(hop)
        self.n_samples = int(n_samples)
        self.scale = scale
        self.sample_rate = rir.sample_rate
        self.n_blocks = int(np.ceil(self.n_samples / self.hop))
        self.reset()

    def reset(self):
        total = (self.n_blocks + self.delay_hops + 1) * self.hop + len(self.rir)
        self.playback = np.zeros(total)
        self.loudspeaker = np.zeros(total)

    def push(self, j, block):
        """Send processed block `j` to the loudspeaker"""
        start = (j + self.delay_hops) * self.hop
        if start >= self.n_blocks * self.hop:
            return
        gain = self.schedule(start / self.sample_rate)
        x = apply_nonlinearity(gain * np.asarray(block, dtype=float), self.nonlinearity)
        self.loudspeaker[start : start + self.hop] = x
        d = self.scale * ssignal.convolve(x, self.rir.samples, mode="full")
        self.playback[start : start + len(d)] += d

    def heard(self, i):
        """Playback reaching the microphone during block `i`"""
        return self.playback[i * self.hop : (i + 1) * self.hop]

    def run(self, processed: TimeSignal):
        """Open-loop pass of a whole processed signal

        Returns
        -------
        tuple
            (loudspeaker signal x, playback at the microphone d), both of `n_samples` samples
        """
        samples = np.pad(processed.samples, (0, self.n_blocks * self.hop))
        for j in range(self.n_blocks):
            self.push(j, samples[j * self.hop : (j + 1) * self.hop])
        return (
            TimeSignal(self.loudspeaker[: self.n_samples], self.sample_rate),
            TimeSignal(self.playback[: self.n_samples], self.sample_rate),
        )


class Mixture(NamedTuple):
    y: TimeSignal
    s: TimeSignal
    d: TimeSignal
    n: TimeSignal


def teacher_forced_playback(cfg: ScenarioConfig):
    """Loudspeaker signal and playback obtained when the clean target is played back once

    Returns
    -------
    tuple
        (x, d) as TimeSignal
    """
    return cfg.playback_path().run(cfg.s)


def make_teacher_forced_mixture(cfg: ScenarioConfig) -> Mixture:
    """One-shot mixture of target, noise and a single playback of the clean target

    ``d = scale * h * NL(G * delay(s, system_delay))`` and ``y = s + n + d``, without recursion.

    Parameters
    ----------
    cfg : ScenarioConfig
        scenario

    Returns
    -------
    Mixture
        named tuple (y, s, d, n)
    """
    s = cfg.s
    n = cfg.n
    _, d = teacher_forced_playback(cfg)
    y = TimeSignal((s.samples + n.samples) + d.samples, cfg.sample_rate)
    return Mixture(y, s, d, n)


# Synthetic sources
# -----------------


def _normalize(x, level_db):
    rms = np.sqrt(np.mean(x**2))
    if rms == 0:
        return x
    return x * db_to_amplitude(level_db) / rms


def example_speech(
    duration: float = 2.0,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    level_db: float = -20.0,
    seed: Optional[int] = None,
) -> TimeSignal:
    """Speech-like test signal at a constant level

    A glottal-like harmonic series with a slowly varying pitch is shaped by two formant
    resonators and modulated at a syllabic rate of 4 Hz.

    Parameters
    ----------
    duration : float, optional
        duration in seconds, by default 2.0
    sample_rate : int, optional
        sample rate in Hz, by default 16000
    level_db : float, optional
        RMS level in dBFS, by default -20
    seed : int, optional
        random seed, by default None

    Returns
    -------
    TimeSignal
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate

    f0 = rng.uniform(100, 200) * (1 + 0.1 * np.sin(2 * np.pi * 0.5 * t + rng.uniform(0, 2 * np.pi)))
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    voiced = np.zeros(n)
    for k in range(1, int(0.45 * sample_rate / f0.max()) + 1):
        voiced += np.sin(k * phase) / k

    shaped = voiced + 0.01 * rng.standard_normal(n)
    for formant, bandwidth in ((rng.uniform(500, 800), 80), (rng.uniform(1100, 1600), 120)):
        r = np.exp(-np.pi * bandwidth / sample_rate)
        theta = 2 * np.pi * formant / sample_rate
        shaped = shaped + ssignal.lfilter([1 - r], [1, -2 * r * np.cos(theta), r**2], voiced)

    envelope = 0.55 - 0.45 * np.cos(2 * np.pi * 4.0 * t)
    return TimeSignal(_normalize(shaped * envelope, level_db), sample_rate)


PINK_B = [0.049922035, -0.095993537, 0.050612699, -0.004408786]
PINK_A = [1, -2.494956002, 2.017265875, -0.522189400]


def example_noise(
    duration: float = 2.0,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    level_db: float = -30.0,
    color: str = "white",
    seed: Optional[int] = None,
) -> TimeSignal:
    """White or pink Gaussian noise at a given RMS level (dBFS)"""
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    x = rng.standard_normal(n)
    if color == "pink":
        x = ssignal.lfilter(PINK_B, PINK_A, x)
    elif color != "white":
        raise ConfigurationError(f"unknown noise color '{color}'")
    return TimeSignal(_normalize(x, level_db), sample_rate)


def scalar_scenario(
    target: TimeSignal,
    loop_gain: float,
    system_delay: float = 0.3,
    stft: StftConfig = None,
    **kwargs,
) -> ScenarioConfig:
    """Toy scenario whose feedback path is a pure gain: ``y(t) = s(t) + loop_gain * y(t - L)``
    for a passthrough suppressor, with L the system delay rounded to hops"""
    return ScenarioConfig(
        target=target,
        rirs=RirSet.scalar(1.0, sample_rate=target.sample_rate),
        gain=loop_gain,
        system_delay=system_delay,
        stft=stft or StftConfig(),
        **kwargs,
    )
