from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import yaml

from larsen.core.stft import StftConfig
from larsen.errors import ConfigurationError
from larsen.nonlinearity import KINDS
from larsen.room import RirSampling
from larsen.utils import canonical_json, from_dict, sha256_hex

SCHEMA_VERSION = 1
SPLITS = ("train", "val", "test")
KALMAN_REFERENCES = ("teacher_forced", "recursive")


@dataclass
class SamplingRanges:
    """Ranges scenario parameters are uniformly drawn from

    This is a Python Data Class, so that all attributes described below can be used as
    keyword-arguments when instantiating a SamplingRanges
    """

    spr_db: Tuple[float, float] = (-10.0, 10.0)
    """Signal-to-playback ratio in dB"""

    snr_db: Tuple[float, float] = (-10.0, 30.0)
    """Signal-to-noise ratio in dB"""

    level_db: Tuple[float, float] = (-25.0, -15.0)
    """Active level of the reverberant target in dBFS"""

    gain: Tuple[float, float] = (1.0, 3.2)
    """Amplification gain G"""

    system_delay: Tuple[float, float] = (0.1, 0.3)
    """System delay in seconds"""

    rt60: Tuple[float, float] = (0.0, 0.6)
    """Reverberation time in seconds"""

    room_x: Tuple[float, float] = (3.0, 10.0)
    room_y: Tuple[float, float] = (3.0, 10.0)
    room_z: Tuple[float, float] = (2.5, 4.0)

    nonlinearities: List[str] = field(default_factory=lambda: ["hard_clip", "sigmoid"])
    """Nonlinearity kinds drawn with equal probability"""

    clip_threshold: Tuple[float, float] = (0.5, 0.9)
    """Clipping level of :code:`"hard_clip"`"""

    def __post_init__(self):
        for name in ("spr_db", "snr_db", "level_db", "gain", "system_delay", "rt60", "room_x", "room_y", "room_z", "clip_threshold"):
            value = tuple(float(v) for v in getattr(self, name))
            if len(value) != 2 or value[0] > value[1]:
                raise ConfigurationError(f"range {name} must be [low, high], got {list(value)}")
            setattr(self, name, value)
        if self.gain[0] < 0 or self.system_delay[0] < 0 or self.rt60[0] < 0:
            raise ConfigurationError("gain, system_delay and rt60 ranges must be non-negative")
        unknown = set(self.nonlinearities) - set(KINDS)
        if len(self.nonlinearities) == 0 or unknown:
            raise ConfigurationError(f"invalid nonlinearities {sorted(unknown) or '[]'}")

    @classmethod
    def from_dict(cls, env):
        return from_dict(cls, env)

    def rir_sampling(self, rir_length: Optional[int] = None) -> RirSampling:
        return RirSampling(
            room_x=self.room_x,
            room_y=self.room_y,
            room_z=self.room_z,
            rt60=self.rt60,
            rir_length=rir_length,
        )


@dataclass
class ExperimentSpec:
    """Full description of a dataset generation (or evaluation) run

    Loaded from a YAML or JSON file with :py:meth:`load`. Command-line flags override its
    values.
    """

    seed: int = 0
    """Root seed, every scenario draws from a child of it"""

    counts: dict = field(default_factory=lambda: {"train": 10000, "val": 300, "test": 500})
    """Number of scenarios per split"""

    ranges: SamplingRanges = field(default_factory=SamplingRanges)
    """Parameter sampling ranges"""

    profile: str = "default"
    """STFT profile, :code:`"default"` (512/256) or :code:`"deployable"` (128/64)"""

    duration: float = 4.0
    """Duration of each scenario in seconds"""

    sample_rate: int = 16000
    """Sample rate in Hz"""

    rir_length: Optional[int] = None
    """Impulse response length in samples, by default derived from rt60"""

    kalman_reference: str = "teacher_forced"
    """Reference of the Kalman preprocessing: :code:`"teacher_forced"` (the loudspeaker signal
    of the one-shot mixture) or :code:`"recursive"` (the Kalman output delayed by the system
    delay)"""

    noise: str = "pink"
    """Noise source: :code:`"white"`, :code:`"pink"` or a folder of noise recordings"""

    corpus: Optional[str] = None
    """Folder of mono utterances, None for a synthetic corpus"""

    synthetic: int = 0
    """Number of synthetic utterances used when `corpus` is None"""

    suppressor: str = "kalman"
    """Suppressor of streaming runs"""

    suppressor_params: dict = field(default_factory=dict)
    """Keyword arguments of the suppressor"""

    wav_subtype: str = "double"
    """WAV format of dataset files (float64 keeps ``y = s + n + d`` exact)"""

    output: str = "dataset"
    """Output folder"""

    schema_version: int = SCHEMA_VERSION
    """Version of this file format"""

    def __post_init__(self):
        if isinstance(self.ranges, dict):
            self.ranges = SamplingRanges.from_dict(self.ranges)
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigurationError(
                f"unsupported schema_version {self.schema_version} (expected {SCHEMA_VERSION})"
            )
        unknown = set(self.counts) - set(SPLITS)
        if unknown:
            raise ConfigurationError(f"unknown splits {sorted(unknown)} (available: {', '.join(SPLITS)})")
        self.counts = {name: int(self.counts.get(name, 0)) for name in SPLITS}
        if min(self.counts.values()) < 0:
            raise ConfigurationError("scenario counts must be non-negative")
        if self.kalman_reference not in KALMAN_REFERENCES:
            raise ConfigurationError(
                f"unknown kalman_reference '{self.kalman_reference}' (available: {', '.join(KALMAN_REFERENCES)})"
            )
        if self.duration <= 0:
            raise ConfigurationError("duration must be positive")
        StftConfig.from_profile(self.profile)

    @property
    def stft(self) -> StftConfig:
        return StftConfig.from_profile(self.profile)

    @property
    def total(self):
        return sum(self.counts.values())

    @classmethod
    def from_dict(cls, env):
        return from_dict(cls, env)

    @classmethod
    def load(cls, filename):
        with open(filename, "r") as f:
            content = yaml.safe_load(f) or {}
        if not isinstance(content, dict):
            raise ConfigurationError(f"{filename} does not hold a mapping")
        unknown = set(content) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown keys in {filename}: {sorted(unknown)}")
        return cls.from_dict(content)

    def to_dict(self):
        env = asdict(self)
        env["ranges"] = {k: list(v) if isinstance(v, tuple) else v for k, v in env["ranges"].items()}
        return env

    def reproducible_dict(self):
        """Specification without the fields that do not affect generated files"""
        env = self.to_dict()
        env.pop("output")
        if env["corpus"] is not None:
            env["corpus"] = str(env["corpus"]).rstrip("/").split("/")[-1]
        return env

    @property
    def hash(self):
        return sha256_hex(canonical_json(self.reproducible_dict()).encode())
