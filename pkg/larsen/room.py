from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

import numpy as np
import yaml

from larsen.core.signal import DEFAULT_SAMPLE_RATE, TimeSignal
from larsen.errors import ConfigurationError, DataError, GeometryError
from larsen.utils import from_dict

# images fainter than this (relative to a direct path at the same distance) are skipped
MIN_REFLECTION_GAIN = 1e-6

# reflection coefficient calibration against the Schroeder T20
CALIBRATION_TOLERANCE = 0.01
CALIBRATION_RANGE = 8.0
CALIBRATION_STEPS = 40
# fraction of rt60 covered by the calibration response (-42 dB on the target decay)
CALIBRATION_COVER = 0.7


@dataclass
class RoomSpec:
    """Shoebox room with uniform, frequency-independent wall absorption

    This is a Python Data Class, so that all attributes described below can be used as
    keyword-arguments when instantiating a RoomSpec
    """

    dimensions: Tuple[float, float, float] = (5.0, 4.0, 3.0)
    """Room size (Lx, Ly, Lz) in meters"""

    rt60: float = 0.0
    """Reverberation time in seconds, :code:`0` for an anechoic room"""

    speed_of_sound: float = 343.0
    """Speed of sound in m/s, default is :code:`343`"""

    rir_length: Optional[int] = None
    """Impulse response length in samples, default is ``rt60 * sample_rate + 1024``"""

    max_order: Optional[int] = None
    """Maximum number of wall reflections of an image source, by default unlimited"""

    def __post_init__(self):
        self.dimensions = tuple(float(d) for d in self.dimensions)
        if len(self.dimensions) != 3 or min(self.dimensions) <= 0:
            raise GeometryError(f"room dimensions must be 3 positive lengths, got {self.dimensions}")
        if self.rt60 < 0:
            raise ConfigurationError(f"rt60 must be non-negative, got {self.rt60}")
        if self.speed_of_sound <= 0:
            raise ConfigurationError("speed_of_sound must be positive")

    @classmethod
    def from_dict(cls, env):
        return from_dict(cls, env)

    @classmethod
    def load(cls, filename):
        with open(filename, "r") as f:
            return cls.from_dict(yaml.safe_load(f))

    @property
    def volume(self):
        return float(np.prod(self.dimensions))

    @property
    def surface(self):
        lx, ly, lz = self.dimensions
        return 2 * (lx * ly + lx * lz + ly * lz)

    @property
    def reflection_coefficient(self):
        """Wall (pressure) reflection coefficient from Eyring's reverberation formula, the
        starting point of the calibration done by :py:func:`generate_rir`"""
        if self.rt60 == 0:
            return 0.0
        return float(
            np.exp(
                -12
                * np.log(10)
                * self.volume
                / (self.speed_of_sound * self.surface * self.rt60)
            )
        )

    def length(self, sample_rate=DEFAULT_SAMPLE_RATE):
        if self.rir_length is not None:
            return int(self.rir_length)
        return int(self.rt60 * sample_rate) + 1024

    def contains(self, position, clearance=0.0):
        position = np.asarray(position, dtype=float)
        return bool(
            np.all(position > clearance)
            and np.all(position < np.array(self.dimensions) - clearance)
        )

    def to_dict(self):
        return asdict(self)


def _axis_images(source, mic, length, n_max):
    n = np.arange(-n_max, n_max + 1)
    deltas, reflections = [], []
    for u in (0, 1):
        deltas.append((1 - 2 * u) * source + 2 * n * length - mic)
        reflections.append(np.abs(n - u) + np.abs(n))
    return np.concatenate(deltas), np.concatenate(reflections)


def _image_sources(room, source, mic, horizon, sample_rate):
    """Arrival sample, reflection order and distance of every image reaching the
    microphone within `horizon` samples"""
    max_distance = horizon / sample_rate * room.speed_of_sound
    max_order = np.inf if room.max_order is None else room.max_order
    if room.reflection_coefficient == 0:
        max_order = 0

    axes = []
    for s, m, size in zip(source, mic, room.dimensions):
        n_max = int(min(np.ceil(max_distance / (2 * size)) + 1, max_order + 1))
        axes.append(_axis_images(s, m, size, n_max))

    (dx, rx), (dy, ry), (dz, rz) = axes
    distance = np.sqrt(
        dx[:, None, None] ** 2 + dy[None, :, None] ** 2 + dz[None, None, :] ** 2
    )
    order = rx[:, None, None] + ry[None, :, None] + rz[None, None, :]
    index = np.round(distance / room.speed_of_sound * sample_rate).astype(int)

    keep = (index < horizon) & (order <= max_order)
    return index[keep], order[keep], distance[keep]


def _assemble(images, beta, length):
    index, order, distance = images
    keep = index < length
    if beta == 0:
        keep &= order == 0
    elif beta < 1:
        keep &= order <= np.ceil(np.log(MIN_REFLECTION_GAIN) / np.log(beta))
    amplitude = np.power(beta, order[keep]) / (4 * np.pi * distance[keep])
    return np.bincount(index[keep], weights=amplitude, minlength=length)[:length]


def _decay_time(samples, sample_rate, decay_range=(-5.0, -25.0)):
    energy = np.cumsum(samples[::-1] ** 2)[::-1]
    if energy.size == 0 or energy[0] == 0:
        raise DataError("impulse response has no energy")
    with np.errstate(divide="ignore"):
        edc = 10 * np.log10(energy / energy[0])
    upper, lower = decay_range
    fit = np.flatnonzero((edc <= upper) & (edc >= lower))
    if len(fit) < 2:
        return 0.0
    t = fit / sample_rate
    slope = np.polyfit(t, edc[fit], 1)[0]
    if slope >= 0:
        return 0.0
    return float(-60 / slope)


def _calibrated_reflection(room, images, horizon, sample_rate):
    """Reflection coefficient whose response decays in ``room.rt60`` (Schroeder T20)

    The image sum of a single uniform coefficient decays more slowly than the diffuse-field
    formula predicts, mostly in flat or elongated rooms. The absorption exponent ``-ln(beta)``
    is bisected (geometrically) around the Eyring value until the T20 of the response is
    within CALIBRATION_TOLERANCE of the target.
    """
    target = room.rt60
    exponent = -np.log(room.reflection_coefficient)
    low, high = exponent / CALIBRATION_RANGE, exponent * CALIBRATION_RANGE
    best_error, best = np.inf, exponent
    for _ in range(CALIBRATION_STEPS):
        decay = _decay_time(_assemble(images, np.exp(-exponent), horizon), sample_rate)
        error = abs(decay - target) / target
        if error < best_error:
            best_error, best = error, exponent
        if error <= CALIBRATION_TOLERANCE:
            break
        if decay > target:
            low = exponent
        else:
            high = exponent
        exponent = np.sqrt(low * high)
    return float(np.exp(-best))


def generate_rir(
    room: RoomSpec, source, mic, sample_rate: int = DEFAULT_SAMPLE_RATE
) -> TimeSignal:
    """Room impulse response between a source and a microphone (image method)

    Image sources of the shoebox are summed with a uniform wall reflection coefficient.
    Each image contributes ``beta^k / (4 pi d)`` at the nearest sample of its propagation
    delay ``d / c``. The coefficient starts from Eyring's formula for ``room.rt60`` and is
    calibrated until the Schroeder T20 of this source/microphone response matches
    ``room.rt60``. Calibration runs on a response long enough to decay well past -25 dB, the
    returned response is its first ``room.length(sample_rate)`` samples.

    Parameters
    ----------
    room : RoomSpec
        room geometry and reverberation time
    source : array-like
        (x, y, z) source position in meters
    mic : array-like
        (x, y, z) microphone position in meters
    sample_rate : int, optional
        sample rate in Hz, by default 16000

    Returns
    -------
    TimeSignal
        impulse response of ``room.length(sample_rate)`` samples
    """
    source = np.asarray(source, dtype=float)
    mic = np.asarray(mic, dtype=float)
    if not room.contains(source):
        raise GeometryError(f"source {source.tolist()} is outside the room {room.dimensions}")
    if not room.contains(mic):
        raise GeometryError(f"microphone {mic.tolist()} is outside the room {room.dimensions}")
    if np.linalg.norm(source - mic) < 1e-9:
        raise GeometryError("source and microphone positions coincide")

    length = room.length(sample_rate)
    if room.reflection_coefficient == 0:
        images = _image_sources(room, source, mic, length, sample_rate)
        return TimeSignal(_assemble(images, 0.0, length), sample_rate)

    horizon = max(length, int(CALIBRATION_COVER * room.rt60 * sample_rate) + 1024)
    images = _image_sources(room, source, mic, horizon, sample_rate)
    beta = _calibrated_reflection(room, images, horizon, sample_rate)
    return TimeSignal(_assemble(images, beta, length), sample_rate)


def estimate_rt60(rir: TimeSignal, decay_range=(-5.0, -25.0)) -> float:
    """Reverberation time from Schroeder backward integration

    A line is fitted to the energy decay curve between the two levels of `decay_range` and
    extrapolated to -60 dB.

    Parameters
    ----------
    rir : TimeSignal
        room impulse response
    decay_range : tuple, optional
        fit range in dB, by default (-5, -25) (T20)

    Returns
    -------
    float
        reverberation time in seconds (0 when the decay is a single step)
    """
    return _decay_time(rir.samples, rir.sample_rate, decay_range)


@dataclass
class RirSampling:
    """Sampling ranges of random rooms and source/microphone placements

    This is a Python Data Class, so that all attributes described below can be used as
    keyword-arguments when instantiating a RirSampling
    """

    room_x: Tuple[float, float] = (3.0, 10.0)
    """Range of the room length in meters"""

    room_y: Tuple[float, float] = (3.0, 10.0)
    """Range of the room width in meters"""

    room_z: Tuple[float, float] = (2.5, 4.0)
    """Range of the room height in meters"""

    rt60: Tuple[float, float] = (0.0, 0.6)
    """Range of the reverberation time in seconds"""

    wall_clearance: float = 0.2
    """Minimum distance between any source/microphone and the walls, in meters"""

    min_distance: float = 0.3
    """Minimum source-microphone distance in meters"""

    max_attempts: int = 1000
    """Placement attempts before giving up"""

    rir_length: Optional[int] = None
    """Impulse response length in samples, by default derived from rt60"""

    @classmethod
    def from_dict(cls, env):
        return from_dict(cls, env)

    def check(self):
        for name in ("room_x", "room_y", "room_z", "rt60"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise GeometryError(f"invalid range {name}={[lo, hi]}")
        if min(self.room_x[0], self.room_y[0], self.room_z[0]) <= 2 * self.wall_clearance:
            raise GeometryError(
                f"rooms smaller than twice the wall clearance ({self.wall_clearance} m) can be drawn"
            )
        if self.min_distance < 0 or self.wall_clearance < 0:
            raise GeometryError("distances must be non-negative")
        smallest = np.array([self.room_x[0], self.room_y[0], self.room_z[0]])
        if np.linalg.norm(smallest - 2 * self.wall_clearance) <= self.min_distance:
            raise GeometryError(
                f"a {self.min_distance} m source-microphone distance cannot fit the smallest room"
            )


@dataclass
class RirSet:
    """Impulse responses of one acoustic scene, all towards the same microphone"""

    h_loudspeaker: TimeSignal
    """Loudspeaker to microphone path (the feedback path)"""

    h_nearend: TimeSignal
    """Near-end talker to microphone path"""

    h_noise: TimeSignal
    """Noise source to microphone path"""

    geometry: dict = field(default_factory=dict)
    """Room dimensions, rt60 and positions in meters"""

    def __post_init__(self):
        rates = {h.sample_rate for h in self.responses}
        if len(rates) != 1:
            raise DataError(f"impulse responses have different sample rates {sorted(rates)}")
        for h in self.responses:
            if h.energy == 0:
                raise DataError("impulse responses must have non-zero energy")

    @property
    def responses(self):
        return (self.h_loudspeaker, self.h_nearend, self.h_noise)

    @property
    def sample_rate(self):
        return self.h_loudspeaker.sample_rate

    @classmethod
    def scalar(cls, a=1.0, lag=0, sample_rate=DEFAULT_SAMPLE_RATE):
        """Toy scene: the feedback path is ``a`` times a delta at `lag` samples and the
        near-end/noise paths are unit deltas"""
        return cls(
            TimeSignal.impulse(lag + 1, lag, a, sample_rate),
            TimeSignal.impulse(1, sample_rate=sample_rate),
            TimeSignal.impulse(1, sample_rate=sample_rate),
            {"scalar": a, "lag": lag},
        )


def _place(rng, room, sampling, anchor=None):
    low = np.full(3, sampling.wall_clearance)
    high = np.array(room.dimensions) - sampling.wall_clearance
    for _ in range(sampling.max_attempts):
        position = rng.uniform(low, high)
        if anchor is None or np.linalg.norm(position - anchor) >= sampling.min_distance:
            return position
    raise GeometryError(
        f"could not place a source {sampling.min_distance} m away from the microphone"
    )


def sample_rir_set(
    rng: np.random.Generator,
    constraints: RirSampling = None,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> RirSet:
    """Draw a random room, microphone, loudspeaker, talker and noise positions and compute the
    three impulse responses

    Parameters
    ----------
    rng : np.random.Generator
        seeded generator, the draw is deterministic given its state
    constraints : RirSampling, optional
        sampling ranges, by default :py:class:`RirSampling`
    sample_rate : int, optional
        sample rate in Hz, by default 16000

    Returns
    -------
    RirSet
    """
    sampling = constraints or RirSampling()
    sampling.check()

    dimensions = [
        rng.uniform(*sampling.room_x),
        rng.uniform(*sampling.room_y),
        rng.uniform(*sampling.room_z),
    ]
    rt60 = rng.uniform(*sampling.rt60)
    room = RoomSpec(dimensions, rt60, rir_length=sampling.rir_length)

    mic = _place(rng, room, sampling)
    positions = {
        name: _place(rng, room, sampling, anchor=mic)
        for name in ("loudspeaker", "talker", "noise")
    }

    geometry = {
        "room": list(room.dimensions),
        "rt60": float(rt60),
        "rir_length": sampling.rir_length,
        "mic": mic.tolist(),
        **{name: p.tolist() for name, p in positions.items()},
    }

    return RirSet(
        generate_rir(room, positions["loudspeaker"], mic, sample_rate),
        generate_rir(room, positions["talker"], mic, sample_rate),
        generate_rir(room, positions["noise"], mic, sample_rate),
        geometry,
    )


def rir_set_from_geometry(geometry: dict, sample_rate: int = DEFAULT_SAMPLE_RATE) -> RirSet:
    """Recompute the impulse responses of a geometry recorded by :py:func:`sample_rir_set`"""
    missing = {"room", "rt60", "mic", "loudspeaker", "talker", "noise"} - set(geometry)
    if missing:
        raise DataError(f"geometry lacks {sorted(missing)}")
    room = RoomSpec(geometry["room"], geometry["rt60"], rir_length=geometry.get("rir_length"))
    mic = geometry["mic"]
    return RirSet(
        generate_rir(room, geometry["loudspeaker"], mic, sample_rate),
        generate_rir(room, geometry["talker"], mic, sample_rate),
        generate_rir(room, geometry["noise"], mic, sample_rate),
        dict(geometry),
    )
