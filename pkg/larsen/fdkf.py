from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
import yaml

from larsen.core.signal import TimeSignal
from larsen.core.stft import StftConfig
from larsen.errors import ConfigurationError, NumericError, ShapeError
from larsen.utils import from_dict


@dataclass(frozen=True)
class KalmanConfig:
    """Frequency-domain Kalman filter settings

    This is a frozen Python Data Class, so that all attributes described below can be used as
    keyword-arguments when instantiating a KalmanConfig. The filter runs overlap-save on the
    STFT grid, which requires ``fft_size = 2 * hop``: each partition then models ``hop`` taps.
    """

    stft: StftConfig = field(default_factory=StftConfig)
    """Block and FFT sizes (hop = block size, fft_size = 2 * hop)"""

    partitions: int = 1
    """Number of partitions, the modelled path has ``partitions * hop`` taps"""

    transition: float = 0.999
    """Transition factor A of the random-walk path model, in (0, 1]"""

    initial_p_cov: float = 1.0
    """Initial state estimation error covariance"""

    smoothing: float = 0.9
    """Recursive smoothing constant of the observation noise covariance"""

    epsilon: float = 1e-10
    """Regularization of the Kalman gain denominator"""

    def __post_init__(self):
        if isinstance(self.stft, dict):
            object.__setattr__(self, "stft", StftConfig.from_dict(self.stft))
        if int(self.partitions) != self.partitions or self.partitions < 1:
            raise ConfigurationError(f"partitions must be a positive integer, got {self.partitions}")
        if not 0 < self.transition <= 1:
            raise ConfigurationError(f"transition must be in (0, 1], got {self.transition}")
        if self.initial_p_cov < 0:
            raise ConfigurationError("initial_p_cov must be non-negative")
        if not 0 <= self.smoothing < 1:
            raise ConfigurationError(f"smoothing must be in [0, 1), got {self.smoothing}")
        if self.stft.fft_size != 2 * self.stft.hop:
            raise ConfigurationError(
                f"overlap-save filtering needs fft_size = 2 * hop, got fft_size={self.stft.fft_size} and hop={self.stft.hop}"
            )

    @property
    def bins(self):
        return self.stft.bins

    @property
    def taps(self):
        """Length of the modelled path in samples"""
        return self.partitions * self.stft.hop

    @classmethod
    def from_dict(cls, env):
        return from_dict(cls, env)

    @classmethod
    def load(cls, filename):
        with open(filename, "r") as f:
            return cls.from_dict(yaml.safe_load(f) or {})

    def to_dict(self):
        return {
            "stft": self.stft.to_dict(),
            "partitions": self.partitions,
            "transition": self.transition,
            "initial_p_cov": self.initial_p_cov,
            "smoothing": self.smoothing,
            "epsilon": self.epsilon,
        }


@dataclass
class KalmanState:
    """Per-bin state of the frequency-domain Kalman filter

    Arrays have shape (partitions, bins), except `psi_vv` which is shared by all partitions.
    """

    h_hat: np.ndarray
    """Estimated feedback path (complex)"""

    p_cov: np.ndarray
    """State estimation error covariance"""

    psi_vv: np.ndarray
    """Observation noise covariance, shape (bins,)"""

    psi_dd: np.ndarray
    """Process noise covariance"""

    transition: float = 0.999
    """Transition factor A"""

    frame_index: int = 0
    """Number of updates applied"""

    smoothing: float = 0.9
    epsilon: float = 1e-10

    @classmethod
    def initial(cls, config: KalmanConfig = None):
        """Zero path estimate with uniform initial covariance"""
        config = config or KalmanConfig()
        shape = (config.partitions, config.bins)
        return cls(
            h_hat=np.zeros(shape, dtype=complex),
            p_cov=np.full(shape, float(config.initial_p_cov)),
            psi_vv=np.zeros(config.bins),
            psi_dd=np.zeros(shape),
            transition=config.transition,
            smoothing=config.smoothing,
            epsilon=config.epsilon,
        )

    @property
    def partitions(self):
        return self.h_hat.shape[0]

    @property
    def bins(self):
        return self.h_hat.shape[1]

    def copy(self):
        return replace(
            self,
            h_hat=self.h_hat.copy(),
            p_cov=self.p_cov.copy(),
            psi_vv=self.psi_vv.copy(),
            psi_dd=self.psi_dd.copy(),
        )


def _partitioned(state, R):
    R = np.asarray(R)
    if R.ndim == 1:
        R = R[None, :]
    if R.shape != state.h_hat.shape:
        raise ShapeError(
            f"reference must have shape {state.h_hat.shape} (partitions, bins), got {R.shape}"
        )
    return R


def _check_frame(state, Y, name):
    Y = np.asarray(Y)
    if Y.shape != (state.bins,):
        raise ShapeError(f"{name} must have {state.bins} bins, got shape {Y.shape}")
    return Y


def _check_finite(state, **arrays):
    for name, a in arrays.items():
        bad = ~np.isfinite(a)
        if np.any(bad):
            index = np.argwhere(bad)[0]
            b = int(index[-1])
            raise NumericError(
                f"non-finite {name} in bin {b}", frame=state.frame_index, bin=b
            )


def predict(state: KalmanState, Y: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Near-end estimate ``E = Y - sum_p R_p * H_p``

    Parameters
    ----------
    state : KalmanState
        filter state (left untouched)
    Y : np.ndarray
        microphone spectrum, shape (bins,)
    R : np.ndarray
        reference spectra, shape (bins,) for a single partition or (partitions, bins)

    Returns
    -------
    np.ndarray
        error spectrum, shape (bins,)
    """
    Y = _check_frame(state, Y, "Y")
    R = _partitioned(state, R)
    return Y - np.sum(R * state.h_hat, axis=0)


def update(state: KalmanState, E: np.ndarray, R: np.ndarray) -> KalmanState:
    """One Kalman step of the per-bin path estimate

    The observation noise covariance is first smoothed with ``|E|^2``, then

    - ``K = P R* / (sum_p |R_p|^2 P_p + psi_vv + eps)``
    - ``psi_dd = (1 - A^2) |H|^2``
    - ``P+ = A^2 (1 - K R) P + psi_dd``
    - ``H+ = A (H + K E)``

    Parameters
    ----------
    state : KalmanState
        current state (left untouched)
    E : np.ndarray
        error spectrum, shape (bins,)
    R : np.ndarray
        reference spectra, shape (bins,) or (partitions, bins)

    Returns
    -------
    KalmanState
        updated state
    """
    E = _check_frame(state, E, "E")
    R = _partitioned(state, R)
    _check_finite(state, E=E, R=R)

    A = state.transition
    s = state.smoothing
    psi_vv = s * state.psi_vv + (1 - s) * np.abs(E) ** 2
    denominator = np.sum(np.abs(R) ** 2 * state.p_cov, axis=0) + psi_vv + state.epsilon
    K = state.p_cov * np.conj(R) / denominator
    KR = np.real(K * R)
    psi_dd = (1 - A**2) * np.abs(state.h_hat) ** 2
    p_cov = np.maximum(A**2 * (1 - KR) * state.p_cov + psi_dd, 0.0)
    h_hat = A * (state.h_hat + K * E)

    _check_finite(state, path=h_hat, covariance=p_cov)
    return KalmanState(
        h_hat=h_hat,
        p_cov=p_cov,
        psi_vv=psi_vv,
        psi_dd=psi_dd,
        transition=A,
        frame_index=state.frame_index + 1,
        smoothing=s,
        epsilon=state.epsilon,
    )


class FrequencyDomainKalmanFilter:
    def __init__(self, config: KalmanConfig = None):
        """Streaming overlap-save frequency-domain Kalman filter

        Each call of :py:meth:`filt` consumes one hop of microphone and reference samples and
        returns one hop of error samples, without latency.

        Parameters
        ----------
        config : KalmanConfig, optional
            filter settings, by default :py:class:`KalmanConfig`
        """
        self.config = config or KalmanConfig()
        self.hop = self.config.stft.hop
        self.fft_size = self.config.stft.fft_size
        self.reset()

    def reset(self):
        self.state = KalmanState.initial(self.config)
        self._reference = np.zeros(self.fft_size)
        self._R = np.zeros((self.config.partitions, self.config.bins), dtype=complex)

    def filt(self, y_block: np.ndarray, r_block: np.ndarray) -> np.ndarray:
        """Cancel the feedback of `r_block` from `y_block` and adapt

        Parameters
        ----------
        y_block : np.ndarray
            hop of microphone samples
        r_block : np.ndarray
            hop of reference (loudspeaker) samples, time-aligned with `y_block`

        Returns
        -------
        np.ndarray
            hop of error samples
        """
        hop = self.hop
        y_block = np.asarray(y_block, dtype=float)
        r_block = np.asarray(r_block, dtype=float)
        if y_block.shape != (hop,) or r_block.shape != (hop,):
            raise ShapeError(
                f"blocks must have {hop} samples, got {y_block.shape} and {r_block.shape}"
            )

        self._reference = np.concatenate([self._reference[hop:], r_block])
        self._R = np.roll(self._R, 1, axis=0)
        self._R[0] = np.fft.rfft(self._reference)

        Y = np.fft.rfft(np.concatenate([np.zeros(hop), y_block]))
        E = predict(self.state, Y, self._R)
        # only the last hop samples are free of circular wrap-around
        e = np.fft.irfft(E, n=self.fft_size)[hop:]
        E = np.fft.rfft(np.concatenate([np.zeros(hop), e]))

        state = update(self.state, E, self._R)
        h = np.fft.irfft(state.h_hat, n=self.fft_size, axis=1)
        h[:, hop:] = 0.0
        state.h_hat = np.fft.rfft(h, axis=1)
        self.state = state
        return e

    @property
    def impulse_response(self):
        """Time-domain path estimate of ``partitions * hop`` taps"""
        h = np.fft.irfft(self.state.h_hat, n=self.fft_size, axis=1)[:, : self.hop]
        return h.reshape(-1)


def misalignment_db(h_true: np.ndarray, h_hat: np.ndarray) -> float:
    """Normalized misalignment ``10 log10(|h_true - h_hat|^2 / |h_true|^2)``, the shorter
    response being zero-padded"""
    n = max(len(h_true), len(h_hat))
    h_true = np.pad(np.asarray(h_true, dtype=float), (0, n - len(h_true)))
    h_hat = np.pad(np.asarray(h_hat, dtype=float), (0, n - len(h_hat)))
    return float(10 * np.log10(np.sum((h_true - h_hat) ** 2) / np.sum(h_true**2)))


def process_stream(config: KalmanConfig, y: TimeSignal, r: TimeSignal):
    """Run the Kalman filter over whole signals

    Parameters
    ----------
    config : KalmanConfig
        filter settings
    y : TimeSignal
        microphone signal
    r : TimeSignal
        reference signal (what the loudspeaker plays), time-aligned with `y`

    Returns
    -------
    tuple
        (error signal e as TimeSignal, pandas.DataFrame with one row per block and columns
        ``frame``, ``erle_db`` and ``h_norm``)
    """
    if y.sample_rate != r.sample_rate:
        raise ShapeError(f"sample rate mismatch ({y.sample_rate} Hz vs {r.sample_rate} Hz)")
    if len(y) != len(r):
        raise ShapeError(f"length mismatch (y: {len(y)}, r: {len(r)})")

    config = config or KalmanConfig()
    kf = FrequencyDomainKalmanFilter(config)
    hop = kf.hop
    n = len(y)
    n_blocks = int(np.ceil(n / hop))
    y_samples = np.pad(y.samples, (0, n_blocks * hop - n))
    r_samples = np.pad(r.samples, (0, n_blocks * hop - n))

    e = np.zeros(n_blocks * hop)
    erle_db = np.zeros(n_blocks)
    h_norm = np.zeros(n_blocks)
    for k in range(n_blocks):
        block = slice(k * hop, (k + 1) * hop)
        e[block] = kf.filt(y_samples[block], r_samples[block])
        erle_db[k] = 10 * np.log10(
            (np.sum(y_samples[block] ** 2) + 1e-20) / (np.sum(e[block] ** 2) + 1e-20)
        )
        h_norm[k] = np.linalg.norm(kf.state.h_hat)

    trace = pd.DataFrame({"frame": np.arange(n_blocks), "erle_db": erle_db, "h_norm": h_norm})
    return TimeSignal(e[:n], y.sample_rate), trace
