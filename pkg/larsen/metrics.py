from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from larsen.core.signal import TimeSignal, as_signal
from larsen.core.stft import Spectrogram, StftConfig, frame_signal, stft
from larsen.errors import ScalingError, ShapeError
from larsen.howling import HowlingReport, detect_howling

SI_SDR_CAP = 120.0
"""SI-SDR values are limited to +/- this value (in dB) and flagged as saturated"""

ERLE_CAP = 120.0
LOSS_WEIGHT = 10000.0
"""Weight of the spectral magnitude error in :py:func:`combined_loss`"""


def _pair(est, ref):
    est = np.asarray(est, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if est.shape != ref.shape:
        raise ShapeError(f"length mismatch (estimate: {est.shape}, reference: {ref.shape})")
    return est, ref


def si_sdr_details(
    est: Union[TimeSignal, np.ndarray], ref: Union[TimeSignal, np.ndarray]
) -> Tuple[float, bool]:
    """Scale-invariant signal-to-distortion ratio and whether it saturated

    Returns
    -------
    tuple
        (SI-SDR in dB within +/- 120 dB, saturated flag)
    """
    est, ref = _pair(est, ref)
    reference_energy = np.dot(ref, ref)
    if reference_energy == 0:
        raise ScalingError("SI-SDR is undefined for a zero-energy reference")
    a = np.dot(ref, est) / reference_energy
    target = a * ref
    residual = est - target
    target_energy = np.sum(target**2)
    residual_energy = np.sum(residual**2)
    if target_energy == 0:
        return -SI_SDR_CAP, True
    if residual_energy == 0:
        return SI_SDR_CAP, True
    value = 10 * np.log10(target_energy / residual_energy)
    if abs(value) >= SI_SDR_CAP:
        return float(np.sign(value) * SI_SDR_CAP), True
    return float(value), False


def si_sdr(est: Union[TimeSignal, np.ndarray], ref: Union[TimeSignal, np.ndarray]) -> float:
    """Scale-invariant signal-to-distortion ratio in dB

    `est` is projected on `ref`, the ratio is the energy of the projection over the energy of
    the residual. A zero residual gives +120 dB (see :py:func:`si_sdr_details` for the flag).

    Parameters
    ----------
    est : TimeSignal or np.ndarray
        estimate
    ref : TimeSignal or np.ndarray
        reference, same length as `est`, non-zero energy

    Returns
    -------
    float
    """
    return si_sdr_details(est, ref)[0]


def spectral_mae(
    S_hat: Union[Spectrogram, np.ndarray], S: Union[Spectrogram, np.ndarray]
) -> float:
    """Mean absolute error between the magnitudes of two spectrograms"""
    a = np.abs(S_hat.data if isinstance(S_hat, Spectrogram) else np.asarray(S_hat))
    b = np.abs(S.data if isinstance(S, Spectrogram) else np.asarray(S))
    if a.shape != b.shape:
        raise ShapeError(f"spectrogram shapes differ ({a.shape} vs {b.shape})")
    if a.size == 0:
        return 0.0
    return float(np.mean(np.abs(a - b)))


def combined_loss(
    est: TimeSignal,
    ref: TimeSignal,
    stft_config: StftConfig = None,
    weight: float = LOSS_WEIGHT,
) -> float:
    """Training objective ``-SI-SDR + weight * spectral MAE``

    Parameters
    ----------
    est : TimeSignal
        estimate
    ref : TimeSignal
        reference
    stft_config : StftConfig, optional
        STFT of the spectral term, by default :py:meth:`StftConfig.default`
    weight : float, optional
        weight of the spectral term, by default 10000

    Returns
    -------
    float
    """
    est = as_signal(est)
    ref = as_signal(ref, est.sample_rate)
    config = stft_config or StftConfig()
    return -si_sdr(est, ref) + weight * spectral_mae(stft(est, config), stft(ref, config))


def erle(
    mic: Union[TimeSignal, np.ndarray],
    err: Union[TimeSignal, np.ndarray],
    window: int = 1,
    stft_config: StftConfig = None,
) -> np.ndarray:
    """Echo return loss enhancement per STFT frame, in dB

    ``10 log10(E_mic / E_err)`` where energies are summed over the (unwindowed) frame and the
    `window - 1` previous frames. Frames where both are silent are 0 dB, values are limited to
    +/- 120 dB.

    Parameters
    ----------
    mic : TimeSignal or np.ndarray
        microphone signal
    err : TimeSignal or np.ndarray
        error (enhanced) signal, same length
    window : int, optional
        smoothing window in frames, by default 1
    stft_config : StftConfig, optional
        framing, by default :py:meth:`StftConfig.default`

    Returns
    -------
    np.ndarray
        one value per frame
    """
    mic = as_signal(mic)
    err = as_signal(err, mic.sample_rate)
    if len(mic) != len(err):
        raise ShapeError(f"length mismatch (mic: {len(mic)}, err: {len(err)})")
    if window < 1:
        raise ValueError("window must be at least one frame")
    config = stft_config or StftConfig()

    def energies(x):
        e = np.sum(frame_signal(x, config, window=False) ** 2, axis=1)
        return np.convolve(e, np.ones(window))[: len(e)]

    mic_energy, err_energy = energies(mic), energies(err)
    out = np.zeros(len(mic_energy))
    both = (mic_energy > 0) & (err_energy > 0)
    out[both] = 10 * np.log10(mic_energy[both] / err_energy[both])
    out[(mic_energy > 0) & (err_energy == 0)] = ERLE_CAP
    out[(mic_energy == 0) & (err_energy > 0)] = -ERLE_CAP
    return np.clip(out, -ERLE_CAP, ERLE_CAP)


@dataclass
class MetricsReport:
    """Metrics of one enhanced signal against its reference"""

    si_sdr_db: float
    """SI-SDR in dB"""

    spectral_mae: float
    """Mean absolute spectral magnitude error"""

    combined_loss: float
    """``-SI-SDR + 10000 * spectral MAE``"""

    si_sdr_saturated: bool = False
    """Whether the SI-SDR reached the +/- 120 dB cap"""

    erle_db: Optional[float] = None
    """Mean ERLE in dB when the microphone signal is known"""

    howling: HowlingReport = field(default_factory=HowlingReport)
    """Howling detection on the enhanced signal"""

    pesq: Optional[float] = None
    """Not computed, kept for schema compatibility"""

    def to_dict(self):
        return asdict(self)


def align(est: TimeSignal, latency_samples: int) -> TimeSignal:
    """Advance `est` by `latency_samples` (zero-padded at the end)"""
    if latency_samples == 0:
        return est
    return est[latency_samples:].fit(len(est))


def evaluate_pair(
    est: TimeSignal,
    ref: TimeSignal,
    stft_config: StftConfig = None,
    latency_samples: int = 0,
    mic: Optional[TimeSignal] = None,
    weight: float = LOSS_WEIGHT,
) -> MetricsReport:
    """Compute every metric of an estimate against its reference

    Parameters
    ----------
    est : TimeSignal
        enhanced signal
    ref : TimeSignal
        clean reference
    stft_config : StftConfig, optional
        STFT used by spectral metrics, by default :py:meth:`StftConfig.default`
    latency_samples : int, optional
        latency of `est` with respect to `ref`, compensated before scoring, by default 0
    mic : TimeSignal, optional
        microphone signal, enables the ERLE, by default None
    weight : float, optional
        weight of the spectral term of the combined loss, by default 10000

    Returns
    -------
    MetricsReport
    """
    config = stft_config or StftConfig()
    est = align(as_signal(est), latency_samples)
    ref = as_signal(ref, est.sample_rate)
    n = min(len(est), len(ref))
    est, ref = est[:n], ref[:n]

    value, saturated = si_sdr_details(est, ref)
    mae = spectral_mae(stft(est, config), stft(ref, config))
    erle_db = None
    if mic is not None:
        erle_db = float(np.mean(erle(as_signal(mic)[:n], est, stft_config=config)))

    return MetricsReport(
        si_sdr_db=value,
        spectral_mae=mae,
        combined_loss=-value + weight * mae,
        si_sdr_saturated=saturated,
        erle_db=erle_db,
        howling=detect_howling(est, config),
    )
