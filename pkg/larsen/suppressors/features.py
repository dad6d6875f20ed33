from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from larsen.core.stft import Spectrogram
from larsen.errors import ConfigurationError, ShapeError

__all__ = ["FeatureSet", "extract_features"]

LPS_EPSILON = 1e-12
FEATURE_MODES = ("full", "lps")


@dataclass
class FeatureSet:
    """Network input features of a (microphone, Kalman output) spectrogram pair

    Arrays of both channels are stacked along a first axis of size 2 (Y then E).
    """

    lps_y: np.ndarray
    """Normalized log-power spectrum of Y, (frames, bins)"""

    lps_e: np.ndarray
    """Normalized log-power spectrum of E, (frames, bins)"""

    temporal_corr: Optional[np.ndarray] = None
    """Normalized correlation of each frame with frames -ctx..ctx, (2, frames, 2 ctx + 1)"""

    frequency_corr: Optional[np.ndarray] = None
    """Normalized correlation of adjacent bins over 2 ctx + 1 frames, (2, frames, bins - 1)"""

    channel_cov: Optional[np.ndarray] = None
    """2x2 covariance of the Y and E bin-vectors of each frame, (frames, 2, 2) complex"""

    ctx: int = 2
    """Context in frames on each side"""

    mode: str = "full"
    """:code:`"full"` or :code:`"lps"` (log-power spectra only)"""

    @property
    def frames(self):
        return self.lps_y.shape[0]

    def to_tensor(self) -> np.ndarray:
        """Features concatenated per frame, float32 array of shape (frames, features)

        Channel covariances contribute the two diagonal terms and the real and imaginary
        parts of the Y-E term.
        """
        parts = [self.lps_y, self.lps_e]
        if self.mode == "full":
            cov = self.channel_cov
            parts += [
                self.temporal_corr[0],
                self.temporal_corr[1],
                self.frequency_corr[0],
                self.frequency_corr[1],
                np.stack(
                    [cov[:, 0, 0].real, cov[:, 1, 1].real, cov[:, 0, 1].real, cov[:, 0, 1].imag],
                    axis=1,
                ),
            ]
        return np.concatenate(parts, axis=1).astype(np.float32)


def _data(x):
    return x.data if isinstance(x, Spectrogram) else np.asarray(x, dtype=complex)


def normalized_lps(X: np.ndarray) -> np.ndarray:
    """``log(|X|^2 + 1e-12)``, normalized to zero mean and unit variance per bin over frames"""
    lps = np.log(np.abs(X) ** 2 + LPS_EPSILON)
    if lps.shape[0] == 0:
        return lps
    std = lps.std(0)
    std[std == 0] = 1.0
    return (lps - lps.mean(0)) / std


def temporal_correlation(X: np.ndarray, ctx: int) -> np.ndarray:
    """``|<X_k, X_k+t>| / (|X_k| |X_k+t|)`` for t in -ctx..ctx, zero outside the signal"""
    frames = X.shape[0]
    norms = np.linalg.norm(X, axis=1)
    out = np.zeros((frames, 2 * ctx + 1))
    for i, t in enumerate(range(-ctx, ctx + 1)):
        k = np.arange(max(0, -t), min(frames, frames - t))
        if len(k) == 0:
            continue
        inner = np.abs(np.sum(X[k] * np.conj(X[k + t]), axis=1))
        denominator = norms[k] * norms[k + t]
        out[k, i] = np.divide(inner, denominator, out=np.zeros_like(inner), where=denominator > 0)
    return out


def frequency_correlation(X: np.ndarray, ctx: int) -> np.ndarray:
    """Normalized correlation of bins f and f + 1 over a centered window of 2 ctx + 1 frames"""
    frames = X.shape[0]
    if frames == 0:
        return np.zeros((0, max(X.shape[1] - 1, 0)))
    padded = np.pad(X, ((ctx, ctx), (0, 0)))
    cross = padded[:, :-1] * np.conj(padded[:, 1:])
    power = np.abs(padded) ** 2
    window = 2 * ctx + 1
    cross_sum = sliding_window_view(cross, window, axis=0).sum(-1)[:frames]
    power_sum = sliding_window_view(power, window, axis=0).sum(-1)[:frames]
    denominator = np.sqrt(power_sum[:, :-1] * power_sum[:, 1:])
    inner = np.abs(cross_sum)
    return np.divide(inner, denominator, out=np.zeros_like(inner), where=denominator > 0)


def channel_covariance(Y: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Per-frame Gram matrix of the (Y, E) bin-vectors, averaged over bins"""
    stacked = np.stack([Y, E], axis=1)  # (frames, 2, bins)
    return np.einsum("kib,kjb->kij", stacked, np.conj(stacked)) / max(Y.shape[1], 1)


def extract_features(
    Y: Union[Spectrogram, np.ndarray],
    E: Union[Spectrogram, np.ndarray],
    ctx: int = 2,
    mode: str = "full",
) -> FeatureSet:
    """Features of a microphone spectrogram `Y` and Kalman output spectrogram `E`

    Parameters
    ----------
    Y : Spectrogram or np.ndarray
        microphone spectrogram (frames, bins)
    E : Spectrogram or np.ndarray
        Kalman output spectrogram, same shape as `Y`
    ctx : int, optional
        context in frames on each side, by default 2
    mode : str, optional
        :code:`"full"` or :code:`"lps"` (log-power spectra only), by default "full"

    Returns
    -------
    FeatureSet
    """
    Y = _data(Y)
    E = _data(E)
    if Y.ndim != 2 or Y.shape != E.shape:
        raise ShapeError(f"Y and E must be matching 2-d spectrograms, got {Y.shape} and {E.shape}")
    if mode not in FEATURE_MODES:
        raise ConfigurationError(f"unknown feature mode '{mode}' (available: {', '.join(FEATURE_MODES)})")
    if int(ctx) != ctx or ctx < 0:
        raise ConfigurationError(f"ctx must be a non-negative integer, got {ctx}")
    ctx = int(ctx)

    features = FeatureSet(normalized_lps(Y), normalized_lps(E), ctx=ctx, mode=mode)
    if mode == "full":
        features.temporal_corr = np.stack([temporal_correlation(Y, ctx), temporal_correlation(E, ctx)])
        features.frequency_corr = np.stack(
            [frequency_correlation(Y, ctx), frequency_correlation(E, ctx)]
        )
        features.channel_cov = channel_covariance(Y, E)
    return features
