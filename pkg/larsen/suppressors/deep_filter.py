from typing import Optional, Sequence, Union

import numpy as np

from larsen.core.stft import Spectrogram
from larsen.errors import ConfigurationError, ShapeError

__all__ = ["deep_filter_apply"]


def deep_filter_apply(
    spec: Union[Spectrogram, np.ndarray],
    filters: np.ndarray,
    offsets: Optional[Sequence[int]] = None,
) -> Union[Spectrogram, np.ndarray]:
    """Apply complex multi-frame filters to a spectrogram (deep filtering)

    ``out[k, f] = sum_t filters[k, f, t] * spec[k + offsets[t], f]``, frames outside the
    spectrogram counting as zeros.

    Parameters
    ----------
    spec : Spectrogram or np.ndarray
        input of shape (frames, bins)
    filters : np.ndarray
        complex filters of shape (frames, bins, taps)
    offsets : sequence of int, optional
        frame offset of each tap, by default centered (e.g. ``[-1, 0, 1]`` for 3 taps)

    Returns
    -------
    Spectrogram or np.ndarray
        same type and shape as `spec`
    """
    data = spec.data if isinstance(spec, Spectrogram) else np.asarray(spec)
    filters = np.asarray(filters)
    if data.ndim != 2:
        raise ShapeError(f"spectrogram must be 2-dimensional, got shape {data.shape}")
    if filters.ndim != 3 or filters.shape[:2] != data.shape:
        raise ShapeError(
            f"filters must have shape {data.shape} + (taps,), got {filters.shape}"
        )
    taps = filters.shape[2]
    if offsets is None:
        offsets = np.arange(taps) - taps // 2
    offsets = list(offsets)
    if len(offsets) != taps:
        raise ShapeError(f"{taps} taps but {len(offsets)} offsets")
    if any(int(o) != o for o in offsets) or len(set(offsets)) != len(offsets):
        raise ConfigurationError(f"offsets must be distinct integers, got {offsets}")

    frames = data.shape[0]
    out = np.zeros(data.shape, dtype=complex)
    for t, offset in enumerate(int(o) for o in offsets):
        if abs(offset) >= frames:
            continue
        shifted = np.zeros(data.shape, dtype=complex)
        if offset >= 0:
            shifted[: frames - offset] = data[offset:]
        else:
            shifted[-offset:] = data[: frames + offset]
        out += filters[:, :, t] * shifted

    if isinstance(spec, Spectrogram):
        return spec.copy(out)
    return out
