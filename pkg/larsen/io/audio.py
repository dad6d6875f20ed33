from pathlib import Path
from typing import Optional, Union

import numpy as np
import soundfile as sf

from larsen.console_utils import warning
from larsen.core.signal import TimeSignal
from larsen.errors import ConfigurationError, DataError

SUBTYPES = {"float": "FLOAT", "double": "DOUBLE", "pcm16": "PCM_16"}
"""WAV sample formats: IEEE float32, IEEE float64 and 16-bit PCM"""

PCM16_MAX = 1 - 2**-15


def read_wav(path: Union[str, Path], sample_rate: Optional[int] = None) -> TimeSignal:
    """Read a mono WAV file

    Parameters
    ----------
    path : str or Path
        WAV file
    sample_rate : int, optional
        expected sample rate, checked when provided, by default None

    Returns
    -------
    TimeSignal
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path} does not exist")
    try:
        data, rate = sf.read(str(path), dtype="float64", always_2d=True)
    except RuntimeError as e:
        raise DataError(f"cannot read {path} ({e})")
    if data.shape[1] != 1:
        raise DataError(f"{path} has {data.shape[1]} channels, expected a mono file")
    if sample_rate is not None and rate != sample_rate:
        raise DataError(f"{path} is sampled at {rate} Hz, expected {sample_rate} Hz")
    return TimeSignal(data[:, 0], rate)


def write_wav(path: Union[str, Path], signal: TimeSignal, subtype: str = "float") -> Path:
    """Write a signal to a mono WAV file

    Parameters
    ----------
    path : str or Path
        destination
    signal : TimeSignal
        signal to write
    subtype : str, optional
        :code:`"float"` (float32, default), :code:`"double"` (float64, lossless) or
        :code:`"pcm16"` (16-bit, samples clipped to [-1, 1))

    Returns
    -------
    Path
    """
    if subtype not in SUBTYPES:
        raise ConfigurationError(
            f"unknown WAV subtype '{subtype}' (available: {', '.join(SUBTYPES)})"
        )
    path = Path(path)
    samples = signal.samples
    if subtype == "pcm16":
        clipped = np.clip(samples, -1.0, PCM16_MAX)
        if np.any(clipped != samples):
            warning(f"{path.name}: samples clipped to full scale for 16-bit PCM")
        samples = clipped
    sf.write(str(path), samples, signal.sample_rate, subtype=SUBTYPES[subtype], format="WAV")
    return path
