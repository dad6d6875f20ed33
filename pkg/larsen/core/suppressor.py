import contextlib
from time import time
from typing import Union

import numpy as np

from larsen.core.signal import DEFAULT_SAMPLE_RATE, TimeSignal
from larsen.core.stft import StftConfig
from larsen.errors import ShapeError


@contextlib.contextmanager
def _exception_context(msg):
    try:
        yield
    except Exception as ex:
        if ex.args:
            ex.args = (f"[{msg}] {ex.args[0]}",) + ex.args[1:]
        else:
            ex.args = (f"[{msg}]",)
        raise


class Suppressor(object):
    """Single unit of howling suppression acting on successive hops of audio

    When placed in an :py:class:`~larsen.core.loop.AcousticLoop`, a suppressor goes through
    three steps:

        1. :py:meth:`~larsen.Suppressor.init` with the STFT configuration and sample rate of the loop
        2. :py:meth:`~larsen.Suppressor.process` on each new hop of microphone samples, returning
           one hop of enhanced samples
        3. :py:meth:`~larsen.Suppressor.terminate` once the loop is over

    A suppressor is causal: the output of a call only depends on the current and previous
    inputs. Its output for call ``i`` is time-aligned with the input of call ``i - latency``.
    Multi-channel inputs are arrays of shape (channels, hop).

    Parameters
    ----------
    name : str, optional
        name of the suppressor, by default None

    All larsen suppressors must be child of this parent class
    """

    latency = 0
    """Algorithmic latency in hops"""

    n_channels = 1
    """Number of input channels expected by :py:meth:`process`"""

    def __init__(self, name=None):
        self.name = name
        self.processing_time = 0
        self.runs = 0
        self.config = None
        self.sample_rate = None
        self.loop_delay = None
        if not hasattr(self, "args"):
            self.args = {}

    @property
    def hop(self):
        return self.config.hop

    def init(self, stft: StftConfig = None, sample_rate: int = DEFAULT_SAMPLE_RATE):
        """Configure the suppressor and bring it to its initial state

        Parameters
        ----------
        stft : StftConfig, optional
            STFT configuration of the loop, by default :py:meth:`StftConfig.default`
        sample_rate : int, optional
            sample rate in Hz, by default 16000

        Returns
        -------
        Suppressor
            the suppressor itself
        """
        self.config = stft or StftConfig()
        self.sample_rate = int(sample_rate)
        with _exception_context(self.__class__.__name__):
            self.setup()
            self.reset()
        return self

    def setup(self):
        """Allocate configuration-dependent resources (called by :py:meth:`init`)"""
        pass

    def bind_loop(self, delay_hops: int):
        """Informs the suppressor of the loop delay (in hops) between its output and the
        loudspeaker signal it will hear back"""
        self.loop_delay = int(delay_hops)

    def process(self, frame: np.ndarray) -> np.ndarray:
        """Process one hop of samples (must be overwritten when subclassed)

        Parameters
        ----------
        frame : np.ndarray
            hop of input samples, shape (hop,) or (channels, hop)

        Returns
        -------
        np.ndarray
            hop of enhanced samples, shape (hop,)
        """
        raise NotImplementedError()

    def reset(self):
        """Return to the state reached right after :py:meth:`init`"""
        pass

    def terminate(self):
        """Method called once the stream is finished"""
        pass

    def _process(self, frame):
        t0 = time()
        with _exception_context(self.__class__.__name__):
            out = np.asarray(self.process(frame), dtype=float)
            if out.shape != (self.hop,):
                raise ShapeError(
                    f"process must return {self.hop} samples, got shape {out.shape}"
                )
        self.processing_time += time() - t0
        self.runs += 1
        return out

    def _terminate(self):
        with _exception_context(self.__class__.__name__):
            self.terminate()

    @staticmethod
    def _channel(frame, channel=0):
        frame = np.asarray(frame, dtype=float)
        if frame.ndim == 2:
            return frame[channel]
        return frame

    def __call__(
        self, signal: Union[TimeSignal, np.ndarray], stft: StftConfig = None
    ) -> TimeSignal:
        """Run the suppressor offline (open loop) on a whole signal

        The suppressor is (re-)initialized, fed hop by hop, flushed with zeros and its output
        is compensated for latency, so that the result is aligned with the input.

        Parameters
        ----------
        signal : TimeSignal or np.ndarray
            mono signal, or array of shape (channels, samples) for multi-channel suppressors
        stft : StftConfig, optional
            STFT configuration, by default :py:meth:`StftConfig.default`

        Returns
        -------
        TimeSignal
        """
        if isinstance(signal, TimeSignal):
            samples, sample_rate = signal.samples[None, :], signal.sample_rate
        else:
            samples, sample_rate = np.atleast_2d(signal), DEFAULT_SAMPLE_RATE
        self.init(stft or self.config or StftConfig(), sample_rate)
        hop = self.hop
        n = samples.shape[1]
        n_calls = int(np.ceil(n / hop)) + self.latency
        padded = np.pad(samples, ((0, 0), (0, n_calls * hop - n)))
        outputs = []
        for i in range(n_calls):
            frame = padded[:, i * hop : (i + 1) * hop]
            outputs.append(self._process(frame[0] if len(frame) == 1 else frame))
        self._terminate()
        out = np.concatenate(outputs) if outputs else np.zeros(0)
        return TimeSignal(out[self.latency * hop :][:n], sample_rate)

    def __repr__(self):
        name = f" '{self.name}'" if self.name else ""
        return f"{self.__class__.__name__}{name}"
