from typing import Optional

import numpy as np

from larsen.core.signal import FrameHistory
from larsen.core.suppressor import Suppressor
from larsen.errors import ConfigurationError
from larsen.fdkf import FrequencyDomainKalmanFilter, KalmanConfig
from larsen.utils import register_args

__all__ = ["KalmanSuppressor"]


class KalmanSuppressor(Suppressor):
    accepts_reference = True

    @register_args
    def __init__(
        self,
        config: Optional[KalmanConfig] = None,
        reference_delay_hops: Optional[int] = None,
        name=None,
    ):
        """Frequency-domain Kalman feedback canceller whose reference is its own past output

        In a closed loop, what the loudspeaker plays is the suppressor output delayed by the
        system delay. The reference of hop ``k`` is therefore the output of hop
        ``k - delay``. The delay is given by :py:meth:`bind_loop` (called by the loop) or
        `reference_delay_hops`. When fed two-channel frames, the second channel is used as the
        reference instead (see :py:class:`~larsen.suppressors.Cascade`).

        Parameters
        ----------
        config : KalmanConfig, optional
            filter settings, by default :py:class:`~larsen.fdkf.KalmanConfig` on the loop STFT
        reference_delay_hops : int, optional
            delay between output and reference in hops, by default None (set by the loop)
        name : str, optional
            name of the suppressor, by default None
        """
        super().__init__(name=name)
        self.kalman_config = config
        self.reference_delay_hops = reference_delay_hops

    @property
    def reference_delay(self):
        if self.reference_delay_hops is not None:
            return int(self.reference_delay_hops)
        return self.loop_delay

    def setup(self):
        config = self.kalman_config or KalmanConfig(stft=self.config)
        if config.stft.hop != self.hop:
            raise ConfigurationError(
                f"Kalman hop ({config.stft.hop}) differs from the loop hop ({self.hop})"
            )
        self.filter = FrequencyDomainKalmanFilter(config)

    def reset(self):
        self.filter.reset()
        delay = self.reference_delay
        if delay is not None and delay < 1:
            raise ConfigurationError(f"reference delay must be at least one hop, got {delay}")
        self._outputs = None if delay is None else FrameHistory(delay, (self.hop,))

    @property
    def state(self):
        return self.filter.state

    def process(self, frame):
        frame = np.asarray(frame, dtype=float)
        if frame.ndim == 2:
            return self.filter.filt(frame[0], frame[1])

        if self._outputs is None:
            raise ConfigurationError(
                "no reference: bind the suppressor to a loop, set reference_delay_hops or feed (mic, reference) frames"
            )
        reference = self._outputs[len(self._outputs) - 1]
        e = self.filter.filt(frame, reference)
        self._outputs.push(e)
        return e
