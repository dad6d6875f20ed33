from typing import Optional

import numpy as np

from larsen.core.signal import FrameHistory
from larsen.core.suppressor import Suppressor
from larsen.errors import ConfigurationError

__all__ = ["Cascade"]


class Cascade(Suppressor):
    def __init__(
        self,
        front: Suppressor,
        back: Suppressor,
        extra_reference_delay: Optional[int] = None,
        name=None,
    ):
        """Two suppressors in series, the back one seeing both the microphone and the front
        output

        The back suppressor receives frames of shape (channels, hop) holding

        0. the microphone hop, delayed by the front latency
        1. the front output
        2. (if `extra_reference_delay` is set) the microphone delayed by that many more hops

        When the front suppressor uses a reference (e.g. :py:class:`KalmanSuppressor`) and the
        cascade is bound to a loop, the front reference is the *cascade* output delayed by the
        loop delay, since that is what the loudspeaker plays.

        Parameters
        ----------
        front : Suppressor
            first stage (typically :py:class:`~larsen.suppressors.KalmanSuppressor`)
        back : Suppressor
            second stage (typically an :py:class:`~larsen.suppressors.ExternalSuppressor`)
        extra_reference_delay : int, optional
            delay in hops of an extra microphone channel, by default None (no extra channel)
        name : str, optional
            name of the suppressor, by default None
        """
        self.args = {"front": front, "back": back, "extra_reference_delay": extra_reference_delay}
        super().__init__(name=name)
        self.front = front
        self.back = back
        self.extra_reference_delay = extra_reference_delay
        if extra_reference_delay is not None and extra_reference_delay < 0:
            raise ConfigurationError("extra_reference_delay must be non-negative")
        self.latency = front.latency + back.latency
        self.n_channels = front.n_channels

    @property
    def back_channels(self):
        return 2 if self.extra_reference_delay is None else 3

    def bind_loop(self, delay_hops):
        super().bind_loop(delay_hops)
        if not getattr(self.front, "accepts_reference", False):
            self.front.bind_loop(delay_hops)
        self.back.bind_loop(delay_hops)

    def setup(self):
        if self.back.n_channels not in (1, self.back_channels):
            raise ConfigurationError(
                f"{self.back!r} expects {self.back.n_channels} channels, the cascade provides {self.back_channels}"
            )
        self.front.init(self.config, self.sample_rate)
        self.back.init(self.config, self.sample_rate)

    def reset(self):
        self.front.reset()
        self.back.reset()
        hop = self.hop
        self._mic = FrameHistory(self.front.latency, (hop,))
        extra = self.extra_reference_delay
        self._extra = None if extra is None else FrameHistory(self.front.latency + extra, (hop,))
        self._outputs = None
        if self.loop_delay is not None and getattr(self.front, "accepts_reference", False):
            depth = self.loop_delay - self.latency
            if depth < 1:
                raise ConfigurationError(
                    f"loop delay ({self.loop_delay} hops) must exceed the cascade latency ({self.latency} hops)"
                )
            self._outputs = FrameHistory(depth, (hop,))

    def process(self, frame):
        frame = np.asarray(frame, dtype=float)
        mic = self._channel(frame)
        if self._outputs is not None:
            front_in = np.stack([mic, self._outputs[len(self._outputs) - 1]])
        else:
            front_in = frame
        front_out = self.front._process(front_in)

        channels = [self._mic.push(mic), front_out]
        if self._extra is not None:
            channels.append(self._extra.push(mic))
        out = self.back._process(np.stack(channels))

        if self._outputs is not None:
            self._outputs.push(out)
        return out

    def terminate(self):
        self.front._terminate()
        self.back._terminate()

    def __repr__(self):
        return f"Cascade({self.front!r} -> {self.back!r})"
