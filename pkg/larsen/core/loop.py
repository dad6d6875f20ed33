from dataclasses import dataclass, field
from time import time

import numpy as np
import pandas as pd

from larsen.console_utils import progress, table, warning
from larsen.core.signal import TimeSignal
from larsen.core.stft import frame_signal
from larsen.core.suppressor import Suppressor, _exception_context
from larsen.errors import ConfigurationError, DivergenceError
from larsen.howling import HowlingReport, detect_howling
from larsen.simulations import ScenarioConfig

SATURATION_GUARD = 10.0


@dataclass
class StreamResult:
    """Aligned signals of a streaming run

    All signals share the length and sample rate of the scenario. `enhanced` is compensated
    for the suppressor latency so that ``enhanced[t]`` estimates ``mic[t]``'s target.
    """

    mic: TimeSignal
    """Microphone signal y"""

    enhanced: TimeSignal
    """Suppressor output"""

    loudspeaker: TimeSignal
    """Loudspeaker signal x (after gain and nonlinearity)"""

    playback: TimeSignal
    """Playback reaching the microphone d"""

    per_frame: pd.DataFrame = field(default_factory=pd.DataFrame)
    """One row of diagnostics per STFT frame of `mic`"""

    howling: HowlingReport = field(default_factory=HowlingReport)
    """Howling detection on `mic`"""

    latency: int = 0
    """Suppressor latency in hops"""

    @property
    def saturated(self):
        """Whether the saturation guard engaged at least once"""
        if "guard" not in self.per_frame:
            return False
        return bool(self.per_frame["guard"].any())


class AcousticLoop:
    def __init__(self, suppressor: Suppressor, name=None, guard=SATURATION_GUARD):
        """Closed microphone-amplifier-loudspeaker loop with a suppressor in the signal path

        The loop advances one hop at a time. Every hop, the microphone block is the sum of
        target, noise and the playback generated by previous outputs of the suppressor. The
        suppressor output is amplified, distorted, convolved with the loudspeaker-to-microphone
        response and heard again after the system delay.

        Parameters
        ----------
        suppressor : Suppressor
            suppressor placed in the loop
        name : str, optional
            name of the loop, by default None
        guard : float, optional
            microphone samples are limited to +/- `guard` (full scale = 1), by default 10
        """
        self.suppressor = suppressor
        self.name = name
        self.guard = guard
        self.processing_time = 0.0
        self.n_frames = 0

    def run(self, cfg: ScenarioConfig, show_progress: bool = False) -> StreamResult:
        """Stream a scenario through the loop

        Parameters
        ----------
        cfg : ScenarioConfig
            scenario to simulate
        show_progress : bool, optional
            whether to show a progress bar, by default False

        Returns
        -------
        StreamResult
        """
        suppressor = self.suppressor
        hop = cfg.hop
        sample_rate = cfg.sample_rate
        n = cfg.n_samples

        suppressor.bind_loop(cfg.delay_hops)
        suppressor.init(cfg.stft, sample_rate)
        latency = suppressor.latency

        if cfg.delay_hops - latency < 1 and cfg.schedule.max_gain > 0:
            raise ConfigurationError(
                f"system delay ({cfg.delay_hops} hops) must exceed the suppressor latency ({latency} hops)"
            )

        n_blocks = int(np.ceil(n / hop))
        n_calls = n_blocks + latency
        total = n_calls * hop
        target = np.pad(cfg.s.samples, (0, total - n))
        noise = np.pad(cfg.n.samples, (0, total - n))
        path = cfg.playback_path(n)

        mic = np.zeros(total)
        enhanced = np.zeros(total)
        guard_hits = np.zeros(n_calls, dtype=bool)
        call_time = np.full(n_calls, np.nan)

        t0 = time()
        loop = progress(show_progress, desc=self.name or "stream", unit="hops")
        try:
            for i in loop(range(n_calls)):
                with _exception_context(f"frame {i}"):
                    block = (target[i * hop : (i + 1) * hop] + noise[i * hop : (i + 1) * hop]) + path.heard(i)
                    if not np.all(np.isfinite(block)):
                        raise DivergenceError("non-finite microphone samples", frame=i)
                    limited = np.clip(block, -self.guard, self.guard)
                    guard_hits[i] = bool(np.any(limited != block))
                    mic[i * hop : (i + 1) * hop] = limited

                    tc = time()
                    out = suppressor._process(limited)
                    call_time[i] = time() - tc
                    if not np.all(np.isfinite(out)):
                        raise DivergenceError("non-finite suppressor output", frame=i)

                    j = i - latency
                    if j >= 0:
                        enhanced[j * hop : (j + 1) * hop] = out
                        path.push(j, out)
        finally:
            suppressor._terminate()
        self.processing_time = time() - t0
        self.n_frames = n_calls

        if guard_hits.any():
            warning(
                f"saturation guard engaged on {int(guard_hits.sum())} hops (first at hop {int(np.argmax(guard_hits))})"
            )

        result_mic = TimeSignal(mic[:n], sample_rate)
        result_enhanced = TimeSignal(enhanced[:n], sample_rate)
        return StreamResult(
            mic=result_mic,
            enhanced=result_enhanced,
            loudspeaker=TimeSignal(path.loudspeaker[:n], sample_rate),
            playback=TimeSignal(path.playback[:n], sample_rate),
            per_frame=self._diagnostics(cfg, result_mic, result_enhanced, guard_hits, call_time, latency),
            howling=detect_howling(result_mic, cfg.stft),
            latency=latency,
        )

    @staticmethod
    def _diagnostics(cfg, mic, enhanced, guard_hits, call_time, latency):
        from larsen.metrics import erle

        config = cfg.stft
        frames = config.n_frames(len(mic))

        def rms_db(x):
            framed = frame_signal(x, config, window=False)
            return 10 * np.log10(np.mean(framed**2, axis=1) + 1e-20)

        def per_frame(values, fill):
            out = np.full(frames, fill, dtype=values.dtype)
            k = min(frames, len(values))
            out[:k] = values[:k]
            return out

        frame = np.arange(frames)
        times = (frame + 1) * config.hop / cfg.sample_rate
        return pd.DataFrame(
            {
                "frame": frame,
                "time_s": times,
                "mic_rms_db": rms_db(mic),
                "enhanced_rms_db": rms_db(enhanced),
                "erle_db": erle(mic, enhanced, stft_config=config),
                "gain": [cfg.schedule(t) for t in times],
                "guard": per_frame(guard_hits, False),
                "latency_frames": latency,
                "process_time_ms": per_frame(call_time * 1e3, np.nan),
            }
        )

    def __str__(self):
        s = self.suppressor
        rows = [
            [
                self.name or "loop",
                s.__class__.__name__,
                s.latency,
                s.runs,
                f"{s.processing_time:.3f} s",
                f"{self.processing_time:.3f} s",
            ]
        ]
        headers = ["name", "suppressor", "latency (hops)", "hops", "suppressor time", "loop time"]
        return table(rows, headers)

    def __repr__(self) -> str:
        return self.__str__()


def run_streaming(cfg: ScenarioConfig, suppressor: Suppressor, **kwargs) -> StreamResult:
    """Run a scenario through the closed loop with `suppressor` in the signal path

    Parameters
    ----------
    cfg : ScenarioConfig
        scenario to simulate
    suppressor : Suppressor
        suppressor placed in the loop
    **kwargs
        passed to :py:meth:`AcousticLoop.run`

    Returns
    -------
    StreamResult
    """
    return AcousticLoop(suppressor).run(cfg, **kwargs)
