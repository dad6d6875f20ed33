from larsen import config

CONFIG = config.ConfigManager()

from importlib.metadata import PackageNotFoundError, version

from larsen.core import FrameHistory, Spectrogram, StftConfig, Suppressor, TimeSignal, istft, stft
from larsen.core.loop import AcousticLoop, StreamResult, run_streaming
from larsen.experiment import ExperimentSpec
from larsen.fdkf import FrequencyDomainKalmanFilter, KalmanConfig
from larsen.howling import HowlingReport, detect_howling
from larsen.metrics import MetricsReport, combined_loss, erle, si_sdr, spectral_mae
from larsen.nonlinearity import NonlinearityModel
from larsen.room import RirSet, RoomSpec, generate_rir
from larsen.simulations import GainSchedule, ScenarioConfig, example_noise, example_speech

try:
    __version__ = version("larsen")
except PackageNotFoundError:
    __version__ = "0.0.0"
