from .signal import FrameHistory, TimeSignal, convolve, delay
from .stft import Spectrogram, StftConfig, istft, stft
from .suppressor import Suppressor
