from dataclasses import asdict, dataclass
from typing import Union

import numpy as np

from larsen.core.signal import TimeSignal
from larsen.errors import ConfigurationError
from larsen.utils import from_dict

KINDS = ("identity", "hard_clip", "sigmoid")

# vertex of the quadratic driving the sigmoid, beyond which it would fold back
SIGMOID_VERTEX = 2.5


@dataclass(frozen=True)
class NonlinearityModel:
    """Memoryless amplifier/loudspeaker nonlinearity

    This is a frozen Python Data Class, so that all attributes described below can be used as
    keyword-arguments when instantiating a NonlinearityModel
    """

    kind: str = "identity"
    """One of :code:`"identity"`, :code:`"hard_clip"` or :code:`"sigmoid"`"""

    clip_threshold: float = 0.8
    """Clipping level of :code:`"hard_clip"` (full scale = 1), default is :code:`0.8`"""

    gamma: float = 1.0
    """Saturation level of :code:`"sigmoid"`, default is :code:`1.0`"""

    slope_positive: float = 4.0
    """Sigmoid slope applied where the quadratic drive is positive, default is :code:`4.0`"""

    slope_negative: float = 0.5
    """Sigmoid slope applied where the quadratic drive is negative, default is :code:`0.5`"""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(
                f"unknown nonlinearity '{self.kind}' (available: {', '.join(KINDS)})"
            )
        if self.clip_threshold <= 0:
            raise ConfigurationError("clip_threshold must be positive")
        if self.gamma <= 0 or self.slope_positive <= 0 or self.slope_negative <= 0:
            raise ConfigurationError("sigmoid parameters must be positive")

    @property
    def saturation(self):
        """Bound on the output magnitude (inf for identity)"""
        if self.kind == "hard_clip":
            return self.clip_threshold
        elif self.kind == "sigmoid":
            return self.gamma
        return np.inf

    @classmethod
    def from_dict(cls, env):
        return from_dict(cls, env)

    def to_dict(self):
        return asdict(self)

    def __call__(self, x):
        return apply_nonlinearity(x, self)


def _sigmoid(x, model):
    b = 1.5 * x - 0.3 * x**2
    a = np.where(b > 0, model.slope_positive, model.slope_negative)
    return model.gamma * (2 / (1 + np.exp(-a * b)) - 1)


def apply_nonlinearity(
    x: Union[TimeSignal, np.ndarray], model: NonlinearityModel
) -> Union[TimeSignal, np.ndarray]:
    """Apply a memoryless nonlinearity sample-wise

    - ``identity``: returns the input unchanged
    - ``hard_clip``: clips to ``[-clip_threshold, clip_threshold]``
    - ``sigmoid``: ``gamma * (2 / (1 + exp(-a * b)) - 1)`` with ``b = 1.5x - 0.3x^2``, ``a = 4``
      where ``b > 0`` and ``0.5`` elsewhere. ``b`` is evaluated on ``min(x, 2.5)`` so that the
      map stays monotone and saturates at ``+gamma``.

    Parameters
    ----------
    x : TimeSignal or np.ndarray
        input samples
    model : NonlinearityModel
        nonlinearity to apply

    Returns
    -------
    TimeSignal or np.ndarray
        same type and length as `x`
    """
    if isinstance(x, TimeSignal):
        return TimeSignal(apply_nonlinearity(x.samples, model), x.sample_rate)

    x = np.asarray(x, dtype=float)
    if model.kind == "identity":
        return x
    elif model.kind == "hard_clip":
        return np.clip(x, -model.clip_threshold, model.clip_threshold)
    else:
        return _sigmoid(np.minimum(x, SIGMOID_VERTEX), model)
