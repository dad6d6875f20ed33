from larsen.core.suppressor import Suppressor

from .baselines import *
from .cascade import *
from .deep_filter import *
from .external import *
from .features import *
from .kalman import *
