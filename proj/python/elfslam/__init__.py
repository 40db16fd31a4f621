"""Echo-based indoor SLAM: simulation, echoic features, loop closure and localisation."""

from ._core import *  # noqa: F401,F403
from ._core import ElfslamError, scenario

__version__ = "0.1.0"
