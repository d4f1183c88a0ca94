"""Fixed hyperspherical prototypes with dynamic label-to-prototype assignment."""

from ._protosphere import *  # noqa: F401,F403
from ._protosphere import __doc__  # noqa: F401

__version__ = "0.1.0"
