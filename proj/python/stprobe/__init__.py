"""Probe spatiotemporal filter banks with parametrised moving waves."""

from ._stprobe import *  # noqa: F401,F403
from ._stprobe import __doc__  # noqa: F401

__version__ = "0.1.0"
