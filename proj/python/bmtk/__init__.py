"""Biomechanics-informed cardiac motion tracking toolkit (Python bindings)."""

from ._bmtk import *  # noqa: F401,F403
from ._bmtk import __doc__  # noqa: F401

__version__ = "1.0.0"
