"""Dual-branch Gaussian splatting for scenes with reflections."""

from ._refsplat import *  # noqa: F401,F403
from ._refsplat import __doc__  # noqa: F401

__version__ = "0.1.0"
