"""Python bindings for the safenav C++ core."""

from ._safenav import *  # noqa: F401,F403
from ._safenav import __doc__  # noqa: F401

__version__ = "0.1.0"
