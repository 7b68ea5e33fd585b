"""Learning curves of random deep targets: theory, simulation and diagnostics."""

from ._dtl import *  # noqa: F401,F403
from ._dtl import __doc__  # noqa: F401

__version__ = "1.0.0"
