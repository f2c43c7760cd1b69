import logging

from .cell import CellSolveConfig, CorrectorSet, solve_all_correctors  # NOQA
from .coeff import CellSampling, CoefficientField, make_preset  # NOQA
from .config import RunConfig, load_config, parse_config  # NOQA
from .exceptions import *  # NOQA
from .mac import MacGrid  # NOQA
from .stokes import Forcing, OperatorSpec, StokesConfig, solve_unsteady  # NOQA
from .tensor import EffectiveTensor, assemble_tensor  # NOQA
from .twoscale import TestFunction, epsilon_sweep, sweep_async  # NOQA

rootlogger = logging.getLogger("stokes_homog")
if rootlogger.level == logging.NOTSET:
    rootlogger.setLevel(logging.WARN)


def get_version():
    """Get current stokes-homog version."""

    from importlib.metadata import version

    return version("stokes-homog")


# noinspection PyBroadException
try:
    __version__ = get_version()
except Exception:
    pass
