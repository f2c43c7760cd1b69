import textwrap

import numpy as np
import pytest

from stokes_homog.cell import CellSolveConfig, solve_all_correctors
from stokes_homog.coeff import make_preset
from stokes_homog.mac import MacGrid
from stokes_homog.stokes import Forcing, OperatorSpec, StokesConfig, solve_unsteady
from stokes_homog.tensor import EffectiveTensor, assemble_tensor

TIGHT = 1e-12


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="module")
def layered():
    return make_preset("layered", [4.0])


@pytest.fixture(scope="module")
def trig():
    return make_preset("trig", [0.5])


@pytest.fixture(scope="module")
def layered_chi(layered):
    return solve_all_correctors(layered, CellSolveConfig(32, tol=TIGHT))


@pytest.fixture(scope="module")
def layered_tensor(layered, layered_chi):
    return assemble_tensor(layered, layered_chi)


@pytest.fixture(scope="module")
def grid16():
    return MacGrid(16)


@pytest.fixture(scope="module")
def grid32():
    return MacGrid(32)


@pytest.fixture(scope="module")
def identity_trajectory(grid16):
    return solve_unsteady(
        grid16,
        OperatorSpec.homog(EffectiveTensor.identity()),
        Forcing("standard"),
        1.0,
        8,
        StokesConfig(),
    )


def write_config(path, **overrides):
    values = dict(preset="layered", kappa="4", n="64", eps="1/4", n_cell="16", M="8")
    values.update(overrides)
    lines = ["# test configuration"]
    lines += ["{} = {}".format(k, v) for k, v in values.items() if v is not None]
    path.write_text(textwrap.dedent("\n".join(lines)) + "\n")
    return path
