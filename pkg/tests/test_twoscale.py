import math

import numpy as np
import pytest

from stokes_homog.cell import CellSolveConfig, solve_all_correctors
from stokes_homog.coeff import make_preset
from stokes_homog.exceptions import (
    IncompatibleTrajectoryError,
    MissingArtifactError,
    ValidationError,
)
from stokes_homog.mac import MacGrid
from stokes_homog.stokes import Forcing, OperatorSpec, solve_unsteady
from stokes_homog.twoscale import (
    PLAIN,
    TestFunction,
    corrector_error,
    corrector_gradients_at,
    envelope_integral,
    fit_rate,
    gradient_error,
    l2q_error,
    limit_pairing,
    pressure_pairing,
    reconstruct_u1,
    synthetic_trajectory,
    two_scale_pairing,
)


def skewed(x1, x2, t):
    bump = t * np.sin(np.pi * x1) * np.sin(np.pi * x2)
    return bump, 2 * bump


def smooth(x1, x2, t):
    return (
        t * np.sin(np.pi * x1) * np.sin(2 * np.pi * x2),
        t * np.sin(2 * np.pi * x1) * np.sin(np.pi * x2),
    )


def l2q_norm(traj):
    total = sum(float(np.dot(s.u, s.u)) for s in traj.states[1:])
    return math.sqrt(total * traj.dt * traj.grid.h ** 2)


@pytest.fixture(scope="module")
def oracle_grid():
    return MacGrid(1024)


def test_l2q_error_of_itself(identity_trajectory):
    assert l2q_error(identity_trajectory, identity_trajectory) == 0.0
    assert gradient_error(identity_trajectory, identity_trajectory) == 0.0


def test_incompatible_trajectories(identity_trajectory, grid16):
    other = synthetic_trajectory(grid16, 1.0, 16, 0.25)
    with pytest.raises(IncompatibleTrajectoryError):
        l2q_error(other, identity_trajectory)
    coarse = synthetic_trajectory(MacGrid(12), 1.0, 8, 0.25)
    with pytest.raises(IncompatibleTrajectoryError):
        l2q_error(identity_trajectory, coarse)
    finer = synthetic_trajectory(MacGrid(32), 1.0, 8, 0.25)
    with pytest.raises(IncompatibleTrajectoryError):
        gradient_error(finer, identity_trajectory)


def test_prolongation_is_second_order():
    reference = synthetic_trajectory(MacGrid(64), 1.0, 8, 1.0, envelope=smooth)
    errors = []
    for n in (16, 32):
        coarse = synthetic_trajectory(MacGrid(n), 1.0, 8, 1.0, envelope=smooth)
        errors.append(l2q_error(reference, coarse))
    assert 0 < errors[1] < errors[0] / 3


def test_plain_pairing_matches_limit_on_same_trajectory(identity_trajectory):
    for phi in ("bump", "one"):
        psi = TestFunction(phi, "one", "one")
        np.testing.assert_allclose(
            two_scale_pairing(identity_trajectory, psi, 0.25),
            limit_pairing(identity_trajectory, psi),
            rtol=1e-12,
        )


@pytest.mark.parametrize("w,theta", [("cos1", "one"), ("one", "cos"), ("cos1cos2", "cossq")])
def test_zero_mean_limit(identity_trajectory, w, theta):
    psi = TestFunction("bump", w, theta)
    assert not limit_pairing(identity_trajectory, psi).any()


def test_limit_pairing_scales_with_means(identity_trajectory):
    plain = limit_pairing(identity_trajectory, PLAIN)
    half = limit_pairing(identity_trajectory, TestFunction("bump", "cos2sq", "one"))
    quarter = limit_pairing(identity_trajectory, TestFunction("bump", "cos2sq", "cossq"))
    np.testing.assert_allclose(half, 0.5 * plain, rtol=1e-14)
    np.testing.assert_allclose(quarter, 0.25 * plain, rtol=1e-14)


@pytest.mark.parametrize(
    "offset,w,factor",
    [(0.0, "cos1", 0.5), (1.0, "one", 1.0), (1.0, "cos2sq", 0.5), (0.0, "cos1cos2", 0.0)],
)
def test_synthetic_oracle(oracle_grid, offset, w, factor):
    eps = 1 / 64
    traj = synthetic_trajectory(oracle_grid, 1.0, 8, eps, offset=offset, envelope=skewed)
    reference = envelope_integral(oracle_grid, 1.0, 8, envelope=skewed)
    expected = factor * reference
    got = two_scale_pairing(traj, TestFunction("bump", w, "one"), eps)
    scale = np.abs(reference)
    assert np.all(scale > 1e-3)
    assert np.all(np.abs(got - expected) <= 0.02 * scale)


def test_fit_rate():
    eps = np.array([1 / 4, 1 / 8, 1 / 16, 1 / 32])
    assert fit_rate(eps, 3 * eps) == pytest.approx(1.0)
    assert fit_rate(eps, 0.5 * eps ** 2) == pytest.approx(2.0)
    with pytest.raises(ValidationError):
        fit_rate(eps[:2], eps[:2])
    with pytest.raises(ValidationError):
        fit_rate(eps, np.array([1.0, 0.5, 0.0, 0.1]))
    with pytest.raises(ValidationError):
        fit_rate(eps, eps[:3])


def test_corrector_error_constant_coefficients(grid16, identity_trajectory):
    a = make_preset("constant", [1.0])
    chi = solve_all_correctors(a, CellSolveConfig(16))
    fine = solve_unsteady(grid16, OperatorSpec.fine(a, 0.25), Forcing(), 1.0, 8)
    assert corrector_error(fine, identity_trajectory, chi, 0.25) <= 1e-6
    u1, grad_y = reconstruct_u1(identity_trajectory, chi, 0.25)
    assert np.abs(u1).max() <= 1e-12
    assert np.abs(grad_y).max() <= 1e-12


def test_corrector_gradients_of_layers(layered_chi, grid16):
    grads = corrector_gradients_at(layered_chi, 0.25, grid16)
    assert grads.shape == (2, 2, 2, 2, 16, 16)
    x1, _ = grid16.centres()
    y1 = x1 / 0.25
    alpha = 1.0 + 1.5 * (1.0 + np.sin(2 * np.pi * y1))
    # the harmonic mean of 2.5 + 1.5 sin is 2
    np.testing.assert_allclose(grads[0, 1, 1, 0], 1.0 - 2.0 / alpha, atol=1e-3)


@pytest.mark.parametrize("eps", [0.75, 0.3])
def test_corrector_gradients_without_whole_periods(layered_chi, grid16, eps):
    grads = corrector_gradients_at(layered_chi, eps, grid16)
    x1, _ = grid16.centres()
    alpha = 1.0 + 1.5 * (1.0 + np.sin(2 * np.pi * x1 / eps))
    np.testing.assert_allclose(grads[0, 1, 1, 0], 1.0 - 2.0 / alpha, atol=1e-3)
    assert np.abs(grads[0, 1, 0]).max() <= 1e-10


def test_missing_correctors(identity_trajectory):
    with pytest.raises(MissingArtifactError):
        corrector_error(identity_trajectory, identity_trajectory, None, 0.25)


def test_pressure_pairing(identity_trajectory):
    fine, homog = pressure_pairing(identity_trajectory, identity_trajectory, phi="one")
    assert abs(fine) <= 1e-12 and abs(homog) <= 1e-12
    fine, homog = pressure_pairing(identity_trajectory, identity_trajectory)
    assert fine == homog


def test_test_function():
    with pytest.raises(ValidationError):
        TestFunction("bump", "nope")
    psi = TestFunction("one", "cos1", "cos")
    x = np.array([0.0, 0.0625])
    np.testing.assert_allclose(psi(x, x, 0.0, 0.25), [1.0, 0.0], atol=1e-15)
    assert TestFunction(w="cos2sq").y_mean == 0.5
    assert repr(PLAIN) == "TestFunction(phi=bump, w=one, theta=one)"
