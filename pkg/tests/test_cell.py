import concurrent.futures

import numpy as np
import pytest

from stokes_homog.cell import (
    INDEX_PAIRS,
    CellSolveConfig,
    CorrectorField,
    CorrectorSet,
    apply_cell_operator,
    cell_energy,
    cell_rhs,
    cell_residual,
    dense_cell_oracle,
    lattice,
    lattice_norm,
    leray_project,
    solve_all_correctors,
    solve_cell_problem,
)
from stokes_homog.coeff import CellSampling, make_preset
from stokes_homog.exceptions import (
    ConvergenceError,
    LatticeMismatchError,
    ValidationError,
)

from .conftest import TIGHT


def test_leray_projection(rng):
    v = rng.standard_normal((2, 16, 16))
    w = leray_project(v)
    assert np.abs(lattice(16).div(w)).max() <= 1e-12
    assert np.abs(w.mean(axis=(-2, -1))).max() <= 1e-14
    np.testing.assert_allclose(leray_project(w), w, atol=1e-13)
    # orthogonal: the removed part is orthogonal to the kept part
    assert abs(np.sum((v - w) * w)) <= 1e-10


def test_cell_operator_is_symmetric(rng, trig):
    a_lat = trig.on_lattice(CellSampling(16))
    u = leray_project(rng.standard_normal((2, 16, 16)))
    v = leray_project(rng.standard_normal((2, 16, 16)))
    uv = np.sum(apply_cell_operator(a_lat, u) * v)
    vu = np.sum(apply_cell_operator(a_lat, v) * u)
    assert uv == pytest.approx(vu, rel=1e-10)
    assert cell_energy(a_lat, u, v) == pytest.approx(cell_energy(a_lat, v, u), rel=1e-10)
    assert cell_energy(a_lat, u, u) > 0


def test_constant_coefficients_have_zero_correctors():
    chi = solve_all_correctors(make_preset("constant", [2.0]), CellSolveConfig(16))
    for entry in chi:
        assert np.abs(entry.velocity).max() <= 1e-12
        assert entry.iterations == 0


@pytest.mark.parametrize("name,params", [("trig", [0.5]), ("layered", [4.0])])
@pytest.mark.parametrize("n", [8, 16])
def test_dense_oracle_agrees(name, params, n):
    a = make_preset(name, params)
    cfg = CellSolveConfig(n, tol=1e-13)
    for i, k in INDEX_PAIRS:
        spectral = solve_cell_problem(a, cfg, i, k)
        dense = dense_cell_oracle(a, n, i, k)
        diff = lattice_norm(spectral.velocity - dense.velocity)
        scale = max(lattice_norm(dense.velocity), 1e-300)
        assert diff <= 1e-8 * scale or lattice_norm(dense.velocity) == 0


def test_corrector_invariants(trig):
    cfg = CellSolveConfig(32, tol=1e-10)
    chi = solve_all_correctors(trig, cfg)
    assert len(chi) == 4
    for entry in chi:
        assert np.abs(entry.divergence()).max() <= 1e-9
        assert np.abs(entry.means()).max() <= 1e-13
        assert entry.residual <= 1e-10
        assert cell_residual(trig, entry, entry.i, entry.k) <= 1e-8


def test_layered_corrector_structure(layered_chi):
    # a depends on y1 only, so chi_12 = (0, f(y1))
    chi = layered_chi[1, 2]
    assert np.abs(chi.velocity[0]).max() <= 1e-12
    profile = chi.velocity[1]
    assert np.abs(profile - profile[:, :1]).max() <= 1e-10
    assert np.abs(profile).max() > 1e-3
    # the gradient 1 - H/alpha with the harmonic mean H of alpha
    n = chi.n_cell
    y1 = CellSampling(n).nodes
    alpha = 1.0 + 1.5 * (1.0 + np.sin(2 * np.pi * y1))
    harmonic = 1.0 / np.mean(1.0 / alpha)
    slope = chi.gradient()[1, 0][:, 0]
    np.testing.assert_allclose(slope, 1.0 - harmonic / alpha, atol=1e-6)


def test_cell_pressure_recovery(trig):
    cfg = CellSolveConfig(16, tol=TIGHT)
    entry = solve_cell_problem(trig, cfg, 1, 1)
    lat = lattice(16)
    a_lat = trig.on_lattice(cfg.sampling)
    residual = (
        apply_cell_operator(a_lat, entry.velocity, lat)
        + lat.grad(entry.pressure)
        - cell_rhs(a_lat, 1, 1, lat)
    )
    assert lattice_norm(residual) <= 1e-9
    assert abs(entry.pressure.mean()) <= 1e-13


def test_executor_matches_serial(trig):
    cfg = CellSolveConfig(16, tol=1e-10)
    serial = solve_all_correctors(trig, cfg)
    with concurrent.futures.ThreadPoolExecutor(max_workers=4) as pool:
        threaded = solve_all_correctors(trig, cfg, executor=pool)
    for a, b in zip(serial, threaded):
        np.testing.assert_array_equal(a.velocity, b.velocity)


def test_non_convergence_reports_residuals(trig):
    with pytest.raises(ConvergenceError) as info:
        solve_cell_problem(trig, CellSolveConfig(16, tol=1e-12, max_iter=1), 1, 1)
    assert info.value.iterations == 1
    assert len(info.value.residuals) == 2


def test_invalid_requests(trig):
    cfg = CellSolveConfig(8)
    with pytest.raises(ValidationError):
        solve_cell_problem(trig, cfg, 3, 1)
    with pytest.raises(ValidationError):
        dense_cell_oracle(trig, 32, 1, 1)
    with pytest.raises(ValidationError):
        CellSolveConfig(8, tol=0)


def test_corrector_set_checks():
    zero = np.zeros((2, 8, 8))
    entries = [CorrectorField(i, k, zero, zero[0]) for i, k in INDEX_PAIRS]
    with pytest.raises(ValidationError):
        CorrectorSet(None, entries[:3])
    mixed = entries[:3] + [CorrectorField(2, 2, np.zeros((2, 16, 16)), np.zeros((16, 16)))]
    with pytest.raises(LatticeMismatchError):
        CorrectorSet(None, mixed)
    assert CorrectorSet(None, entries).n_cell == 8


@pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
def test_correctors_ignore_scaling(trig, c):
    cfg = CellSolveConfig(16, tol=TIGHT)
    for i, k in INDEX_PAIRS:
        plain = solve_cell_problem(trig, cfg, i, k)
        scaled = solve_cell_problem(trig.scaled(c), cfg, i, k)
        np.testing.assert_allclose(scaled.velocity, plain.velocity, rtol=0, atol=1e-11)


def test_residual_detects_corruption(trig, rng):
    entry = solve_cell_problem(trig, CellSolveConfig(16, tol=TIGHT), 2, 1)
    noisy = CorrectorField(
        2, 1, entry.velocity + rng.standard_normal(entry.velocity.shape), entry.pressure
    )
    assert cell_residual(trig, entry, 2, 1) <= 1e-8
    assert cell_residual(trig, noisy, 2, 1) >= 0.1


def test_resolution_convergence(trig):
    chi = {n: solve_cell_problem(trig, CellSolveConfig(n, tol=TIGHT), 1, 2) for n in (16, 32, 64)}

    def gap(n):
        coarse = chi[n].velocity
        fine = chi[2 * n].velocity[:, ::2, ::2]
        return lattice_norm(coarse - fine)

    assert gap(32) < gap(16)
    assert gap(16) > 0
