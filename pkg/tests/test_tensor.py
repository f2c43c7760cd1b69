import numpy as np
import pytest

from stokes_homog.cell import (
    INDEX_PAIRS,
    CellSolveConfig,
    CorrectorSet,
    dense_cell_oracle,
    solve_all_correctors,
)
from stokes_homog.coeff import CellSampling, make_preset
from stokes_homog.exceptions import LatticeMismatchError, TensorError
from stokes_homog.tensor import (
    EffectiveTensor,
    assemble_tensor,
    direct_entries,
    effective_tensor_direct,
    effective_tensor_energy,
    energy_entries,
    symmetry_violation,
    tensor_ellipticity,
    tensor_symmetry_report,
)

from .conftest import TIGHT


@pytest.fixture(scope="module")
def trig64():
    a = make_preset("trig", [0.5])
    return a, solve_all_correctors(a, CellSolveConfig(64, tol=TIGHT))


def test_constant_is_identity():
    a = make_preset("constant", [2.5])
    chi = solve_all_correctors(a, CellSolveConfig(16))
    q = assemble_tensor(a, chi)
    expected = EffectiveTensor.identity(2.5).q
    assert np.abs(q.q - expected).max() <= 1e-12
    assert np.abs(energy_entries(a, chi) - expected).max() <= 1e-12
    assert q.alpha0 == pytest.approx(2.5)
    assert q.provenance == "direct"
    assert q.consistency_gap <= 1e-12


def test_cross_formula_consistency(trig64):
    a, chi = trig64
    direct = effective_tensor_direct(a, chi)
    energy = effective_tensor_energy(a, chi)
    assert np.abs(direct.q - energy.q).max() <= 1e-8
    assert symmetry_violation(energy) <= 1e-12
    assert symmetry_violation(direct) <= np.abs(direct.q - energy.q).max() + 1e-12
    assert energy.provenance == "energy"
    assert 0 < direct.alpha0 <= 1.0


def test_layered_consistency(layered, layered_chi, layered_tensor):
    assert layered_tensor.consistency_gap <= 1e-8
    assert layered_tensor.alpha0 > 0
    energy = energy_entries(layered, layered_chi)
    mean_a = 2.5
    # the corrected energy never exceeds the uncorrected one on the diagonal
    for i in range(2):
        for k in range(2):
            assert energy[i, i, k, k] <= mean_a + 1e-12


def test_layered_harmonic_mean(layered, layered_tensor):
    # shear across the layers sees the harmonic mean, along them the arithmetic
    y = CellSampling(32).nodes
    alpha = layered.modulus(y, np.zeros_like(y))
    harmonic = 1.0 / np.mean(1.0 / alpha)
    q = layered_tensor.q
    assert q[0, 0, 1, 1] == pytest.approx(harmonic, rel=1e-8)
    assert q[1, 1, 0, 0] == pytest.approx(2.5, rel=1e-8)


def test_dense_oracle_tensor(trig):
    n = 16
    spectral = solve_all_correctors(trig, CellSolveConfig(n, tol=1e-13))
    dense = CorrectorSet(trig, [dense_cell_oracle(trig, n, i, k) for i, k in INDEX_PAIRS])
    assert np.abs(direct_entries(trig, spectral) - direct_entries(trig, dense)).max() <= 1e-8


@pytest.mark.parametrize("factor", [0.5, 2.0])
def test_scaling(trig64, factor):
    a, chi = trig64
    scaled = a.scaled(factor)
    chi_scaled = solve_all_correctors(scaled, CellSolveConfig(64, tol=TIGHT))
    q = direct_entries(a, chi)
    q_scaled = direct_entries(scaled, chi_scaled)
    assert np.abs(q_scaled - factor * q).max() <= 1e-10


def test_lattice_mismatch(trig64):
    a, chi = trig64
    with pytest.raises(LatticeMismatchError):
        effective_tensor_direct(a, chi, CellSampling(32))


def test_ellipticity_checks():
    assert tensor_ellipticity(EffectiveTensor.identity(3.0)) == pytest.approx(3.0)
    q = EffectiveTensor.identity().q.copy()
    q[0, 1, 0, 1] = 0.5
    with pytest.raises(TensorError, match="symmetric"):
        tensor_ellipticity(q)
    with pytest.raises(TensorError, match="elliptic"):
        EffectiveTensor(-EffectiveTensor.identity().q, "file")


def test_matrix_layout():
    q = np.arange(16, dtype=float).reshape(2, 2, 2, 2)
    m = EffectiveTensor.__new__(EffectiveTensor)
    m.q = q
    matrix = EffectiveTensor.matrix(m)
    # M[(i,k),(j,h)] = q_ijkh
    assert matrix[0 * 2 + 1, 1 * 2 + 0] == q[0, 1, 1, 0]
    assert matrix[1 * 2 + 1, 0 * 2 + 1] == q[1, 0, 1, 1]


def test_symmetry_report():
    report = tensor_symmetry_report(EffectiveTensor.identity())
    assert report["major"] == 0
    assert report["minor"] == 0
    assert len(report["entries"]) == 16
    assert report["entries"][(1, 1, 2, 2)] == 1.0
    assert report["entries"][(1, 2, 1, 2)] == 0.0


def test_entries_round_trip(layered_tensor):
    rebuilt = EffectiveTensor.from_entries(
        dict(layered_tensor.entries()), consistency_gap=layered_tensor.consistency_gap
    )
    np.testing.assert_array_equal(rebuilt.q, layered_tensor.q)
