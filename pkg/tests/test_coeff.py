import numpy as np
import pytest

from stokes_homog import CellSampling, make_preset
from stokes_homog.coeff import (
    CoefficientField,
    ScaledField,
    ellipticity_estimate,
    epsilon_sample,
    sample_at,
    wrap,
)
from stokes_homog.exceptions import EllipticityError, PresetError, ValidationError


@pytest.mark.parametrize(
    "name,params",
    [
        ("constant", [2.0]),
        ("layered", [4.0]),
        ("trig", [0.5]),
        ("checkerboard_smooth", [3.0, 0.1]),
    ],
)
def test_presets_are_symmetric_and_periodic(name, params, rng):
    a = make_preset(name, params)
    y = rng.uniform(-0.5, 0.5, size=(2, 50))
    base = a.sample(y[0], y[1])
    assert base.shape == (2, 2, 50)
    assert np.array_equal(base[0, 1], base[1, 0])
    for shift in ((1, 0), (0, 1), (-3, 2)):
        moved = a.sample(y[0] + shift[0], y[1] + shift[1])
        np.testing.assert_allclose(moved, base, rtol=0, atol=1e-12)


def test_constant_is_exact():
    a = make_preset("constant", [2.5])
    value = sample_at(a, (0.123, -0.4))
    assert value.tolist() == [[2.5, 0.0], [0.0, 2.5]]


@pytest.mark.parametrize(
    "name,params",
    [
        ("nope", []),
        ("constant", []),
        ("constant", [1.0, 2.0]),
        ("constant", [0.0]),
        ("layered", [-1.0]),
        ("trig", [1.0]),
        ("trig", [-1.5]),
        ("checkerboard_smooth", [2.0, 0.0]),
        ("checkerboard_smooth", [0.0, 0.1]),
        ("constant", ["abc"]),
        ("constant", [float("nan")]),
    ],
)
def test_invalid_presets(name, params):
    with pytest.raises(PresetError):
        make_preset(name, params)


def test_wrap():
    assert wrap(0.75) == -0.25
    assert wrap(-0.5) == -0.5
    assert wrap(0.5) == -0.5
    assert wrap(0.25) == 0.25


def test_cell_sampling():
    sampling = CellSampling(8)
    assert sampling.nodes[0] == -0.5
    assert sampling.nodes[-1] == 0.375
    y1, y2 = sampling.mesh()
    assert y1.shape == (8, 8)
    assert y1[1, 0] == y1[1, 5]
    assert y2[0, 1] == y2[5, 1]
    assert sampling == CellSampling(8)
    for bad in (2, 6, 12, 0):
        with pytest.raises(ValidationError):
            CellSampling(bad)


def test_ellipticity_layered():
    sampling = CellSampling(256)
    alpha = ellipticity_estimate(make_preset("layered", [4.0]), sampling)
    assert alpha == pytest.approx(1.0, abs=1e-12)
    alpha = ellipticity_estimate(make_preset("layered", [0.5]), sampling)
    assert alpha == pytest.approx(0.5, abs=1e-12)
    assert ellipticity_estimate(make_preset("constant", [3.0]), sampling) == 3.0


def test_ellipticity_trig_bound():
    alpha = ellipticity_estimate(make_preset("trig", [0.5]), CellSampling(256))
    assert alpha == pytest.approx(0.5, abs=1e-12)


def test_ellipticity_rejects_degenerate_field():
    # bypasses the preset validator on purpose
    a = CoefficientField("layered", [-1.0])
    with pytest.raises(EllipticityError) as info:
        ellipticity_estimate(a, CellSampling(16))
    assert info.value.alpha == pytest.approx(-1.0)


@pytest.mark.parametrize("name,params", [("trig", [0.5]), ("layered", [4.0])])
def test_epsilon_sample(rng, name, params):
    a = make_preset(name, params)
    for _ in range(20):
        eps = rng.uniform(0.01, 1.0)
        x1, x2 = rng.uniform(0.0, 1.0, size=2)
        np.testing.assert_array_equal(
            epsilon_sample(a, eps, (x1, x2)), sample_at(a, (x1 / eps, x2 / eps))
        )
    x = (0.3, 0.7)
    with pytest.raises(ValidationError):
        epsilon_sample(a, 0.0, x)
    with pytest.raises(ValidationError):
        epsilon_sample(a, -0.5, x)


def test_scaled_field():
    a = make_preset("checkerboard_smooth", [3.0, 0.2])
    doubled = a.scaled(2.0)
    assert isinstance(doubled, ScaledField)
    y = np.linspace(-0.5, 0.5, 11)
    np.testing.assert_array_equal(doubled.modulus(y, y), 2.0 * a.modulus(y, y))
    assert doubled == a.scaled(2.0)
    assert doubled != a
    with pytest.raises(PresetError):
        a.scaled(0.0)


def test_field_identity():
    assert make_preset("layered", [4]) == make_preset("layered", [4.0])
    assert hash(make_preset("layered", [4])) == hash(make_preset("layered", [4.0]))
    assert make_preset("layered", [4]) != make_preset("layered", [2])
    assert repr(make_preset("checkerboard_smooth", [3, 0.1])) == "checkerboard_smooth(3, 0.1)"
