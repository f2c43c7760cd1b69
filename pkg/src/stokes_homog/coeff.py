"""Y-periodic coefficient fields ``a_ij(y)`` and their rescalings ``a_ij(x/ε)``.

Every preset is isotropic, ``a_ij(y) = α(y) δ_ij``, and given in closed form, so
sampling is exact at any point and periodicity and symmetry hold to the bit::

    from stokes_homog.coeff import make_preset, CellSampling, ellipticity_estimate

    a = make_preset("layered", [4.0])
    alpha = ellipticity_estimate(a, CellSampling(256))  # 1.0

"""
import logging
import math

import numpy as np

from .exceptions import EllipticityError, PresetError, ValidationError

log = logging.getLogger(__name__)

DIMENSION = 2


def wrap(y):
    """Map coordinates into the reference cell ``Y = [-1/2, 1/2)``."""
    y = np.asarray(y, dtype=float)
    return y - np.floor(y + 0.5)


def _constant(params, y1, y2):
    return np.full(np.broadcast(y1, y2).shape, params[0])


def _layered(params, y1, y2):
    kappa = params[0]
    alpha = 1.0 + (kappa - 1.0) * 0.5 * (1.0 + np.sin(2 * np.pi * y1))
    return np.broadcast_to(alpha, np.broadcast(y1, y2).shape).copy()


def _trig(params, y1, y2):
    beta = params[0]
    return 1.0 + beta * np.cos(2 * np.pi * y1) * np.cos(2 * np.pi * y2)


def _checkerboard_smooth(params, y1, y2):
    kappa, s = params
    phase = 0.5 * (1.0 + np.tanh(np.sin(2 * np.pi * y1) * np.sin(2 * np.pi * y2) / s))
    return 1.0 + (kappa - 1.0) * phase


def _check_constant(params):
    if params[0] <= 0:
        return "constant(c) needs c > 0, got {}".format(params[0])


def _check_layered(params):
    if params[0] <= 0:
        return "layered(kappa) needs kappa > 0, got {}".format(params[0])


def _check_trig(params):
    if not abs(params[0]) < 1:
        return "trig(beta) needs |beta| < 1, got {}".format(params[0])


def _check_checkerboard(params):
    kappa, s = params
    if kappa <= 0:
        return "checkerboard_smooth needs kappa > 0, got {}".format(kappa)
    if s <= 0:
        return "checkerboard_smooth needs a transition width s > 0, got {}".format(s)


# name -> (parameter names, validator, isotropic modulus α(y))
PRESETS = {
    "constant": (("c",), _check_constant, _constant),
    "layered": (("kappa",), _check_layered, _layered),
    "trig": (("beta",), _check_trig, _trig),
    "checkerboard_smooth": (("kappa", "s"), _check_checkerboard, _checkerboard_smooth),
}


class CoefficientField:
    """An immutable descriptor of a symmetric, elliptic, Y-periodic field ``a_ij``.

    Instances are created by :func:`make_preset`; they hold no sampled data, so
    they can be shared freely between concurrent workers.
    """

    __slots__ = ("_preset_id", "_params")

    dimension = DIMENSION

    def __init__(self, preset_id, params):
        self._preset_id = preset_id
        self._params = tuple(float(p) for p in params)

    @property
    def preset_id(self):
        return self._preset_id

    @property
    def params(self):
        return self._params

    @property
    def param_names(self):
        return PRESETS[self._preset_id][0]

    def modulus(self, y1, y2):
        """Evaluate the isotropic modulus ``α(y)`` at wrapped coordinates."""
        evaluate = PRESETS[self._preset_id][2]
        return evaluate(self._params, wrap(y1), wrap(y2))

    def sample(self, y1, y2):
        """Vectorized sampling.

        :param y1: First cell coordinate, any array shape.
        :param y2: Second cell coordinate, broadcastable against ``y1``.
        :return: An array of shape ``(2, 2) + shape`` holding ``a_ij(y)``.
        """
        alpha = self.modulus(y1, y2)
        zero = np.zeros_like(alpha)
        # a_12 and a_21 are the same array, symmetry is exact
        return np.array([[alpha, zero], [zero, alpha]])

    def on_lattice(self, sampling):
        """Sample the field on the nodes of a :class:`CellSampling`."""
        y1, y2 = sampling.mesh()
        return self.sample(y1, y2)

    def scaled(self, factor):
        """Return the field ``factor * a``; only presets with a linear scale
        parameter support it exactly, so the result is a :class:`ScaledField`."""
        return ScaledField(self, factor)

    def __eq__(self, other):
        return (
            isinstance(other, CoefficientField)
            and type(other) is type(self)
            and self._preset_id == other._preset_id
            and self._params == other._params
        )

    def __hash__(self):
        return hash((self._preset_id, self._params))

    def __repr__(self):
        return "{}({})".format(
            self._preset_id, ", ".join("{:g}".format(p) for p in self._params)
        )


class ScaledField(CoefficientField):
    """``c * a`` for a base field ``a``; used by the scaling checks."""

    __slots__ = ("_base", "_factor")

    def __init__(self, base, factor):
        if factor <= 0:
            raise PresetError("scale factor must be positive, got {}".format(factor))
        super().__init__(base.preset_id, base.params)
        self._base = base
        self._factor = float(factor)

    @property
    def factor(self):
        return self._factor

    def modulus(self, y1, y2):
        return self._factor * self._base.modulus(y1, y2)

    def __eq__(self, other):
        return (
            isinstance(other, ScaledField)
            and self._base == other._base
            and self._factor == other._factor
        )

    def __hash__(self):
        return hash((self._base, self._factor))

    def __repr__(self):
        return "{:g}*{!r}".format(self._factor, self._base)


class CellSampling:
    """A uniform lattice ``y_p = -1/2 + p / n_cell`` covering ``Y`` half-open."""

    __slots__ = ("_n_cell",)

    def __init__(self, n_cell):
        n_cell = int(n_cell)
        if n_cell < 4 or n_cell & (n_cell - 1):
            raise ValidationError(
                "n_cell must be a power of two >= 4, got {}".format(n_cell)
            )
        self._n_cell = n_cell

    @property
    def n_cell(self):
        return self._n_cell

    @property
    def nodes(self):
        return -0.5 + np.arange(self._n_cell) / self._n_cell

    def mesh(self):
        return np.meshgrid(self.nodes, self.nodes, indexing="ij")

    def __eq__(self, other):
        return isinstance(other, CellSampling) and other._n_cell == self._n_cell

    def __hash__(self):
        return hash(self._n_cell)

    def __repr__(self):
        return "CellSampling({})".format(self._n_cell)


def make_preset(name, params=()):
    """Instantiate a preset coefficient field.

    * ``constant(c)``, c > 0: ``α = c``
    * ``layered(κ)``, κ > 0: ``α = 1 + (κ-1)(1 + sin 2πy₁)/2``
    * ``trig(β)``, |β| < 1: ``α = 1 + β cos 2πy₁ cos 2πy₂``
    * ``checkerboard_smooth(κ, s)``, κ > 0, s > 0:
      ``α = 1 + (κ-1)(1 + tanh(sin 2πy₁ sin 2πy₂ / s))/2``

    :param name: Preset name.
    :param params: Sequence of real parameters, in the order above.
    :return: A :class:`CoefficientField`.
    :raises PresetError: Unknown name, wrong arity or parameters violating
                         ellipticity.
    """
    if name not in PRESETS:
        raise PresetError(
            "Unknown preset {!r}, expected one of {}".format(name, ", ".join(PRESETS))
        )
    names, check, _ = PRESETS[name]
    params = tuple(params)
    if len(params) != len(names):
        raise PresetError(
            "Preset {} takes parameters ({}), got {} value(s)".format(
                name, ", ".join(names), len(params)
            )
        )
    try:
        params = tuple(float(p) for p in params)
    except (TypeError, ValueError):
        raise PresetError("Preset parameters must be real numbers: {!r}".format(params))
    if not all(math.isfinite(p) for p in params):
        raise PresetError("Preset parameters must be finite: {!r}".format(params))
    problem = check(params)
    if problem:
        raise PresetError(problem)
    return CoefficientField(name, params)


def sample_at(field, y):
    """Evaluate ``a(y)`` at one point, periodic wrap applied.

    :return: A symmetric 2×2 :class:`numpy.ndarray`.
    """
    y1, y2 = y
    return field.sample(np.float64(y1), np.float64(y2))


def epsilon_sample(field, eps, x):
    """Evaluate the rescaled field ``a(x / ε)``."""
    if not eps > 0:
        raise ValidationError("epsilon must be positive, got {}".format(eps))
    x1, x2 = x
    return sample_at(field, (x1 / eps, x2 / eps))


def ellipticity_estimate(field, sampling):
    """Lattice estimate ``α̂`` of the ellipticity constant of ``field``.

    :return: The minimum over the lattice of the smallest eigenvalue of ``a(y_p)``.
    :raises EllipticityError: When ``α̂ <= 0``; the field is rejected.
    """
    a = field.on_lattice(sampling)
    if not a[0, 1].any():
        alpha = float(np.minimum(a[0, 0], a[1, 1]).min())
    else:
        stacked = np.moveaxis(a.reshape(2, 2, -1), -1, 0)
        alpha = float(np.linalg.eigvalsh(stacked)[:, 0].min())
    log.debug("ellipticity of %r on %r: %.17g", field, sampling, alpha)
    if not alpha > 0:
        raise EllipticityError(
            "Coefficient field {!r} is not elliptic on {!r}: alpha = {}".format(
                field, sampling, alpha
            ),
            alpha=alpha,
        )
    return alpha
