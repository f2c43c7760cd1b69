"""The homogenized tensor ``q_ijkh`` from a solved :class:`~.cell.CorrectorSet`.

Two independent lattice formulas are evaluated:

* **direct**: ``q_ijkh = δ_kh ⟨a_ij⟩ - Σ_l ⟨a_il ∂χ_jh^k/∂y_l⟩``
* **energy**: ``q_ijkh = â(χ_ik - π_ik, χ_jh - π_jh)`` with ``π_ik^r = y_i δ_kr``

Only the constant gradient ``∂π_ik^r/∂y_l = δ_il δ_kr`` of the affine fields is
ever used. The direct value is shipped, the energy value is the cross-check,
and their largest entrywise difference is kept as ``consistency_gap``.

Arrays are indexed ``q[i, j, k, h]`` with 0-based indices; reports and files
use 1-based indices.
"""
import itertools
import logging

import numpy as np

from .coeff import CellSampling
from .exceptions import LatticeMismatchError, TensorError

log = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-10
INDICES = tuple(itertools.product((1, 2), repeat=4))


class EffectiveTensor:
    """A rank-4 homogenized tensor with its certification data.

    :param q: Array of shape ``(2, 2, 2, 2)``.
    :param provenance: ``"direct"``, ``"energy"``, ``"identity"`` or ``"file"``.
    :param alpha0: Certified ellipticity constant, computed when omitted.
    :param consistency_gap: ``max |q_direct - q_energy|`` when both are known.
    """

    __slots__ = ("q", "provenance", "alpha0", "consistency_gap")

    def __init__(self, q, provenance, alpha0=None, consistency_gap=None):
        self.q = np.array(q, dtype=float).reshape(2, 2, 2, 2)
        self.provenance = provenance
        self.consistency_gap = consistency_gap
        self.alpha0 = tensor_ellipticity(self) if alpha0 is None else alpha0

    @classmethod
    def identity(cls, c=1.0):
        """``q_ijkh = c δ_ij δ_kh``, the tensor of ``c`` times the vector Laplacian."""
        eye = np.eye(2)
        return cls(c * np.einsum("ij,kh->ijkh", eye, eye), "identity")

    @classmethod
    def from_entries(cls, entries, provenance="file", consistency_gap=None):
        """Build from ``{(i, j, k, h): value}`` with 1-based indices."""
        q = np.zeros((2, 2, 2, 2))
        for (i, j, k, h), value in entries.items():
            q[i - 1, j - 1, k - 1, h - 1] = value
        return cls(q, provenance, consistency_gap=consistency_gap)

    def entries(self):
        """``[((i, j, k, h), value), ...]`` in lexicographic 1-based order."""
        return [
            ((i, j, k, h), float(self.q[i - 1, j - 1, k - 1, h - 1]))
            for i, j, k, h in INDICES
        ]

    def matrix(self):
        """``M[(i,k), (j,h)] = q_ijkh`` as a 4×4 array."""
        return self.q.transpose(0, 2, 1, 3).reshape(4, 4)

    def __repr__(self):
        return "EffectiveTensor({}, alpha0={:.6g})".format(self.provenance, self.alpha0)


def _lattice_inputs(a, chi, sampling):
    if sampling is not None and sampling.n_cell != chi.n_cell:
        raise LatticeMismatchError(
            "Correctors live on a {0}x{0} lattice, coefficients sampled on {1}x{1}".format(
                chi.n_cell, sampling.n_cell
            )
        )
    a_lat = a.on_lattice(CellSampling(chi.n_cell))
    return a_lat, chi.gradients(), float(chi.n_cell ** 2)


def direct_entries(a, chi, sampling=None):
    a_lat, grads, size = _lattice_inputs(a, chi, sampling)
    mean_a = a_lat.mean(axis=(-2, -1))
    q = np.einsum("ij,kh->ijkh", mean_a, np.eye(2))
    # grads[j, h, k, l] = ∂χ_jh^k/∂y_l
    q -= np.einsum("ilpq,jhklpq->ijkh", a_lat, grads, optimize=True) / size
    return q


def energy_entries(a, chi, sampling=None):
    a_lat, grads, size = _lattice_inputs(a, chi, sampling)
    eye = np.eye(2)
    shift = np.einsum("is,km->ikms", eye, eye)[..., None, None]
    g = grads - shift
    return np.einsum("rspq,ikmspq,jhmrpq->ijkh", a_lat, g, g, optimize=True) / size


def effective_tensor_direct(a, chi, sampling=None):
    """Lattice quadrature of the defining formula of ``q_ijkh``.

    :raises LatticeMismatchError: ``sampling`` differs from the corrector lattice.
    """
    return EffectiveTensor(direct_entries(a, chi, sampling), "direct")


def effective_tensor_energy(a, chi, sampling=None):
    """``q_ijkh`` through the cell energy of ``χ_ik - π_ik`` and ``χ_jh - π_jh``."""
    return EffectiveTensor(energy_entries(a, chi, sampling), "energy")


def assemble_tensor(a, chi, sampling=None):
    """Evaluate both formulas and ship the direct one with its consistency gap."""
    direct = direct_entries(a, chi, sampling)
    energy = energy_entries(a, chi, sampling)
    gap = float(np.abs(direct - energy).max())
    rv = EffectiveTensor(direct, "direct", consistency_gap=gap)
    log.info(
        "tensor of %r: alpha0 = %.6g, consistency gap %.3e", a, rv.alpha0, gap
    )
    return rv


def symmetry_violation(q):
    """``max |q_ijkh - q_jihk|``, the exchange of the pairs ``(i,k)`` and ``(j,h)``."""
    q = getattr(q, "q", q)
    return float(np.abs(q - q.transpose(1, 0, 3, 2)).max())


def minor_violation(q):
    """``max |q_ijkh - q_jikh|``, reported only."""
    q = getattr(q, "q", q)
    return float(np.abs(q - q.transpose(1, 0, 2, 3)).max())


def tensor_ellipticity(q):
    """Smallest eigenvalue ``α₀`` of ``M[(i,k),(j,h)] = q_ijkh`` over all real ξ.

    Symmetry is required within ``1e-10`` relative to the largest entry, or within
    twice the consistency gap for a tensor that carries one: the direct formula
    is symmetric only up to the cell solver tolerance.

    :raises TensorError: Major symmetry broken beyond tolerance or ``α₀ <= 0``.
    """
    arr = getattr(q, "q", q)
    violation = symmetry_violation(arr)
    scale = max(1.0, float(np.abs(arr).max()))
    allowed = SYMMETRY_TOLERANCE * scale
    gap = getattr(q, "consistency_gap", None)
    if gap is not None:
        allowed = max(allowed, 2 * gap)
    if violation > allowed:
        raise TensorError(
            "Tensor is not symmetric under (i,k) <-> (j,h): violation {:.3e}".format(
                violation
            )
        )
    m = arr.transpose(0, 2, 1, 3).reshape(4, 4)
    alpha0 = float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])
    if not alpha0 > 0:
        raise TensorError("Tensor is not elliptic: alpha0 = {}".format(alpha0))
    return alpha0


def tensor_symmetry_report(q):
    """Symmetry diagnostics of a tensor.

    :return: A :class:`dict` with ``major`` (max violation of the pair exchange),
             ``minor`` (max ``|q_ijkh - q_jikh|``) and ``entries``, the 16 values
             keyed by 1-based ``(i, j, k, h)``.
    """
    arr = getattr(q, "q", q)
    return dict(
        major=symmetry_violation(arr),
        minor=minor_violation(arr),
        entries={
            (i, j, k, h): float(arr[i - 1, j - 1, k - 1, h - 1]) for i, j, k, h in INDICES
        },
    )
