"""Divergence-constrained periodic cell problems and their correctors ``χ_ik``.

For each index pair ``(i, k)`` the corrector is the zero-mean, divergence-free
Y-periodic field solving::

    â(χ_ik, w) = Σ_l ∫_Y a_li ∂w^k/∂y_l dy      for all divergence-free w

with ``â(u, v) = Σ_{i,j,m} ∫_Y a_ij ∂u^m/∂y_j ∂v^m/∂y_i dy``. Coefficients do not
depend on the fast time, so the correctors are pure ``y`` fields.

The discretization is Fourier collocation on the :class:`~.coeff.CellSampling`
lattice. The variable-coefficient operator is applied matrix-free (FFT
derivative, pointwise product with ``a``, FFT derivative) and the constraint is
imposed by projected conjugate gradient with the exact Fourier-space Leray
projector. :func:`dense_cell_oracle` assembles the same discrete saddle-point
system densely and is used to validate the spectral path.
"""
import functools
import logging

import numpy as np
from scipy import linalg

from .coeff import CellSampling, ellipticity_estimate
from .exceptions import (
    LatticeMismatchError,
    SingularSystemError,
    ValidationError,
)
from .krylov import conjugate_gradient

log = logging.getLogger(__name__)

INDEX_PAIRS = ((1, 1), (1, 2), (2, 1), (2, 2))
DENSE_LIMIT = 16


class SpectralLattice:
    """Wavenumbers and FFT helpers for real fields on an ``n × n`` periodic lattice.

    The Nyquist wavenumber is dropped from derivatives, which keeps the discrete
    derivative real and skew-adjoint. Modes whose effective wavenumber vanishes
    (the mean and the Nyquist-only modes) are the null space of every derivative.
    """

    __slots__ = ("n", "k1", "k2", "kk", "active")

    def __init__(self, n):
        self.n = n
        f1 = np.fft.fftfreq(n, 1.0 / n)
        f2 = np.fft.rfftfreq(n, 1.0 / n)
        f1[n // 2] = 0.0
        f2[-1] = 0.0
        self.k1 = (2 * np.pi * f1)[:, None]
        self.k2 = (2 * np.pi * f2)[None, :]
        self.kk = self.k1 ** 2 + self.k2 ** 2
        self.active = self.kk > 0

    def fft(self, f):
        return np.fft.rfft2(f, axes=(-2, -1))

    def ifft(self, f_hat):
        return np.fft.irfft2(f_hat, s=(self.n, self.n), axes=(-2, -1))

    def derivative(self, f, axis):
        k = self.k1 if axis == 0 else self.k2
        return self.ifft(1j * k * self.fft(f))

    def grad(self, f):
        f_hat = self.fft(f)
        return np.array(
            [self.ifft(1j * self.k1 * f_hat), self.ifft(1j * self.k2 * f_hat)]
        )

    def div(self, v):
        v_hat = self.fft(v)
        return self.ifft(1j * (self.k1 * v_hat[0] + self.k2 * v_hat[1]))

    def leray(self, v):
        v_hat = self.fft(v)
        div_hat = self.k1 * v_hat[0] + self.k2 * v_hat[1]
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(self.active, div_hat / np.where(self.active, self.kk, 1), 0)
        out = np.array([v_hat[0] - self.k1 * ratio, v_hat[1] - self.k2 * ratio])
        out[:, ~self.active] = 0
        return self.ifft(out)

    def potential(self, g):
        """Scalar ``π`` with zero mean such that ``grad π`` is the gradient part of ``g``."""
        g_hat = self.fft(g)
        k_dot = self.k1 * g_hat[0] + self.k2 * g_hat[1]
        pi_hat = np.where(self.active, -1j * k_dot / np.where(self.active, self.kk, 1), 0)
        return self.ifft(pi_hat)


@functools.lru_cache(maxsize=16)
def lattice(n):
    return SpectralLattice(n)


def leray_project(v):
    """Orthogonal projection of a 2-component lattice field onto zero-mean,
    divergence-free fields.

    :param v: Array of shape ``(2, n, n)``.
    :return: The projected field, same shape.
    """
    v = np.asarray(v, dtype=float)
    return lattice(v.shape[-1]).leray(v)


def lattice_norm(v):
    """Root-mean-square norm induced by the lattice inner product."""
    return float(np.sqrt(np.sum(np.square(v)) / v.shape[-1] ** 2))


def apply_cell_operator(a_lat, u, lat=None):
    """``(A_h u)^m = -Σ_ij D_i(a_ij D_j u^m)`` applied matrix-free."""
    lat = lat or lattice(u.shape[-1])
    off_diagonal = a_lat[0, 1].any()
    out = np.empty_like(u)
    for m in range(2):
        g = lat.grad(u[m])
        if off_diagonal:
            flux1 = a_lat[0, 0] * g[0] + a_lat[0, 1] * g[1]
            flux2 = a_lat[1, 0] * g[0] + a_lat[1, 1] * g[1]
        else:
            flux1 = a_lat[0, 0] * g[0]
            flux2 = a_lat[1, 1] * g[1]
        out[m] = -(lat.derivative(flux1, 0) + lat.derivative(flux2, 1))
    return out


def cell_rhs(a_lat, i, k, lat=None):
    """Riesz representative of ``w ↦ Σ_l ⟨a_li, ∂w^k/∂y_l⟩_h``."""
    lat = lat or lattice(a_lat.shape[-1])
    b = np.zeros((2,) + a_lat.shape[-2:])
    b[k - 1] = -(lat.derivative(a_lat[0, i - 1], 0) + lat.derivative(a_lat[1, i - 1], 1))
    return b


def cell_energy(a_lat, u, v, lat=None):
    """Lattice quadrature ``â_h(u, v) = mean Σ_{i,j,m} a_ij D_j u^m D_i v^m``."""
    lat = lat or lattice(u.shape[-1])
    total = 0.0
    for m in range(2):
        gu = lat.grad(u[m])
        gv = lat.grad(v[m])
        total += float(np.einsum("ijxy,jxy,ixy->", a_lat, gu, gv)) / u.shape[-1] ** 2
    return total


def _check_pair(i, k):
    if (i, k) not in INDEX_PAIRS:
        raise ValidationError("Index pair must lie in {{1, 2}}², got ({}, {})".format(i, k))


class CellSolveConfig:
    """Lattice size and Krylov controls of the cell solves."""

    __slots__ = ("sampling", "tol", "max_iter")

    def __init__(self, n_cell, tol=1e-10, max_iter=None):
        self.sampling = CellSampling(n_cell)
        if not tol > 0:
            raise ValidationError("Cell tolerance must be positive, got {}".format(tol))
        self.tol = float(tol)
        self.max_iter = int(max_iter) if max_iter else 10 * n_cell ** 2

    @property
    def n_cell(self):
        return self.sampling.n_cell

    def __repr__(self):
        return "CellSolveConfig(n_cell={}, tol={:g}, max_iter={})".format(
            self.n_cell, self.tol, self.max_iter
        )


class CorrectorField:
    """One corrector ``χ_ik`` with its cell pressure.

    :param i: First index, 1-based.
    :param k: Second index, 1-based.
    :param velocity: Array of shape ``(2, n, n)``.
    :param pressure: Array of shape ``(n, n)``.
    """

    __slots__ = ("i", "k", "velocity", "pressure", "iterations", "residual")

    def __init__(self, i, k, velocity, pressure, iterations=0, residual=0.0):
        _check_pair(i, k)
        self.i = i
        self.k = k
        self.velocity = np.asarray(velocity, dtype=float)
        self.pressure = np.asarray(pressure, dtype=float)
        self.iterations = iterations
        self.residual = residual

    @property
    def n_cell(self):
        return self.velocity.shape[-1]

    def divergence(self):
        return lattice(self.n_cell).div(self.velocity)

    def gradient(self):
        """``∂χ^m/∂y_l`` as an array indexed ``[m, l, p, q]``."""
        lat = lattice(self.n_cell)
        return np.array([lat.grad(self.velocity[m]) for m in range(2)])

    def means(self):
        return self.velocity.mean(axis=(-2, -1))

    def __repr__(self):
        return "CorrectorField(chi_{}{}, n_cell={})".format(self.i, self.k, self.n_cell)


class CorrectorSet:
    """All four correctors of one coefficient field, keyed by ``(i, k)``."""

    def __init__(self, field, entries):
        self.field = field
        self._entries = {}
        for entry in entries:
            self._entries[(entry.i, entry.k)] = entry
        missing = [pair for pair in INDEX_PAIRS if pair not in self._entries]
        if missing:
            raise ValidationError("Corrector set is missing {}".format(missing))
        sizes = {entry.n_cell for entry in self._entries.values()}
        if len(sizes) != 1:
            raise LatticeMismatchError(
                "Correctors live on different lattices: {}".format(sorted(sizes))
            )

    def __getitem__(self, pair):
        return self._entries[pair]

    def __iter__(self):
        return (self._entries[pair] for pair in INDEX_PAIRS)

    def __len__(self):
        return len(self._entries)

    @property
    def n_cell(self):
        return self[1, 1].n_cell

    @property
    def iterations(self):
        return {pair: self._entries[pair].iterations for pair in INDEX_PAIRS}

    @property
    def residuals(self):
        return {pair: self._entries[pair].residual for pair in INDEX_PAIRS}

    def gradients(self):
        """``∂χ_ik^m/∂y_l`` as an array indexed ``[i, k, m, l, p, q]`` (0-based)."""
        out = np.empty((2, 2, 2, 2, self.n_cell, self.n_cell))
        for entry in self:
            out[entry.i - 1, entry.k - 1] = entry.gradient()
        return out


def _zero_floor(a_lat):
    return 1e-13 * float(np.abs(a_lat).max())


def solve_cell_problem(a, cfg, i, k):
    """Solve the cell problem for ``χ_ik`` by Leray-projected conjugate gradient.

    :param a: A :class:`~.coeff.CoefficientField`.
    :param cfg: A :class:`CellSolveConfig`.
    :return: A :class:`CorrectorField` whose projected residual is at most
             ``cfg.tol`` relative to the projected right-hand side.
    :raises EllipticityError: ``a`` fails the lattice ellipticity check.
    :raises ConvergenceError: No convergence within ``cfg.max_iter``.
    """
    _check_pair(i, k)
    ellipticity_estimate(a, cfg.sampling)
    lat = lattice(cfg.n_cell)
    a_lat = a.on_lattice(cfg.sampling)
    b = cell_rhs(a_lat, i, k, lat)
    pb = lat.leray(b)
    if lattice_norm(pb) <= _zero_floor(a_lat):
        log.info("chi_%d%d of %r: null right-hand side, zero corrector", i, k, a)
        zero = np.zeros((2, cfg.n_cell, cfg.n_cell))
        return CorrectorField(i, k, zero, zero[0].copy())

    result = conjugate_gradient(
        lambda u: apply_cell_operator(a_lat, u, lat),
        pb,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        project=lat.leray,
        name="cell chi_{}{}".format(i, k),
    )
    chi = result.x
    # gradient part of the unprojected residual is the cell pressure
    r = b - apply_cell_operator(a_lat, chi, lat)
    pressure = lat.potential(r - lat.leray(r))
    log.info(
        "chi_%d%d of %r: %d iterations, residual %.3e",
        i,
        k,
        a,
        result.iterations,
        result.residual,
    )
    return CorrectorField(i, k, chi, pressure, result.iterations, result.residual)


def solve_all_correctors(a, cfg, executor=None):
    """Solve the four independent cell problems.

    :param executor: Optional :class:`concurrent.futures.Executor`; the solves are
                     mapped onto it when given.
    :return: A complete :class:`CorrectorSet`.
    """
    if executor is None:
        entries = [solve_cell_problem(a, cfg, i, k) for i, k in INDEX_PAIRS]
    else:
        futures = [executor.submit(solve_cell_problem, a, cfg, i, k) for i, k in INDEX_PAIRS]
        entries = [f.result() for f in futures]
    return CorrectorSet(a, entries)


def cell_residual(a, chi, i, k):
    """Independent recomputation of ``|P(b - A_h χ)| / |P b|``.

    Falls back to the absolute residual when the projected right-hand side
    vanishes.
    """
    _check_pair(i, k)
    sampling = CellSampling(chi.n_cell)
    lat = lattice(chi.n_cell)
    a_lat = a.on_lattice(sampling)
    b = cell_rhs(a_lat, i, k, lat)
    pb = lat.leray(b)
    r = lat.leray(b - apply_cell_operator(a_lat, chi.velocity, lat))
    norm_b = lattice_norm(pb)
    if norm_b <= _zero_floor(a_lat):
        return lattice_norm(r)
    return lattice_norm(r) / norm_b


def _differentiation_matrices(lat):
    n = lat.n
    basis = np.eye(n * n).reshape(n * n, n, n)
    d1 = lat.derivative(basis, 0).reshape(n * n, n * n).T
    d2 = lat.derivative(basis, 1).reshape(n * n, n * n).T
    return d1, d2


def dense_cell_oracle(a, n_small, i, k):
    """Dense saddle-point solve of the same discrete cell problem.

    Assembles ``[[A_h, Bᵀ, Cᵀ], [B, 0, 0], [C, 0, 0]]`` from the Fourier
    differentiation matrices, with ``B`` the divergence and ``C`` the two
    mean-zero rows, and solves it by a dense least-squares factorization.

    :raises ValidationError: ``n_small`` above 16.
    :raises SingularSystemError: The factorized system is inconsistent.
    """
    _check_pair(i, k)
    if n_small > DENSE_LIMIT:
        raise ValidationError(
            "Dense oracle is limited to n_small <= {}, got {}".format(DENSE_LIMIT, n_small)
        )
    sampling = CellSampling(n_small)
    lat = lattice(n_small)
    size = n_small * n_small
    a_lat = a.on_lattice(sampling)
    d1, d2 = _differentiation_matrices(lat)
    d = (d1, d2)

    block = np.zeros((size, size))
    for p in range(2):
        for q in range(2):
            coef = a_lat[p, q].ravel()
            if coef.any():
                block += d[p].T @ (coef[:, None] * d[q])
    zero = np.zeros((size, size))
    stiffness = np.block([[block, zero], [zero, block]])
    divergence = np.hstack([d1, d2])
    means = np.zeros((2, 2 * size))
    means[0, :size] = 1.0 / size
    means[1, size:] = 1.0 / size

    system = np.block(
        [
            [stiffness, divergence.T, means.T],
            [divergence, np.zeros((size, size)), np.zeros((size, 2))],
            [means, np.zeros((2, size)), np.zeros((2, 2))],
        ]
    )
    rhs = np.zeros(system.shape[0])
    rhs[: 2 * size] = cell_rhs(a_lat, i, k, lat).ravel()
    norm_rhs = np.linalg.norm(rhs)
    if norm_rhs <= _zero_floor(a_lat) * size:
        velocity = np.zeros((2, n_small, n_small))
        return CorrectorField(i, k, velocity, velocity[0].copy())

    solution = linalg.lstsq(system, rhs, lapack_driver="gelsd")[0]
    defect = np.linalg.norm(system @ solution - rhs) / norm_rhs
    if defect > 1e-8:
        raise SingularSystemError(
            "Dense cell system for chi_{}{} is inconsistent (defect {:.3e})".format(
                i, k, defect
            )
        )
    velocity = solution[: 2 * size].reshape(2, n_small, n_small)
    # multiplier of B is minus the pressure of the spectral convention
    pressure = -solution[2 * size : 3 * size].reshape(n_small, n_small)
    return CorrectorField(i, k, velocity, pressure)
