"""Convergence harness: error norms, two-scale pairings and ε-sweeps.

Space-time integrals are lattice quadratures over the staggered nodes with
the right-endpoint rule in time, matching implicit Euler: a trajectory
contributes ``Σ_{n=1..M} Δt h² Σ_nodes``. The initial state is at rest and
drops out.
"""
import asyncio
import concurrent.futures
import logging
import math

import numpy as np
import pandas as pd
from scipy.interpolate import RectBivariateSpline, RegularGridInterpolator

from .cell import solve_all_correctors
from .coeff import CellSampling, ellipticity_estimate, wrap
from .config import sweep_threads
from .exceptions import (
    IncompatibleTrajectoryError,
    MissingArtifactError,
    StokesHomogException,
    ValidationError,
)
from .stokes import (
    HomogOperator,
    OperatorSpec,
    State,
    Trajectory,
    apriori_bound_check,
    energy_balance,
    solve_unsteady,
)
from .tensor import assemble_tensor

log = logging.getLogger(__name__)

DEGENERATE_TOLERANCE = 1e-9


def _bump(x1, x2):
    return np.sin(np.pi * x1) ** 2 * np.sin(np.pi * x2) ** 2


def _one(*args):
    return np.ones(np.broadcast(*args).shape)


# name -> (function, mean over the unit period)
PHI = {"bump": _bump, "one": _one}
W = {
    "one": (_one, 1.0),
    "cos1": (lambda y1, y2: np.cos(2 * np.pi * y1) + 0 * y2, 0.0),
    "cos2sq": (lambda y1, y2: np.cos(2 * np.pi * y1) ** 2 + 0 * y2, 0.5),
    "cos1cos2": (lambda y1, y2: np.cos(2 * np.pi * y1) * np.cos(2 * np.pi * y2), 0.0),
}
THETA = {
    "one": (_one, 1.0),
    "cos": (lambda tau: np.cos(2 * np.pi * tau), 0.0),
    "cossq": (lambda tau: np.cos(2 * np.pi * tau) ** 2, 0.5),
}


class TestFunction:
    """A separable test function ``ψ(x, t, y, τ) = φ(x) w(y) θ(τ)``.

    ``φ`` is ``bump`` (``sin²πx₁ sin²πx₂``) or ``one``; ``w`` is Y-periodic,
    one of ``one``, ``cos1`` (``cos 2πy₁``), ``cos2sq`` (``cos² 2πy₁``) or
    ``cos1cos2``; ``θ`` is Z-periodic, one of ``one``, ``cos`` or ``cossq``.
    """

    # keep pytest from collecting this class
    __test__ = False
    __slots__ = ("phi", "w", "theta")

    def __init__(self, phi="bump", w="one", theta="one"):
        for name, table, kind in ((phi, PHI, "phi"), (w, W, "w"), (theta, THETA, "theta")):
            if name not in table:
                raise ValidationError(
                    "Unknown {} preset {!r}, expected one of {}".format(
                        kind, name, ", ".join(table)
                    )
                )
        self.phi = phi
        self.w = w
        self.theta = theta

    @property
    def y_mean(self):
        return W[self.w][1]

    @property
    def tau_mean(self):
        return THETA[self.theta][1]

    def macro(self, x1, x2):
        return PHI[self.phi](x1, x2)

    def __call__(self, x1, x2, t, eps):
        """``ψ^ε(x, t) = ψ(x, t, x/ε, t/ε)``."""
        y1, y2 = wrap(x1 / eps), wrap(x2 / eps)
        return (
            self.macro(x1, x2)
            * W[self.w][0](y1, y2)
            * THETA[self.theta][0](wrap(t / eps))
        )

    def __repr__(self):
        return "TestFunction(phi={}, w={}, theta={})".format(self.phi, self.w, self.theta)


# quadrature helpers


def _check_times(a, b):
    if a.M != b.M or a.T != b.T:
        raise IncompatibleTrajectoryError(
            "time grids differ: T={:g}, M={} against T={:g}, M={}".format(a.T, a.M, b.T, b.M)
        )


def _velocity_nodes(grid):
    return grid.u_nodes(), grid.v_nodes()


def _space_time_sum(traj, integrand):
    """``Σ_{n=1..M} Δt h² integrand(state)``; ``integrand`` returns a node sum."""
    scale = traj.dt * traj.grid.h ** 2
    return sum(integrand(state) for state in traj.states[1:]) * scale


def _prolong(coarse, fine):
    """Bilinear interpolation of staggered velocity arrays from ``coarse`` to
    ``fine`` nodes, with the no-slip value on the walls."""
    cu_x, cu_y = coarse.u_nodes()
    cv_x, cv_y = coarse.v_nodes()
    (fu_x, fu_y), (fv_x, fv_y) = _velocity_nodes(fine)
    u_axes = (cu_x[:, 0], np.concatenate([[0.0], cu_y[0], [1.0]]))
    v_axes = (np.concatenate([[0.0], cv_x[:, 0], [1.0]]), cv_y[0])

    def prolong(vec):
        u, v = coarse.split(vec)
        u = np.pad(u, ((0, 0), (1, 1)))
        v = np.pad(v, ((1, 1), (0, 0)))
        fu = RegularGridInterpolator(u_axes, u)((fu_x, fu_y))
        fv = RegularGridInterpolator(v_axes, v)((fv_x, fv_y))
        return fine.join(fu, fv)

    return prolong


def _transfer(traj_fine, traj_homog):
    _check_times(traj_fine, traj_homog)
    fine, coarse = traj_fine.grid, traj_homog.grid
    if fine.n == coarse.n:
        return lambda vec: vec
    if fine.n % coarse.n:
        raise IncompatibleTrajectoryError(
            "grid n={} is not a refinement of n={}".format(fine.n, coarse.n)
        )
    log.debug("interpolating n=%d velocities onto n=%d", coarse.n, fine.n)
    return _prolong(coarse, fine)


# metrics


def l2q_error(traj_fine, traj_homog):
    """``‖u_ε - u₀‖_{L²(Q)}``; the homogenized velocity is interpolated bilinearly
    when it lives on a coarser grid.

    :raises IncompatibleTrajectoryError: Different time grids, or a fine grid that
                                         does not refine the homogenized one.
    """
    transfer = _transfer(traj_fine, traj_homog)
    total = 0.0
    for fine, homog in zip(traj_fine.states[1:], traj_homog.states[1:]):
        diff = fine.u - transfer(homog.u)
        total += float(np.dot(diff, diff))
    return math.sqrt(total * traj_fine.dt * traj_fine.grid.h ** 2)


def two_scale_pairing(traj, psi, eps):
    """``∫_Q u_ε ψ^ε dx dt`` per velocity component.

    :return: An array ``[pairing with u¹, pairing with u²]``.
    """
    (ux, uy), (vx, vy) = _velocity_nodes(traj.grid)
    total = np.zeros(2)
    for state in traj.states[1:]:
        u, v = traj.grid.split(state.u)
        total[0] += float(np.sum(u * psi(ux, uy, state.t, eps)))
        total[1] += float(np.sum(v * psi(vx, vy, state.t, eps)))
    return total * traj.dt * traj.grid.h ** 2


def limit_pairing(traj_homog, psi):
    """``∫∫∫ u₀ ψ``: the plain integral of ``u₀ φ`` times the analytic means of
    ``w`` over Y and ``θ`` over Z."""
    factor = psi.y_mean * psi.tau_mean
    if factor == 0:
        return np.zeros(2)
    (ux, uy), (vx, vy) = _velocity_nodes(traj_homog.grid)
    phi_u, phi_v = psi.macro(ux, uy), psi.macro(vx, vy)
    total = np.zeros(2)
    for state in traj_homog.states[1:]:
        u, v = traj_homog.grid.split(state.u)
        total[0] += float(np.sum(u * phi_u))
        total[1] += float(np.sum(v * phi_v))
    return factor * total * traj_homog.dt * traj_homog.grid.h ** 2


def pressure_pairing(traj_fine, traj_homog, phi="bump"):
    """``(∫ p_ε φ, ∫ p₀ φ)`` over ``Q`` at cell centres."""
    _check_times(traj_fine, traj_homog)
    rv = []
    for traj in (traj_fine, traj_homog):
        x1, x2 = traj.grid.centres()
        weight = PHI[phi](x1, x2).ravel()
        rv.append(_space_time_sum(traj, lambda state: float(np.dot(state.p, weight))))
    return tuple(rv)


def _periodic_spline(values, n_cell, pad=3):
    nodes = -0.5 + np.arange(-pad, n_cell + pad) / n_cell
    return RectBivariateSpline(nodes, nodes, np.pad(values, pad, mode="wrap"), kx=3, ky=3, s=0)


def corrector_gradients_at(chi, eps, grid):
    """``∂χ_ik^m/∂y_l`` at ``y = x/ε`` for every cell centre of ``grid``.

    The lattice gradients are interpolated bicubically on a periodically padded
    lattice and evaluated at the wrapped fast variable, so any ``ε`` works,
    whether or not its periods tile the grid.

    :return: Array ``(2, 2, 2, 2, n, n)`` indexed ``[i, k, m, l]`` (0-based).
    """
    if chi is None:
        raise MissingArtifactError("correctors are required for the corrector error")
    x1, x2 = grid.centres()
    y1, y2 = wrap(x1 / eps), wrap(x2 / eps)
    grads = chi.gradients()
    out = np.empty(grads.shape[:4] + (grid.n, grid.n))
    for index in np.ndindex(*grads.shape[:4]):
        out[index] = _periodic_spline(grads[index], chi.n_cell).ev(y1, y2)
    return out


def reconstruct_u1(traj_homog, chi, eps, step=-1):
    """The first-order term ``u₁(x, t, y) = -Σ ∂u₀^m/∂x_i χ_im(y)`` at ``y = x/ε``
    and its y-gradient, at cell centres of one time level.

    :return: ``(u1, grad_y_u1)`` with shapes ``(2, n, n)`` (component ``k``) and
             ``(2, 2, n, n)`` indexed ``[j, k]`` for ``∂u₁^k/∂y_j``.
    """
    grid = traj_homog.grid
    g0 = grid.gradient_at_centres(traj_homog.states[step].u)
    x1, x2 = grid.centres()
    y1, y2 = x1 / eps, x2 / eps
    values = np.empty((2, 2, 2, grid.n, grid.n))
    for entry in chi:
        for m in range(2):
            spline = _periodic_spline(entry.velocity[m], chi.n_cell)
            values[entry.i - 1, entry.k - 1, m] = spline.ev(wrap(y1), wrap(y2))
    # g0[i, m] = ∂u₀^m/∂x_i, values[i, m, k] = χ_im^k
    u1 = -np.einsum("imxy,imkxy->kxy", g0, values)
    grad_y = _u1_gradient(g0, corrector_gradients_at(chi, eps, grid))
    return u1, grad_y


def _u1_gradient(g0, chi_grads):
    # (∇_y u₁)^k_j = -Σ_{i,m} ∂u₀^m/∂x_i ∂χ_im^k/∂y_j, stored [j, k] like g0
    return -np.einsum("imxy,imkjxy->jkxy", g0, chi_grads, optimize=True)


def gradient_error(traj_fine, traj_homog):
    """``‖∇u_ε - ∇u₀‖_{L²(Q)}`` at cell centres; both trajectories on one grid."""
    return _gradient_error(traj_fine, traj_homog, None)


def corrector_error(traj_fine, traj_homog, chi, eps):
    """``E_ε = ‖∇u_ε - ∇u₀ - (∇_y u₁)(x, t, x/ε)‖_{L²(Q)}``.

    :raises MissingArtifactError: ``chi`` is missing.
    :raises IncompatibleTrajectoryError: The trajectories differ in grid or times.
    """
    if chi is None:
        raise MissingArtifactError("correctors are required for the corrector error")
    return _gradient_error(
        traj_fine, traj_homog, corrector_gradients_at(chi, eps, traj_fine.grid)
    )


def _gradient_error(traj_fine, traj_homog, chi_grads):
    _check_times(traj_fine, traj_homog)
    grid = traj_fine.grid
    if grid != traj_homog.grid:
        raise IncompatibleTrajectoryError(
            "gradient errors need one grid, got n={} and n={}".format(
                grid.n, traj_homog.grid.n
            )
        )

    def integrand(pair):
        fine, homog = pair
        g0 = grid.gradient_at_centres(homog.u)
        diff = grid.gradient_at_centres(fine.u) - g0
        if chi_grads is not None:
            diff -= _u1_gradient(g0, chi_grads)
        return float(np.sum(diff * diff))

    total = sum(map(integrand, zip(traj_fine.states[1:], traj_homog.states[1:])))
    return math.sqrt(total * traj_fine.dt * grid.h ** 2)


def fit_rate(eps, err):
    """Least-squares slope of ``log err`` against ``log ε``.

    :raises ValidationError: Fewer than 3 pairs or non-positive entries.
    """
    eps = np.asarray(eps, dtype=float)
    err = np.asarray(err, dtype=float)
    if eps.shape != err.shape or eps.size < 3:
        raise ValidationError("fit_rate needs at least 3 (eps, err) pairs")
    if not (np.all(eps > 0) and np.all(err > 0)):
        raise ValidationError("fit_rate needs positive eps and errors")
    slope, _ = np.polyfit(np.log(eps), np.log(err), 1)
    return float(slope)


class _Synthetic(OperatorSpec):
    variant = "synthetic"

    def __repr__(self):
        return "synthetic"


def synthetic_trajectory(grid, T, M, eps, offset=0.0, envelope=None):
    """A trajectory holding ``u(x, t) = g(x, t) (offset + cos 2πx₁/ε)`` in closed form.

    :param envelope: ``g(x1, x2, t) -> (g1, g2)``; defaults to
                     ``t (sin²πx₁ sin 2πx₂, -sin 2πx₁ sin²πx₂)``.
    """
    if envelope is None:
        envelope = default_envelope
    dt = T / M
    states = []
    for step in range(M + 1):
        t = step * dt

        def field(x1, x2):
            g1, g2 = envelope(x1, x2, t)
            osc = offset + np.cos(2 * np.pi * x1 / eps)
            return g1 * osc, g2 * osc

        states.append(State(t, grid.sample_velocity(field), np.zeros(grid.n * grid.n)))
    return Trajectory(grid, _Synthetic(), None, T, M, states)


def default_envelope(x1, x2, t):
    return (
        t * np.sin(np.pi * x1) ** 2 * np.sin(2 * np.pi * x2),
        -t * np.sin(2 * np.pi * x1) * np.sin(np.pi * x2) ** 2,
    )


def envelope_integral(grid, T, M, phi="bump", envelope=None):
    """``∫_Q g φ`` per component, with the same quadrature as the pairings."""
    envelope = envelope or default_envelope
    (ux, uy), (vx, vy) = _velocity_nodes(grid)
    dt = T / M
    total = np.zeros(2)
    for step in range(1, M + 1):
        t = step * dt
        total[0] += float(np.sum(envelope(ux, uy, t)[0] * PHI[phi](ux, uy)))
        total[1] += float(np.sum(envelope(vx, vy, t)[1] * PHI[phi](vx, vy)))
    return total * dt * grid.h ** 2


# sweeps


OSCILLATING = TestFunction("bump", "cos1", "one")
PLAIN = TestFunction("bump", "one", "one")

COLUMNS = (
    "eps",
    "status",
    "l2q_error",
    "gradient_error",
    "corrector_error",
    "pairing_osc_1",
    "pairing_osc_2",
    "pairing_plain_1",
    "pairing_plain_2",
    "limit_plain_1",
    "limit_plain_2",
    "pressure_fine",
    "pressure_homog",
    "energy_defect",
    "velocity_h1",
    "acceleration",
    "pressure_l2",
    "apriori_lhs",
    "apriori_rhs",
    "apriori_holds",
    "uzawa_iterations",
)


class SweepReport:
    """Per-ε metrics of one sweep with the fitted rate.

    :param rows: One :class:`dict` per ε, keyed by :data:`COLUMNS`, in strictly
                 decreasing ε order.
    """

    def __init__(self, rows, tensor=None, homog=None, alpha=None):
        self.rows = rows
        self.tensor = tensor
        self.homog = homog or {}
        self.alpha = alpha
        self.slope = None
        self.degenerate = False
        ok = self.completed
        errors = [row["l2q_error"] for row in ok]
        if ok and all(err <= DEGENERATE_TOLERANCE for err in errors):
            self.degenerate = True
        elif len(ok) >= 3 and all(err > 0 for err in errors):
            self.slope = fit_rate([row["eps"] for row in ok], errors)

    @property
    def eps(self):
        return [row["eps"] for row in self.rows]

    @property
    def completed(self):
        return [row for row in self.rows if row["status"] == "ok"]

    @property
    def complete(self):
        return len(self.completed) == len(self.rows)

    def column(self, name):
        return [row[name] for row in self.rows]

    def to_frame(self):
        return pd.DataFrame(self.rows, columns=list(COLUMNS))

    def __repr__(self):
        return "SweepReport(eps={}, complete={}, slope={})".format(
            [str(e) for e in self.eps], self.complete, self.slope
        )


class SweepContext:
    """The ε-independent inputs shared read-only by the per-ε jobs."""

    def __init__(self, config):
        self.config = config
        self.field = config.coefficient()
        self.alpha = ellipticity_estimate(self.field, CellSampling(config.n_cell))
        self.grid = config.grid()
        self.forcing = config.make_forcing()
        self.stokes = config.stokes_config()
        self.chi = None
        self.tensor = None
        self.homog = None

    def prepare(self, executor=None):
        cfg = self.config
        self.chi = solve_all_correctors(self.field, cfg.cell_config(), executor)
        self.tensor = assemble_tensor(self.field, self.chi)
        self.homog = solve_unsteady(
            self.grid, HomogOperator(self.tensor), self.forcing, cfg.T, cfg.M, self.stokes
        )
        return self

    def solve_fine(self, eps):
        return solve_unsteady(
            self.grid,
            OperatorSpec.fine(self.field, eps),
            self.forcing,
            self.config.T,
            self.config.M,
            self.stokes,
        )

    def evaluate(self, eps, traj):
        """All per-ε metrics of a solved fine trajectory."""
        homog = self.homog
        eps_f = float(eps)
        osc = two_scale_pairing(traj, OSCILLATING, eps_f)
        plain = two_scale_pairing(traj, PLAIN, eps_f)
        limit = limit_pairing(homog, PLAIN)
        p_fine, p_homog = pressure_pairing(traj, homog)
        apriori = apriori_bound_check(traj, self.forcing, self.alpha)
        return dict(
            eps=eps,
            status="ok",
            l2q_error=l2q_error(traj, homog),
            gradient_error=gradient_error(traj, homog),
            corrector_error=corrector_error(traj, homog, self.chi, eps_f),
            pairing_osc_1=osc[0],
            pairing_osc_2=osc[1],
            pairing_plain_1=plain[0],
            pairing_plain_2=plain[1],
            limit_plain_1=limit[0],
            limit_plain_2=limit[1],
            pressure_fine=p_fine,
            pressure_homog=p_homog,
            energy_defect=energy_balance(traj),
            velocity_h1=apriori.bounds["velocity_h1"],
            acceleration=apriori.bounds["acceleration"],
            pressure_l2=apriori.bounds["pressure_l2"],
            apriori_lhs=apriori.lhs,
            apriori_rhs=apriori.rhs,
            apriori_holds=apriori.holds,
            uzawa_iterations=sum(traj.iterations),
        )

    def run_one(self, eps, on_trajectory=None):
        try:
            traj = self.solve_fine(eps)
            if on_trajectory is not None:
                on_trajectory(eps, traj)
            row = self.evaluate(eps, traj)
        except StokesHomogException as e:
            log.error("eps=%s failed: %s", eps, e)
            row = dict.fromkeys(COLUMNS, float("nan"))
            row.update(eps=eps, status="failed: {}".format(e), apriori_holds=False)
            row["uzawa_iterations"] = 0
            return row
        log.info(
            "eps=%s: l2q %.6e, corrector %.6e, energy defect %.2e",
            eps,
            row["l2q_error"],
            row["corrector_error"],
            row["energy_defect"],
        )
        return row


async def sweep_async(config, executor=None, on_trajectory=None, context=None):
    """Run an ε-sweep with the fine solves fanned out on a thread pool.

    :param config: A :class:`~.config.RunConfig`.
    :param executor: Optional :class:`concurrent.futures.Executor`; a thread pool
                     capped by ``STOKES_HOMOG_THREADS`` is created otherwise.
    :param on_trajectory: Optional ``callback(eps, trajectory)`` run in the worker
                          right after each fine solve, e.g. to dump snapshots.
    :param context: A prepared :class:`SweepContext` to reuse.
    :return: A :class:`SweepReport`; fine solve failures leave it incomplete.
    """
    loop = asyncio.get_running_loop()
    own = executor is None
    if own:
        executor = concurrent.futures.ThreadPoolExecutor(max_workers=sweep_threads())
    try:
        if context is None:
            context = SweepContext(config)
            await loop.run_in_executor(executor, context.prepare)
        rows = await asyncio.gather(
            *(
                loop.run_in_executor(executor, context.run_one, eps, on_trajectory)
                for eps in config.sorted_eps()
            )
        )
    finally:
        if own:
            executor.shutdown(wait=True)
    report = SweepReport(
        list(rows),
        tensor=context.tensor,
        homog=dict(
            uzawa_iterations=sum(context.homog.iterations),
            energy_defect=energy_balance(context.homog),
        ),
        alpha=context.alpha,
    )
    _check_trends(report)
    return report


def epsilon_sweep(config, executor=None, on_trajectory=None):
    """Synchronous front of :func:`sweep_async`."""
    return asyncio.run(sweep_async(config, executor, on_trajectory))


def _check_trends(report):
    if not report.complete:
        log.warning(
            "sweep incomplete: %d of %d solves failed",
            len(report.rows) - len(report.completed),
            len(report.rows),
        )
    if report.degenerate:
        log.info(
            "degenerate sweep: all L2(Q) errors below %.0e, no rate fitted",
            DEGENERATE_TOLERANCE,
        )
        return
    errors = [row["l2q_error"] for row in report.completed]
    if any(b >= a for a, b in zip(errors, errors[1:])):
        log.warning("L2(Q) errors are not strictly decreasing in eps: %s", errors)
    if report.slope is not None:
        log.info("fitted L2(Q) rate %.4f", report.slope)
