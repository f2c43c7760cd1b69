"""Unsteady Stokes-type problems on the unit square with no-slip walls.

Both the fine problem, with the oscillating operator ``-div(a(x/ε) ∇u)`` acting
on each velocity component, and the homogenized problem, with the constant
tensor operator ``(Qz)^k = -Σ q_ijkh ∂²z^h/∂x_i∂x_j``, are discretized on the
same :class:`~.mac.MacGrid` and advanced by implicit Euler from zero initial
data. Each step solves the saddle-point system

    (I/Δt + P_h) u + G p = u_prev/Δt + f(t_next),    D u = 0

by conjugate gradient on the pressure Schur complement (Uzawa), with the
velocity block inverted by a sparse factorization or by an inner CG loop.
"""
import logging
import math

import numpy as np
from scipy.sparse import identity
from scipy.sparse.linalg import factorized

from .exceptions import ValidationError
from .krylov import conjugate_gradient
from .mac import MacGrid
from .tensor import EffectiveTensor

log = logging.getLogger(__name__)

DIVERGENCE_TOLERANCE = 1e-9
POINCARE_CONSTANT = 1.0 / (math.pi * math.sqrt(2.0))
VELOCITY_SOLVERS = ("direct", "cg")


# forcing


def _ramp(t):
    return 1.0 - math.exp(-t)


def _swirl(x1, x2):
    return (
        np.sin(np.pi * x1) ** 2 * np.sin(2 * np.pi * x2),
        -np.sin(2 * np.pi * x1) * np.sin(np.pi * x2) ** 2,
    )


def _standard(params, x1, x2, t):
    f1, f2 = _swirl(x1, x2)
    r = _ramp(t)
    return r * f1, r * f2


def _steady(params, x1, x2, t):
    return _swirl(x1, x2)


def _gradient(params, x1, x2, t):
    # standard swirl plus amplitude * ∇(sin 2πx₁ sin 2πx₂)
    amplitude = params[0] if params else 1.0
    f1, f2 = _standard(params, x1, x2, t)
    r = amplitude * _ramp(t) * 2 * np.pi
    g1 = r * np.cos(2 * np.pi * x1) * np.sin(2 * np.pi * x2)
    g2 = r * np.sin(2 * np.pi * x1) * np.cos(2 * np.pi * x2)
    return f1 + g1, f2 + g2


def _zero(params, x1, x2, t):
    zero = np.zeros(np.broadcast(x1, x2).shape)
    return zero, zero.copy()


FORCINGS = {
    "standard": (0, _standard),
    "steady": (0, _steady),
    "gradient": (1, _gradient),
    "zero": (0, _zero),
}


class Forcing:
    """A body force ``f(x, t)`` given by preset.

    * ``standard``: ``(1 - e^{-t}) (sin²πx₁ sin 2πx₂, -sin 2πx₁ sin²πx₂)``
    * ``steady``: the same field without the time ramp
    * ``gradient``: ``standard`` plus ``A (1 - e^{-t}) ∇(sin 2πx₁ sin 2πx₂)``,
      optional amplitude ``A`` (default 1)
    * ``zero``
    """

    __slots__ = ("preset", "params")

    def __init__(self, preset="standard", params=()):
        if preset not in FORCINGS:
            raise ValidationError(
                "Unknown forcing {!r}, expected one of {}".format(
                    preset, ", ".join(FORCINGS)
                )
            )
        params = tuple(float(p) for p in params)
        if len(params) > FORCINGS[preset][0]:
            raise ValidationError(
                "Forcing {} takes at most {} parameter(s), got {}".format(
                    preset, FORCINGS[preset][0], len(params)
                )
            )
        self.preset = preset
        self.params = params

    @property
    def is_zero(self):
        return self.preset == "zero"

    def field(self, x1, x2, t):
        """``(f₁, f₂)`` at points ``(x1, x2)`` and time ``t``."""
        return FORCINGS[self.preset][1](self.params, x1, x2, t)

    def on_grid(self, grid, t):
        """The force sampled at the staggered velocity nodes of ``grid``."""
        return grid.sample_velocity(lambda x1, x2: self.field(x1, x2, t))

    def __eq__(self, other):
        return (
            isinstance(other, Forcing)
            and other.preset == self.preset
            and other.params == self.params
        )

    def __hash__(self):
        return hash((self.preset, self.params))

    def __repr__(self):
        if not self.params:
            return self.preset
        return "{}({})".format(self.preset, ", ".join("{:g}".format(p) for p in self.params))


# operators


class OperatorSpec:
    """Which spatial operator a trajectory is driven by."""

    variant = None

    def coefficients(self, grid):
        """Energy-form coefficients ``q_ijkh`` at the centres and corners of ``grid``."""
        raise NotImplementedError

    def assemble(self, grid):
        centre, corner = self.coefficients(grid)
        return grid.assemble(centre, corner)

    @classmethod
    def fine(cls, a, eps):
        return FineOperator(a, eps)

    @classmethod
    def homog(cls, q):
        return HomogOperator(q)


class FineOperator(OperatorSpec):
    """``P^ε = -div(a(x/ε) ∇·)`` acting on each velocity component."""

    variant = "fine"

    def __init__(self, a, eps):
        eps = float(eps)
        if not eps > 0:
            raise ValidationError("epsilon must be positive, got {}".format(eps))
        self.a = a
        self.eps = eps

    def coefficients(self, grid):
        eye = np.eye(2)
        rv = []
        for x1, x2 in (grid.centres(), grid.corners()):
            a = self.a.sample(x1 / self.eps, x2 / self.eps)
            rv.append(np.einsum("ij...,kh->ijkh...", a, eye))
        return tuple(rv)

    def __repr__(self):
        return "fine({!r}, eps={:g})".format(self.a, self.eps)


class HomogOperator(OperatorSpec):
    """The constant tensor operator ``(Qz)^k = -Σ q_ijkh ∂²z^h/∂x_i∂x_j``."""

    variant = "homog"

    def __init__(self, q):
        if not isinstance(q, EffectiveTensor):
            q = EffectiveTensor(q, "file")
        self.q = q

    def coefficients(self, grid):
        q = self.q.q[..., None, None]
        n = grid.n
        return (
            np.broadcast_to(q, q.shape[:4] + (n, n)),
            np.broadcast_to(q, q.shape[:4] + (n + 1, n + 1)),
        )

    def __repr__(self):
        return "homog({!r})".format(self.q)


def grid_for(u):
    """The :class:`MacGrid` whose interior velocity vectors have the length of ``u``."""
    size = np.shape(u)[0]
    n = int(round((1 + math.sqrt(1 + 2 * size)) / 2))
    if 2 * n * (n - 1) != size:
        raise ValidationError("{} is not a staggered velocity vector length".format(size))
    return MacGrid(n)


def apply_fine_operator(a, eps, u, grid=None):
    """``P_h u`` for the fine operator; ``u`` holds interior velocity values."""
    grid = grid or grid_for(u)
    return FineOperator(a, eps).assemble(grid) @ u


def apply_homog_operator(q, u, grid=None):
    """``Q_h u`` for a constant tensor ``q``."""
    grid = grid or grid_for(u)
    return HomogOperator(q).assemble(grid) @ u


# time stepping


class StokesConfig:
    """Solver settings of the staggered saddle-point solves.

    :param tol: Relative residual tolerance of the pressure (Uzawa) CG.
    :param max_iter: Iteration cap of the pressure CG, default 2000.
    :param velocity_solver: ``"direct"`` (sparse LU, factorized once per
                            trajectory) or ``"cg"``.
    :param inner_tol: Relative tolerance of the inner velocity CG.
    :param inner_max_iter: Inner CG cap, default ``10 n²``.
    """

    __slots__ = ("tol", "max_iter", "velocity_solver", "inner_tol", "inner_max_iter")

    def __init__(
        self,
        tol=1e-12,
        max_iter=None,
        velocity_solver="direct",
        inner_tol=1e-13,
        inner_max_iter=None,
    ):
        if velocity_solver not in VELOCITY_SOLVERS:
            raise ValidationError(
                "velocity_solver must be one of {}, got {!r}".format(
                    ", ".join(VELOCITY_SOLVERS), velocity_solver
                )
            )
        if not tol > 0:
            raise ValidationError("stokes tolerance must be positive, got {}".format(tol))
        self.tol = float(tol)
        self.max_iter = 2000 if max_iter is None else int(max_iter)
        self.velocity_solver = velocity_solver
        self.inner_tol = float(inner_tol)
        self.inner_max_iter = inner_max_iter


class State:
    """Velocity and pressure at one time level."""

    __slots__ = ("t", "u", "p")

    def __init__(self, t, u, p):
        self.t = t
        self.u = u
        self.p = p

    @classmethod
    def rest(cls, grid, t=0.0):
        return cls(t, np.zeros(grid.size), np.zeros(grid.n * grid.n))

    def divergence(self, grid):
        """Max-norm of the discrete divergence of ``u``."""
        return float(np.abs(grid.divergence(self.u)).max())

    def pressure_mean(self):
        return float(self.p.mean())

    def __repr__(self):
        return "State(t={:g})".format(self.t)


class StepSolver:
    """Implicit Euler stepping for a fixed grid, operator and ``Δt``.

    The velocity block ``I/Δt + P_h`` is assembled, and with the direct solver
    factorized, once; :meth:`step` is then called per time level.
    """

    def __init__(self, grid, op, dt, config=None):
        if not dt > 0:
            raise ValidationError("time step must be positive, got {}".format(dt))
        self.grid = grid
        self.op = op
        self.dt = float(dt)
        self.config = config or StokesConfig()
        self.operator = op.assemble(grid)
        self.block = (identity(grid.size, format="csr") / self.dt + self.operator).tocsr()
        self.divergence = grid.ops.divergence
        self.gradient = grid.ops.pressure_gradient
        if self.config.velocity_solver == "direct":
            self._lu = factorized(self.block.tocsc())
        else:
            self._lu = None
        self.iterations = []

    def solve_velocity(self, rhs):
        if self._lu is not None:
            return self._lu(rhs)
        cfg = self.config
        max_iter = cfg.inner_max_iter or 10 * self.grid.n ** 2
        return conjugate_gradient(
            self.block.dot, rhs, tol=cfg.inner_tol, max_iter=max_iter, name="velocity-cg"
        ).x

    def _schur(self, p):
        return self.divergence @ self.solve_velocity(self.divergence.T @ p)

    def step(self, state, force):
        """Advance ``state`` by ``Δt`` under the sampled force ``f(t + Δt)``."""
        rhs = state.u / self.dt + force
        # S p = -D A⁻¹ r with S = D A⁻¹ Dᵀ, since G = -Dᵀ
        b = -(self.divergence @ self.solve_velocity(rhs))
        result = conjugate_gradient(
            self._schur,
            b,
            tol=self.config.tol,
            max_iter=self.config.max_iter,
            x0=state.p,
            project=_mean_free,
            name="uzawa",
        )
        p = result.x - result.x.mean()
        u = self.solve_velocity(rhs - self.gradient @ p)
        self.iterations.append(result.iterations)
        rv = State(state.t + self.dt, u, p)
        div = rv.divergence(self.grid)
        if div > DIVERGENCE_TOLERANCE:
            log.warning(
                "divergence %.3e above %.0e at t = %g", div, DIVERGENCE_TOLERANCE, rv.t
            )
        return rv


def _mean_free(p):
    return p - p.mean()


def step_implicit(state, dt, op, f, grid=None, config=None):
    """One implicit Euler step from ``state``.

    :param state: The :class:`State` at ``t``.
    :param dt: Time step, positive.
    :param op: An :class:`OperatorSpec`.
    :param f: A :class:`Forcing`, evaluated at ``t + dt``.
    :return: The :class:`State` at ``t + dt``.
    :raises ValidationError: ``dt <= 0``.
    :raises ConvergenceError: A CG loop did not converge.
    """
    grid = grid or grid_for(state.u)
    solver = StepSolver(grid, op, dt, config)
    return solver.step(state, f.on_grid(grid, state.t + solver.dt))


class Trajectory:
    """States at ``t_n = n Δt``, ``n = 0..M``, with the inputs that produced them."""

    def __init__(self, grid, op, forcing, T, M, states, iterations=()):
        self.grid = grid
        self.op = op
        self.forcing = forcing
        self.T = float(T)
        self.M = int(M)
        self.states = states
        self.iterations = list(iterations)

    @property
    def dt(self):
        return self.T / self.M

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    @property
    def final(self):
        return self.states[-1]

    def __len__(self):
        return len(self.states)

    def __getitem__(self, index):
        return self.states[index]

    def __iter__(self):
        return iter(self.states)

    def describe(self):
        """Config echo: operator variant, ``ε`` or tensor, forcing, grid and times."""
        rv = dict(
            variant=self.op.variant,
            forcing=repr(self.forcing),
            n=self.grid.n,
            T=self.T,
            M=self.M,
        )
        if self.op.variant == "fine":
            rv.update(eps=self.op.eps, coefficient=repr(self.op.a))
        elif self.op.variant == "homog":
            rv.update(tensor=self.op.q.entries())
        return rv

    def __repr__(self):
        return "Trajectory({!r}, n={}, T={:g}, M={})".format(
            self.op, self.grid.n, self.T, self.M
        )


def solve_unsteady(grid, op, f, T, M, config=None):
    """Integrate from rest over ``[0, T]`` with ``M`` implicit Euler steps.

    :param grid: A :class:`MacGrid`.
    :param op: An :class:`OperatorSpec`.
    :param f: A :class:`Forcing`.
    :param T: Final time, positive.
    :param M: Number of steps, at least 8.
    :param config: Optional :class:`StokesConfig`.
    :return: A :class:`Trajectory` of ``M + 1`` states.
    """
    M = int(M)
    if M < 8:
        raise ValidationError("M must be at least 8, got {}".format(M))
    if not T > 0:
        raise ValidationError("T must be positive, got {}".format(T))
    dt = T / M
    solver = StepSolver(grid, op, dt, config)
    states = [State.rest(grid)]
    for step in range(1, M + 1):
        t = step * dt
        if f.is_zero:
            force = np.zeros(grid.size)
        else:
            force = f.on_grid(grid, t)
        state = solver.step(states[-1], force)
        # exact time labels, no accumulated rounding
        state.t = t
        states.append(state)
    log.info(
        "solved %r on n = %d, M = %d: %d Uzawa iterations in total",
        op,
        grid.n,
        M,
        sum(solver.iterations),
    )
    return Trajectory(grid, op, f, T, M, states, solver.iterations)


# diagnostics


def _energy(grid, matrix, u):
    return grid.inner(u, matrix @ u)


def energy_terms(traj, op=None, f=None):
    """Both sides of the discrete energy identity of implicit Euler.

    :return: ``(lhs, rhs)`` with ``lhs = ½|u^M|² + ½Σ|u^{n+1} - u^n|² + ΣΔt a_h(u^{n+1}, u^{n+1})``
             and ``rhs = ΣΔt (f^{n+1}, u^{n+1})``.
    """
    op = op or traj.op
    f = f or traj.forcing
    grid, dt = traj.grid, traj.dt
    matrix = op.assemble(grid)
    final = traj.final.u
    lhs = 0.5 * grid.inner(final, final)
    rhs = 0.0
    for prev, state in zip(traj.states, traj.states[1:]):
        jump = state.u - prev.u
        lhs += 0.5 * grid.inner(jump, jump) + dt * _energy(grid, matrix, state.u)
        if not f.is_zero:
            rhs += dt * grid.inner(f.on_grid(grid, state.t), state.u)
    return lhs, rhs


def energy_balance(traj, op=None, f=None):
    """Relative defect ``|lhs - rhs| / max(|lhs|, |rhs|)`` of the energy identity;
    ``0`` when both sides vanish."""
    lhs, rhs = energy_terms(traj, op, f)
    scale = max(abs(lhs), abs(rhs))
    if scale == 0:
        return 0.0
    return abs(lhs - rhs) / scale


def monitored_bounds(traj):
    """The three ε-uniform quantities of the a-priori estimates.

    :return: A :class:`dict` with ``velocity_h1`` (``(ΣΔt ‖∇u‖²)^½``),
             ``acceleration`` (``(ΣΔt ‖(u^{n+1}-u^n)/Δt‖²)^½``) and
             ``pressure_l2`` (``(ΣΔt ‖p‖²)^½``).
    """
    grid, dt = traj.grid, traj.dt
    laplacian = grid.laplacian()
    h1 = acc = pressure = 0.0
    for prev, state in zip(traj.states, traj.states[1:]):
        h1 += dt * _energy(grid, laplacian, state.u)
        rate = (state.u - prev.u) / dt
        acc += dt * grid.inner(rate, rate)
        pressure += dt * float(np.dot(state.p, state.p)) * grid.h ** 2
    return dict(
        velocity_h1=math.sqrt(h1),
        acceleration=math.sqrt(acc),
        pressure_l2=math.sqrt(pressure),
    )


class AprioriReport:
    """Outcome of :func:`apriori_bound_check`."""

    __slots__ = ("lhs", "rhs", "alpha", "bounds")

    def __init__(self, lhs, rhs, alpha, bounds):
        self.lhs = lhs
        self.rhs = rhs
        self.alpha = alpha
        self.bounds = bounds

    @property
    def holds(self):
        return self.lhs <= self.rhs

    def as_dict(self):
        rv = dict(lhs=self.lhs, rhs=self.rhs, alpha=self.alpha, holds=self.holds)
        rv.update(self.bounds)
        return rv

    def __repr__(self):
        return "AprioriReport({:.6g} <= {:.6g}: {})".format(self.lhs, self.rhs, self.holds)


def apriori_bound_check(traj, f=None, alpha=None):
    """Compare ``α ΣΔt ‖∇u‖²`` with the surrogate ``(C_P²/α) ΣΔt ‖f‖²``.

    The dual norm of ``f`` is bounded through the Poincaré constant
    ``C_P = 1/(π√2)`` of the unit square.

    :param alpha: Ellipticity constant, see :func:`~.coeff.ellipticity_estimate`
                  or the ``alpha0`` of the tensor.
    """
    f = f or traj.forcing
    if alpha is None:
        raise ValidationError("apriori_bound_check needs an ellipticity constant")
    if not alpha > 0:
        raise ValidationError("ellipticity constant must be positive, got {}".format(alpha))
    grid, dt = traj.grid, traj.dt
    bounds = monitored_bounds(traj)
    lhs = alpha * bounds["velocity_h1"] ** 2
    rhs = 0.0
    if not f.is_zero:
        for state in traj.states[1:]:
            force = f.on_grid(grid, state.t)
            rhs += dt * grid.inner(force, force)
    rhs *= POINCARE_CONSTANT ** 2 / alpha
    rv = AprioriReport(lhs, rhs, alpha, bounds)
    if not rv.holds:
        log.warning("a-priori surrogate bound violated for %r: %r", traj, rv)
    return rv
