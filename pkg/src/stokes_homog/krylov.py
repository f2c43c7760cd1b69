"""The conjugate-gradient loop shared by the cell and staggered-grid solvers."""
import logging

import numpy as np

from .exceptions import ConvergenceError

log = logging.getLogger(__name__)


class CGResult:
    """Solution and bookkeeping of one :func:`conjugate_gradient` run."""

    __slots__ = ("x", "iterations", "residuals")

    def __init__(self, x, iterations, residuals):
        self.x = x
        self.iterations = iterations
        self.residuals = residuals

    @property
    def residual(self):
        return self.residuals[-1] if self.residuals else 0.0


def _dot(u, v):
    return float(np.vdot(u, v))


def conjugate_gradient(
    apply, b, *, tol, max_iter, x0=None, project=None, name="cg", dot=_dot
):
    """Solve ``A x = b`` for a symmetric positive (semi-)definite ``A``.

    :param apply: Callable computing ``A x`` for an array shaped like ``b``.
    :param b: Right-hand side.
    :param tol: Relative residual tolerance, ``|r| <= tol * |b|``.
    :param max_iter: Iteration cap.
    :param x0: Initial guess, zero by default.
    :param project: Optional orthogonal projector onto the subspace the problem
                    is posed in; applied to the right-hand side, the residual and
                    every search direction, so singular ``A`` restricted to the
                    range of ``project`` is handled.
    :param name: Label used in logs and error messages.
    :return: A :class:`CGResult`; ``residuals`` holds relative residuals.
    :raises ConvergenceError: When ``tol`` is not reached within ``max_iter``.
    """
    if project is None:

        def project(v):
            return v

    b = project(b)
    norm_b = np.sqrt(dot(b, b))
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = project(np.array(x0, dtype=float))
        r = project(b - apply(x))
    if norm_b == 0:
        return CGResult(np.zeros_like(b), 0, [0.0])

    rr = dot(r, r)
    residuals = [np.sqrt(rr) / norm_b]
    p = r.copy()
    it = 0
    while residuals[-1] > tol:
        if it >= max_iter:
            log.warning(
                "%s: no convergence after %d iterations, residual %.3e",
                name,
                it,
                residuals[-1],
            )
            raise ConvergenceError(
                "{} did not converge in {} iterations (residual {:.3e}, tol {:.1e})".format(
                    name, it, residuals[-1], tol
                ),
                iterations=it,
                residuals=residuals,
            )
        ap = project(apply(p))
        pap = dot(p, ap)
        if not pap > 0:
            raise ConvergenceError(
                "{} broke down: operator is not positive on the search direction "
                "(p.Ap = {:.3e})".format(name, pap),
                iterations=it,
                residuals=residuals,
            )
        step = rr / pap
        x += step * p
        r -= step * ap
        r = project(r)
        rr_new = dot(r, r)
        p = project(r + (rr_new / rr) * p)
        rr = rr_new
        it += 1
        residuals.append(np.sqrt(rr) / norm_b)
        log.debug("%s: iteration %d residual %.3e", name, it, residuals[-1])
    return CGResult(x, it, residuals)
