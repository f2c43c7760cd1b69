"""Staggered (marker-and-cell) grid on the unit square and its sparse operators.

Layout for ``n`` cells per edge, ``h = 1/n``:

* ``u`` (first velocity component) on vertical faces ``(i h, (j+½) h)``,
  full array shape ``(n+1, n)``, the ``i = 0, n`` wall rows pinned to zero;
* ``v`` (second component) on horizontal faces ``((i+½) h, j h)``, full array
  shape ``(n, n+1)``, the ``j = 0, n`` wall columns pinned to zero;
* ``p`` at cell centres ``((i+½) h, (j+½) h)``, shape ``(n, n)``.

The unknown velocity vector stacks the interior ``u`` values, then the interior
``v`` values, both flattened in C order.

Velocity gradients ``g_dc = ∂u^c/∂x_d`` live where they are compact: the
diagonal ones (``d = c``) at cell centres, the off-diagonal ones at cell
corners, where the no-slip wall enters through a reflected ghost value. Every
second-order operator of the package is assembled from the discrete energy
form::

    a_h(u, v) = h² Σ q_ijkh g_ik(v) g_jh(u)

with a coefficient tensor sampled at centres and corners. Products of a centre
and a corner gradient are formed after averaging the corner one to the centre.
"""
import numpy as np
from scipy import sparse

from .exceptions import ValidationError

DIAGONAL = ((0, 0), (1, 1))
OFF_DIAGONAL = ((1, 0), (0, 1))
PAIRS = DIAGONAL + OFF_DIAGONAL


def _face_to_centre(n, h):
    return sparse.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1)) / h


def _centre_to_face(n, h):
    # ghost values reflect through the wall: g(0) = 2 c_0 / h, g(n) = -2 c_{n-1} / h
    d = sparse.lil_matrix((n + 1, n))
    d[0, 0] = 2.0
    for j in range(1, n):
        d[j, j - 1] = -1.0
        d[j, j] = 1.0
    d[n, n - 1] = -2.0
    return d.tocsr() / h


def _interior_faces(n):
    return sparse.eye(n + 1, n - 1, k=-1, format="csr")


def _average(n):
    return sparse.diags([np.full(n, 0.5), np.full(n, 0.5)], [0, 1], shape=(n, n + 1))


class MacGrid:
    """A uniform staggered grid on ``Ω = (0, 1)²`` with no-slip walls."""

    def __init__(self, n):
        n = int(n)
        if n < 8:
            raise ValidationError("MAC grid needs n >= 8 cells per edge, got {}".format(n))
        self.n = n
        self.h = 1.0 / n
        self.nu = (n - 1) * n
        self.nv = n * (n - 1)
        self.size = self.nu + self.nv
        self._ops = None

    def __eq__(self, other):
        return isinstance(other, MacGrid) and other.n == self.n

    def __hash__(self):
        return hash(("mac", self.n))

    def __repr__(self):
        return "MacGrid({})".format(self.n)

    # coordinates

    def u_nodes(self):
        x = np.arange(self.n + 1) * self.h
        y = (np.arange(self.n) + 0.5) * self.h
        return np.meshgrid(x, y, indexing="ij")

    def v_nodes(self):
        x = (np.arange(self.n) + 0.5) * self.h
        y = np.arange(self.n + 1) * self.h
        return np.meshgrid(x, y, indexing="ij")

    def centres(self):
        c = (np.arange(self.n) + 0.5) * self.h
        return np.meshgrid(c, c, indexing="ij")

    def corners(self):
        c = np.arange(self.n + 1) * self.h
        return np.meshgrid(c, c, indexing="ij")

    # velocity vectors

    def split(self, x):
        """Full ``(u, v)`` arrays, walls included, from an interior vector."""
        n = self.n
        u = np.zeros((n + 1, n))
        v = np.zeros((n, n + 1))
        u[1:-1, :] = x[: self.nu].reshape(n - 1, n)
        v[:, 1:-1] = x[self.nu :].reshape(n, n - 1)
        return u, v

    def join(self, u, v):
        """Interior vector from full ``(u, v)`` arrays; wall values are dropped."""
        return np.concatenate([u[1:-1, :].ravel(), v[:, 1:-1].ravel()])

    def sample_velocity(self, func):
        """Sample ``func(x1, x2) -> (f1, f2)`` at the staggered velocity nodes."""
        ux, uy = self.u_nodes()
        vx, vy = self.v_nodes()
        return self.join(func(ux, uy)[0], func(vx, vy)[1])

    def inner(self, x, y):
        """Discrete ``L²(Ω)`` inner product of two interior vectors."""
        return float(np.dot(x, y)) * self.h ** 2

    # operators

    @property
    def ops(self):
        if self._ops is None:
            self._ops = _GridOperators(self)
        return self._ops

    def divergence(self, x):
        return self.ops.divergence @ x

    def gradient_at_centres(self, x):
        """All four ``g_dc`` at cell centres, shape ``(2, 2, n, n)`` indexed ``[d, c]``;
        corner gradients are averaged onto the centres."""
        ops = self.ops
        out = np.empty((2, 2, self.n, self.n))
        for pair in DIAGONAL:
            out[pair] = (ops.gradient[pair] @ x).reshape(self.n, self.n)
        for pair in OFF_DIAGONAL:
            out[pair] = (ops.average @ (ops.gradient[pair] @ x)).reshape(self.n, self.n)
        return out

    def laplacian(self):
        """The vector Laplacian ``-Δ_h``, i.e. the identity-tensor operator."""
        return self.ops.laplacian

    def assemble(self, centre_coef, corner_coef):
        """Assemble the operator of the energy form with the given coefficients.

        :param centre_coef: Array ``(2, 2, 2, 2, n, n)`` indexed ``[i, j, k, h]``.
        :param corner_coef: Array ``(2, 2, 2, 2, n+1, n+1)``.
        :return: A symmetric :class:`scipy.sparse.csr_matrix` acting on interior
                 velocity vectors.
        """
        return self.ops.assemble(centre_coef, corner_coef)


class _GridOperators:
    def __init__(self, grid):
        n, h = grid.n, grid.h
        fc = _face_to_centre(n, h)
        cf = _centre_to_face(n, h)
        faces = _interior_faces(n)
        eye_n = sparse.identity(n, format="csr")
        eye_n1 = sparse.identity(n + 1, format="csr")
        embed_u = sparse.kron(faces, eye_n)
        embed_v = sparse.kron(eye_n, faces)

        def on_u(op):
            op = (op @ embed_u).tocsr()
            return sparse.hstack([op, sparse.csr_matrix((op.shape[0], grid.nv))]).tocsr()

        def on_v(op):
            op = (op @ embed_v).tocsr()
            return sparse.hstack([sparse.csr_matrix((op.shape[0], grid.nu)), op]).tocsr()

        # gradient[d, c] = ∂u^c/∂x_d
        self.gradient = {
            (0, 0): on_u(sparse.kron(fc, eye_n)),
            (1, 0): on_u(sparse.kron(eye_n1, cf)),
            (0, 1): on_v(sparse.kron(cf, eye_n1)),
            (1, 1): on_v(sparse.kron(eye_n, fc)),
        }
        self.divergence = (self.gradient[0, 0] + self.gradient[1, 1]).tocsr()
        self.pressure_gradient = (-self.divergence.T).tocsr()
        avg = _average(n)
        self.average = sparse.kron(avg, avg).tocsr()
        edge = np.ones(n + 1)
        edge[0] = edge[-1] = 0.5
        self.corner_weight = np.outer(edge, edge).ravel()
        self.n = n
        self._laplacian = None

    @property
    def laplacian(self):
        if self._laplacian is None:
            eye = np.eye(2)
            q = np.einsum("ij,kh->ijkh", eye, eye)
            n = self.n
            self._laplacian = self.assemble(
                np.broadcast_to(q[..., None, None], q.shape + (n, n)),
                np.broadcast_to(q[..., None, None], q.shape + (n + 1, n + 1)),
            )
        return self._laplacian

    def assemble(self, centre_coef, corner_coef):
        g = self.gradient
        total = None
        for i, k in PAIRS:
            for j, h in PAIRS:
                test_diag = (i, k) in DIAGONAL
                trial_diag = (j, h) in DIAGONAL
                if test_diag and trial_diag:
                    coef = np.ravel(centre_coef[i, j, k, h])
                    left, right = g[i, k], g[j, h]
                elif not test_diag and not trial_diag:
                    coef = np.ravel(corner_coef[i, j, k, h]) * self.corner_weight
                    left, right = g[i, k], g[j, h]
                elif test_diag:
                    coef = np.ravel(centre_coef[i, j, k, h])
                    left, right = g[i, k], self.average @ g[j, h]
                else:
                    coef = np.ravel(centre_coef[i, j, k, h])
                    left, right = self.average @ g[i, k], g[j, h]
                if not coef.any():
                    continue
                block = left.T @ sparse.diags(coef) @ right
                total = block if total is None else total + block
        return total.tocsr()
