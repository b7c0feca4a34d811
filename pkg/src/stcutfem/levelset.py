"""Level set fields on the refined mesh and their transport.

Sign convention: the level set is positive in the phase carrying the bulk
surfactant (the outer phase) and negative inside the drop.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, p1_basis
from .quadrature import triangle_rule

__all__ = [
    "VelocityField",
    "LevelSetField",
    "LevelSetAdvector",
    "init_circle",
    "advect_step",
    "streamline_tau",
    "rotation_field",
    "constant_field",
    "ex2_field",
    "ex3_field",
    "ex4_field",
    "analytic_levelset",
    "sheared_circle",
]


@dataclass(frozen=True)
class VelocityField:
    """Analytic velocity ``beta(t, x, y)`` with its spatial Jacobian.

    ``jacobian`` returns ``(dbx/dx, dbx/dy, dby/dx, dby/dy)``.
    """

    value: Callable
    jacobian: Callable
    steady: bool = True
    divergence_free: bool = True
    name: str = "custom"

    def __call__(self, t, x, y):
        bx, by = self.value(t, x, y)
        return np.broadcast_to(bx, np.shape(x)).astype(float), np.broadcast_to(by, np.shape(x)).astype(float)

    def jac(self, t, x, y):
        shape = np.shape(x)
        return tuple(np.broadcast_to(c, shape).astype(float) for c in self.jacobian(t, x, y))


def rotation_field(center=(0.5, 0.5), omega=np.pi) -> VelocityField:
    cx, cy = center
    return VelocityField(
        value=lambda t, x, y: (omega * (cy - y), omega * (x - cx)),
        jacobian=lambda t, x, y: (0.0, -omega, omega, 0.0),
        name="rotation",
    )


def constant_field(bx: float, by: float) -> VelocityField:
    return VelocityField(
        value=lambda t, x, y: (bx, by),
        jacobian=lambda t, x, y: (0.0, 0.0, 0.0, 0.0),
        name=f"constant({bx},{by})",
    )


def ex2_field() -> VelocityField:
    return VelocityField(
        value=lambda t, x, y: ((y + 2.0) ** 2 / 3.0, 0.0),
        jacobian=lambda t, x, y: (0.0, 2.0 * (y + 2.0) / 3.0, 0.0, 0.0),
        name="shear-quadratic",
    )


def ex3_field() -> VelocityField:
    return VelocityField(
        value=lambda t, x, y: (-1.0 + y, 0.0),
        jacobian=lambda t, x, y: (0.0, 1.0, 0.0, 0.0),
        name="shear-linear",
    )


def ex4_field() -> VelocityField:
    pi = np.pi

    def value(t, x, y):
        return (
            -0.5 * (1 + np.cos(pi * x)) * np.sin(pi * y),
            0.5 * (1 + np.cos(pi * y)) * np.sin(pi * x),
        )

    def jacobian(t, x, y):
        return (
            0.5 * pi * np.sin(pi * x) * np.sin(pi * y),
            -0.5 * pi * (1 + np.cos(pi * x)) * np.cos(pi * y),
            0.5 * pi * (1 + np.cos(pi * y)) * np.cos(pi * x),
            -0.5 * pi * np.sin(pi * y) * np.sin(pi * x),
        )

    return VelocityField(value=value, jacobian=jacobian, name="vortex")


@dataclass(frozen=True, eq=False)
class LevelSetField:
    """Nodal P1 level set values on the refined mesh at one time."""

    mesh: Mesh
    values: np.ndarray
    time: float

    def __post_init__(self):
        if len(self.values) != self.mesh.n_vertices:
            raise ValueError("level set length does not match the mesh")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("level set contains non-finite values")

    def gradient_norm_range(self) -> tuple[float, float]:
        """Min/max of |grad rho| over triangles (distance-function diagnostic)."""
        g, _ = p1_basis(self.mesh.vertices[self.mesh.triangles])
        grad = np.einsum("tij,ti->tj", g, self.values[self.mesh.triangles])
        n = np.linalg.norm(grad, axis=1)
        return float(n.min()), float(n.max())

    def to_csv(self, path) -> None:
        v = self.mesh.vertices
        data = np.column_stack([np.arange(len(v)), v, self.values])
        np.savetxt(path, data, delimiter=",", header="vertex,x,y,rho", comments="", fmt=["%d", "%.17g", "%.17g", "%.17g"])


def init_circle(mesh: Mesh, center, radius: float, time: float = 0.0) -> LevelSetField:
    """Signed distance to a circle: negative inside, positive outside."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    d = np.hypot(mesh.vertices[:, 0] - center[0], mesh.vertices[:, 1] - center[1]) - radius
    return LevelSetField(mesh, d, time)


def streamline_tau(k: float, beta_norm, h: float):
    """Streamline diffusion parameter ``2 (k^-2 + |beta|^2 h^-2)^(-1/2)``."""
    return 2.0 / np.sqrt(k**-2 + np.asarray(beta_norm) ** 2 * h**-2)


class LevelSetAdvector:
    """Crank-Nicolson / streamline-diffusion transport of a P1 level set.

    For steady velocities the two system matrices depend only on the step
    length, so they and the factorization are cached per ``k``.
    """

    def __init__(self, mesh: Mesh, beta: VelocityField):
        self.mesh = mesh
        self.beta = beta
        corners = mesh.vertices[mesh.triangles]
        self._grads, self._areas = p1_basis(corners)
        bary, w = triangle_rule(2)
        self._bary = bary
        self._qw = w
        self._qpts = np.einsum("qa,tad->tqd", bary, corners)  # (nt, nq, 2)
        self._centroids = corners.mean(axis=1)
        self._cache: dict = {}

    def matrices(self, t_prev: float, k: float):
        """Return ``(A, B)`` with ``A rho_new = B rho_old``."""
        mesh = self.mesh
        t_new = t_prev + k
        h = mesh.h  # refined-mesh spacing
        qx, qy = self._qpts[..., 0], self._qpts[..., 1]
        bnx, bny = self.beta(t_new, qx, qy)
        box, boy = self.beta(t_prev, qx, qy)
        cbx, cby = self.beta(t_new, self._centroids[:, 0], self._centroids[:, 1])
        tau = streamline_tau(k, np.hypot(cbx, cby), h)  # (nt,)
        g = self._grads  # (nt, 3, 2)
        # streamline derivative of each basis function at each quadrature point
        sd_new = bnx[..., None] * g[:, None, :, 0] + bny[..., None] * g[:, None, :, 1]  # (nt, nq, 3)
        sd_old = box[..., None] * g[:, None, :, 0] + boy[..., None] * g[:, None, :, 1]
        phi = self._bary[None, :, :]  # (1, nq, 3)
        test = phi + tau[:, None, None] * sd_new
        wq = self._qw[None, :] * self._areas[:, None]  # (nt, nq)
        trial_a = phi / k + 0.5 * sd_new
        trial_b = phi / k - 0.5 * sd_old
        ea = np.einsum("tq,tqi,tqj->tij", wq, test, trial_a)
        eb = np.einsum("tq,tqi,tqj->tij", wq, test, trial_b)
        tri = mesh.triangles
        rows = np.repeat(tri, 3, axis=1).ravel()
        cols = np.tile(tri, (1, 3)).ravel()
        n = mesh.n_vertices
        A = sp.csc_matrix((ea.ravel(), (rows, cols)), shape=(n, n))
        B = sp.csr_matrix((eb.ravel(), (rows, cols)), shape=(n, n))
        return A, B

    def step(self, rho: LevelSetField, k: float) -> LevelSetField:
        from .solver import SparseLU

        if k <= 0:
            raise ValueError("time step must be positive")
        t_prev = rho.time
        key = round(k, 15)
        if self.beta.steady and key in self._cache:
            lu, B = self._cache[key]
        else:
            A, B = self.matrices(t_prev, k)
            lu = SparseLU(A)
            if self.beta.steady:
                self._cache = {key: (lu, B)}
        rhs = B @ rho.values
        new, _ = lu.solve(rhs)
        return LevelSetField(rho.mesh, new, t_prev + k)


def advect_step(rho_prev: LevelSetField, beta: VelocityField, t_prev: float, k: float) -> LevelSetField:
    """Advance ``rho_prev`` from ``t_prev`` by one step ``k``."""
    adv = LevelSetAdvector(rho_prev.mesh, beta)
    rho = LevelSetField(rho_prev.mesh, rho_prev.values, t_prev)
    return adv.step(rho, k)


# -- closed-form interface motion ------------------------------------------------

# (initial center, radius, backward characteristic map x -> x0) of the
# benchmark interfaces whose motion is known exactly
def _ex1_center(t):
    return 0.5 + 0.28 * np.sin(np.pi * t), 0.5 - 0.28 * np.cos(np.pi * t)


def _shear_pullback(shift):
    def pull(t, x, y):
        return x - shift(y) * t, y

    return pull


_SHEARS = {
    2: ((0.0, 0.0), 1.0, lambda y: (y + 2.0) ** 2 / 3.0),
    3: ((0.0, 1.0), 0.5, lambda y: y - 1.0),
}


def _polyline_distance(points: np.ndarray, curve: np.ndarray) -> np.ndarray:
    """Unsigned distance from ``points`` to the closed polygon ``curve``."""
    from scipy.spatial import cKDTree

    n = len(curve)
    _, idx = cKDTree(curve).query(points)
    best = np.full(len(points), np.inf)
    for off in (-1, 0):
        a = curve[(idx + off) % n]
        b = curve[(idx + off + 1) % n]
        d = b - a
        s = np.clip(np.einsum("nd,nd->n", points - a, d) / np.einsum("nd,nd->n", d, d), 0.0, 1.0)
        best = np.minimum(best, np.linalg.norm(a + s[:, None] * d - points, axis=1))
    return best


def sheared_circle(center, radius, shift, t, n_markers: int = 20000) -> np.ndarray:
    """Marker points of a circle transported by ``beta = (shift(y), 0)`` to time ``t``."""
    th = np.linspace(0.0, 2.0 * np.pi, n_markers, endpoint=False)
    y = center[1] + radius * np.sin(th)
    x = center[0] + radius * np.cos(th) + shift(y) * t
    return np.column_stack([x, y])


def analytic_levelset(example: int, mesh: Mesh, t: float) -> LevelSetField:
    """Signed distance to the exact interface of a benchmark at time ``t``.

    Example 1 is a rigidly translated circle. Examples 2 and 3 are circles
    sheared by a velocity depending on ``y`` only: the sign comes from the
    pulled-back initial circle and the magnitude from a dense marker polygon.
    """
    v = mesh.vertices
    if example == 1:
        return init_circle(mesh, _ex1_center(t), 0.17, time=t)
    if example not in _SHEARS:
        raise ValueError(f"no closed-form interface motion for example {example}")
    center, radius, shift = _SHEARS[example]
    if t == 0.0:
        return init_circle(mesh, center, radius, time=t)
    x0, y0 = _shear_pullback(shift)(t, v[:, 0], v[:, 1])
    sign = np.where(np.hypot(x0 - center[0], y0 - center[1]) < radius, -1.0, 1.0)
    dist = _polyline_distance(v, sheared_circle(center, radius, shift, t))
    return LevelSetField(mesh, sign * dist, t)
