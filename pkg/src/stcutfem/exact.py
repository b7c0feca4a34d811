"""Manufactured solution of the rotating-drop benchmark (Example 1).

The bulk field is a product of cosines; the surface field is chosen so that
the Langmuir flux with unit coefficients equals the normal bulk flux. The
right-hand sides are obtained by symbolic differentiation.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import sympy as sy

K_B = 0.01
K_S = 1.0
RADIUS = 0.17


def center(t, offset: float = 0.28):
    return 0.5 + offset * np.sin(np.pi * t), 0.5 - offset * np.cos(np.pi * t)


@lru_cache(maxsize=2)
def _symbolic(offset=sy.Rational(7, 25)):
    """Symbolic fields; ``offset`` is the distance of the drop from the rotation axis."""
    t, x, y = sy.symbols("t x y", real=True)
    pi = sy.pi
    xc = sy.Rational(1, 2) + offset * sy.sin(pi * t)
    yc = sy.Rational(1, 2) - offset * sy.cos(pi * t)
    r = sy.sqrt((x - xc) ** 2 + (y - yc) ** 2)
    n1, n2 = (x - xc) / r, (y - yc) / r
    g = sy.cos(2 * pi * t)
    uB = sy.Rational(1, 2) + sy.Rational(2, 5) * sy.cos(pi * x) * sy.cos(pi * y) * g
    uS = (
        uB
        + pi / 250 * sy.sin(pi * x) * sy.cos(pi * y) * g * n1
        + pi / 250 * sy.cos(pi * x) * sy.sin(pi * y) * g * n2
    ) / (sy.Rational(3, 2) + sy.Rational(2, 5) * sy.cos(pi * x) * sy.cos(pi * y) * g)
    bx, by = pi * (sy.Rational(1, 2) - y), pi * (x - sy.Rational(1, 2))
    kB, kS = sy.Rational(1, 100), sy.Integer(1)

    def conv(u):
        return sy.diff(u, t) + bx * sy.diff(u, x) + by * sy.diff(u, y)

    fB = conv(uB) - kB * (sy.diff(uB, x, 2) + sy.diff(uB, y, 2))
    # Laplace-Beltrami on the circles |x - c(t)| = r: tangential second derivative
    # plus curvature term, written with the radial extension of the normal
    ux, uy = sy.diff(uS, x), sy.diff(uS, y)
    hess_nn = (
        n1 * n1 * sy.diff(uS, x, 2) + 2 * n1 * n2 * sy.diff(uS, x, y) + n2 * n2 * sy.diff(uS, y, 2)
    )
    lap_gamma = sy.diff(uS, x, 2) + sy.diff(uS, y, 2) - hess_nn - (n1 * ux + n2 * uy) / r
    # rigid rotation has zero tangential divergence
    flux = uB - uS - uB * uS
    fS = conv(uS) - kS * lap_gamma - flux
    return t, x, y, uB, uS, fB, fS


@lru_cache(maxsize=2)
def _compiled(offset=sy.Rational(7, 25)):
    t, x, y, uB, uS, fB, fS = _symbolic(offset)
    return tuple(sy.lambdify((t, x, y), e, "numpy") for e in (uB, uS, fB, fS))


def _call(fn, t, x, y):
    out = fn(t, x, y)
    return np.broadcast_to(out, np.broadcast(np.asarray(x), np.asarray(y)).shape).astype(float)


def centered_solution():
    """``(u_B, u_S, f_B, f_S)`` evaluators for a drop on the rotation axis.

    The interface is then stationary as a set while the fields still rotate,
    which isolates the time discretization from the motion of the patches.
    """
    fns = _compiled(sy.Integer(0))
    return tuple((lambda f: lambda t, x, y: _call(f, t, x, y))(f) for f in fns)


def u_bulk(t, x, y):
    return _call(_compiled()[0], t, x, y)


def u_surface(t, x, y):
    return _call(_compiled()[1], t, x, y)


def f_bulk(t, x, y):
    return _call(_compiled()[2], t, x, y)


def f_surface(t, x, y):
    return _call(_compiled()[3], t, x, y)


def exact_solution_ex1(t, x, y):
    """``(u_B, u_S, f_B, f_S)`` at the given points."""
    return u_bulk(t, x, y), u_surface(t, x, y), f_bulk(t, x, y), f_surface(t, x, y)


def exact_mass(t: float, n_radial: int = 24, n_angle: int = 256) -> float:
    """``int u_B`` over the unit square minus the drop plus ``int u_S`` over the circle."""
    xc, yc = center(t)
    # the cosine part of u_B integrates to zero over the unit square
    total = 0.5
    gr, gw = np.polynomial.legendre.leggauss(n_radial)
    rr = 0.5 * RADIUS * (gr + 1.0)
    wr = 0.5 * RADIUS * gw
    th = np.linspace(0.0, 2 * np.pi, n_angle, endpoint=False)
    R, T = np.meshgrid(rr, th, indexing="ij")
    xs, ys = xc + R * np.cos(T), yc + R * np.sin(T)
    total -= float(np.sum(u_bulk(t, xs, ys) * R * wr[:, None]) * (2 * np.pi / n_angle))
    xs, ys = xc + RADIUS * np.cos(th), yc + RADIUS * np.sin(th)
    total += float(np.sum(u_surface(t, xs, ys)) * RADIUS * 2 * np.pi / n_angle)
    return total
