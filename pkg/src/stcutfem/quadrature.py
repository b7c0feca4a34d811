"""Quadrature rules on triangles, segments and time intervals."""
from __future__ import annotations

import numpy as np

__all__ = ["triangle_rule", "segment_rule", "time_quadrature", "QuadratureError"]


class QuadratureError(ValueError):
    pass


def triangle_rule(degree: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points (nq, 3) and weights summing to one.

    Degree 2 is the three-point interior Gauss rule, degree 5 the seven-point
    Radon rule.
    """
    if degree <= 2:
        a, b = 2.0 / 3.0, 1.0 / 6.0
        pts = np.array([[a, b, b], [b, a, b], [b, b, a]])
        return pts, np.full(3, 1.0 / 3.0)
    if degree <= 5:
        s15 = np.sqrt(15.0)
        a1 = (6.0 - s15) / 21.0
        a2 = (6.0 + s15) / 21.0
        w1 = (155.0 - s15) / 1200.0
        w2 = (155.0 + s15) / 1200.0
        pts = [[1 / 3, 1 / 3, 1 / 3]]
        wts = [9.0 / 40.0]
        for a, w in ((a1, w1), (a2, w2)):
            b = 1.0 - 2.0 * a
            pts += [[b, a, a], [a, b, a], [a, a, b]]
            wts += [w, w, w]
        return np.array(pts), np.array(wts)
    raise QuadratureError(f"no triangle rule of degree {degree}")


def segment_rule(npts: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points on [0, 1] and weights summing to one."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def time_quadrature(rule: str, k: float) -> tuple[np.ndarray, np.ndarray]:
    """Reference points ``s = (t - t_{n-1}) / k`` in [0, 1] and weights in time units."""
    if rule == "trapezoid":
        return np.array([0.0, 1.0]), np.array([k / 2.0, k / 2.0])
    if rule == "simpson":
        return np.array([0.0, 0.5, 1.0]), np.array([k / 6.0, 4.0 * k / 6.0, k / 6.0])
    raise QuadratureError(f"unknown time quadrature rule {rule!r}")
