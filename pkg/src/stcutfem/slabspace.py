"""Space-time degrees of freedom on one slab.

Unknowns are ordered ``(u_B0, u_S0, u_B1, u_S1[, lambda])`` where the field
on the slab is ``u(t) = u_0 + u_1 (t - t_{n-1}) / k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cutgeom import SlabSets
from .mesh import Mesh, barycentric

__all__ = ["SlabSpace", "SlabFunction", "Trace", "OutOfPatchError", "build_slab_space"]


class OutOfPatchError(ValueError):
    pass


@dataclass(eq=False)
class SlabSpace:
    t0: float
    t1: float
    mesh: Mesh
    sets: SlabSets
    bulk_nodes: np.ndarray  # sorted vertex ids
    surf_nodes: np.ndarray
    with_multiplier: bool = True

    def __post_init__(self):
        nv = self.mesh.n_vertices
        self.bulk_map = -np.ones(nv, dtype=np.int64)
        self.bulk_map[self.bulk_nodes] = np.arange(len(self.bulk_nodes))
        self.surf_map = -np.ones(nv, dtype=np.int64)
        self.surf_map[self.surf_nodes] = np.arange(len(self.surf_nodes))

    @property
    def k(self) -> float:
        return self.t1 - self.t0

    @property
    def NB(self) -> int:
        return len(self.bulk_nodes)

    @property
    def NS(self) -> int:
        return len(self.surf_nodes)

    @property
    def size(self) -> int:
        return 2 * (self.NB + self.NS) + int(self.with_multiplier)

    def slices(self):
        """Index slices of ``B0, S0, B1, S1`` blocks and the multiplier position."""
        NB, NS = self.NB, self.NS
        b0 = slice(0, NB)
        s0 = slice(NB, NB + NS)
        b1 = slice(NB + NS, 2 * NB + NS)
        s1 = slice(2 * NB + NS, 2 * (NB + NS))
        lam = 2 * (NB + NS) if self.with_multiplier else None
        return b0, s0, b1, s1, lam


def build_slab_space(sets: SlabSets, mesh: Mesh, t0: float, t1: float, with_multiplier=True, bulk=True) -> SlabSpace:
    """Number the vertices of the active bulk and surface patches.

    ``bulk=False`` drops the bulk field entirely (insoluble surfactant).
    """
    tri = mesh.triangles
    if not sets.active_surface.any():
        from .cutgeom import GeometryError

        raise GeometryError("empty surface patch")
    bulk_nodes = np.unique(tri[sets.active_bulk]) if bulk else np.zeros(0, dtype=np.int64)
    surf_nodes = np.unique(tri[sets.active_surface])
    return SlabSpace(t0, t1, mesh, sets, bulk_nodes, surf_nodes, with_multiplier)


@dataclass(eq=False)
class SlabFunction:
    space: SlabSpace
    coeffs: np.ndarray

    def blocks(self):
        b0, s0, b1, s1, lam = self.space.slices()
        c = self.coeffs
        return c[b0], c[s0], c[b1], c[s1], (c[lam] if lam is not None else 0.0)

    def nodal(self, field: str, t: float) -> np.ndarray:
        """Full-length vertex array of the field at time ``t`` (NaN off the patch)."""
        sp_ = self.space
        if not (sp_.t0 - 1e-14 <= t <= sp_.t1 + 1e-14):
            raise ValueError(f"time {t} outside slab [{sp_.t0}, {sp_.t1}]")
        s = (t - sp_.t0) / sp_.k
        uB0, uS0, uB1, uS1, _ = self.blocks()
        out = np.full(sp_.mesh.n_vertices, np.nan)
        if field == "bulk":
            out[sp_.bulk_nodes] = uB0 + s * uB1
        elif field == "surface":
            out[sp_.surf_nodes] = uS0 + s * uS1
        else:
            raise ValueError(f"unknown field {field!r}")
        return out

    def evaluate(self, field: str, t: float, p) -> np.ndarray:
        """Point values; raises :class:`OutOfPatchError` off the active patch."""
        from .mesh import locate_point

        mesh = self.space.mesh
        pts = np.atleast_2d(p)
        tri, lam = locate_point(mesh, pts)
        active = self.space.sets.active_bulk if field == "bulk" else self.space.sets.active_surface
        # a point on a shared edge may be located in an inactive neighbour
        vals = self.nodal(field, t)
        v = np.einsum("na,na->n", lam, vals[mesh.triangles[tri]])
        bad = ~active[tri] | ~np.isfinite(v)
        if bad.any():
            v[bad] = _evaluate_in_active(mesh, active, vals, pts[bad])
        return v

    def trace_end(self) -> Trace:
        return Trace(self.nodal("bulk", self.space.t1), self.nodal("surface", self.space.t1), self.space.t1)


def _evaluate_in_active(mesh: Mesh, active: np.ndarray, vals: np.ndarray, pts: np.ndarray, tol=1e-10):
    out = np.empty(len(pts))
    act = np.flatnonzero(active)
    corners = mesh.vertices[mesh.triangles[act]]
    for i, p in enumerate(pts):
        lam = barycentric(corners, np.broadcast_to(p, (len(act), 2)))
        ok = np.flatnonzero(lam.min(axis=1) >= -tol)
        if len(ok) == 0:
            raise OutOfPatchError(f"point {p} outside the active patch")
        t = act[ok[0]]
        out[i] = lam[ok[0]] @ vals[mesh.triangles[t]]
    return out


@dataclass(eq=False)
class Trace:
    """Nodal values of ``u(t_n^-)`` on the coarse mesh (NaN off the patch)."""

    bulk: np.ndarray
    surface: np.ndarray
    time: float

    def at_nodes(self, field: str, nodes: np.ndarray, mesh: Mesh) -> np.ndarray:
        """Values at ``nodes``, extending to vertices outside the previous patch.

        Missing vertices take the value at their closest point on the boundary
        of the previous patch (linear along the closest boundary edge).
        """
        vals = self.bulk if field == "bulk" else self.surface
        out = vals[nodes].copy()
        miss = ~np.isfinite(out)
        if miss.any():
            out[miss] = extend_to(vals, mesh, mesh.vertices[nodes[miss]])
        return out


def extend_to(vals: np.ndarray, mesh: Mesh, pts: np.ndarray) -> np.ndarray:
    """Closest-point extension of a nodal field defined on a sub-patch."""
    known = np.isfinite(vals)
    e = mesh.edges
    ok = known[e[:, 0]] & known[e[:, 1]]
    if not ok.any():
        idx = np.flatnonzero(known)
        if len(idx) == 0:
            raise OutOfPatchError("no values to extend from")
        d = np.linalg.norm(mesh.vertices[idx][None, :, :] - pts[:, None, :], axis=2)
        return vals[idx[np.argmin(d, axis=1)]]
    ed = e[ok]
    a, b = mesh.vertices[ed[:, 0]], mesh.vertices[ed[:, 1]]
    from scipy.spatial import cKDTree

    tree = cKDTree(0.5 * (a + b))
    k = min(8, len(ed))
    _, cand = tree.query(pts, k=k)
    cand = cand.reshape(len(pts), k)
    A, B = a[cand], b[cand]
    d = B - A
    t = np.clip(np.einsum("nkd,nkd->nk", pts[:, None, :] - A, d) / np.einsum("nkd,nkd->nk", d, d), 0, 1)
    proj = A + t[..., None] * d
    dist = np.linalg.norm(proj - pts[:, None, :], axis=2)
    best = np.argmin(dist, axis=1)
    rows = np.arange(len(pts))
    tb = t[rows, best]
    eb = ed[cand[rows, best]]
    return (1 - tb) * vals[eb[:, 0]] + tb * vals[eb[:, 1]]

