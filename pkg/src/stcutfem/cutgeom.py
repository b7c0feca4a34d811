"""Discrete interface and bulk domain from a P1 level set.

The interface is the zero set of the level set on the refined mesh: one
straight segment per refined triangle with a sign change. The bulk domain is
the positive side, split into sub-triangles inside cut elements. Element
classification and the per-slab active sets live on the coarse mesh.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .levelset import LevelSetField
from .mesh import Mesh, signed_areas
from .quadrature import segment_rule, triangle_rule

log = logging.getLogger(__name__)

__all__ = [
    "GeometryError",
    "CutGeometry",
    "SlabSets",
    "ZERO_TOL",
    "perturb_zeros",
    "extract_interface",
    "decompose_bulk",
    "classify_elements",
    "cut_geometry",
    "build_slab_sets",
    "INSIDE",
    "OUTSIDE",
    "CUT",
]

ZERO_TOL = 1e-12
OUTSIDE, INSIDE, CUT = 0, 1, 2


class GeometryError(RuntimeError):
    pass


def perturb_zeros(values: np.ndarray, h: float) -> np.ndarray:
    """Move nodal values with ``|rho| < 1e-12 h`` to ``+1e-12 h``."""
    eps = ZERO_TOL * h
    out = np.array(values, dtype=float)
    out[np.abs(out) < eps] = eps
    return out


@dataclass(eq=False)
class CutGeometry:
    """Interface segments, bulk sub-triangles and coarse classification at one time."""

    time: float
    coarse: Mesh
    fine: Mesh
    rho: np.ndarray  # perturbed nodal values on the fine mesh
    # interface
    seg_points: np.ndarray  # (ns, 2, 2), oriented counter-clockwise around the drop
    seg_normals: np.ndarray  # (ns, 2), unit, outward from the bulk phase
    seg_fine: np.ndarray  # (ns,) refined triangle
    seg_edges: np.ndarray  # (ns, 2) refined edges carrying the endpoints
    # bulk, fine-triangle level
    fine_full: np.ndarray | None = None  # refined triangles entirely in the bulk phase
    part_points: np.ndarray | None = None  # (np, 3, 2) bulk pieces of cut refined triangles
    part_fine: np.ndarray | None = None  # (np,)
    classification: np.ndarray | None = None  # coarse: OUTSIDE / INSIDE / CUT

    @property
    def seg_coarse(self) -> np.ndarray:
        return self.fine.parent[self.seg_fine]

    @property
    def seg_lengths(self) -> np.ndarray:
        d = self.seg_points[:, 1] - self.seg_points[:, 0]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def perimeter(self) -> float:
        return float(self.seg_lengths.sum())

    @property
    def bulk_area(self) -> float:
        full = self.fine.areas[self.fine_full].sum()
        return float(full + signed_areas(self.part_points).sum())

    @property
    def cut_elements(self) -> np.ndarray:
        return np.flatnonzero(self.classification == CUT)

    @property
    def inside_elements(self) -> np.ndarray:
        return np.flatnonzero(self.classification == INSIDE)

    @property
    def bulk_elements(self) -> np.ndarray:
        return np.flatnonzero(self.classification != OUTSIDE)

    def is_closed(self) -> bool:
        e = self.seg_edges.ravel()
        if len(e) == 0:
            return True
        counts = np.bincount(e)
        return bool(np.all(counts[e] == 2))

    def enclosed_area(self) -> float:
        """Shoelace area of the region enclosed by the interface polylines."""
        if not self.is_closed():
            raise GeometryError("interface polyline is open (touches the domain boundary)")
        p0, p1 = self.seg_points[:, 0], self.seg_points[:, 1]
        return float(0.5 * np.sum(p0[:, 0] * p1[:, 1] - p1[:, 0] * p0[:, 1]))

    # -- quadrature -----------------------------------------------------------
    def bulk_quadrature(self, degree: int = 2):
        """Points, weights and coarse element of a rule on the bulk domain.

        Coarse elements fully inside the bulk phase are integrated directly;
        cut elements through the bulk pieces of their refined children.
        """
        return self._bulk_quadrature(degree)

    def surface_quadrature(self, npts: int = 2):
        """Points, weights, coarse element and normal of a rule on the interface."""
        return self._surface_quadrature(npts)

    def _bulk_quadrature(self, degree):
        key = ("bulk", degree)
        cache = self.__dict__.setdefault("_qcache", {})
        if key in cache:
            return cache[key]
        bary, w = triangle_rule(degree)
        inside = self.inside_elements
        cut_fine_full = self.fine_full[np.isin(self.fine.parent[self.fine_full], self.cut_elements)]
        corners = [
            self.coarse.vertices[self.coarse.triangles[inside]],
            self.fine.vertices[self.fine.triangles[cut_fine_full]],
            self.part_points,
        ]
        elems = [inside, self.fine.parent[cut_fine_full], self.fine.parent[self.part_fine]]
        corners = np.concatenate(corners, axis=0)
        elems = np.concatenate(elems).astype(np.int64)
        area = np.abs(signed_areas(corners))
        pts = np.einsum("qa,tad->tqd", bary, corners).reshape(-1, 2)
        wts = (area[:, None] * w[None, :]).ravel()
        el = np.repeat(elems, len(w))
        cache[key] = (pts, wts, el)
        return cache[key]

    def _surface_quadrature(self, npts):
        key = ("surf", npts)
        cache = self.__dict__.setdefault("_qcache", {})
        if key in cache:
            return cache[key]
        s, w = segment_rule(npts)
        p0, p1 = self.seg_points[:, 0], self.seg_points[:, 1]
        pts = (p0[:, None, :] + s[None, :, None] * (p1 - p0)[:, None, :]).reshape(-1, 2)
        wts = (self.seg_lengths[:, None] * w[None, :]).ravel()
        el = np.repeat(self.seg_coarse, len(w))
        nrm = np.repeat(self.seg_normals, len(w), axis=0)
        cache[key] = (pts, wts, el, nrm)
        return cache[key]

    @cached_property
    def segment_tree(self) -> cKDTree:
        mid = self.seg_points.mean(axis=1)
        return cKDTree(mid)

    def closest_points(self, points: np.ndarray, k: int = 8):
        """Closest point on the interface polyline, its segment and distance."""
        points = np.atleast_2d(points)
        ns = len(self.seg_points)
        if ns == 0:
            raise GeometryError("no interface")
        k = min(k, ns)
        _, cand = self.segment_tree.query(points, k=k)
        cand = cand.reshape(len(points), k)
        a = self.seg_points[cand, 0]  # (n, k, 2)
        b = self.seg_points[cand, 1]
        d = b - a
        t = np.einsum("nkd,nkd->nk", points[:, None, :] - a, d) / np.maximum(np.einsum("nkd,nkd->nk", d, d), 1e-300)
        t = np.clip(t, 0.0, 1.0)
        proj = a + t[..., None] * d
        dist = np.linalg.norm(proj - points[:, None, :], axis=2)
        best = np.argmin(dist, axis=1)
        rows = np.arange(len(points))
        return proj[rows, best], cand[rows, best], dist[rows, best]

    def to_csv(self, path) -> None:
        p = self.seg_points
        data = np.column_stack(
            [np.full(len(p), self.time), p[:, 0, 0], p[:, 0, 1], p[:, 1, 0], p[:, 1, 1], self.seg_normals]
        )
        np.savetxt(path, data, delimiter=",", header="t,x0,y0,x1,y1,nx,ny", comments="", fmt="%.17g")


def _edge_crossings(fine: Mesh, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Zero crossing on every sign-change edge (NaN elsewhere)."""
    a, b = fine.edges[:, 0], fine.edges[:, 1]
    va, vb = rho[a], rho[b]
    change = (va > 0) != (vb > 0)
    pts = np.full((len(fine.edges), 2), np.nan)
    t = va[change] / (va[change] - vb[change])
    pa, pb = fine.vertices[a[change]], fine.vertices[b[change]]
    pts[change] = pa + t[:, None] * (pb - pa)
    return pts, change


def extract_interface(rho: LevelSetField, coarse: Mesh) -> CutGeometry:
    """Interface segments of the zero level set, one per cut refined triangle."""
    fine = rho.mesh
    if fine.parent is None:
        raise GeometryError("level set must live on a refined mesh")
    vals = perturb_zeros(rho.values, fine.h)
    cross, _ = _edge_crossings(fine, vals)
    V = vals[fine.triangles]
    pos = V > 0
    npos = pos.sum(axis=1)
    cut = np.flatnonzero((npos == 1) | (npos == 2))
    Vc, posc = V[cut], pos[cut]
    lone = np.where(npos[cut] == 1, np.argmax(posc, axis=1), np.argmax(~posc, axis=1))
    o1 = (lone + 1) % 3
    o2 = (lone + 2) % 3
    te = fine.tri_edges[cut]
    rows = np.arange(len(cut))
    e1 = te[rows, o2]  # edge lone-o1
    e2 = te[rows, o1]  # edge lone-o2
    P, Q = cross[e1], cross[e2]

    from .mesh import p1_basis

    g, _ = p1_basis(fine.vertices[fine.triangles[cut]])
    grad = np.einsum("tij,ti->tj", g, Vc)
    n = -grad / np.linalg.norm(grad, axis=1)[:, None]
    tang = Q - P
    left = np.column_stack([-tang[:, 1], tang[:, 0]])
    flip = np.einsum("td,td->t", left, n) < 0
    seg = np.stack([np.where(flip[:, None], Q, P), np.where(flip[:, None], P, Q)], axis=1)
    edges = np.column_stack([np.where(flip, e2, e1), np.where(flip, e1, e2)])
    return CutGeometry(
        time=rho.time,
        coarse=coarse,
        fine=fine,
        rho=vals,
        seg_points=seg,
        seg_normals=n,
        seg_fine=cut,
        seg_edges=edges,
    )


def decompose_bulk(geom: CutGeometry) -> CutGeometry:
    """Fill in the bulk-phase pieces of every refined triangle."""
    fine, vals = geom.fine, geom.rho
    cross, _ = _edge_crossings(fine, vals)
    V = vals[fine.triangles]
    pos = V > 0
    npos = pos.sum(axis=1)
    geom.fine_full = np.flatnonzero(npos == 3)

    parts, owner = [], []
    X = fine.vertices[fine.triangles]
    for count in (1, 2):
        idx = np.flatnonzero(npos == count)
        if len(idx) == 0:
            continue
        posi = pos[idx]
        lone = np.argmax(posi, axis=1) if count == 1 else np.argmax(~posi, axis=1)
        o1, o2 = (lone + 1) % 3, (lone + 2) % 3
        rows = np.arange(len(idx))
        te = fine.tri_edges[idx]
        P = cross[te[rows, o2]]
        Q = cross[te[rows, o1]]
        xl, x1, x2 = X[idx, lone], X[idx, o1], X[idx, o2]
        if count == 1:
            parts.append(np.stack([xl, P, Q], axis=1))
            owner.append(idx)
        else:
            d1 = np.linalg.norm(P - x2, axis=1)
            d2 = np.linalg.norm(x1 - Q, axis=1)
            short = (d1 <= d2)[:, None, None]
            ta = np.where(short, np.stack([P, x1, x2], axis=1), np.stack([P, x1, Q], axis=1))
            tb = np.where(short, np.stack([P, x2, Q], axis=1), np.stack([x1, x2, Q], axis=1))
            parts += [ta, tb]
            owner += [idx, idx]
    if parts:
        geom.part_points = np.concatenate(parts, axis=0)
        geom.part_fine = np.concatenate(owner)
    else:
        geom.part_points = np.zeros((0, 3, 2))
        geom.part_fine = np.zeros(0, dtype=np.int64)
    return geom


def classify_elements(geom: CutGeometry) -> np.ndarray:
    """OUTSIDE / INSIDE / CUT label per coarse element."""
    coarse, fine = geom.coarse, geom.fine
    cls = np.full(coarse.n_triangles, OUTSIDE, dtype=np.int8)
    full_count = np.bincount(fine.parent[geom.fine_full], minlength=coarse.n_triangles)
    cls[full_count == 4] = INSIDE
    cls[np.unique(fine.parent[geom.seg_fine])] = CUT
    geom.classification = cls
    return cls


def cut_geometry(rho: LevelSetField, coarse: Mesh) -> CutGeometry:
    geom = extract_interface(rho, coarse)
    decompose_bulk(geom)
    classify_elements(geom)
    return geom


@dataclass(eq=False)
class SlabSets:
    """Active coarse elements and stabilization faces of one time slab."""

    active_bulk: np.ndarray  # bool per coarse element
    active_surface: np.ndarray  # bool per coarse element
    faces_B: np.ndarray  # coarse edge ids
    faces_S: np.ndarray
    quadrature_times: list

    @property
    def bulk_elements(self) -> np.ndarray:
        return np.flatnonzero(self.active_bulk)

    @property
    def surface_elements(self) -> np.ndarray:
        return np.flatnonzero(self.active_surface)


def build_slab_sets(geoms, coarse: Mesh) -> SlabSets:
    """Union of the per-time element sets over the given geometries, plus face sets."""
    if not geoms:
        raise GeometryError("need at least one geometry")
    nb = np.zeros(coarse.n_triangles, dtype=bool)
    ns = np.zeros(coarse.n_triangles, dtype=bool)
    for g in geoms:
        nb |= g.classification != OUTSIDE
        ns |= g.classification == CUT
    if not ns.any():
        raise GeometryError("no element is cut: the interface has left the domain")
    if not np.all(nb[ns]):
        raise GeometryError("surface patch is not contained in the bulk patch")
    interior = coarse.edge_tris[:, 1] >= 0
    t0 = coarse.edge_tris[:, 0]
    t1 = np.where(interior, coarse.edge_tris[:, 1], 0)
    faces_S = np.flatnonzero(interior & ns[t0] & ns[t1])
    faces_B = np.flatnonzero(interior & nb[t0] & nb[t1] & (ns[t0] | ns[t1]))
    if len(geoms) > 1:
        _check_displacement(geoms, coarse)
    return SlabSets(nb, ns, faces_B, faces_S, [g.time for g in geoms])


def _check_displacement(geoms, coarse: Mesh) -> None:
    """Warn when the interface moves more than one refined element within a slab."""
    a, b = geoms[0], geoms[-1]
    if len(a.seg_points) == 0 or len(b.seg_points) == 0:
        return
    dist, _ = b.segment_tree.query(a.seg_points.mean(axis=1))
    limit = 0.5 * coarse.hmax
    if dist.max() > limit:
        log.warning(
            "interface moved %.3g within one slab (more than a refined element, %.3g); "
            "active sets may miss swept elements",
            dist.max(),
            limit,
        )
