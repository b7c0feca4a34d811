"""Residual and Jacobian of the space-time cut finite element method on one slab.

All spatial integrals are first collected as dense per-element 3x3 (or 3)
arrays over the coarse mesh, combined over the time quadrature points, and
scattered once into the sparse slab system. Cut elements are integrated with
points on their bulk pieces and interface segments; uncut elements in the
bulk phase use the standard rule on the whole element.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .cutgeom import CUT, OUTSIDE, CutGeometry, SlabSets
from .levelset import VelocityField
from .mesh import Mesh, barycentric, p1_basis
from .quadrature import time_quadrature, triangle_rule
from .slabspace import SlabSpace, Trace

__all__ = [
    "AssemblyError",
    "CouplingModel",
    "TransportParameters",
    "SpatialForms",
    "spatial_forms",
    "ghost_penalty",
    "SlabSystem",
    "assemble_residual",
    "assemble_jacobian",
    "mass_functional",
    "time_quadrature",
]


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True)
class CouplingModel:
    """Adsorption flux ``f = b_B u_B - b_S g(u_S) u_S - b_BS u_B u_S``.

    ``g = 1`` except for Frumkin, where ``g = exp(A u_S)``.
    """

    kind: str = "langmuir"
    b_B: float = 0.0
    b_S: float = 0.0
    b_BS: float = 0.0
    A: float = 0.0

    def __post_init__(self):
        if self.kind not in ("langmuir", "henry", "frumkin"):
            raise ValueError(f"unknown coupling {self.kind!r}")
        if min(self.b_B, self.b_S, self.b_BS) < 0:
            raise ValueError("coupling coefficients must be nonnegative")
        if self.kind == "henry" and self.b_BS != 0:
            raise ValueError("Henry coupling has b_BS = 0")

    @classmethod
    def langmuir(cls, k_a, k_d, u_inf):
        return cls("langmuir", k_a * u_inf, k_d, k_a)

    @classmethod
    def henry(cls, k_a, k_d):
        return cls("henry", k_a, k_d, 0.0)

    @classmethod
    def frumkin(cls, k_a, k_d, u_inf, A):
        return cls("frumkin", k_a, k_d, k_a / u_inf, A)

    @classmethod
    def nondimensional(cls, alpha, biot):
        """``f = alpha u_B (1 - u_S) - Bi u_S``."""
        return cls("langmuir", alpha, biot, alpha)

    @property
    def is_affine(self) -> bool:
        return self.kind == "henry" or (self.b_BS == 0 and (self.kind != "frumkin" or self.A == 0 or self.b_S == 0))

    def flux(self, uB, uS):
        """Flux value and partial derivatives with respect to ``u_B`` and ``u_S``."""
        if self.kind == "frumkin":
            e = np.exp(self.A * uS)
            f = self.b_B * uB - self.b_S * e * uS - self.b_BS * uB * uS
            fS = -self.b_S * (self.A * e * uS + e) - self.b_BS * uB
        else:
            f = self.b_B * uB - self.b_S * uS - self.b_BS * uB * uS
            fS = -self.b_S - self.b_BS * uB
        fB = self.b_B - self.b_BS * uS
        return f, np.broadcast_to(fB, np.shape(f)), np.broadcast_to(fS, np.shape(f))


@dataclass
class TransportParameters:
    """Coefficients of the coupled bulk-surface problem.

    ``damkohler`` is 1 in dimensional form. In non-dimensional form it weights
    the surface mass in the conserved quantity and the flux in the bulk
    boundary condition.
    """

    beta: VelocityField
    k_B: float
    k_S: float
    coupling: CouplingModel
    damkohler: float = 1.0
    bulk: bool = True
    f_B: Callable | None = None
    f_S: Callable | None = None
    tau_B: float = 1e-2
    tau_S: float = 1e-2
    quadrature: str = "simpson"
    bulk_degree: int = 2
    surface_points: int = 2

    @classmethod
    def nondimensional(cls, beta, Pe, Pe_S, Da, Bi, alpha, **kw):
        return cls(beta, 1.0 / Pe, 1.0 / Pe_S, CouplingModel.nondimensional(alpha, Bi), damkohler=Da, **kw)

    @property
    def bulk_weight(self) -> float:
        """Test-function weight of the bulk equation (``b_B / Da``)."""
        b = self.coupling.b_B if self.coupling.b_B > 0 else 1.0
        return b / self.damkohler

    @property
    def surface_weight(self) -> float:
        return self.coupling.b_S if self.coupling.b_S > 0 else 1.0


# -- per-element kernels -----------------------------------------------------


class ElementKernels:
    """Geometric data of the coarse mesh and full-element matrices."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        corners = mesh.vertices[mesh.triangles]
        self.corners = corners
        self.grads, self.areas = p1_basis(corners)
        nt = mesh.n_triangles
        self.mass = self.areas[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))[None]
        self.stiff = self.areas[:, None, None] * np.einsum("tid,tjd->tij", self.grads, self.grads)
        self._conv: dict = {}
        self.nt = nt

    def convection(self, beta: VelocityField, t: float):
        key = (id(beta), 0.0 if beta.steady else t)
        if key not in self._conv:
            if len(self._conv) > 4:
                self._conv.clear()
            bary, w = triangle_rule(2)
            pts = np.einsum("qa,tad->tqd", bary, self.corners)
            bx, by = beta(t, pts[..., 0], pts[..., 1])
            bg = bx[..., None] * self.grads[:, None, :, 0] + by[..., None] * self.grads[:, None, :, 1]  # (nt,q,j)
            self._conv[key] = np.einsum("q,tqi,tqj->tij", w, np.broadcast_to(bary, (self.nt, 3, 3)), bg) * self.areas[
                :, None, None
            ]
        return self._conv[key]


_KERNELS: dict = {}


def element_kernels(mesh: Mesh) -> ElementKernels:
    k = _KERNELS.get(id(mesh))
    if k is None or k.mesh is not mesh:
        if len(_KERNELS) > 8:
            _KERNELS.clear()
        k = _KERNELS[id(mesh)] = ElementKernels(mesh)
    return k


def _accumulate(elem, vals, nt):
    """Sum per-point contributions ``vals`` (n, ...) into per-element arrays."""
    shape = vals.shape[1:]
    m = int(np.prod(shape))
    flat = vals.reshape(len(vals), m)
    idx = (elem[:, None] * m + np.arange(m)[None, :]).ravel()
    out = np.bincount(idx, weights=flat.ravel(), minlength=nt * m)
    return out.reshape((nt,) + shape)


@dataclass(eq=False)
class SpatialForms:
    """Element arrays of all spatial forms on one geometry.

    Bulk: ``mass``, ``op`` (convection plus diffusion, unweighted), ``load``.
    Surface: ``smass``, ``sop`` (convection, tangential divergence and
    diffusion), ``sload``. Interface coupling data: point values of the basis
    for the nonlinear flux.
    """

    geom: CutGeometry
    mass: np.ndarray
    op: np.ndarray
    smass: np.ndarray
    sop: np.ndarray
    load: np.ndarray | None
    sload: np.ndarray | None
    gpts: np.ndarray
    gw: np.ndarray
    gel: np.ndarray
    gphi: np.ndarray
    bulk_mask: np.ndarray
    cut_mask: np.ndarray
    extra: dict = field(default_factory=dict)


def spatial_forms(geom: CutGeometry, params: TransportParameters) -> SpatialForms:
    """Bulk and surface element matrices on ``geom`` (cached on the geometry)."""
    cache = geom.__dict__.setdefault("_forms", {})
    key = id(params)
    if key in cache and cache[key][0] is params:
        return cache[key][1]
    forms = _spatial_forms(geom, params)
    cache.clear()
    cache[key] = (params, forms)
    return forms


def _spatial_forms(geom: CutGeometry, params: TransportParameters) -> SpatialForms:
    mesh = geom.coarse
    ker = element_kernels(mesh)
    nt = mesh.n_triangles
    t = geom.time
    cls = geom.classification
    inside = cls == 1
    cut = cls == CUT
    beta = params.beta

    # bulk
    mass = np.zeros((nt, 3, 3))
    op = np.zeros((nt, 3, 3))
    load = None
    if params.bulk:
        mass[inside] = ker.mass[inside]
        op[inside] = params.k_B * ker.stiff[inside] + ker.convection(beta, t)[inside]
        pts, w, el = geom.bulk_quadrature(params.bulk_degree)
        sel = cut[el]
        cp, cw, ce = pts[sel], w[sel], el[sel]
        phi = barycentric(ker.corners[ce], cp)
        g = ker.grads[ce]
        bx, by = beta(t, cp[:, 0], cp[:, 1])
        bg = bx[:, None] * g[:, :, 0] + by[:, None] * g[:, :, 1]
        vals = np.empty((len(cp), 3, 3, 2))
        vals[..., 0] = cw[:, None, None] * phi[:, :, None] * phi[:, None, :]
        vals[..., 1] = cw[:, None, None] * (
            params.k_B * np.einsum("nid,njd->nij", g, g) + phi[:, :, None] * bg[:, None, :]
        )
        acc = _accumulate(ce, vals, nt)
        mass += acc[..., 0]
        op += acc[..., 1]
        if params.f_B is not None:
            f = params.f_B(t, pts[:, 0], pts[:, 1])
            phi_all = barycentric(ker.corners[el], pts)
            load = _accumulate(el, (w * f)[:, None] * phi_all, nt)

    # surface
    gp, gw, gel, gn = geom.surface_quadrature(params.surface_points)
    gphi = barycentric(ker.corners[gel], gp)
    g = ker.grads[gel]
    bx, by = beta(t, gp[:, 0], gp[:, 1])
    Jxx, Jxy, Jyx, Jyy = beta.jac(t, gp[:, 0], gp[:, 1])
    nx_, ny_ = gn[:, 0], gn[:, 1]
    div_g = (Jxx + Jyy) - (nx_ * (Jxx * nx_ + Jxy * ny_) + ny_ * (Jyx * nx_ + Jyy * ny_))
    ng = g[:, :, 0] * nx_[:, None] + g[:, :, 1] * ny_[:, None]
    tg = g - ng[:, :, None] * gn[:, None, :]
    bg = bx[:, None] * g[:, :, 0] + by[:, None] * g[:, :, 1]
    vals = np.empty((len(gp), 3, 3, 2))
    vals[..., 0] = gw[:, None, None] * gphi[:, :, None] * gphi[:, None, :]
    vals[..., 1] = gw[:, None, None] * (
        gphi[:, :, None] * bg[:, None, :]
        + div_g[:, None, None] * gphi[:, :, None] * gphi[:, None, :]
        + params.k_S * np.einsum("nid,njd->nij", tg, tg)
    )
    acc = _accumulate(gel, vals, nt)
    sload = None
    if params.f_S is not None:
        f = params.f_S(t, gp[:, 0], gp[:, 1])
        sload = _accumulate(gel, (gw * f)[:, None] * gphi, nt)
    forms = SpatialForms(
        geom=geom,
        mass=mass,
        op=op,
        smass=acc[..., 0],
        sop=acc[..., 1],
        load=load,
        sload=sload,
        gpts=gp,
        gw=gw,
        gel=gel,
        gphi=gphi,
        bulk_mask=cls != OUTSIDE,
        cut_mask=cut,
    )
    forms.extra["div_gamma_beta"] = div_g
    return forms


def ghost_penalty(mesh: Mesh, faces: np.ndarray, scale: float = 1.0) -> sp.coo_matrix:
    """``scale * sum_F ([n_F . grad u], [n_F . grad v])_F`` on vertex indices."""
    ker = element_kernels(mesh)
    faces = np.asarray(faces, dtype=np.int64)
    nv = mesh.n_vertices
    if len(faces) == 0:
        return sp.coo_matrix((nv, nv))
    e = mesh.edges[faces]
    d = mesh.vertices[e[:, 1]] - mesh.vertices[e[:, 0]]
    length = np.hypot(d[:, 0], d[:, 1])
    nF = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    t1, t2 = mesh.edge_tris[faces, 0], mesh.edge_tris[faces, 1]
    c1 = np.einsum("fid,fd->fi", ker.grads[t1], nF)
    c2 = -np.einsum("fid,fd->fi", ker.grads[t2], nF)
    ids = np.concatenate([mesh.triangles[t1], mesh.triangles[t2]], axis=1)  # (nf, 6)
    c = np.concatenate([c1, c2], axis=1)
    vals = scale * length[:, None, None] * c[:, :, None] * c[:, None, :]
    rows = np.repeat(ids, 6, axis=1).ravel()
    cols = np.tile(ids, (1, 6)).ravel()
    return sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(nv, nv))


def mass_functional(geom: CutGeometry, bulk_values, surf_values, damkohler: float = 1.0, params=None) -> float:
    """``int u_B`` over the bulk domain plus ``Da int u_S`` over the interface.

    Values are full-length nodal arrays on the coarse mesh; ``None`` skips a field.
    """
    ker = element_kernels(geom.coarse)
    tri = geom.coarse.triangles
    total = 0.0
    if bulk_values is not None:
        pts, w, el = geom.bulk_quadrature(2)
        lam = barycentric(ker.corners[el], pts)
        total += float(np.sum(w * np.einsum("na,na->n", lam, bulk_values[tri[el]])))
    if surf_values is not None:
        pts, w, el, _ = geom.surface_quadrature(2)
        lam = barycentric(ker.corners[el], pts)
        total += damkohler * float(np.sum(w * np.einsum("na,na->n", lam, surf_values[tri[el]])))
    return total


# -- slab system ---------------------------------------------------------------


def _scatter(local, rows_map, cols_map, tri, elems, shape):
    """Scatter element arrays of ``elems`` into a sparse block."""
    if len(elems) == 0:
        return sp.csr_matrix(shape)
    r = rows_map[tri[elems]]
    c = cols_map[tri[elems]]
    vals = local[elems]
    rr = np.repeat(r, 3, axis=1).ravel()
    cc = np.tile(c, (1, 3)).ravel()
    return sp.csr_matrix((vals.ravel(), (rr, cc)), shape=shape)


def _scatter_vec(local, rows_map, tri, elems, n):
    if local is None or len(elems) == 0:
        return np.zeros(n)
    r = rows_map[tri[elems]].ravel()
    return np.bincount(r, weights=local[elems].ravel(), minlength=n)


class SlabSystem:
    """Nonlinear algebraic system ``F(U) = 0`` of one space-time slab.

    ``geoms`` are the geometries at the time quadrature points (the first at
    ``t_{n-1}``, the last at ``t_n``). ``prev`` is the trace ``u(t_{n-1}^-)``
    and ``mass_target`` the prescribed total mass (ignored without multiplier).
    """

    def __init__(
        self,
        space: SlabSpace,
        geoms: list,
        params: TransportParameters,
        prev: Trace,
        mass_target: float | None = None,
    ):
        s_q, w_q = time_quadrature(params.quadrature, space.k)
        if len(geoms) != len(s_q):
            raise AssemblyError(f"need {len(s_q)} geometries for {params.quadrature} quadrature, got {len(geoms)}")
        for g, s in zip(geoms, s_q):
            if g is None or abs(g.time - (space.t0 + s * space.k)) > 1e-9 * max(1.0, abs(space.t1)):
                raise AssemblyError(f"missing geometry at t={space.t0 + s * space.k}")
        if space.with_multiplier and mass_target is None:
            raise AssemblyError("mass target required with the multiplier")
        self.space = space
        self.geoms = geoms
        self.params = params
        self.prev = prev
        self.mass_target = mass_target
        self.s_q, self.w_q = s_q, w_q
        self.forms = [spatial_forms(g, params) for g in geoms]
        self._build_linear()
        self._build_coupling()

    # -- linear part --------------------------------------------------------
    def _build_linear(self):
        space, params = self.space, self.params
        mesh = space.mesh
        tri = mesh.triangles
        k = space.k
        NB, NS = space.NB, space.NS
        cB, cS = params.bulk_weight, params.surface_weight
        D = params.damkohler
        bmap, smap = space.bulk_map, space.surf_map
        belems = space.sets.bulk_elements
        selems = space.sets.surface_elements

        def theta(a, s):
            return 1.0 if a == 0 else s

        blocks = {}
        rhs = {}
        for name, N, c, mname, oname, lname, elems, vmap in (
            ("B", NB, cB, "mass", "op", "load", belems, bmap),
            ("S", NS, cS, "smass", "sop", "sload", selems, smap),
        ):
            if N == 0:
                continue
            loc = {(a, b): 0.0 for a in (0, 1) for b in (0, 1)}
            vec = {0: np.zeros(N), 1: np.zeros(N)}
            for s, w, f in zip(self.s_q, self.w_q, self.forms):
                M, A = getattr(f, mname), getattr(f, oname)
                for a in (0, 1):
                    ta = theta(a, s)
                    loc[(a, 1)] = loc[(a, 1)] + (c * w * ta / k) * M
                    for b in (0, 1):
                        loc[(a, b)] = loc[(a, b)] + (c * w * ta * theta(b, s)) * A
                    L = getattr(f, lname)
                    if L is not None:
                        vec[a] += c * w * ta * _scatter_vec(L, vmap, tri, elems, N)
            # jump at t_{n-1}: c (u0 - u^-, v0)
            f0 = self.forms[0]
            M0 = getattr(f0, mname)
            loc[(0, 0)] = loc[(0, 0)] + c * M0
            prev_vals = self.prev.bulk if name == "B" else self.prev.surface
            mask = f0.bulk_mask if name == "B" else f0.cut_mask
            act = np.flatnonzero(mask)
            pv = prev_vals[tri[act]]
            if not np.all(np.isfinite(pv)):
                raise AssemblyError("previous trace undefined on the geometry at t_{n-1}")
            jl = np.zeros((mesh.n_triangles, 3))
            jl[act] = c * np.einsum("tij,tj->ti", M0[act], pv)
            vec[0] = vec[0] + _scatter_vec(jl, vmap, tri, elems, N)
            for key, val in loc.items():
                blocks[(name, key)] = _scatter(val, vmap, vmap, tri, elems, (N, N))
            rhs[name] = vec

        # ghost penalty, integrated in time with the same rule
        tw = {(a, b): sum(w * theta(a, s) * theta(b, s) for s, w in zip(self.s_q, self.w_q)) for a in (0, 1) for b in (0, 1)}
        h = mesh.h
        if NB:
            JB = ghost_penalty(mesh, space.sets.faces_B, params.tau_B * h).tocsr()[space.bulk_nodes][:, space.bulk_nodes]
            for key in tw:
                blocks[("B", key)] = blocks[("B", key)] + tw[key] * JB
        if NS:
            JS = ghost_penalty(mesh, space.sets.faces_S, params.tau_S).tocsr()[space.surf_nodes][:, space.surf_nodes]
            for key in tw:
                blocks[("S", key)] = blocks[("S", key)] + tw[key] * JS

        # global layout B0, S0, B1, S1
        def blk(name, a, b):
            return blocks.get((name, (a, b)))

        def zeros(r, c):
            return sp.csr_matrix((r, c))

        order = [("B", 0), ("S", 0), ("B", 1), ("S", 1)]
        sizes = {"B": NB, "S": NS}
        grid = []
        for rn, ra in order:
            row = []
            for cn, cb in order:
                m = blk(rn, ra, cb) if rn == cn else None
                row.append(m if m is not None else zeros(sizes[rn], sizes[cn]))
            grid.append(row)
        r_vec = np.concatenate(
            [rhs["B"][0] if NB else np.zeros(0), rhs["S"][0] if NS else np.zeros(0),
             rhs["B"][1] if NB else np.zeros(0), rhs["S"][1] if NS else np.zeros(0)]
        )

        # mass functional at t_n: row sums of the mass at the last geometry
        fl = self.forms[-1]
        mB = _scatter_vec(fl.mass.sum(axis=2), bmap, tri, belems, NB) if NB else np.zeros(0)
        mS = D * _scatter_vec(fl.smass.sum(axis=2), smap, tri, selems, NS) if NS else np.zeros(0)
        self.mass_vector = np.concatenate([mB, mS, mB, mS])

        L = sp.bmat(grid, format="csr") if (NB + NS) else sp.csr_matrix((0, 0))
        if space.with_multiplier:
            col = sp.csr_matrix(self.mass_vector[:, None])
            L = sp.bmat([[L, col], [col.T, None]], format="csr")
            r_vec = np.append(r_vec, self.mass_target)
        self.L = L
        self.r = r_vec

    # -- nonlinear flux -----------------------------------------------------
    def _build_coupling(self):
        space = self.space
        tri = space.mesh.triangles
        self._evals = []
        for s, w, f in zip(self.s_q, self.w_q, self.forms):
            n = len(f.gpts)
            rows = np.repeat(np.arange(n), 3)
            EB = None
            if space.NB:
                cols = space.bulk_map[tri[f.gel]].ravel()
                EB = sp.csr_matrix((f.gphi.ravel(), (rows, cols)), shape=(n, space.NB))
            cols = space.surf_map[tri[f.gel]].ravel()
            ES = sp.csr_matrix((f.gphi.ravel(), (rows, cols)), shape=(n, space.NS))
            self._evals.append((s, w, f.gw, EB, ES))

    def _split(self, U):
        b0, s0, b1, s1, lam = self.space.slices()
        return U[b0], U[s0], U[b1], U[s1]

    def _coupling(self, U, jacobian: bool):
        space, params = self.space, self.params
        model = params.coupling
        NB, NS = space.NB, space.NS
        n = space.size
        res = np.zeros(n)
        if NB == 0 or (model.b_B == 0 and model.b_S == 0 and model.b_BS == 0):
            return res, (sp.csr_matrix((n, n)) if jacobian else None)
        uB0, uS0, uB1, uS1 = self._split(U)
        wB = params.bulk_weight * params.damkohler
        wS = params.surface_weight
        b0, s0, b1, s1, _ = space.slices()
        rows_of = {("B", 0): b0, ("S", 0): s0, ("B", 1): b1, ("S", 1): s1}
        J_parts = []
        for s, w, gw, EB, ES in self._evals:
            uB = EB @ (uB0 + s * uB1)
            uS = ES @ (uS0 + s * uS1)
            f, fB, fS = model.flux(uB, uS)
            th = (1.0, s)
            rb = EB.T @ (gw * f)
            rs = ES.T @ (gw * f)
            for a in (0, 1):
                res[rows_of[("B", a)]] += w * th[a] * wB * rb
                res[rows_of[("S", a)]] -= w * th[a] * wS * rs
            if jacobian:
                J_parts.append((s, w, gw, EB, ES, fB, fS))
        if not jacobian:
            return res, None
        starts = {key: sl.start for key, sl in rows_of.items()}
        trip_r, trip_c, trip_v = [], [], []
        for s, w, gw, EB, ES, fB, fS in J_parts:
            th = (1.0, s)
            blocks = {
                ("B", "B"): wB * (EB.T @ sp.diags(gw * fB) @ EB),
                ("B", "S"): wB * (EB.T @ sp.diags(gw * fS) @ ES),
                ("S", "B"): -wS * (ES.T @ sp.diags(gw * fB) @ EB),
                ("S", "S"): -wS * (ES.T @ sp.diags(gw * fS) @ ES),
            }
            for (rn, cn), m in blocks.items():
                m = m.tocoo()
                for a in (0, 1):
                    for b in (0, 1):
                        trip_r.append(m.row + starts[(rn, a)])
                        trip_c.append(m.col + starts[(cn, b)])
                        trip_v.append(w * th[a] * th[b] * m.data)
        J = sp.csr_matrix(
            (np.concatenate(trip_v), (np.concatenate(trip_r), np.concatenate(trip_c))), shape=(n, n)
        )
        return res, J

    # -- public -------------------------------------------------------------
    @property
    def size(self) -> int:
        return self.space.size

    def residual(self, U) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        N, _ = self._coupling(U, jacobian=False)
        return self.L @ U - self.r + N

    def jacobian(self, U) -> sp.csr_matrix:
        U = np.asarray(U, dtype=float)
        _, J = self._coupling(U, jacobian=True)
        return (self.L + J).tocsc()

    def initial_guess(self) -> np.ndarray:
        """Previous trace, constant in time; multiplier zero."""
        space = self.space
        mesh = space.mesh
        uB = self.prev.at_nodes("bulk", space.bulk_nodes, mesh) if space.NB else np.zeros(0)
        uS = self.prev.at_nodes("surface", space.surf_nodes, mesh)
        U = np.concatenate([uB, uS, np.zeros_like(uB), np.zeros_like(uS)])
        if space.with_multiplier:
            U = np.append(U, 0.0)
        return U

    def mass_at_end(self, U) -> float:
        """Mass functional of ``u(t_n^-)`` on the ``t_n`` geometry."""
        NB, NS = self.space.NB, self.space.NS
        mv = self.mass_vector
        uB0, uS0, uB1, uS1 = self._split(U)
        return float(mv[:NB] @ (uB0 + uB1) + mv[NB : NB + NS] @ (uS0 + uS1))


def assemble_residual(system: SlabSystem, U) -> np.ndarray:
    return system.residual(U)


def assemble_jacobian(system: SlabSystem, U) -> sp.csc_matrix:
    return system.jacobian(U)
