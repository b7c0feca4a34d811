"""Structured background triangulations, uniform refinement and P1 basis."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MeshError",
    "OutOfDomainError",
    "Mesh",
    "build_uniform_mesh",
    "refine_uniform",
    "locate_point",
    "p1_basis",
    "barycentric",
]


class MeshError(ValueError):
    """Invalid mesh construction input."""


class OutOfDomainError(MeshError):
    """A query point lies outside the mesh domain."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangle mesh of a rectangle built on a tensor grid.

    ``h`` is the grid spacing (largest of the two axis spacings); ``hmax`` is
    the longest edge. Every triangle lies in exactly one grid cell, which is
    what :func:`locate_point` relies on.
    """

    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3), counter-clockwise
    box: tuple[float, float, float, float]  # x0, x1, y0, y1
    nx: int
    ny: int
    parent: np.ndarray | None = None  # child -> parent triangle (refined meshes)
    edges: np.ndarray = field(init=False, repr=False)  # (ne, 2) vertex ids
    edge_tris: np.ndarray = field(init=False, repr=False)  # (ne, 2), -1 on boundary
    tri_edges: np.ndarray = field(init=False, repr=False)  # (nt, 3), edge opposite vertex i
    cell_tris: np.ndarray = field(init=False, repr=False)  # (nx, ny, 2)

    def __post_init__(self):
        tri = self.triangles
        nt = len(tri)
        # local edge i is opposite local vertex i
        loc = np.array([[1, 2], [2, 0], [0, 1]])
        all_e = np.sort(tri[:, loc].reshape(-1, 2), axis=1)
        edges, inv = np.unique(all_e, axis=0, return_inverse=True)
        inv = inv.ravel()
        tri_edges = inv.reshape(nt, 3)
        owner = np.repeat(np.arange(nt), 3)
        edge_tris = -np.ones((len(edges), 2), dtype=np.int64)
        order = np.argsort(inv, kind="stable")
        sorted_e = inv[order]
        first = np.ones(len(sorted_e), dtype=bool)
        first[1:] = sorted_e[1:] != sorted_e[:-1]
        edge_tris[sorted_e[first], 0] = owner[order][first]
        edge_tris[sorted_e[~first], 1] = owner[order][~first]
        counts = np.bincount(inv, minlength=len(edges))
        if counts.max() > 2:
            raise MeshError("non-manifold edge: more than two adjacent triangles")

        cen = self.vertices[tri].mean(axis=1)
        x0, x1, y0, y1 = self.box
        ci = np.clip(((cen[:, 0] - x0) / (x1 - x0) * self.nx).astype(np.int64), 0, self.nx - 1)
        cj = np.clip(((cen[:, 1] - y0) / (y1 - y0) * self.ny).astype(np.int64), 0, self.ny - 1)
        cell = ci * self.ny + cj
        order = np.argsort(cell, kind="stable")
        if np.any(np.bincount(cell, minlength=self.nx * self.ny) != 2):
            raise MeshError("expected exactly two triangles per grid cell")
        cell_tris = order.reshape(self.nx, self.ny, 2)

        object.__setattr__(self, "edges", edges.astype(np.int64))
        object.__setattr__(self, "edge_tris", edge_tris)
        object.__setattr__(self, "tri_edges", tri_edges.astype(np.int64))
        object.__setattr__(self, "cell_tris", cell_tris)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def h(self) -> float:
        x0, x1, y0, y1 = self.box
        return max((x1 - x0) / self.nx, (y1 - y0) / self.ny)

    @property
    def hmax(self) -> float:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return float(np.sqrt((d**2).sum(axis=1)).max())

    @property
    def areas(self) -> np.ndarray:
        return signed_areas(self.vertices[self.triangles])

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_tris[:, 1] < 0)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_tris[:, 1] >= 0)

    def dump(self, path) -> None:
        """Write a plain-text listing: ``v i x y`` and ``t i a b c`` records."""
        with open(path, "w") as fh:
            for i, (x, y) in enumerate(self.vertices):
                fh.write(f"v {i} {x:.17g} {y:.17g}\n")
            for i, (a, b, c) in enumerate(self.triangles):
                fh.write(f"t {i} {a} {b} {c}\n")


def signed_areas(corners: np.ndarray) -> np.ndarray:
    """Signed areas of triangles given as an (n, 3, 2) coordinate array."""
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))


def build_uniform_mesh(box, nx: int, ny: int, diagonal: str = "uniform") -> Mesh:
    """Triangulate ``box = (x0, x1, y0, y1)`` with ``nx * ny`` cells split in two.

    ``diagonal="uniform"`` cuts every cell along the same (south-west to
    north-east) diagonal; ``"alternating"`` flips it in a checkerboard.
    """
    x0, x1, y0, y1 = map(float, box)
    if nx < 1 or ny < 1:
        raise MeshError(f"need nx, ny >= 1, got {nx}, {ny}")
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate box {box}")
    if diagonal not in ("uniform", "alternating"):
        raise MeshError(f"unknown diagonal rule {diagonal!r}")
    i = np.arange(nx + 1)
    j = np.arange(ny + 1)
    xs = x0 + i * (x1 - x0) / nx
    ys = y0 + j * (y1 - y0) / ny
    xs[-1], ys[-1] = x1, y1
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    I, J = I.ravel(), J.ravel()
    sw = J * (nx + 1) + I
    se = sw + 1
    nw = sw + nx + 1
    ne = nw + 1
    if diagonal == "uniform":
        flip = np.zeros(len(I), dtype=bool)
    else:
        flip = (I + J) % 2 == 1
    t1 = np.where(flip[:, None], np.column_stack([sw, se, nw]), np.column_stack([sw, se, ne]))
    t2 = np.where(flip[:, None], np.column_stack([se, ne, nw]), np.column_stack([sw, ne, nw]))
    tris = np.empty((2 * len(I), 3), dtype=np.int64)
    tris[0::2] = t1
    tris[1::2] = t2
    return Mesh(verts, tris, (x0, x1, y0, y1), nx, ny)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four through its edge midpoints.

    New vertices are appended after the parent vertices, one per parent edge.
    Children ``4*t .. 4*t+3`` belong to parent ``t`` (three corners, then the
    middle triangle), recorded in ``parent``.
    """
    nv = mesh.n_vertices
    mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    verts = np.vstack([mesh.vertices, mid])
    a, b, c = mesh.triangles.T
    # midpoint ids: edge opposite vertex i
    ma, mb, mc = (nv + mesh.tri_edges).T
    children = np.stack(
        [
            np.column_stack([a, mc, mb]),
            np.column_stack([mc, b, ma]),
            np.column_stack([mb, ma, c]),
            np.column_stack([ma, mb, mc]),
        ],
        axis=1,
    ).reshape(-1, 3)
    parent = np.repeat(np.arange(mesh.n_triangles), 4)
    return Mesh(verts, children, mesh.box, 2 * mesh.nx, 2 * mesh.ny, parent=parent)


def barycentric(corners: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of ``points`` (n, 2) in triangles ``corners`` (n, 3, 2)."""
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    dx = points[:, 0] - a[:, 0]
    dy = points[:, 1] - a[:, 1]
    l1 = (dx * (c[:, 1] - a[:, 1]) - dy * (c[:, 0] - a[:, 0])) / det
    l2 = ((b[:, 0] - a[:, 0]) * dy - (b[:, 1] - a[:, 1]) * dx) / det
    return np.column_stack([1.0 - l1 - l2, l1, l2])


def p1_basis(corners: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Constant gradients (n, 3, 2) of the barycentric shape functions and the areas."""
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
    area = signed_areas(corners)
    inv2a = 0.5 / area
    g = np.empty((len(corners), 3, 2))
    g[:, 0, 0] = (b[:, 1] - c[:, 1]) * inv2a
    g[:, 0, 1] = (c[:, 0] - b[:, 0]) * inv2a
    g[:, 1, 0] = (c[:, 1] - a[:, 1]) * inv2a
    g[:, 1, 1] = (a[:, 0] - c[:, 0]) * inv2a
    g[:, 2, 0] = (a[:, 1] - b[:, 1]) * inv2a
    g[:, 2, 1] = (b[:, 0] - a[:, 0]) * inv2a
    return g, area


def locate_point(mesh: Mesh, points, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Containing triangle and barycentric coordinates for each point.

    Accepts a single point or an (n, 2) array; returns arrays in both cases.
    Raises :class:`OutOfDomainError` for points outside the box by more than
    ``tol * h``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x0, x1, y0, y1 = mesh.box
    slack = tol * mesh.h
    outside = (
        (pts[:, 0] < x0 - slack) | (pts[:, 0] > x1 + slack) | (pts[:, 1] < y0 - slack) | (pts[:, 1] > y1 + slack)
    )
    if outside.any():
        raise OutOfDomainError(f"point {pts[np.argmax(outside)]} outside domain {mesh.box}")
    ci = np.clip(np.floor((pts[:, 0] - x0) / (x1 - x0) * mesh.nx).astype(np.int64), 0, mesh.nx - 1)
    cj = np.clip(np.floor((pts[:, 1] - y0) / (y1 - y0) * mesh.ny).astype(np.int64), 0, mesh.ny - 1)
    cand = mesh.cell_tris[ci, cj]  # (n, 2)
    lam = np.stack([barycentric(mesh.vertices[mesh.triangles[cand[:, k]]], pts) for k in range(2)], axis=1)
    pick = np.argmax(lam.min(axis=2), axis=1)
    rows = np.arange(len(pts))
    return cand[rows, pick], lam[rows, pick]
