import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import circle_geometry
from stcutfem.cutgeom import (
    CUT,
    INSIDE,
    OUTSIDE,
    GeometryError,
    build_slab_sets,
    classify_elements,
    cut_geometry,
    decompose_bulk,
    extract_interface,
)
from stcutfem.levelset import LevelSetField, init_circle
from stcutfem.mesh import build_uniform_mesh, locate_point, refine_uniform, signed_areas

CIRCLE_LENGTH = 2 * np.pi * 0.17
CIRCLE_AREA = np.pi * 0.17**2


def corner_geometry():
    """One refined triangle (-1,0),(0,0),(0,1) with a negative value at (0,0)."""
    coarse = build_uniform_mesh((-2.0, 0.0, 0.0, 2.0), 1, 1)
    fine = refine_uniform(coarse)
    vals = np.ones(fine.n_vertices)
    corner = np.flatnonzero(np.all(np.isclose(fine.vertices, [0.0, 0.0]), axis=1))
    vals[corner] = -1.0
    return cut_geometry(LevelSetField(fine, vals, 0.0), coarse)


def interp(geom, pts):
    tri, lam = locate_point(geom.fine, pts)
    return np.einsum("na,na->n", lam, geom.rho[geom.fine.triangles[tri]])


def test_single_triangle_segment():
    g = corner_geometry()
    assert len(g.seg_points) == 1
    tri = g.fine.vertices[g.fine.triangles[g.seg_fine[0]]]
    assert sorted(map(tuple, tri)) == [(-1.0, 0.0), (0.0, 0.0), (0.0, 1.0)]
    ends = sorted(map(tuple, g.seg_points[0]))
    assert np.allclose(ends, [(-0.5, 0.0), (0.0, 0.5)])
    assert g.perimeter == pytest.approx(np.sqrt(2) / 2, rel=1e-14)
    # normal points towards the negative vertex
    assert np.allclose(g.seg_normals[0], [np.sqrt(0.5), -np.sqrt(0.5)])


def test_single_triangle_bulk_polygon():
    g = corner_geometry()
    parts = g.part_points[g.part_fine == g.seg_fine[0]]
    area = np.abs(signed_areas(parts)).sum()
    assert area == pytest.approx(3 / 8, rel=1e-14)
    assert g.bulk_area == pytest.approx(4.0 - 1 / 8, rel=1e-14)
    assert g.classification.tolist() == [CUT, INSIDE]


def test_circle_perimeter_and_area():
    g = circle_geometry(20)
    assert abs(g.perimeter - CIRCLE_LENGTH) <= 2e-3
    assert abs(g.bulk_area - (1 - CIRCLE_AREA)) <= 5e-4
    assert g.is_closed()


def test_no_interface():
    coarse = build_uniform_mesh((0, 1, 0, 1), 5, 5)
    fine = refine_uniform(coarse)
    g = cut_geometry(init_circle(fine, (3.0, 3.0), 0.5), coarse)
    assert len(g.seg_points) == 0
    assert g.bulk_area == pytest.approx(1.0, rel=1e-14)
    assert np.all(g.classification == INSIDE)
    neg = cut_geometry(LevelSetField(fine, -np.ones(fine.n_vertices), 0.0), coarse)
    assert np.all(neg.classification == OUTSIDE) and neg.bulk_area == 0.0


def test_interface_within_one_element():
    coarse = build_uniform_mesh((0, 1, 0, 1), 10, 10)
    fine = refine_uniform(coarse)
    g = cut_geometry(init_circle(fine, (0.05, 0.0), 0.02), coarse)
    assert len(g.cut_elements) == 1
    t = g.cut_elements[0]
    assert np.allclose(coarse.vertices[coarse.triangles[t]].min(axis=0), [0, 0])
    assert not g.is_closed()
    with pytest.raises(GeometryError):
        g.enclosed_area()


def test_classification_coarse_circle():
    g = circle_geometry(10)
    cut = g.cut_elements
    assert len(cut) >= 8
    c = g.coarse.vertices[g.coarse.triangles[cut]].mean(axis=1)
    assert np.all(np.hypot(c[:, 0] - 0.5, c[:, 1] - 0.22) <= 0.17 + 2 * g.coarse.h)
    # brute force: an element is cut iff one of its refined children carries a segment
    expected = np.zeros(g.coarse.n_triangles, bool)
    expected[g.fine.parent[g.seg_fine]] = True
    assert np.array_equal(g.classification == CUT, expected)


def test_staged_pipeline_matches():
    coarse = build_uniform_mesh((0, 1, 0, 1), 8, 8)
    fine = refine_uniform(coarse)
    rho = init_circle(fine, (0.45, 0.55), 0.23)
    g = extract_interface(rho, coarse)
    decompose_bulk(g)
    cls = classify_elements(g)
    assert np.array_equal(cls, cut_geometry(rho, coarse).classification)


def test_requires_refined_mesh():
    m = build_uniform_mesh((0, 1, 0, 1), 4, 4)
    with pytest.raises(GeometryError):
        extract_interface(init_circle(m, (0.5, 0.5), 0.2), m)


@pytest.mark.parametrize("center", [(0.5, 0.22), (0.5, 0.5), (0.4125, 0.6)])
def test_segment_invariants(center):
    g = circle_geometry(16, center=center, radius=0.2)
    h = g.fine.h
    n = g.seg_normals
    assert np.allclose(np.linalg.norm(n, axis=1), 1, atol=1e-12)
    d = g.seg_points[:, 1] - g.seg_points[:, 0]
    assert np.abs(np.einsum("nd,nd->n", n, d)).max() <= 1e-12 * h
    ends = g.seg_points.reshape(-1, 2)
    assert np.abs(interp(g, ends)).max() <= 1e-10 * h
    # endpoints lie on refined edges
    e = g.fine.edges[g.seg_edges.ravel()]
    a, b = g.fine.vertices[e[:, 0]], g.fine.vertices[e[:, 1]]
    cross = (b - a)[:, 0] * (ends - a)[:, 1] - (b - a)[:, 1] * (ends - a)[:, 0]
    assert np.abs(cross).max() <= 1e-14
    # the normal points out of the positive phase
    mid = g.seg_points.mean(axis=1)
    eps = 1e-3 * h
    assert np.all(interp(g, mid + eps * n) < interp(g, mid))
    assert g.is_closed()
    # counter-clockwise orientation around the drop: positive shoelace area
    assert g.enclosed_area() == pytest.approx(np.pi * 0.04, rel=2e-2)


def test_area_partition_flipped_sign():
    g = circle_geometry(12, center=(0.47, 0.51), radius=0.3)
    flipped = cut_geometry(LevelSetField(g.fine, -g.rho, 0.0), g.coarse)
    assert g.bulk_area + flipped.bulk_area == pytest.approx(1.0, rel=1e-10)
    assert g.bulk_area + g.enclosed_area() == pytest.approx(1.0, rel=1e-10)


@settings(max_examples=100, deadline=None)
@given(
    st.floats(0.3, 0.7),
    st.floats(0.3, 0.7),
    st.floats(0.03, 0.28),
)
def test_area_partition_property(cx, cy, r):
    g = circle_geometry(12, center=(cx, cy), radius=r)
    assert g.bulk_area + g.enclosed_area() == pytest.approx(1.0, rel=1e-10)
    pts, wts, el = g.bulk_quadrature(2)
    assert wts.sum() == pytest.approx(g.bulk_area, rel=1e-12)
    assert np.all(g.classification[el] != OUTSIDE)


def test_quadrature_exactness():
    g = circle_geometry(10)
    pts, wts, el = g.bulk_quadrature(2)
    # divergence theorem: int_{bulk} 1 = area, int x over the square minus the drop
    assert wts @ pts[:, 0] == pytest.approx(0.5 - g.enclosed_area() * 0.5, rel=1e-3)
    spts, swts, sel, snrm = g.surface_quadrature(2)
    assert swts.sum() == pytest.approx(g.perimeter, rel=1e-14)
    # a linear field integrates exactly: compare with segment midpoint rule
    mid = g.seg_points.mean(axis=1)
    assert swts @ spts[:, 1] == pytest.approx(g.seg_lengths @ mid[:, 1], rel=1e-13)
    # int_Gamma n ds = 0 for a closed curve
    assert np.abs(swts @ snrm).max() <= 1e-13


def test_second_order_convergence():
    ns = np.array([10, 20, 40, 80])
    per, area = [], []
    for n in ns:
        g = circle_geometry(int(n))
        per.append(abs(g.perimeter - CIRCLE_LENGTH))
        area.append(abs(g.bulk_area - (1 - CIRCLE_AREA)))
    h = 1.0 / ns
    for err in (per, area):
        slope = np.polyfit(np.log(h), np.log(err), 1)[0]
        assert 1.8 <= slope <= 2.2, slope


def test_closest_points():
    g = circle_geometry(20)
    th = np.linspace(0, 2 * np.pi, 50)
    pts = np.column_stack([0.5 + 0.3 * np.cos(th), 0.22 + 0.3 * np.sin(th) * 0.5 + 0.1])
    proj, seg, dist = g.closest_points(pts)
    brute = []
    for p in pts:
        a, b = g.seg_points[:, 0], g.seg_points[:, 1]
        d = b - a
        s = np.clip(np.einsum("nd,nd->n", p - a, d) / np.einsum("nd,nd->n", d, d), 0, 1)
        brute.append(np.linalg.norm(a + s[:, None] * d - p, axis=1).min())
    assert np.allclose(dist, brute, atol=1e-14)
    assert np.allclose(np.linalg.norm(proj - pts, axis=1), dist)


def _brute_faces(mesh, mask):
    owners = {}
    for t, tri in enumerate(mesh.triangles):
        for i in range(3):
            key = tuple(sorted((tri[i], tri[(i + 1) % 3])))
            owners.setdefault(key, []).append(t)
    return {k for k, ts in owners.items() if len(ts) == 2 and mask[ts[0]] and mask[ts[1]]}, owners


def test_slab_sets_single_time():
    g = circle_geometry(20)
    s = build_slab_sets([g], g.coarse)
    assert np.array_equal(s.active_surface, g.classification == CUT)
    assert np.array_equal(s.active_bulk, g.classification != OUTSIDE)
    assert np.all(s.active_bulk[s.active_surface])
    assert s.quadrature_times == [0.0]


def test_face_sets_brute_force():
    g = circle_geometry(20)
    s = build_slab_sets([g], g.coarse)
    m = g.coarse
    faces_S, owners = _brute_faces(m, s.active_surface)
    got_S = {tuple(sorted(e)) for e in m.edges[s.faces_S]}
    assert got_S == faces_S
    faces_B = {
        k
        for k, ts in owners.items()
        if len(ts) == 2 and s.active_bulk[ts].all() and s.active_surface[ts].any()
    }
    assert {tuple(sorted(e)) for e in m.edges[s.faces_B]} == faces_B
    assert set(faces_S) <= faces_B


def test_slab_union_grows(caplog):
    a = circle_geometry(20, center=(0.5, 0.3))
    b = circle_geometry(20, center=(0.5, 0.45), t=0.1)
    with caplog.at_level(logging.WARNING):
        s = build_slab_sets([a, b], a.coarse)
    sa, sb = a.classification == CUT, b.classification == CUT
    assert np.array_equal(s.active_surface, sa | sb)
    assert s.active_surface.sum() > max(sa.sum(), sb.sum())
    assert "interface moved" in caplog.text


def test_slab_sets_errors():
    coarse = build_uniform_mesh((0, 1, 0, 1), 4, 4)
    fine = refine_uniform(coarse)
    empty = cut_geometry(init_circle(fine, (5.0, 5.0), 0.1), coarse)
    with pytest.raises(GeometryError):
        build_slab_sets([empty], coarse)
    with pytest.raises(GeometryError):
        build_slab_sets([], coarse)


def test_zero_nodes_are_perturbed():
    coarse = build_uniform_mesh((0, 1, 0, 1), 4, 4)
    fine = refine_uniform(coarse)
    # the interface runs exactly through a row of vertices
    g = cut_geometry(LevelSetField(fine, fine.vertices[:, 1] - 0.5, 0.0), coarse)
    assert np.all(np.isfinite(g.seg_points))
    assert g.perimeter == pytest.approx(1.0, abs=1e-10)
    assert g.bulk_area == pytest.approx(0.5, abs=1e-10)


def test_interface_csv(tmp_path):
    g = circle_geometry(5)
    g.to_csv(tmp_path / "gamma.csv")
    data = np.loadtxt(tmp_path / "gamma.csv", delimiter=",", skiprows=1)
    assert data.shape == (len(g.seg_points), 7)
