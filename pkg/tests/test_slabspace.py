import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import circle_geometry
from stcutfem.cutgeom import CUT, OUTSIDE, GeometryError, SlabSets, build_slab_sets
from stcutfem.slabspace import OutOfPatchError, SlabFunction, Trace, build_slab_space, extend_to
from stcutfem.mesh import build_uniform_mesh


def space_for(n=20, t0=0.0, t1=0.1, **kw):
    g = circle_geometry(n)
    sets = build_slab_sets([g], g.coarse)
    return build_slab_space(sets, g.coarse, t0, t1, **kw), g


def test_two_triangle_patch():
    m = build_uniform_mesh((0, 1, 0, 1), 1, 1)
    on = np.ones(2, bool)
    sets = SlabSets(on, on, np.array([], int), np.array([], int), [0.0])
    s = build_slab_space(sets, m, 0.0, 1.0)
    assert s.NB == s.NS == 4
    assert s.size == 17


def test_sizes_match_classification():
    g = circle_geometry(25, center=(0.5, 0.5), radius=0.3)
    sets = build_slab_sets([g], g.coarse)
    s = build_slab_space(sets, g.coarse, 0.0, 0.1)
    tri = g.coarse.triangles
    nb = {int(v) for t in np.flatnonzero(g.classification != OUTSIDE) for v in tri[t]}
    ns = {int(v) for t in np.flatnonzero(g.classification == CUT) for v in tri[t]}
    assert (s.NB, s.NS) == (len(nb), len(ns))
    assert s.size == 2 * (len(nb) + len(ns)) + 1
    assert list(s.bulk_nodes) == sorted(nb)
    # every vertex of an active element has exactly one dof
    assert np.all(s.bulk_map[tri[sets.active_bulk]] >= 0)
    assert np.all(s.surf_map[tri[sets.active_surface]] >= 0)
    assert len(np.unique(s.bulk_map[s.bulk_map >= 0])) == s.NB


def test_without_multiplier_and_bulk():
    s, _ = space_for(with_multiplier=False, bulk=False)
    assert s.NB == 0 and s.size == 2 * s.NS
    assert s.slices()[-1] is None


def test_deterministic_numbering():
    a, _ = space_for()
    b, _ = space_for(t0=0.1, t1=0.2)
    assert np.array_equal(a.bulk_map, b.bulk_map)
    assert np.array_equal(a.surf_map, b.surf_map)


def test_empty_surface_patch():
    m = build_uniform_mesh((0, 1, 0, 1), 2, 2)
    on = np.ones(m.n_triangles, bool)
    sets = SlabSets(on, ~on, np.array([], int), np.array([], int), [0.0])
    with pytest.raises(GeometryError):
        build_slab_space(sets, m, 0.0, 1.0)


def test_slices_cover_layout():
    s, _ = space_for()
    b0, s0, b1, s1, lam = s.slices()
    idx = np.concatenate([np.arange(s.size)[x] for x in (b0, s0, b1, s1)])
    assert np.array_equal(idx, np.arange(s.size - 1)) and lam == s.size - 1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_trace_identities(seed):
    s, g = space_for(10)
    c = np.random.default_rng(seed).normal(size=s.size)
    f = SlabFunction(s, c)
    uB0, uS0, uB1, uS1, _ = f.blocks()
    assert np.allclose(f.nodal("bulk", s.t0)[s.bulk_nodes], uB0, atol=1e-14, rtol=0)
    assert np.allclose(f.nodal("bulk", s.t1)[s.bulk_nodes], uB0 + uB1, atol=1e-14, rtol=0)
    assert np.allclose(f.nodal("surface", s.t1)[s.surf_nodes], uS0 + uS1, atol=1e-14, rtol=0)
    pts = g.surface_quadrature(2)[0][:20]
    tm = 0.5 * (s.t0 + s.t1)
    for field in ("bulk", "surface"):
        mid = f.evaluate(field, tm, pts)
        ends = 0.5 * (f.evaluate(field, s.t0, pts) + f.evaluate(field, s.t1, pts))
        assert np.allclose(mid, ends, atol=1e-14, rtol=0)


def test_evaluate_constants():
    s, g = space_for()
    c = np.zeros(s.size)
    b0, s0, b1, s1, _ = s.slices()
    c[b0], c[b1] = 2.0, 0.0
    c[s0], c[s1] = 1.5, -0.5
    f = SlabFunction(s, c)
    pts = g.surface_quadrature(2)[0]
    for t in (s.t0, 0.03, s.t1):
        assert np.allclose(f.evaluate("bulk", t, pts), 2.0)
    assert np.allclose(f.evaluate("surface", s.t1, pts), 1.0)
    tr = f.trace_end()
    assert tr.time == s.t1 and np.allclose(tr.surface[s.surf_nodes], 1.0)


def test_evaluate_errors():
    s, _ = space_for()
    f = SlabFunction(s, np.zeros(s.size))
    with pytest.raises(OutOfPatchError):
        f.evaluate("surface", s.t0, [0.95, 0.95])
    with pytest.raises(ValueError):
        f.evaluate("surface", s.t1 + 1.0, [0.5, 0.05])
    with pytest.raises(ValueError):
        f.nodal("pressure", s.t0)


def test_trace_extension_reproduces_linear_fields():
    s, g = space_for()
    m = g.coarse
    lin = 1.0 + m.vertices[:, 0] - 2 * m.vertices[:, 1]
    vals = np.full(m.n_vertices, np.nan)
    vals[s.surf_nodes] = lin[s.surf_nodes]
    tr = Trace(vals, vals, 0.1)
    assert np.array_equal(tr.at_nodes("surface", s.surf_nodes, m), lin[s.surf_nodes])
    # new vertices take values from the nearest patch edge, so they stay within the patch range
    new = np.setdiff1d(s.bulk_nodes, s.surf_nodes)
    ext = tr.at_nodes("bulk", new, m)
    assert np.all(np.isfinite(ext))
    assert lin[s.surf_nodes].min() - 1e-12 <= ext.min() and ext.max() <= lin[s.surf_nodes].max() + 1e-12


def test_extend_requires_data():
    m = build_uniform_mesh((0, 1, 0, 1), 2, 2)
    with pytest.raises(OutOfPatchError):
        extend_to(np.full(m.n_vertices, np.nan), m, np.zeros((1, 2)))
