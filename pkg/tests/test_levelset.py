import numpy as np
import pytest
from scipy.integrate import solve_ivp

from conftest import circle_geometry
from stcutfem.cutgeom import cut_geometry
from stcutfem.levelset import (
    LevelSetAdvector,
    LevelSetField,
    VelocityField,
    advect_step,
    analytic_levelset,
    constant_field,
    ex2_field,
    ex3_field,
    ex4_field,
    init_circle,
    rotation_field,
    streamline_tau,
)
from stcutfem.mesh import build_uniform_mesh, locate_point, refine_uniform

EX1_AREA = np.pi * 0.17**2


def test_init_circle_values():
    m = build_uniform_mesh((0, 1, 0, 1), 50, 50)
    rho = init_circle(m, (0.5, 0.22), 0.17)
    tri, lam = locate_point(m, [0.5, 0.22])
    assert lam[0] @ rho.values[m.triangles[tri[0]]] == pytest.approx(-0.17, abs=1e-12)
    on = np.array([[0.5 + 0.17 * np.cos(a), 0.22 + 0.17 * np.sin(a)] for a in np.linspace(0, 6, 7)])
    d = np.hypot(on[:, 0] - 0.5, on[:, 1] - 0.22) - 0.17
    assert np.allclose(d, 0, atol=1e-15)


def test_init_circle_rejects_radius():
    m = build_uniform_mesh((0, 1, 0, 1), 2, 2)
    with pytest.raises(ValueError):
        init_circle(m, (0.5, 0.5), 0.0)


def test_levelset_field_invariants():
    m = build_uniform_mesh((0, 1, 0, 1), 2, 2)
    with pytest.raises(ValueError):
        LevelSetField(m, np.zeros(3), 0.0)
    v = np.zeros(m.n_vertices)
    v[0] = np.nan
    with pytest.raises(ValueError):
        LevelSetField(m, v, 0.0)


def test_enclosed_area_of_discrete_circle():
    g = circle_geometry(20)  # refined spacing 1/40
    assert abs(g.enclosed_area() - EX1_AREA) <= 5e-4


@pytest.mark.parametrize(
    "field", [rotation_field(), constant_field(1.0, -0.5), ex2_field(), ex3_field(), ex4_field()]
)
def test_velocity_fields_divergence_free(field, rng):
    x, y = rng.uniform(0, 1, (2, 50))
    for t in (0.0, 0.3, 1.7):
        j = field.jac(t, x, y)
        assert np.allclose(j[0] + j[3], 0, atol=1e-14)
        # jacobian agrees with central differences
        e = 1e-6
        bxp, byp = field(t, x + e, y)
        bxm, bym = field(t, x - e, y)
        assert np.allclose((bxp - bxm) / (2 * e), j[0], atol=1e-6)
        assert np.allclose((byp - bym) / (2 * e), j[2], atol=1e-6)


def test_zero_velocity_is_identity():
    m = build_uniform_mesh((0, 1, 0, 1), 16, 16)
    rho = init_circle(m, (0.4, 0.6), 0.2)
    out = advect_step(rho, constant_field(0.0, 0.0), 0.0, 0.05)
    assert np.linalg.norm(out.values - rho.values) <= 1e-10 * np.linalg.norm(rho.values)
    assert out.time == pytest.approx(0.05)


def test_linear_field_transported_exactly():
    m = build_uniform_mesh((0, 1, 0, 1), 12, 12)
    rho = LevelSetField(m, m.vertices[:, 0] - 0.3, 0.0)
    k = 0.04
    out = advect_step(rho, constant_field(1.0, 0.0), 0.0, k)
    assert np.allclose(out.values, m.vertices[:, 0] - 0.3 - k, atol=1e-10, rtol=0)


def test_negative_step_rejected():
    m = build_uniform_mesh((0, 1, 0, 1), 4, 4)
    with pytest.raises(ValueError):
        advect_step(init_circle(m, (0.5, 0.5), 0.2), rotation_field(), 0.0, -0.1)


def test_streamline_tau_closed_form():
    m = build_uniform_mesh((0, 1, 0, 1), 6, 6)
    beta = rotation_field()
    k, h = 0.01, m.h
    c = m.vertices[m.triangles].mean(axis=1)
    bx, by = beta(0.0, c[:, 0], c[:, 1])
    tau = streamline_tau(k, np.hypot(bx, by), h)
    direct = 2 * (k**-2 + (bx**2 + by**2) * h**-2) ** -0.5
    assert np.allclose(tau, direct, rtol=1e-14)
    assert streamline_tau(k, 0.0, h) == pytest.approx(2 * k)


def test_rotation_returns_circle_to_opposite_side():
    coarse = build_uniform_mesh((0, 1, 0, 1), 20, 20)
    fine = refine_uniform(coarse)
    h = fine.h
    k = 0.5 * h
    adv = LevelSetAdvector(fine, rotation_field())
    rho = init_circle(fine, (0.5, 0.22), 0.17)
    for _ in range(int(round(1.0 / k))):
        rho = adv.step(rho, k)
    assert rho.time == pytest.approx(1.0)
    g = cut_geometry(rho, coarse)
    mid = g.seg_points.mean(axis=1)
    c = (mid * g.seg_lengths[:, None]).sum(axis=0) / g.perimeter
    assert np.hypot(c[0] - 0.5, c[1] - 0.78) <= 2 * h


def test_analytic_ex1_matches_init_circle():
    m = build_uniform_mesh((0, 1, 0, 1), 10, 10)
    a = analytic_levelset(1, m, 0.0)
    b = init_circle(m, (0.5, 0.22), 0.17)
    assert np.allclose(a.values, b.values, rtol=0, atol=1e-15)
    a = analytic_levelset(1, m, 0.5)
    v = m.vertices
    assert np.allclose(a.values, np.hypot(v[:, 0] - 0.78, v[:, 1] - 0.5) - 0.17, atol=1e-14)


def test_analytic_unsupported():
    m = build_uniform_mesh((0, 1, 0, 1), 2, 2)
    with pytest.raises(ValueError):
        analytic_levelset(4, m, 0.1)


def test_analytic_ex2_against_markers():
    coarse = build_uniform_mesh((-2.0, 6.4, -2.0, 2.0), 147, 70)
    fine = refine_uniform(coarse)
    t = 2.0
    g = cut_geometry(analytic_levelset(2, fine, t), coarse)
    th = np.linspace(0, 2 * np.pi, 512, endpoint=False)
    y0 = np.column_stack([np.cos(th), np.sin(th)]).ravel()
    beta = ex2_field()

    def rhs(_, z):
        bx, by = beta(0.0, z[0::2], z[1::2])
        return np.column_stack([bx, by]).ravel()

    sol = solve_ivp(rhs, (0, t), y0, method="DOP853", rtol=1e-12, atol=1e-12)
    markers = sol.y[:, -1].reshape(-1, 2)
    _, _, dist = g.closest_points(markers)
    assert dist.max() <= coarse.h**2


def test_geometry_approximation_assumptions():
    dist_c, angle_c = [], []
    for n in (10, 20, 40, 80):
        g = circle_geometry(n)
        pts, _, _, normals = g.surface_quadrature(2)
        r = np.hypot(pts[:, 0] - 0.5, pts[:, 1] - 0.22)
        exact = -np.column_stack([pts[:, 0] - 0.5, pts[:, 1] - 0.22]) / r[:, None]
        angle = np.arccos(np.clip(np.einsum("nd,nd->n", exact, normals), -1, 1))
        h = g.coarse.h
        dist_c.append(np.abs(r - 0.17).max() / h**2)
        angle_c.append(angle.max() / h)
    # constants bounded and not growing under refinement
    assert max(dist_c) <= 0.5 and max(angle_c) <= 3.0
    assert dist_c[-1] <= 1.2 * dist_c[0] and angle_c[-1] <= 1.2 * angle_c[0]


def test_gradient_norm_diagnostic():
    m = build_uniform_mesh((0, 1, 0, 1), 20, 20)
    plane = LevelSetField(m, 0.6 * m.vertices[:, 0] + 0.8 * m.vertices[:, 1], 0.0)
    assert np.allclose(plane.gradient_norm_range(), 1.0, atol=1e-12)
    lo, hi = init_circle(m, (0.5, 0.5), 0.2).gradient_norm_range()
    assert lo < 1.0 < hi


def test_csv_export(tmp_path):
    m = build_uniform_mesh((0, 1, 0, 1), 2, 2)
    init_circle(m, (0.5, 0.5), 0.2).to_csv(tmp_path / "rho.csv")
    data = np.loadtxt(tmp_path / "rho.csv", delimiter=",", skiprows=1)
    assert data.shape == (9, 4)
    assert (tmp_path / "rho.csv").read_text().startswith("vertex,x,y,rho")


def test_custom_field_is_callable():
    f = VelocityField(value=lambda t, x, y: (1.0, 2.0), jacobian=lambda t, x, y: (0, 0, 0, 0))
    bx, by = f(0.0, np.zeros(3), np.zeros(3))
    assert bx.shape == (3,) and np.all(by == 2.0)
