import numpy as np
import pytest

from helpers import halfspace_grad, halfspace_u, interface, quad_form, solved
from obstaclelab.coeffs import DomainError, ValidationError, make_test_family
from obstaclelab.geometry import (contact_set, dump_sample_csv, free_boundary, identity_map, matrix_sqrt_spd,
                                  normalization_map, rescale, sample_function, two_hom_extension)
from obstaclelab.grid import Grid
from obstaclelab.quadrature import ball_quadrature
from obstaclelab.solver import solve_obstacle

BOX = ((-1.0, 1.0), (-1.0, 1.0))


def test_contact_set_zero():
    g = Grid.from_bounds(BOX, 1 / 8)
    sol = solve_obstacle(g, make_test_family("identity", bounds=BOX), 0.0)
    assert contact_set(sol).all()
    assert len(free_boundary(sol)) == 0


def test_contact_set_halfspace():
    _, sol = solved("halfspace", 32)
    x = sol.grid.points()[..., 0]
    mask = contact_set(sol)
    # {x_1 <= sqrt(2 eps_c)} with eps_c = h^2
    np.testing.assert_array_equal(mask, x <= np.sqrt(2) * sol.grid.h + 1e-12)


def test_contact_set_radial():
    _, sol = solved("radial", 64)
    s = np.linalg.norm(sol.grid.points(), axis=-1)
    h = sol.grid.h
    m = contact_set(sol)
    # u ~ t^2 / 2 off the interface, so {u <= h^2} extends sqrt(2) h outward
    assert np.all(m[s < 0.5 - h])
    assert not np.any(m[s > 0.5 + 1.5 * h])


def test_free_boundary_halfspace():
    _, sol = solved("halfspace", 32)
    fb = interface("halfspace", 32)
    assert len(fb) > 0
    assert np.max(np.abs(fb.points[:, 0])) <= 1.5 * sol.grid.h


def test_free_boundary_radial():
    _, sol = solved("radial", 64)
    fb = interface("radial", 64)
    err = np.abs(np.linalg.norm(fb.points, axis=1) - 0.5)
    assert err.max() <= 1.5 * sol.grid.h
    # all points lie strictly inside the grid
    assert np.all(sol.grid.distance_to_boundary(fb.points) > 0)
    assert len(fb.grid_cells) > 0


def test_free_boundary_csv(tmp_path):
    fb = interface("halfspace", 32)
    fb.to_csv(tmp_path / "fb.csv", comment="note")
    lines = (tmp_path / "fb.csv").read_text().splitlines()
    assert lines[0] == "# note" and lines[1] == "x,y,i0,i1,axis"
    assert len(lines) == len(fb) + 2


def test_matrix_sqrt():
    np.testing.assert_array_equal(matrix_sqrt_spd(np.eye(2)), np.eye(2))
    np.testing.assert_allclose(matrix_sqrt_spd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-15)
    rng = np.random.default_rng(0)
    for _ in range(20):
        B = rng.normal(size=(3, 3))
        M = B @ B.T + 0.1 * np.eye(3)
        S = matrix_sqrt_spd(M)
        assert np.linalg.norm(S @ S - M) / np.linalg.norm(M) <= 1e-12
        np.testing.assert_allclose(S, S.T, atol=1e-14)
    with pytest.raises(ValidationError):
        matrix_sqrt_spd(np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(ValidationError):
        matrix_sqrt_spd(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_normalization_identity():
    m = normalization_map(make_test_family("identity", bounds=BOX), [0.1, 0.2])
    np.testing.assert_array_equal(m.L, np.eye(2))


def test_normalization_constant():
    F = make_test_family("constant", bounds=BOX, matrix=[[4.0, 0.0], [0.0, 1.0]], f=4.0)
    m = normalization_map(F, [0.0, 0.0])
    np.testing.assert_allclose(m.L, np.diag([1.0, 0.5]), atol=1e-15)
    assert np.linalg.det(m.L) == pytest.approx(4.0 ** (-1) * np.sqrt(np.linalg.det(F.A([0.0, 0.0]))))


def test_normalization_holder_off_center():
    F = make_test_family("holder", bounds=BOX, center=(0, 0), alpha=0.5, amplitude=0.5, f_amplitude=0.3)
    m = normalization_map(F, [0.3, -0.2])
    np.testing.assert_allclose(m.C_field(np.zeros(2)), np.eye(2), atol=1e-12)
    assert m.f_norm(np.zeros(2)) == pytest.approx(1.0, abs=1e-12)


def test_rescale_two_homogeneous_independent_of_r():
    x0 = np.array([0.1, -0.1])
    u, g = quad_form([[1.0, 0.0], [0.0, 0.0]])
    vals = [sample_function(lambda x: u(x - x0), lambda x: g(x - x0), x0, r).u_ball for r in (0.05, 0.1, 0.3)]
    np.testing.assert_allclose(vals[0], vals[1], atol=1e-13)
    np.testing.assert_allclose(vals[0], vals[2], atol=1e-13)


def test_rescale_halfspace_grid():
    _, sol = solved("halfspace", 32)
    q = ball_quadrature(2)
    for r in (0.25, 0.5):
        s = rescale(sol, [0.0, 0.0], r, None, q)
        # bilinear interpolation of a piecewise quadratic is exact up to O(h^2 / r^2)
        np.testing.assert_allclose(s.u_sphere, halfspace_u(q.sphere_nodes), atol=(sol.grid.h / r) ** 2)


def test_rescale_domain_error_names_radius():
    _, sol = solved("halfspace", 32)
    with pytest.raises(DomainError, match="maximal admissible r"):
        rescale(sol, [0.5, 0.0], 0.6)


def test_rescale_trusted_flag():
    _, sol = solved("halfspace", 32)
    assert not rescale(sol, [0.0, 0.0], 4 * sol.grid.h).trusted
    assert rescale(sol, [0.0, 0.0], 8 * sol.grid.h).trusted


def test_rescale_radial_blowup_converges_to_halfspace():
    _, sol = solved("radial", 64)
    x0 = np.array([0.5, 0.0])
    q = ball_quadrature(2)
    errs = []
    for r in (0.4, 0.2, 0.1):
        s = rescale(sol, x0, r, None, q)
        errs.append(np.max(np.abs(s.u_sphere - halfspace_u(q.sphere_nodes))))
    assert errs[2] < errs[1] < errs[0]


def test_rescale_normalized_chain_rule():
    F = make_test_family("constant", bounds=BOX, matrix=[[4.0, 0.0], [0.0, 1.0]], f=4.0)
    m = normalization_map(F, [0.0, 0.0])
    q = ball_quadrature(2)
    u, g = quad_form([[0.3, 0.1], [0.1, 0.2]])
    s = sample_function(u, g, [0.0, 0.0], 0.2, L=m.L, quad=q)
    y = q.ball_nodes
    x = 0.2 * y @ m.L.T
    np.testing.assert_allclose(s.u_ball, u(x) / 0.04, rtol=1e-12)
    np.testing.assert_allclose(s.grad_ball, g(x) @ m.L / 0.2, rtol=1e-12)


def test_two_hom_extension_constant_trace():
    q = ball_quadrature(2)
    s = sample_function(lambda x: np.full(x.shape[:-1], 0.7), lambda x: np.zeros_like(x), [0, 0], 1.0, quad=q)
    w = two_hom_extension(s)
    x = q.ball_nodes
    np.testing.assert_allclose(w.u_ball, 0.7 * np.sum(x**2, axis=-1), atol=1e-14)
    np.testing.assert_allclose(w.grad_ball, 1.4 * x, atol=1e-14)


def test_two_hom_extension_fixed_point():
    q = ball_quadrature(2)
    u, g = quad_form([[0.3, 0.1], [0.1, 0.2]])
    s = sample_function(u, g, [0, 0], 1.0, quad=q)
    w = two_hom_extension(s)
    np.testing.assert_allclose(w.u_ball, s.u_ball, atol=1e-14)
    np.testing.assert_allclose(w.grad_ball, s.grad_ball, atol=1e-14)
    h = two_hom_extension(sample_function(halfspace_u, halfspace_grad, [0, 0], 1.0, quad=q))
    np.testing.assert_allclose(h.u_ball, halfspace_u(q.ball_nodes), atol=1e-14)


def test_identity_map_and_dump(tmp_path):
    m = identity_map([0.0, 0.0])
    assert m.field is None and m.sigma_min == 1.0
    s = sample_function(halfspace_u, halfspace_grad, [0, 0], 0.5, quad=ball_quadrature(2, 16, 4))
    dump_sample_csv(s, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "kind,x0,x1,weight,u,g0,g1"
    assert len(lines) == 1 + 16 * 4 + 16


FAMILIES = [
    ("holder", dict(alpha=0.5, amplitude=0.5, f_amplitude=0.3)),
    ("power_log", dict(p=2.0, amplitude=0.4, f_amplitude=0.5)),
    ("power_log", dict(p=3.0, amplitude=0.2, f_amplitude=1.0, profile="planar")),
    ("rotating", dict(big=2.0, small=0.5)),
]


@pytest.mark.parametrize("kind,params", FAMILIES)
def test_normalization_sandwich(kind, params):
    F = make_test_family(kind, bounds=BOX, center=(0.05, -0.1), **params)
    rng = np.random.default_rng(11)
    lam, c0, fs = F.lam, F.c0, F.f_sup
    wbar_A = lambda t: (2 * lam) ** 2 * F.modulus_A(np.sqrt(2 * lam / c0) * t)
    wbar_f = lambda t: F.modulus_f(np.sqrt(2 * lam / c0) * t) / c0
    for x0 in rng.uniform(-0.6, 0.6, (5, 2)):
        m = normalization_map(F, x0)
        np.testing.assert_allclose(m.C_field(np.zeros(2)), np.eye(2), atol=1e-12)
        assert abs(m.f_norm(np.zeros(2)) - 1.0) <= 1e-12
        # y with x0 + L y inside the box
        y = rng.uniform(-1, 1, (100, 2)) * 0.35 / m.norm
        y2 = rng.uniform(-1, 1, (100, 2)) * 0.35 / m.norm
        ev = np.linalg.eigvalsh(m.C_field(y))
        assert ev.min() >= lam**-2 - 1e-12 and ev.max() <= lam**2 + 1e-12
        fn = m.f_norm(y)
        assert np.all(fn > c0 / fs) and np.all(fn <= fs / c0)
        d = np.linalg.norm(y - y2, axis=1)
        dC = np.linalg.norm(m.C_field(y) - m.C_field(y2), ord=2, axis=(1, 2))
        assert np.all(dC <= wbar_A(d) + 1e-12)
        assert np.all(np.abs(m.f_norm(y) - m.f_norm(y2)) <= wbar_f(d) + 1e-12)
        np.testing.assert_allclose(m.modulus_bar()(d), wbar_A(d) + wbar_f(d), rtol=1e-12)
