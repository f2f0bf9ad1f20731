import math

import numpy as np
import pytest

from obstaclelab.coeffs import DomainError, ValidationError
from obstaclelab.grid import Grid, read_grid_field, write_grid_csv, write_grid_field
from obstaclelab.quadrature import ball_quadrature, unit_ball_volume, unit_sphere_area


def test_grid_from_bounds():
    g = Grid.from_bounds(((-1, 1), (0, 1)), 0.25)
    assert g.shape == (9, 5)
    np.testing.assert_allclose(g.node((8, 4)), [1.0, 1.0])
    assert g.interior_mask().sum() == 7 * 3


def test_grid_h_must_divide():
    with pytest.raises(ValidationError, match="divide"):
        Grid.from_bounds(((-1, 1), (-1, 1)), 0.3)
    with pytest.raises(ValidationError):
        Grid.from_bounds(((1, 0), (0, 1)), 0.1)


def test_interpolate_bilinear_exact():
    g = Grid.from_bounds(((-1, 1), (-1, 1)), 0.1)
    P = g.points()
    v = 1 + 2 * P[..., 0] - 3 * P[..., 1] + 0.5 * P[..., 0] * P[..., 1]
    x = np.random.default_rng(0).uniform(-1, 1, (200, 2))
    ref = 1 + 2 * x[:, 0] - 3 * x[:, 1] + 0.5 * x[:, 0] * x[:, 1]
    np.testing.assert_allclose(g.interpolate(v, x), ref, atol=1e-13)
    stacked = np.stack([v, 2 * v], axis=-1)
    np.testing.assert_allclose(g.interpolate(stacked, x), np.stack([ref, 2 * ref], -1), atol=1e-13)
    with pytest.raises(DomainError):
        g.interpolate(v, [[1.2, 0.0]])


def test_grid_field_roundtrip(tmp_path):
    g = Grid.from_bounds(((-1, 1), (0, 2)), 0.5)
    v = np.arange(np.prod(g.shape), dtype=float).reshape(g.shape) / 7
    write_grid_field(tmp_path / "u.grid", g, v, config_hash="abc")
    g2, v2, meta = read_grid_field(tmp_path / "u.grid")
    assert g2 == g
    np.testing.assert_array_equal(v2, v)
    assert meta == {"config_hash": "abc"}
    raw = (tmp_path / "u.grid").read_bytes()
    (tmp_path / "bad.grid").write_bytes(raw[:-8])
    with pytest.raises(ValidationError):
        read_grid_field(tmp_path / "bad.grid")


def test_grid_csv(tmp_path):
    g = Grid.from_bounds(((0, 1), (0, 1)), 0.5)
    write_grid_csv(tmp_path / "g.csv", g, u=np.ones(g.shape))
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "x,y,u" and len(lines) == 10


def test_unit_ball_constants():
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)
    assert unit_sphere_area(2) == pytest.approx(2 * math.pi)
    assert unit_sphere_area(3) == pytest.approx(4 * math.pi)


@pytest.mark.parametrize("dim", [2, 3])
def test_quadrature_moments(dim):
    q = ball_quadrature(dim)
    x = q.ball_nodes
    r2 = np.sum(x**2, axis=-1)
    assert np.sum(q.ball_weights) == pytest.approx(unit_ball_volume(dim), rel=1e-12)
    assert np.sum(q.sphere_weights) == pytest.approx(unit_sphere_area(dim), rel=1e-12)
    # int_{B_1} |x|^2 = |S| / (n + 2)
    assert np.sum(q.ball_weights * r2) == pytest.approx(unit_sphere_area(dim) / (dim + 2), rel=1e-12)
    # int_{S} x_1^4 = 3 |S| / (n (n + 2))
    s = q.sphere_nodes
    assert np.sum(q.sphere_weights * s[:, 0] ** 4) == pytest.approx(3 * unit_sphere_area(dim) / (dim * (dim + 2)),
                                                                    rel=1e-10)
