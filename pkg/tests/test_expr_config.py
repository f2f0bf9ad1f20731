import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from obstaclelab.coeffs import eval_matrix, make_test_family
from obstaclelab.config import ConfigError, parse_config
from obstaclelab.expr import Expr, ExprError, parse_number
from obstaclelab.grid import Grid
from obstaclelab.problems import radial_solution

RADIAL = """\
[domain]
bounds = -1 1 -1 1
h = 1/16

[family]
kind = identity

[obstacle]
boundary = max(dist(0,0),0.5)^2/4 - 0.125*log(max(dist(0,0),0.5)/0.5) - 1/16

[outputs]
directory = out
"""


def cfg(text, path="run.cfg"):
    return parse_config(text, path)


def test_expr_basics():
    P = np.array([[1.0, 2.0], [0.5, -1.0]])
    np.testing.assert_allclose(Expr("x^2 + 3*y")(P), [7.0, -2.75])
    np.testing.assert_allclose(Expr("-x + abs(y)")(P), [1.0, 0.5])
    np.testing.assert_allclose(Expr("max(x, y, 0.7)")(P), [2.0, 0.7])
    np.testing.assert_allclose(Expr("dist(1, 2)")(P), [0.0, math.hypot(0.5, 3.0)])
    np.testing.assert_allclose(Expr("exp(log(2)) + sqrt(4) + pi - e")(P), 4 + math.pi - math.e)
    assert Expr("1")(np.zeros((3, 4, 2))).shape == (3, 4)


@pytest.mark.parametrize("text", ["", "x +", "foo(x)", "w", "min(x)", "sqrt(x, y)", "x if y else 1",
                                  "dist(1)", "__import__('os')", "x.real", "[x]", "True"])
def test_expr_rejects(text):
    with pytest.raises(ExprError):
        Expr(text)


def test_parse_number():
    assert parse_number("1/128") == 1 / 128
    assert parse_number("2^-0.5") == pytest.approx(2**-0.5)
    for bad in ("1/0", "log(0)", "sqrt(-1)"):
        with pytest.raises(ExprError):
            parse_number(bad)


_finite = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(a=_finite, b=_finite, c=st.floats(0.1, 10), x=_finite, y=_finite)
def test_expr_matches_python(a, b, c, x, y):
    text = f"({a})*x^2 - ({b})*x*y + sqrt({c}) / (1 + abs(y)) + min(x, y)"
    ref = a * x**2 - b * x * y + math.sqrt(c) / (1 + abs(y)) + min(x, y)
    assert Expr(text)(np.array([[x, y]]))[0] == pytest.approx(ref, rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(["holder", "power_log", "rotating"]),
       pts=st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=20))
def test_family_spectrum_in_ellipticity_range(kind, pts):
    F = make_test_family(kind, bounds=((-1, 1), (-1, 1)))
    ev = np.linalg.eigvalsh(eval_matrix(F, np.array(pts)))
    assert ev.min() >= 1 / F.lam - 1e-12 and ev.max() <= F.lam + 1e-12
    fv = F.f(np.array(pts))
    assert np.all(fv >= F.c0) and np.all(fv <= F.f_sup)


@settings(max_examples=40, deadline=None)
@given(c=st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       x=st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=10))
def test_interpolation_reproduces_affine(c, x):
    g = Grid.from_bounds(((-1, 1), (-1, 1)), 1 / 8)
    P = g.points()
    v = c[0] + c[1] * P[..., 0] + c[2] * P[..., 1]
    x = np.array(x)
    ref = c[0] + c[1] * x[:, 0] + c[2] * x[:, 1]
    np.testing.assert_allclose(g.interpolate(v, x), ref, atol=1e-12)


def test_config_radial_expression():
    rc = cfg(RADIAL)
    assert rc.grid.h == 1 / 16 and rc.grid.shape == (33, 33)
    x = rc.grid.points()[~rc.grid.interior_mask()]
    np.testing.assert_allclose(rc.boundary(x), radial_solution(x), atol=1e-14)
    assert rc.f is None and rc.family_label == "identity"
    assert str(rc.out_dir) == "out"
    assert len(rc.config_hash) == 64


def test_config_hash_ignores_whitespace_and_outputs():
    a = cfg(RADIAL)
    b = cfg(RADIAL.replace("h = 1/16", "h   =   1/16").replace("directory = out", "directory = other"))
    assert a.config_hash == b.config_hash
    c = cfg(RADIAL + "\n[analysis]\nq = 0.5\n")
    assert c.config_hash == a.config_hash and c.analysis_hash != a.analysis_hash
    d = cfg(RADIAL.replace("1/16", "1/32"))
    assert d.config_hash != a.config_hash


def test_config_output_relative_to_file(tmp_path):
    rc = cfg(RADIAL, tmp_path / "sub" / "run.cfg")
    assert rc.out_dir == tmp_path / "sub" / "out"


def test_config_benchmark():
    rc = cfg("[domain]\nbounds = -1 1 -1 1\nh = 1/32\n[obstacle]\nbenchmark = halfspace\n"
             "[analysis]\nc_corr = calibrate\n")
    assert rc.family_label == "benchmark:halfspace" and rc.calibrate


def test_config_obstacle_reduction():
    rc = cfg(RADIAL.replace("[obstacle]\n", "[obstacle]\npsi = 0.1*x\n"))
    assert rc.f is not None
    # a linear obstacle leaves the identity operator's right-hand side unchanged
    np.testing.assert_allclose(rc.f[1:-1, 1:-1], 1.0, atol=1e-12)
    p = np.array([[0.3, 0.2]])
    assert rc.field.f(p)[0] == pytest.approx(1.0, abs=1e-12)


def test_config_expression_family():
    text = RADIAL.replace("kind = identity", "kind = expression\na11 = 2 + x\na22 = 1\nf = 1\n"
                          "modulus_A = holder 1 1\nmodulus_f = zero")
    rc = cfg(text)
    np.testing.assert_allclose(rc.field.A(np.array([[0.5, 0.0]]))[0], [[2.5, 0.0], [0.0, 1.0]])
    assert rc.field.lam >= 3.0
    est = cfg(text.replace("modulus_A = holder 1 1", "modulus_A = estimate"))
    # the estimated oscillation of 2 + x at distance 0.1 is at most 0.1
    assert 0.05 <= float(est.field.modulus_A(0.1)) <= 0.1 + 1e-12


def _err_line(text):
    with pytest.raises(ConfigError) as ei:
        cfg(text)
    return ei.value.line, str(ei.value)


@pytest.mark.parametrize("old,new,line,frag", [
    ("h = 1/16", "h = 0.3", 3, "[domain] h"),
    ("h = 1/16", "h = -1", 3, "must be positive"),
    ("kind = identity", "kind = wobbly", 6, "unknown family"),
    ("kind = identity", "kind = holder\nalpha = 2", 7, "[family] alpha"),
    ("kind = identity", "kind = identity\nalpha = 0.5", 7, "not a parameter"),
    ("boundary = max", "boundary = 1 + foo(x) + max", 9, "unknown function"),
    ("boundary = max", "boundary = -1 + 0*max", 9, "above the obstacle"),
    ("[outputs]", "[outputs]\ncolour = red", 12, "unknown key"),
    ("[outputs]", "[extras]\na = 1\n[outputs]", 11, "unknown section"),
])
def test_config_errors_name_line(old, new, line, frag):
    got, msg = _err_line(RADIAL.replace(old, new))
    assert got == line, msg
    assert frag in msg and msg.startswith(f"run.cfg:{line}:")


def test_config_misc_errors():
    _, msg = _err_line(RADIAL.replace("[domain]", "[domain]\ndim = 3"))
    assert "two-dimensional" in msg
    _, msg = _err_line("[domain]\nbounds = -1 1 -1 1\nh = 1/32\n[obstacle]\nbenchmark = halfspace\n"
                       "boundary = 0\n")
    assert "cannot be combined" in msg
    _, msg = _err_line("[domain]\nbounds = 0 1 0 1\nh = 1/32\n[obstacle]\nbenchmark = halfspace\n")
    assert "lives on" in msg
    line, msg = _err_line(RADIAL.replace("[outputs]", "[solver]\nomega = 2.5\n[outputs]"))
    assert "(0, 2)" in msg and line == 12
    _, msg = _err_line(RADIAL.replace("[outputs]", "[analysis]\nc_corr = -1\n[outputs]"))
    assert "nonnegative" in msg
    _, msg = _err_line("[domain\nh = 1")
    assert msg.startswith("run.cfg")
    _, msg = _err_line(RADIAL.replace("[obstacle]\n", "[obstacle]\npsi = log(x + 1)\n"))
    assert "not finite at the domain corners" in msg
