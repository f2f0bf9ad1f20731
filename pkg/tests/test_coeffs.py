import math

import numpy as np
import pytest

from obstaclelab.coeffs import (CoefficientField, DomainError, HolderModulus, PowerLogModulus, TabulatedModulus,
                                ValidationError, dini_class_consistent, dini_integral, eval_matrix, eval_scalar,
                                iterated_dini_integral, load_tabulated, make_test_family, modulus_estimate,
                                save_tabulated, validate_field)

B1 = ((-1.0, 1.0), (-1.0, 1.0))


def test_identity_matrix():
    F = make_test_family("identity", bounds=((0, 1), (0, 1)))
    np.testing.assert_array_equal(eval_matrix(F, [0.3, 0.7]), np.eye(2))
    assert eval_scalar(F, [0.3, 0.7]) == 1.0
    assert F.lam == 1.0
    assert F.modulus(np.array([0.1, 0.5])).max() == 0.0


def test_holder_direct_substitution():
    # (1 + |x|^{1/2}) Id at x = (1, 0) is 2 Id
    F = make_test_family("holder", bounds=B1, center=(0, 0), alpha=0.5, amplitude=1.0)
    np.testing.assert_allclose(eval_matrix(F, [1.0, 0.0]), 2 * np.eye(2), rtol=0, atol=1e-15)


def test_rotating_spectrum():
    F = make_test_family("rotating", bounds=B1, big=2.0, small=0.5)
    x = np.random.default_rng(1).uniform(-1, 1, (500, 2))
    ev = np.linalg.eigvalsh(F.A(x))
    np.testing.assert_allclose(ev[:, 0], 0.5, atol=1e-13)
    np.testing.assert_allclose(ev[:, 1], 2.0, atol=1e-13)


def test_outside_domain():
    F = make_test_family("identity", bounds=B1)
    with pytest.raises(DomainError):
        eval_matrix(F, [1.5, 0.0])
    with pytest.raises(DomainError):
        F.f(np.array([[0.0, -1.01]]))


@pytest.mark.parametrize("kind,params", [
    ("holder", {"alpha": 1.5}),
    ("holder", {"alpha": 0.0}),
    ("holder", {"amplitude": -1.0}),
    ("power_log", {"p": -1.0}),
    ("rotating", {"big": 0.5, "small": 2.0}),
    ("constant", {"matrix": [[1.0, 2.0], [2.0, 1.0]]}),
    ("identity", {"alpha": 0.5}),
    ("nonsense", {}),
])
def test_invalid_params(kind, params):
    with pytest.raises(ValidationError):
        make_test_family(kind, bounds=B1, **params)


def test_dini_integral_holder():
    # int_0^1 t^{-1/2} dt = 2
    assert dini_integral(HolderModulus(0.5), 1.0) == pytest.approx(2.0, rel=1e-9)


def test_dini_integral_log_squared():
    # antiderivative of 1/(t log^2(1/t)) is 1/log(1/t): value 1/2 at T = e^-2
    w = PowerLogModulus(2.0)
    assert dini_integral(w, math.exp(-2.0)) == pytest.approx(0.5, rel=1e-6)
    assert dini_integral(w, math.exp(-2.0), a=1) == math.inf


def test_dini_integral_log_cubed_double():
    # log^{-3}: weight |log t| gives int s^{-2} ds = 1/S
    w = PowerLogModulus(3.0)
    assert dini_integral(w, math.exp(-2.0), a=1) == pytest.approx(0.5, rel=1e-6)


def test_iterated_dini_holder():
    # int_0^r t^{a-1} log(r/t) dt = r^a / a^2
    r = 0.3
    assert iterated_dini_integral(HolderModulus(0.5), r) == pytest.approx(r**0.5 / 0.25, rel=1e-8)


def test_tabulated_nonmonotone_rejected():
    with pytest.raises(ValidationError):
        TabulatedModulus([0.1, 0.2, 0.3], [0.1, 0.05, 0.2])
    with pytest.raises(ValidationError):
        TabulatedModulus([0.2, 0.1], [0.0, 0.1])


def test_tabulated_roundtrip(tmp_path):
    m = TabulatedModulus([1e-3, 1e-2, 1e-1, 1.0], [1e-3**0.5, 0.1, 1e-1**0.5, 1.0])
    save_tabulated(tmp_path / "w.txt", m)
    back = load_tabulated(tmp_path / "w.txt")
    np.testing.assert_array_equal(back.t, m.t)
    np.testing.assert_array_equal(back.omega, m.omega)
    # power-law continuation below the first node
    assert back(1e-5) == pytest.approx(1e-5**0.5, rel=1e-10)


@pytest.mark.parametrize("kind,params,cls", [
    ("holder", {"alpha": 0.5, "amplitude": 0.25}, "hoelder"),
    ("power_log", {"p": 2.0, "f_amplitude": 1.0}, "dini"),
    ("power_log", {"p": 3.0, "f_amplitude": 1.0}, "double_dini(1)"),
])
def test_family_dini_classes(kind, params, cls):
    F = make_test_family(kind, bounds=B1, **params)
    assert F.modulus.dini_class == cls
    assert dini_class_consistent(F.modulus)
    rep = validate_field(F, samples=2000)
    assert rep["ok"], rep


def test_holder_family_is_double_dini_for_every_order():
    F = make_test_family("holder", bounds=B1, alpha=0.5, amplitude=0.25)
    for a in range(4):
        assert F.modulus.is_double_dini(a)
        assert np.isfinite(dini_integral(F.modulus, 0.5, a=a))


def test_power_log_families_double_dini():
    p2 = make_test_family("power_log", bounds=B1, p=2.0).modulus
    p3 = make_test_family("power_log", bounds=B1, p=3.0).modulus
    assert p2.is_dini() and not p2.is_double_dini(1)
    assert p3.is_double_dini(1)
    assert np.isfinite(dini_integral(p3, 0.5, a=1))
    assert dini_integral(p2, 0.5, a=1) == math.inf


def test_holder_modulus_declared():
    F = make_test_family("holder", bounds=B1, center=(0, 0), alpha=0.5, amplitude=0.25)
    t = np.array([0.01, 0.1, 0.5])
    np.testing.assert_allclose(F.modulus_A(t), 0.25 * t**0.5)


def test_modulus_estimate_identity_zero():
    wa, wf = modulus_estimate(make_test_family("identity", bounds=B1), [0.01, 0.1, 1.0])
    assert np.all(wa.omega == 0) and np.all(wf.omega == 0)


def test_modulus_estimate_lipschitz():
    # A = (1 + x_1) Id on [0,1]^2: oscillation at distance <= t is exactly t
    def matrix(x):
        x = np.asarray(x)
        return (1 + x[..., 0])[..., None, None] * np.eye(2)
    F = CoefficientField(dim=2, matrix_eval=matrix, scalar_eval=lambda x: np.ones(np.shape(x)[:-1]), lam=2.0,
                         c0=0.99, f_sup=1.0, modulus_A=HolderModulus(1.0), modulus_f=HolderModulus(1.0, 0.0),
                         bounds=((0.0, 1.0), (0.0, 1.0)))
    wa, _ = modulus_estimate(F, [0.1], budget=4000)
    assert 0.09 <= wa.omega[0] <= 0.1 + 1e-12


def test_modulus_estimate_below_declared_holder():
    F = make_test_family("holder", bounds=B1, center=(0, 0), alpha=0.5, amplitude=0.25)
    t = np.geomspace(1e-3, 0.5, 8)
    declared = F.modulus_A(t)
    for budget in (1000, 8000):
        wa, _ = modulus_estimate(F, t, budget=budget)
        ratio = wa.omega / declared
        assert np.all(ratio <= 1 + 1e-12)
    assert ratio.min() >= 0.95


def test_modulus_estimate_validation():
    F = make_test_family("identity", bounds=B1)
    with pytest.raises(ValidationError):
        modulus_estimate(F, [0.2, 0.1])
    with pytest.raises(ValidationError):
        modulus_estimate(F, [0.1], budget=10)
