import json

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lagquant.fields import (Bump, Deriv, DimensionError, FiberedFunction, Gaussian, PolyGaussian,
                             Trig, constant, cos_theta, evaluate, jet, multiply, poisson_bracket,
                             pullback, real_from_modes, single_mode)
from lagquant.jets import JetOrderError, multi_indices

from conftest import random_plane_function

KINDS = {
    "gaussian": lambda n: Gaussian(np.linspace(-0.2, 0.3, n), 2.5, 0.7 - 0.4j),
    "poly-gaussian": lambda n: PolyGaussian(np.linspace(0.1, -0.1, n), 1.5,
                                            [((1,) * n, 1.0), ((0,) * n, -0.5j)]),
    "bump": lambda n: Bump(np.zeros(n), 1.3, 2.0),
    "trig": lambda n: Trig([(tuple([1.0] * n), 0.5), (tuple([-2.0] + [0.0] * (n - 1)), 0.3j)], n),
}


def _sample(kind, n, rng, npts):
    if kind == "bump":
        d = rng.normal(size=(npts, n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return d * rng.uniform(0.0, 0.8 * 1.3, (npts, 1))
    return rng.uniform(-1.0, 1.0, (npts, n))


# ---- evaluate -------------------------------------------------------------
def test_evaluate_bump_mode_zero():
    f = pullback(Bump([0.0], 1.0))
    for th in (0.0, 1.3, -2.0):
        assert evaluate(f, [0.0], [th]) == pytest.approx(1.0, abs=1e-15)


def test_evaluate_cos_theta_at_zero():
    g = Gaussian([0.2], 3.0)
    f = cos_theta(g)
    assert set(f.modes) == {(1,), (-1,)}
    assert evaluate(f, [0.5], [0.0]) == pytest.approx(g.value([[0.5]])[0], abs=1e-15)


def test_evaluate_matches_resummation(rng):
    f = FiberedFunction(1, {(m,): Gaussian([rng.normal()], rng.uniform(1, 3), complex(*rng.normal(size=2)))
                            for m in (-1, 0, 2)})
    for _ in range(20):
        x, th = rng.normal(), rng.uniform(0, 2 * np.pi)
        want = 0j
        for (m,), c in f.modes.items():
            want += c.amp * np.exp(-c.decay * (x - c.center[0]) ** 2) * np.exp(1j * m * th)
        assert abs(evaluate(f, [x], [th]) - want) <= 1e-12


def test_evaluate_dimension_mismatch():
    f = pullback(Gaussian([0.0, 0.0], 1.0))
    with pytest.raises(DimensionError):
        f.evaluate(np.zeros((2, 3)), np.zeros((2, 3)))


def test_fourier_integral_recovers_coefficients(rng):
    f = random_plane_function(rng, band=2)
    th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    x = np.array([[0.17]])
    vals = f.grid_values(x, th[:, None])[0]
    for m, c in f.modes.items():
        coef = np.mean(vals * np.exp(-1j * m[0] * th))
        assert abs(coef - c.value(x)[0]) <= 1e-13


# ---- jets -----------------------------------------------------------------
def test_gaussian_jet_at_zero():
    j = jet(Gaussian([0.0], 1.0), [0.0], 2)
    assert j[(0,)] == pytest.approx(1.0)
    assert j[(1,)] == pytest.approx(0.0)
    assert j[(2,)] == pytest.approx(-2.0)


def test_bump_jet_outside_support_is_zero():
    j = jet(Bump([0.0, 0.0], 0.5), [0.6, 0.1], 4)
    assert all(v == 0 for v in j.values())


def test_jet_order_limit():
    with pytest.raises(JetOrderError):
        jet(Gaussian([0.0], 1.0), [0.0], 99)


@pytest.mark.parametrize("kind", sorted(KINDS))
@pytest.mark.parametrize("n", [1, 2])
def test_jets_match_finite_differences(kind, n):
    """Order <= 4: each derivative is a central difference (h = 1e-4) of the one below."""
    rng = np.random.default_rng(7)
    c = KINDS[kind](n)
    X = _sample(kind, n, rng, 100)
    h = 1e-4
    J = c.jet(X, 4)
    for alpha in multi_indices(n, 4):
        if not any(alpha):
            continue
        i = next(t for t, a in enumerate(alpha) if a)
        low = tuple(a - (t == i) for t, a in enumerate(alpha))
        e = np.zeros(n)
        e[i] = h
        fd = (c.jet(X + e, 3).derivative(low) - c.jet(X - e, 3).derivative(low)) / (2 * h)
        got = J.derivative(alpha)
        np.testing.assert_allclose(got, fd, rtol=1e-5, atol=1e-5 * np.max(np.abs(fd)))


def test_jet_order_three_direct_finite_difference():
    rng = np.random.default_rng(3)
    c = Gaussian([0.1], 1.7, 1.0)
    for x in rng.uniform(-1, 1, 5):
        h = 2e-3
        f = lambda t: c.value([[t]])[0].real
        fd = (f(x + 2 * h) - 2 * f(x + h) + 2 * f(x - h) - f(x - 2 * h)) / (2 * h**3)
        assert jet(c, [x], 3)[(3,)].real == pytest.approx(fd, rel=1e-3, abs=1e-6)


@pytest.mark.parametrize("order", [1, 3, 6])
def test_jets_match_mpmath(order):
    mpmath.mp.dps = 40
    g = Gaussian([0.3], 2.0, 1.5)
    b = Bump([0.0], 1.2, 1.0)
    for x in (-0.4, 0.1, 0.7):
        want = mpmath.diff(lambda t: 1.5 * mpmath.exp(-2 * (t - 0.3) ** 2), x, order)
        assert jet(g, [x], order)[(order,)].real == pytest.approx(float(want), rel=1e-10, abs=1e-12)
        want = mpmath.diff(lambda t: mpmath.exp(1 - 1 / (1 - t**2 / mpmath.mpf(1.44))), x, order)
        assert jet(b, [x], order)[(order,)].real == pytest.approx(float(want), rel=1e-9, abs=1e-12)


def test_deriv_node_composes():
    c = Gaussian([0.0], 1.0)
    d = Deriv(Deriv(c, (1,)), (2,))
    assert d.alpha == (3,)
    x = 0.37
    assert d.value([[x]])[0] == pytest.approx(jet(c, [x], 3)[(3,)], rel=1e-13)
    assert Deriv(c, (1,)).jet([[x]], 2).derivative((2,))[0] == pytest.approx(
        jet(c, [x], 3)[(3,)], rel=1e-13)


def test_trig_periodicity_flag():
    assert Trig([((1.0,), 1.0)]).periodic
    assert not Trig([((0.5,), 1.0)]).periodic
    assert not Gaussian([0.0], 1.0).periodic


def test_decay_certificate(rng):
    for c in (Gaussian([0.2], 3.0), PolyGaussian([0.0], 2.0, [((3,), 5.0)]), Bump([0.1], 0.4)):
        lo, hi = c.support_box(1e-12)
        X = np.concatenate([np.linspace(hi[0], hi[0] + 3, 50), np.linspace(lo[0] - 3, lo[0], 50)])
        J = c.jet(X[:, None], 3)
        assert np.max(np.abs(J.c)) <= 1e-9


# ---- multiply -------------------------------------------------------------
def test_multiply_singletons():
    a, b = Gaussian([0.0], 1.0), Gaussian([0.5], 2.0)
    h = multiply(single_mode([1], a), single_mode([2], b))
    assert list(h.modes) == [(3,)]
    x = np.array([[0.3]])
    assert h.modes[(3,)].value(x)[0] == pytest.approx(a.value(x)[0] * b.value(x)[0])


def test_multiply_by_one(rng):
    f = random_plane_function(rng)
    one = pullback(constant(1))
    h = multiply(f, one)
    X = rng.normal(size=(10, 1))
    assert set(h.modes) == set(f.modes)
    for m in f.modes:
        assert np.allclose(h.modes[m].value(X), f.modes[m].value(X), atol=1e-15)


def test_multiply_pointwise(rng):
    f = random_plane_function(rng, band=2)
    g = random_plane_function(rng, band=1, real=False)
    h = multiply(f, g)
    assert h.band_limit <= f.band_limit + g.band_limit
    x, th = rng.normal(0, 0.5, (50, 1)), rng.uniform(0, 6.3, (50, 1))
    np.testing.assert_allclose(h.evaluate(x, th), f.evaluate(x, th) * g.evaluate(x, th),
                               atol=1e-11)


def test_multiply_base_mismatch():
    f = pullback(Trig([((1.0,), 1.0)]), base="torus")
    g = pullback(Gaussian([0.0], 1.0))
    with pytest.raises(ValueError):
        multiply(f, g)


# ---- Poisson bracket ------------------------------------------------------
def test_bracket_self_is_zero(rng):
    f = random_plane_function(rng)
    h = poisson_bracket(f, f)
    x, th = rng.normal(0, 0.5, (20, 1)), rng.uniform(0, 6.3, (20, 1))
    assert np.max(np.abs(h.evaluate(x, th))) <= 1e-13


def test_bracket_one_term():
    g = Gaussian([0.1], 2.0)
    w = Gaussian([-0.2], 1.0, 0.5)
    h = poisson_bracket(pullback(g), single_mode([1], w))
    x = 0.4
    want = 1j * jet(g, [x], 1)[(1,)] * w.value([[x]])[0] * np.exp(1j * 0.9)
    assert h.evaluate([[x]], [[0.9]])[0] == pytest.approx(want, abs=1e-15)


def test_jacobi_identity(rng):
    f, g, h = (random_plane_function(rng, band=1) for _ in range(3))
    pb = poisson_bracket
    J = pb(f, pb(g, h)) + pb(g, pb(h, f)) + pb(h, pb(f, g))
    x, th = rng.normal(0, 0.5, (20, 1)), rng.uniform(0, 6.3, (20, 1))
    assert np.max(np.abs(J.evaluate(x, th))) <= 1e-10


def test_jacobi_identity_2d(rng):
    f, g, h = (random_plane_function(rng, n=2, band=1) for _ in range(3))
    pb = poisson_bracket
    J = pb(f, pb(g, h)) + pb(g, pb(h, f)) + pb(h, pb(f, g))
    x, th = rng.normal(0, 0.5, (20, 2)), rng.uniform(0, 6.3, (20, 2))
    assert np.max(np.abs(J.evaluate(x, th))) <= 1e-10


@given(st.integers(0, 2**31 - 1))
def test_bracket_antisymmetry_and_leibniz(seed):
    rng = np.random.default_rng(seed)
    f, g, h = (random_plane_function(rng, band=1) for _ in range(3))
    x, th = rng.normal(0, 0.5, (10, 1)), rng.uniform(0, 6.3, (10, 1))
    ev = lambda u: u.evaluate(x, th)
    assert np.max(np.abs(ev(poisson_bracket(f, g)) + ev(poisson_bracket(g, f)))) <= 1e-10
    lhs = ev(poisson_bracket(f, multiply(g, h)))
    rhs = ev(poisson_bracket(f, g)) * ev(h) + ev(g) * ev(poisson_bracket(f, h))
    assert np.max(np.abs(lhs - rhs)) <= 1e-10
    assert poisson_bracket(f, g).band_limit <= f.band_limit + g.band_limit


@given(st.integers(0, 2**31 - 1))
def test_real_functions_are_real(seed):
    rng = np.random.default_rng(seed)
    f = random_plane_function(rng, band=2)
    f.check_real()
    x, th = rng.normal(0, 1, (30, 1)), rng.uniform(0, 6.3, (30, 1))
    assert np.max(np.abs(f.evaluate(x, th).imag)) <= 1e-13
    fg = multiply(f, random_plane_function(rng, band=1))
    assert np.max(np.abs(fg.evaluate(x, th).imag)) <= 1e-13


# ---- JSON -----------------------------------------------------------------
def test_json_format_and_round_trip(rng):
    doc = {"n": 1, "base": "plane", "real": True, "modes": [
        {"m": [1], "coeff": {"kind": "gaussian", "center": [0.0], "decay": 4.0, "amp": [0.5, 0.0]}},
        {"m": [-1], "coeff": {"kind": "gaussian", "center": [0.0], "decay": 4.0, "amp": [0.5, 0.0]}}]}
    f = FiberedFunction.from_json(doc)
    assert evaluate(f, [0.0], [0.0]) == pytest.approx(1.0)
    composite = poisson_bracket(f, random_plane_function(rng))
    for h in (f, composite, pullback(Bump([0.2], 0.7, 1 + 1j)),
              pullback(PolyGaussian([0.0], 1.0, [((2,), 1.0)])),
              pullback(Trig([((1.0,), 0.5j)]), base="torus")):
        s = json.dumps(h.to_json())
        h2 = FiberedFunction.from_json(json.loads(s), validate=False)
        assert json.dumps(h2.to_json()) == s
        x, th = rng.normal(0, 0.5, (8, 1)), rng.uniform(0, 6, (8, 1))
        assert np.array_equal(h.evaluate(x, th), h2.evaluate(x, th))


def test_json_rejects_bad_real_flag():
    doc = {"n": 1, "base": "plane", "real": True, "modes": [
        {"m": [1], "coeff": {"kind": "gaussian", "center": [0.0], "decay": 4.0, "amp": [0.5, 0.0]}}]}
    with pytest.raises(ValueError):
        FiberedFunction.from_json(doc)


def test_json_rejects_nonperiodic_torus():
    doc = {"n": 1, "base": "torus", "modes": [
        {"m": [0], "coeff": {"kind": "gaussian", "center": [0.0], "decay": 4.0, "amp": [1, 0]}}]}
    with pytest.raises(ValueError):
        FiberedFunction.from_json(doc)


def test_shear_multiplies_modes():
    f = cos_theta(Gaussian([0.0], 1.0))
    P = [[0.8]]
    s = f.shear(P)
    x, th = np.array([[0.3]]), np.array([[0.2]])
    assert s.evaluate(x, th)[0] == pytest.approx(f.evaluate(x, th + 0.8 * 0.3)[0], abs=1e-14)
