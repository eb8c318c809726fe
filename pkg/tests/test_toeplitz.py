import math

import numpy as np
import pytest
from scipy import integrate

from lagquant.fields import (Bump, FiberedFunction, Gaussian, Trig, cos_theta, pullback,
                             real_from_modes, single_mode)
from lagquant.hilbert import Lattice
from lagquant.quantizer import HorizontalField, quantize_model
from lagquant.toeplitz import (CoherentFrame, SiegelForm, bt_lattice, bt_matrix_element,
                               bt_operator, delta_defect, dq_bt_distance,
                               gaussian_moment_constant, shear, theta_bt_operator)

from conftest import random_plane_function


def _cquad(fun, lo, hi):
    re = integrate.quad(lambda x: fun(x).real, lo, hi, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
    im = integrate.quad(lambda x: fun(x).imag, lo, hi, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
    return re + 1j * im


def test_normalization_against_quadrature():
    rng = np.random.default_rng(3)
    for _ in range(20):
        k, q = int(rng.integers(1, 200)), float(rng.uniform(0.2, 5))
        om = SiegelForm(None, [[q]])
        val = integrate.quad(lambda x: math.exp(-k * q * x * x), -np.inf, np.inf,
                             epsabs=0, epsrel=1e-13)[0]
        assert abs(om.normalization_sq(k) * val - 1) <= 1e-10


def test_normalization_two_dimensional():
    om = SiegelForm([[0.3, 0.1], [0.1, -0.2]], [[2.0, 0.4], [0.4, 1.0]])
    k = 7
    L = np.linalg.cholesky(om.Q)
    # exp(-k xQx) integrates to pi/(k sqrt det Q)
    Z, W = np.polynomial.hermite.hermgauss(30)
    total = sum(wi * wj for wi in W for wj in W) / (k * np.prod(np.diag(L)))
    assert abs(om.normalization_sq(k) * total - 1) <= 1e-10


@pytest.mark.parametrize("P,q,k,p", [(0.0, 1.0, 8, 1), (0.7, 1.5, 12, -2), (-0.4, 0.6, 5, 3)])
def test_matrix_element_against_full_integrand(P, q, k, p):
    F = Gaussian([0.1], 3.0, 1.0 - 0.3j)
    f = single_mode([p], F)
    om = SiegelForm([[P]], [[q]])
    frame = CoherentFrame(k, om)
    c = 2 / k
    b = c + p / k

    def integrand(x):
        X = np.array([[x]])
        return (np.conj(frame.state(b, X, 0.0)) * frame.state(c, X, 0.0) * F.value(X))[0]

    want = _cquad(integrand, -6, 6)
    got = bt_matrix_element(f, frame, [b], [c])
    assert abs(got - want) <= 1e-8
    # mode mismatch gives zero, fiber average kills it
    assert bt_matrix_element(f, frame, [b + 1 / k], [c]) == 0


def test_non_lattice_pair_rejected():
    f = pullback(Gaussian([0.0], 1.0))
    with pytest.raises(ValueError):
        bt_matrix_element(f, CoherentFrame(4, SiegelForm.standard()), [0.1], [0.0])


def test_diagonal_element_converges_to_value():
    F = Gaussian([0.2], 2.0)
    f = pullback(F)
    b = 0.25
    errs = []
    for k in (4, 16, 64, 256):
        val = bt_matrix_element(f, CoherentFrame(k, SiegelForm.standard()), [b], [b])
        errs.append(abs(val - F.value(np.array([[b]]))[0]))
    assert errs[-1] < errs[0] / 30


def test_real_symbol_gives_hermitian(rng):
    f = random_plane_function(rng, band=2, real=True)
    om = SiegelForm([[0.5]], [[1.3]])
    T = bt_operator(f, CoherentFrame(16, om))
    assert (T - T.adjoint()).max_abs() <= 1e-8


def test_pullback_is_diagonal():
    T = bt_operator(pullback(Gaussian([0.0], 2.0)), CoherentFrame(8, SiegelForm.standard()))
    assert T.nonzero_bands() == [(0,)]


def test_two_dimensional_operator_hermitian():
    f = real_from_modes({(1, 0): Gaussian([0.0, 0.1], 3.0), (0, 1): Gaussian([0.1, 0.0], 3.0)})
    om = SiegelForm([[0.2, 0.0], [0.0, 0.1]], [[1.0, 0.2], [0.2, 1.5]])
    # Hermiticity is pairwise, so a small index window suffices
    lat = Lattice.plane(2, 6, [-0.5, -0.5], [0.5, 0.5])
    T = bt_operator(f, CoherentFrame(6, om), lat)
    assert (T - T.adjoint()).max_abs() <= 1e-8


# ---- torus --------------------------------------------------------------------
def _torus_cos():
    c = Trig([((0,), 0.25), ((1,), 0.125), ((-1,), 0.125)])
    return real_from_modes({(1,): c}, base="torus")


def test_theta_operator_level_one_direct_sum():
    """At level 1 there is a single state; compare with the lattice-summed integral."""
    om = SiegelForm([[0.3]], [[1.0]])
    frame = CoherentFrame(1, om)
    c0 = Trig([((0,), 0.4), ((1,), 0.15), ((-1,), 0.15)])
    f = FiberedFunction(1, {(0,): c0, (1,): Trig([((1,), 0.2)]), (-1,): Trig([((-1,), 0.2)])},
                        base="torus")
    T = theta_bt_operator(f, frame).to_dense()
    assert T.shape == (1, 1)
    # <Theta, f Theta> over one fundamental domain, theta averaged
    th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    x, w = np.polynomial.legendre.leggauss(80)
    x = (x + 1) / 2
    w = w / 2
    total = 0j
    for t in th:
        psi = frame.theta_state([0.0], x[:, None], np.full((80, 1), t))
        fv = f.evaluate(x[:, None], np.full((80, 1), t))
        total += np.sum(w * np.abs(psi) ** 2 * fv) / th.size
    assert abs(T[0, 0] - total) <= 1e-8


def test_theta_operator_dimension_and_hermitian():
    for k in (3, 7, 12):
        T = theta_bt_operator(_torus_cos(), CoherentFrame(k, SiegelForm.standard()))
        D = T.to_dense()
        assert D.shape == (k, k)
        assert np.max(np.abs(D - D.conj().T)) <= 1e-8


def test_theta_operator_translation_equivariant():
    """A symbol constant in x commutes with the index shift."""
    k = 9
    f = FiberedFunction(1, {(1,): Trig([((0,), 0.3)]), (-1,): Trig([((0,), 0.3)])},
                        base="torus")
    D = theta_bt_operator(f, CoherentFrame(k, SiegelForm.standard())).to_dense()
    S = np.roll(np.eye(k), 1, axis=0)
    assert np.max(np.abs(S @ D - D @ S)) <= 1e-12


def test_theta_requires_periodic():
    with pytest.raises(ValueError):
        theta_bt_operator(pullback(Gaussian([0.0], 1.0)), CoherentFrame(4, SiegelForm.standard()))


# ---- comparison with the real polarization ------------------------------------------
@pytest.mark.parametrize("k", [8, 16])
def test_shear_equality(k):
    f = cos_theta(Gaussian([0.0], 4.0))
    P = [[0.6]]
    lhs = dq_bt_distance(f, SiegelForm(P, [[1.3]]), k, A=HorizontalField(1, P))
    rhs = dq_bt_distance(shear(f, P), SiegelForm(None, [[1.3]]), k,
                         window=bt_lattice([f], SiegelForm(P, [[1.3]]), k).window)
    assert abs(lhs - rhs) <= 1e-8


def test_zero_function_distance():
    zero = FiberedFunction(1, {(0,): Gaussian([0.0], 1.0, 0.0)})
    assert dq_bt_distance(zero, SiegelForm.standard(), 16) == 0.0


def test_field_must_match_form():
    f = cos_theta(Gaussian([0.0], 4.0))
    with pytest.raises(ValueError):
        dq_bt_distance(f, SiegelForm([[0.2]], [[1.0]]), 8, A=HorizontalField(1, [[0.3]]))
    dq_bt_distance(f, SiegelForm([[0.2]], [[1.0]]), 8, A=HorizontalField(1, [[0.2]]))


def test_bump_coefficient_uses_compact_quadrature():
    f = real_from_modes({(1,): Bump([0.0], 0.6)})
    om = SiegelForm.standard()
    T = bt_operator(f, CoherentFrame(8, om))
    assert (T - T.adjoint()).max_abs() <= 1e-8
    assert np.isfinite(T.max_abs())


def test_gaussian_moment_constant():
    for q in (0.5, 1.0, 3.0):
        want = integrate.quad(lambda x: abs(x) * math.exp(-q * x * x), -np.inf, np.inf)[0]
        want *= math.sqrt(q / math.pi)
        assert abs(gaussian_moment_constant([[q]]) - want) <= 1e-10
    Q = np.array([[2.0, 0.3], [0.3, 1.0]])
    val = integrate.dblquad(lambda y, x: math.hypot(x, y) * math.exp(-(np.array([x, y]) @ Q
                                                                       @ np.array([x, y]))),
                            -8, 8, -8, 8, epsabs=1e-11)[0]
    val *= math.sqrt(np.linalg.det(Q)) / math.pi
    assert abs(gaussian_moment_constant(Q) - val) <= 1e-7


@pytest.mark.parametrize("k", [4, 16, 64])
def test_delta_defect_bounded_by_lipschitz(k):
    """A Gaussian average of a Lipschitz function is within C_Q Lip / sqrt(k)."""
    Q = [[1.7]]
    g = lambda X: np.sin(3 * X[:, 0]) + 0.5 * np.abs(X[:, 0] - 0.2)
    lip = 3.5
    for x0 in (0.0, 0.2, 0.9):
        d = delta_defect(g, Q, k, [x0], order=160)
        assert d <= gaussian_moment_constant(Q) * lip / math.sqrt(k) + 1e-12


def test_distance_shrinks_with_level():
    f = cos_theta(Gaussian([0.0], 4.0))
    om = SiegelForm.standard()
    d = [dq_bt_distance(f, om, k) for k in (8, 32)]
    assert d[1] < d[0]
