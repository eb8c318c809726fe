"""Star-product coefficients and truncated-expansion residuals.

``C_j`` denotes the coefficient of ``hbar^j`` in ``f * g``.  The standard
coefficients come from expanding

    exp((hbar/2) sum_i (d_{x'_i} d_{theta''_i} - d_{x''_i} d_{theta'_i}))

and the order-2 coefficient for a horizontal field ``A`` adds a correction
built from the symmetrized derivative tensor of ``A``.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .fields import Coefficient, FiberedFunction, Trig, add_coefficients, multiply, \
    scale_coefficient
from .hilbert import BandOperator
from .jets import MAX_ORDER, multi_indices
from .quantizer import HorizontalField, Scheme


class StarOrderError(ValueError):
    pass


def _fact(alpha) -> int:
    return math.prod(math.factorial(a) for a in alpha)


def d_theta(f: FiberedFunction, beta) -> FiberedFunction:
    """``d_theta^beta f``: mode m is multiplied by ``prod (i m_l)^beta_l``."""
    beta = tuple(beta)
    if not any(beta):
        return f
    modes = {}
    for m, c in f.modes.items():
        w = complex(np.prod([(1j * mi) ** b for mi, b in zip(m, beta)]))
        if w != 0:
            modes[m] = scale_coefficient(w, c)
    return FiberedFunction(f.n, modes, real=f.real, base=f.base)


def _splittings(n: int, j: int):
    """Pairs of multi-indices ``(alpha, beta)`` with ``|alpha| + |beta| = j``."""
    idx = multi_indices(n, j)
    for a in idx:
        for b in idx:
            if sum(a) + sum(b) == j:
                yield a, b


def moyal_coefficient(f: FiberedFunction, g: FiberedFunction, j: int) -> FiberedFunction:
    """``C_j^std(f, g)``.

    ``(1/2^j) sum_{|a|+|b|=j} (-1)^|b| / (a! b!) d_x^a d_theta^b f * d_theta^a d_x^b g``.
    """
    f._check(g)
    if j < 0 or j > MAX_ORDER:
        raise StarOrderError(f"order {j} outside [0, {MAX_ORDER}]")
    if j == 0:
        return multiply(f, g)
    out = None
    for a, b in _splittings(f.n, j):
        w = (-1) ** sum(b) / (_fact(a) * _fact(b) * 2**j)
        term = multiply(d_theta(f.d_x(a), b), d_theta(g, a).d_x(b)).scale(w)
        out = term if out is None else out + term
    return FiberedFunction(f.n, out.modes, real=False, base=f.base)


def moyal_fourier_mode(f: FiberedFunction, g: FiberedFunction, j: int, p, X) -> np.ndarray:
    """Mode ``p`` of ``C_j^std(f, g)`` at points ``X`` by direct convolution.

    ``(i/2)^j sum_{a,b} (-1)^|b|/(a! b!) sum_m (p-m)^b m^a d^a f_{p-m} d^b g_m``;
    an independent code path for the Fourier-side identity.
    """
    p = np.asarray(p, dtype=int).reshape(f.n)
    X = np.asarray(X, dtype=float).reshape(-1, f.n)
    out = np.zeros(X.shape[0], dtype=complex)
    for mg, cg in g.modes.items():
        mf = tuple(int(v) for v in p - np.array(mg))
        if mf not in f.modes:
            continue
        cf = f.modes[mf]
        Jf = cf.jet(X, j)
        Jg = cg.jet(X, j)
        for a, b in _splittings(f.n, j):
            w = (-1) ** sum(b) / (_fact(a) * _fact(b))
            w *= np.prod(np.array(mf, dtype=float) ** np.array(b))
            w *= np.prod(np.array(mg, dtype=float) ** np.array(a))
            if w:
                out += w * Jf.derivative(a) * Jg.derivative(b)
    return out * (0.5j) ** j


# ---------------------------------------------------------------------------
# symmetrized connection data
# ---------------------------------------------------------------------------
class ThetaTensor:
    """``Theta_ijl``: the full symmetrization of ``d_l A_j^i``."""

    def __init__(self, A: HorizontalField):
        self.A = A
        self.n = A.n

    def __call__(self, X) -> np.ndarray:
        G = self.A.grad(X)                  # G[:, i, j, l] = d_l A_j^i
        perms = itertools.permutations((1, 2, 3))
        return sum(np.transpose(G, (0,) + p) for p in perms) / 6.0

    @property
    def is_zero(self) -> bool:
        return self.A.is_constant

    def coefficient(self, i: int, j: int, l: int) -> Trig:
        """``Theta_ijl`` as a closed-form trigonometric coefficient."""
        terms = []
        for M, q, phi in self.A.terms:
            idx = (i, j, l)
            s = sum(M[idx[a], idx[b]] * q[idx[c]]
                    for a, b, c in itertools.permutations(range(3))) / 6.0
            if s == 0 or not np.any(q):
                continue
            # 2 pi s cos(2 pi <q, x> + phi)
            amp = np.pi * s
            terms.append((tuple(q), amp * np.exp(1j * phi)))
            terms.append((tuple(-q), amp * np.exp(-1j * phi)))
        return Trig(terms, self.n) if terms else Trig([((0.0,) * self.n, 0.0)], self.n)


class ChristoffelField:
    """``Gamma^{theta_i}_{x_l x_j} = -Theta_ijl``; all other symbols vanish."""

    def __init__(self, A: HorizontalField):
        self.theta = ThetaTensor(A)

    def __call__(self, X) -> np.ndarray:
        return -self.theta(X)


def theta_tensor(A: HorizontalField) -> ThetaTensor:
    return ThetaTensor(A)


def christoffel(A: HorizontalField) -> ChristoffelField:
    return ChristoffelField(A)


def theta_correction(f: FiberedFunction, g: FiberedFunction, A: HorizontalField):
    """``(1/8) sum Theta_ijl (d_i f d_jl g + d_jl f d_i g)`` (theta-derivatives)."""
    n = f.n
    T = ThetaTensor(A)
    out = FiberedFunction(n, {}, base=f.base)
    if T.is_zero:
        return out
    for i, j, l in itertools.product(range(n), repeat=3):
        c = T.coefficient(i, j, l)
        if c.is_zero:
            continue
        ei = tuple(int(t == i) for t in range(n))
        ejl = tuple(int(t == j) + int(t == l) for t in range(n))
        inner = multiply(d_theta(f, ei), d_theta(g, ejl)) + multiply(d_theta(f, ejl),
                                                                   d_theta(g, ei))
        out = out + inner.times_base(c).scale(0.125)
    return FiberedFunction(n, out.modes, real=False, base=f.base)


def star_coefficient_H(f, g, j: int, A: HorizontalField, include_theta: bool = True):
    """``C_j^H`` for ``j <= 2``; only the order-2 coefficient differs from ``C_j^std``."""
    if j > 2 or j < 0:
        raise StarOrderError("closed form available only for j in {0, 1, 2}")
    base = moyal_coefficient(f, g, j)
    if j < 2 or not include_theta:
        return base
    return base + theta_correction(f, g, A)


def star_coefficients(f, g, l: int, scheme: Scheme | None = None, include_theta=True):
    scheme = scheme or Scheme()
    A = scheme.A
    if A is None or A.is_constant:
        return [moyal_coefficient(f, g, j) for j in range(l + 1)]
    return [star_coefficient_H(f, g, j, A, include_theta) for j in range(l + 1)]


def expansion_operator(f, g, k: int, l: int, scheme: Scheme | None = None,
                       include_theta=True) -> BandOperator:
    """``phi(f) phi(g) - sum_{j<=l} (-i/k)^j phi(C_j(f, g))`` on a common lattice."""
    scheme = scheme or Scheme()
    coeffs = star_coefficients(f, g, l, scheme, include_theta)
    lat = scheme.lattice([f, g] + coeffs, k)
    R = scheme.quantize(f, k, lat) @ scheme.quantize(g, k, lat)
    for j, c in enumerate(coeffs):
        R = R - scheme.quantize(c, k, lat).scale((-1j / k) ** j)
    return R


def expansion_residual(f, g, k: int, l: int, scheme: Scheme | None = None,
                       include_theta=True) -> float:
    """Operator norm of :func:`expansion_operator`."""
    return expansion_operator(f, g, k, l, scheme, include_theta).op_norm()
