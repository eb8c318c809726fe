"""Truncated multivariate Taylor arithmetic (forward-mode jets).

A :class:`Jet` of order ``J`` in ``n`` variables holds, for every point of a
batch, the normalized Taylor coefficients ``c[alpha] = d^alpha f / alpha!`` for
all multi-indices with ``|alpha| <= J``.  Products are truncated Cauchy
products, so every closed-form coefficient function can be differentiated
exactly to any supported order by composing elementary operations.
"""
from __future__ import annotations

import functools
import itertools
import math

import numpy as np
import scipy.sparse as sp

MAX_ORDER = 12


class JetOrderError(ValueError):
    pass


@functools.lru_cache(maxsize=None)
def multi_indices(n: int, order: int) -> tuple[tuple[int, ...], ...]:
    """All multi-indices of length ``n`` with total degree ``<= order``, graded."""
    out = []
    for total in range(order + 1):
        level = [a for a in itertools.product(range(total + 1), repeat=n) if sum(a) == total]
        out.extend(sorted(level, reverse=True))
    return tuple(out)


@functools.lru_cache(maxsize=None)
def _position(n: int, order: int) -> dict:
    return {a: i for i, a in enumerate(multi_indices(n, order))}


@functools.lru_cache(maxsize=None)
def _product_table(n: int, order: int):
    idx = multi_indices(n, order)
    pos = _position(n, order)
    ia, ib, ic = [], [], []
    for i, a in enumerate(idx):
        for j, b in enumerate(idx):
            g = tuple(x + y for x, y in zip(a, b))
            if sum(g) <= order:
                ia.append(i)
                ib.append(j)
                ic.append(pos[g])
    npairs = len(ia)
    scatter = sp.csr_matrix(
        (np.ones(npairs), (np.array(ic), np.arange(npairs))), shape=(len(idx), npairs)
    )
    return np.array(ia), np.array(ib), scatter


def _factorial(alpha) -> int:
    return math.prod(math.factorial(a) for a in alpha)


def check_order(order: int) -> None:
    if order < 0 or order > MAX_ORDER:
        raise JetOrderError(f"jet order {order} outside supported range [0, {MAX_ORDER}]")


class Jet:
    """Batch of truncated Taylor expansions at ``npts`` points."""

    __slots__ = ("n", "order", "c")

    def __init__(self, n: int, order: int, c: np.ndarray):
        self.n = n
        self.order = order
        self.c = c

    # constructors -------------------------------------------------------
    @classmethod
    def constant(cls, n, order, values, npts=None):
        values = np.asarray(values, dtype=complex)
        if values.ndim == 0:
            values = np.full(npts, complex(values))
        c = np.zeros((len(multi_indices(n, order)), values.shape[0]), dtype=complex)
        c[0] = values
        return cls(n, order, c)

    @classmethod
    def variable(cls, X, i, order, shift=0.0):
        """Jet of the coordinate function ``x_i - shift`` at the points ``X``."""
        X = np.atleast_2d(X)
        n = X.shape[1]
        c = np.zeros((len(multi_indices(n, order)), X.shape[0]), dtype=complex)
        c[0] = X[:, i] - shift
        if order >= 1:
            e = [0] * n
            e[i] = 1
            c[_position(n, order)[tuple(e)]] = 1.0
        return cls(n, order, c)

    @property
    def npts(self) -> int:
        return self.c.shape[1]

    @property
    def value(self) -> np.ndarray:
        return self.c[0]

    def zeros_like(self) -> "Jet":
        return Jet(self.n, self.order, np.zeros_like(self.c))

    # arithmetic ---------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.n, self.order, self.c + other.c)
        c = self.c.copy()
        c[0] = c[0] + other
        return Jet(self.n, self.order, c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.n, self.order, -self.c)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            ia, ib, scatter = _product_table(self.n, self.order)
            return Jet(self.n, self.order, scatter @ (self.c[ia] * other.c[ib]))
        return Jet(self.n, self.order, self.c * other)

    __rmul__ = __mul__

    def _nilpotent_series(self, coeffs) -> "Jet":
        # sum_r coeffs[r] * u^r with u = self - value; u^(order+1) = 0
        u = Jet(self.n, self.order, self.c.copy())
        u.c[0] = 0.0
        out = Jet.constant(self.n, self.order, coeffs[0])
        power = None
        for r in range(1, self.order + 1):
            power = u if power is None else power * u
            out = out + power * coeffs[r]
        return out

    def exp(self) -> "Jet":
        e0 = np.exp(self.c[0])
        coeffs = [e0 / math.factorial(r) for r in range(self.order + 1)]
        return self._nilpotent_series(coeffs)

    def reciprocal(self) -> "Jet":
        inv = 1.0 / self.c[0]
        coeffs = [inv * (-inv) ** r for r in range(self.order + 1)]
        return self._nilpotent_series(coeffs)

    # derivatives --------------------------------------------------------
    def coefficient(self, alpha) -> np.ndarray:
        return self.c[_position(self.n, self.order)[tuple(alpha)]]

    def derivative(self, alpha) -> np.ndarray:
        """Value of ``d^alpha f`` at every point."""
        return self.coefficient(alpha) * _factorial(alpha)

    def differentiate(self, alpha) -> "Jet":
        """Jet of ``d^alpha f``; the order drops by ``|alpha|``."""
        alpha = tuple(alpha)
        new_order = self.order - sum(alpha)
        if new_order < 0:
            raise JetOrderError("derivative exceeds jet order")
        pos = _position(self.n, self.order)
        idx = multi_indices(self.n, new_order)
        c = np.empty((len(idx), self.npts), dtype=complex)
        for i, g in enumerate(idx):
            bg = tuple(a + b for a, b in zip(alpha, g))
            c[i] = self.c[pos[bg]] * (_factorial(bg) / _factorial(g))
        return Jet(self.n, new_order, c)

    def truncate(self, order: int) -> "Jet":
        if order == self.order:
            return self
        return Jet(self.n, order, self.c[: len(multi_indices(self.n, order))].copy())

    def conj(self) -> "Jet":
        return Jet(self.n, self.order, np.conj(self.c))

    def masked(self, mask, npts) -> "Jet":
        """Scatter this jet (computed on ``mask``) into a zero jet of ``npts`` points."""
        c = np.zeros((self.c.shape[0], npts), dtype=complex)
        c[:, mask] = self.c
        return Jet(self.n, self.order, c)
