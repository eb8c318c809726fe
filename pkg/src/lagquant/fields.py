"""Band-limited functions on R^n x T^n (or (R/Z)^n x T^n).

A function is stored as a finite fiberwise Fourier series

    f(x, theta) = sum_{|m|_inf <= M} f_m(x) exp(i <m, theta>)

whose coefficients ``f_m`` are closed-form expression trees.  Every node can be
evaluated and differentiated exactly (through :mod:`lagquant.jets`), so the
x-derivatives needed by star-product coefficients never go through finite
differences, and the theta-Fourier data is exact.
"""
from __future__ import annotations

import json
import math
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .jets import Jet, check_order, multi_indices

DECAY_TOL = 1e-17


class DimensionError(ValueError):
    pass


def _points(X, n):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, n) if n > 1 or X.size != n else X.reshape(1, n)
    if X.ndim != 2 or X.shape[1] != n:
        raise DimensionError(f"expected points of dimension {n}, got shape {X.shape}")
    return X


def _cplx(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    return complex(v)


def _cjson(z: complex) -> list:
    z = complex(z)
    return [z.real, z.imag]


# ---------------------------------------------------------------------------
# coefficient functions
# ---------------------------------------------------------------------------
class Coefficient:
    """Closed-form function R^n -> C with exact jets."""

    n: int

    # evaluation
    def value(self, X) -> np.ndarray:
        X = _points(X, self.n)
        return self._value(X, {})

    def jet(self, X, order: int) -> Jet:
        check_order(order)
        X = _points(X, self.n)
        return self._jet(X, order, {})

    def _value(self, X, cache):
        return self._cached_jet(X, 0, cache).value

    def _cached_jet(self, X, order, cache):
        key = (id(self), order)
        if key not in cache:
            cache[key] = self._jet(X, order, cache)
        return cache[key]

    def _jet(self, X, order, cache) -> Jet:
        raise NotImplementedError

    # structure
    @property
    def is_zero(self) -> bool:
        return False

    @property
    def periodic(self) -> bool:
        return False

    @property
    def has_bump(self) -> bool:
        return False

    def support_box(self, tol=DECAY_TOL):
        inf = np.full(self.n, np.inf)
        return -inf, inf

    def conj(self) -> "Coefficient":
        return Conj(self)

    def to_json(self) -> dict:
        raise NotImplementedError

    # sugar
    def __add__(self, other):
        return add_coefficients([self, other])

    def __mul__(self, other):
        if isinstance(other, Coefficient):
            return multiply_coefficients(self, other)
        return scale_coefficient(other, self)

    __rmul__ = __mul__

    def __call__(self, X):
        return self.value(X)


class Gaussian(Coefficient):
    """``amp * exp(-decay * |x - center|^2)``."""

    kind = "gaussian"

    def __init__(self, center, decay, amp=1.0):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.n = self.center.size
        self.decay = float(decay)
        if self.decay <= 0:
            raise ValueError("gaussian decay must be positive")
        self.amp = complex(amp)

    def _exponent(self, X, order):
        q = None
        for i in range(self.n):
            v = Jet.variable(X, i, order, self.center[i])
            q = v * v if q is None else q + v * v
        return q * (-self.decay)

    def _value(self, X, cache):
        r2 = np.sum((X - self.center) ** 2, axis=1)
        return self.amp * np.exp(-self.decay * r2)

    def _jet(self, X, order, cache):
        return self._exponent(X, order).exp() * self.amp

    def _radius(self, tol, degree=0, poly_bound=1.0):
        r = math.sqrt(math.log(1.0 / tol) / self.decay)
        for _ in range(20):
            growth = math.log(max(1.0, poly_bound * (1.0 + r) ** degree))
            r = math.sqrt((math.log(1.0 / tol) + growth) / self.decay)
        return r + 1.0 / math.sqrt(self.decay)

    def support_box(self, tol=DECAY_TOL):
        r = self._radius(tol)
        return self.center - r, self.center + r

    def conj(self):
        return Gaussian(self.center, self.decay, self.amp.conjugate())

    def to_json(self):
        return {"kind": "gaussian", "center": self.center.tolist(), "decay": self.decay,
                "amp": _cjson(self.amp)}


class PolyGaussian(Gaussian):
    """``amp * P(x - center) * exp(-decay |x - center|^2)`` with P a polynomial."""

    kind = "poly-gaussian"

    def __init__(self, center, decay, terms, amp=1.0):
        super().__init__(center, decay, amp)
        self.terms = tuple((tuple(int(p) for p in pw), complex(c)) for pw, c in terms)
        for pw, _ in self.terms:
            if len(pw) != self.n:
                raise DimensionError("polynomial exponent length does not match center")

    def _poly_jet(self, X, order):
        out = Jet.constant(self.n, order, 0.0, npts=X.shape[0])
        vars_ = [Jet.variable(X, i, order, self.center[i]) for i in range(self.n)]
        for pw, c in self.terms:
            mono = Jet.constant(self.n, order, c, npts=X.shape[0])
            for i, p in enumerate(pw):
                for _ in range(p):
                    mono = mono * vars_[i]
            out = out + mono
        return out

    def _value(self, X, cache):
        d = X - self.center
        poly = np.zeros(X.shape[0], dtype=complex)
        for pw, c in self.terms:
            poly += c * np.prod(d ** np.array(pw), axis=1)
        return poly * super()._value(X, cache)

    def _jet(self, X, order, cache):
        return self._poly_jet(X, order) * super()._jet(X, order, cache)

    def support_box(self, tol=DECAY_TOL):
        degree = max((sum(pw) for pw, _ in self.terms), default=0)
        bound = sum(abs(c) for _, c in self.terms) or 1.0
        r = self._radius(tol, degree, bound)
        return self.center - r, self.center + r

    def conj(self):
        return PolyGaussian(self.center, self.decay,
                            [(pw, c.conjugate()) for pw, c in self.terms], self.amp.conjugate())

    def to_json(self):
        d = super().to_json()
        d["kind"] = "poly-gaussian"
        d["terms"] = [{"pow": list(pw), "coef": _cjson(c)} for pw, c in self.terms]
        return d


class Bump(Coefficient):
    """``amp * exp(1 - 1/(1 - |x-c|^2/R^2))`` inside the ball, 0 outside."""

    kind = "bump"
    _EDGE = 1e-3  # below this gap the function and all jets underflow to 0

    def __init__(self, center, radius, amp=1.0):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.n = self.center.size
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("bump radius must be positive")
        self.amp = complex(amp)

    @property
    def has_bump(self):
        return True

    def _inside(self, X):
        s = np.sum((X - self.center) ** 2, axis=1) / self.radius**2
        return 1.0 - s > self._EDGE

    def _value(self, X, cache):
        s = np.sum((X - self.center) ** 2, axis=1) / self.radius**2
        out = np.zeros(X.shape[0], dtype=complex)
        ins = 1.0 - s > self._EDGE
        out[ins] = self.amp * np.exp(1.0 - 1.0 / (1.0 - s[ins]))
        return out

    def _jet(self, X, order, cache):
        ins = self._inside(X)
        Xi = X[ins]
        if Xi.shape[0] == 0:
            return Jet.constant(self.n, order, 0.0, npts=X.shape[0])
        gap = Jet.constant(self.n, order, 1.0, npts=Xi.shape[0])
        for i in range(self.n):
            v = Jet.variable(Xi, i, order, self.center[i])
            gap = gap - v * v * (1.0 / self.radius**2)
        inner = (1.0 - gap.reciprocal()).exp() * self.amp
        return inner.masked(ins, X.shape[0])

    def support_box(self, tol=DECAY_TOL):
        return self.center - self.radius, self.center + self.radius

    def conj(self):
        return Bump(self.center, self.radius, self.amp.conjugate())

    def to_json(self):
        return {"kind": "bump", "center": self.center.tolist(), "radius": self.radius,
                "amp": _cjson(self.amp)}


class Trig(Coefficient):
    """``sum_t amp_t exp(2 pi i <freq_t, x>)``; period 1 when all frequencies are integral."""

    kind = "trig"

    def __init__(self, terms, n=None):
        self.terms = tuple((tuple(float(q) for q in fr), complex(a)) for fr, a in terms)
        if n is None:
            if not self.terms:
                raise DimensionError("empty trig polynomial needs explicit n")
            n = len(self.terms[0][0])
        self.n = n
        for fr, _ in self.terms:
            if len(fr) != n:
                raise DimensionError("trig frequency length mismatch")

    @property
    def periodic(self):
        return all(float(q).is_integer() for fr, _ in self.terms for q in fr)

    @property
    def is_zero(self):
        return all(a == 0 for _, a in self.terms)

    def _value(self, X, cache):
        out = np.zeros(X.shape[0], dtype=complex)
        for fr, a in self.terms:
            out += a * np.exp(2j * np.pi * (X @ np.array(fr)))
        return out

    def _jet(self, X, order, cache):
        out = Jet.constant(self.n, order, 0.0, npts=X.shape[0])
        vars_ = [Jet.variable(X, i, order) for i in range(self.n)]
        for fr, a in self.terms:
            arg = Jet.constant(self.n, order, 0.0, npts=X.shape[0])
            for i, q in enumerate(fr):
                if q:
                    arg = arg + vars_[i] * (2j * np.pi * q)
            out = out + arg.exp() * a
        return out

    def conj(self):
        return Trig([(tuple(-q for q in fr), a.conjugate()) for fr, a in self.terms], self.n)

    def to_json(self):
        return {"kind": "trig", "n": self.n,
                "terms": [{"freq": list(fr), "amp": _cjson(a)} for fr, a in self.terms]}


def constant(n: int, c=1.0) -> Trig:
    return Trig([((0.0,) * n, complex(c))], n)


class Sum(Coefficient):
    kind = "sum"

    def __init__(self, terms, n):
        self.terms = tuple(terms)
        self.n = n

    @property
    def is_zero(self):
        return all(t.is_zero for t in self.terms)

    @property
    def periodic(self):
        return all(t.periodic for t in self.terms)

    @property
    def has_bump(self):
        return any(t.has_bump for t in self.terms)

    def _value(self, X, cache):
        out = np.zeros(X.shape[0], dtype=complex)
        for t in self.terms:
            out = out + t._value(X, cache)
        return out

    def _jet(self, X, order, cache):
        out = Jet.constant(self.n, order, 0.0, npts=X.shape[0])
        for t in self.terms:
            out = out + t._cached_jet(X, order, cache)
        return out

    def support_box(self, tol=DECAY_TOL):
        if not self.terms:
            return np.zeros(self.n), np.zeros(self.n)
        boxes = [t.support_box(tol) for t in self.terms]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

    def conj(self):
        return Sum([t.conj() for t in self.terms], self.n)

    def to_json(self):
        return {"kind": "sum", "n": self.n, "terms": [t.to_json() for t in self.terms]}


class Product(Coefficient):
    kind = "product"

    def __init__(self, factors):
        self.factors = tuple(factors)
        self.n = self.factors[0].n

    @property
    def is_zero(self):
        return any(t.is_zero for t in self.factors)

    @property
    def periodic(self):
        return all(t.periodic for t in self.factors)

    @property
    def has_bump(self):
        return any(t.has_bump for t in self.factors)

    def _value(self, X, cache):
        out = self.factors[0]._value(X, cache)
        for t in self.factors[1:]:
            out = out * t._value(X, cache)
        return out

    def _jet(self, X, order, cache):
        out = self.factors[0]._cached_jet(X, order, cache)
        for t in self.factors[1:]:
            out = out * t._cached_jet(X, order, cache)
        return out

    def support_box(self, tol=DECAY_TOL):
        boxes = [t.support_box(tol) for t in self.factors]
        lo = np.max([b[0] for b in boxes], axis=0)
        hi = np.min([b[1] for b in boxes], axis=0)
        return lo, np.maximum(hi, lo)

    def conj(self):
        return Product([t.conj() for t in self.factors])

    def to_json(self):
        return {"kind": "product", "factors": [t.to_json() for t in self.factors]}


class Scale(Coefficient):
    kind = "scale"

    def __init__(self, factor, arg):
        self.factor = complex(factor)
        self.arg = arg
        self.n = arg.n

    @property
    def is_zero(self):
        return self.factor == 0 or self.arg.is_zero

    @property
    def periodic(self):
        return self.arg.periodic

    @property
    def has_bump(self):
        return self.arg.has_bump

    def _value(self, X, cache):
        return self.factor * self.arg._value(X, cache)

    def _jet(self, X, order, cache):
        return self.arg._cached_jet(X, order, cache) * self.factor

    def support_box(self, tol=DECAY_TOL):
        return self.arg.support_box(tol)

    def conj(self):
        return Scale(self.factor.conjugate(), self.arg.conj())

    def to_json(self):
        return {"kind": "scale", "factor": _cjson(self.factor), "arg": self.arg.to_json()}


class Deriv(Coefficient):
    """Partial derivative ``d^alpha`` of another coefficient."""

    kind = "deriv"

    def __init__(self, arg, alpha):
        alpha = tuple(int(a) for a in alpha)
        if isinstance(arg, Deriv):
            alpha = tuple(a + b for a, b in zip(alpha, arg.alpha))
            arg = arg.arg
        self.arg = arg
        self.alpha = alpha
        self.n = arg.n
        if len(alpha) != self.n:
            raise DimensionError("derivative multi-index length mismatch")

    @property
    def is_zero(self):
        return self.arg.is_zero

    @property
    def periodic(self):
        return self.arg.periodic

    @property
    def has_bump(self):
        return self.arg.has_bump

    def _value(self, X, cache):
        return self.arg._cached_jet(X, sum(self.alpha), cache).derivative(self.alpha)

    def _jet(self, X, order, cache):
        check_order(order + sum(self.alpha))
        return self.arg._cached_jet(X, order + sum(self.alpha), cache).differentiate(self.alpha)

    def support_box(self, tol=DECAY_TOL):
        return self.arg.support_box(tol)

    def conj(self):
        return Deriv(self.arg.conj(), self.alpha)

    def to_json(self):
        return {"kind": "deriv", "alpha": list(self.alpha), "arg": self.arg.to_json()}


class Conj(Coefficient):
    kind = "conj"

    def __init__(self, arg):
        self.arg = arg
        self.n = arg.n

    @property
    def is_zero(self):
        return self.arg.is_zero

    @property
    def periodic(self):
        return self.arg.periodic

    @property
    def has_bump(self):
        return self.arg.has_bump

    def _value(self, X, cache):
        return np.conj(self.arg._value(X, cache))

    def _jet(self, X, order, cache):
        return self.arg._cached_jet(X, order, cache).conj()

    def support_box(self, tol=DECAY_TOL):
        return self.arg.support_box(tol)

    def conj(self):
        return self.arg

    def to_json(self):
        return {"kind": "conj", "arg": self.arg.to_json()}


def zero(n: int) -> Sum:
    return Sum((), n)


def add_coefficients(terms) -> Coefficient:
    terms = [t for t in terms if not t.is_zero]
    n = terms[0].n if terms else None
    flat = []
    for t in terms:
        flat.extend(t.terms if isinstance(t, Sum) else [t])
    if not flat:
        return zero(n or 1)
    if len(flat) == 1:
        return flat[0]
    return Sum(flat, n)


def multiply_coefficients(a, b) -> Coefficient:
    if a.is_zero:
        return a
    if b.is_zero:
        return b
    fa = a.factors if isinstance(a, Product) else (a,)
    fb = b.factors if isinstance(b, Product) else (b,)
    return Product(fa + fb)


def scale_coefficient(c, arg) -> Coefficient:
    c = complex(c)
    if c == 0 or arg.is_zero:
        return zero(arg.n)
    if c == 1:
        return arg
    if isinstance(arg, Scale):
        return Scale(c * arg.factor, arg.arg)
    return Scale(c, arg)


def derivative(arg, alpha) -> Coefficient:
    if not any(alpha):
        return arg
    if arg.is_zero:
        return arg
    if isinstance(arg, Trig) and all(not any(fr) for fr, _ in arg.terms):
        return zero(arg.n)
    return Deriv(arg, alpha)


_LEAF_PARSERS = {}


def coefficient_from_json(d: Mapping) -> Coefficient:
    kind = d["kind"]
    if kind == "gaussian":
        return Gaussian(d["center"], d["decay"], _cplx(d.get("amp", 1.0)))
    if kind == "poly-gaussian":
        terms = [(t["pow"], _cplx(t["coef"])) for t in d["terms"]]
        return PolyGaussian(d["center"], d["decay"], terms, _cplx(d.get("amp", 1.0)))
    if kind == "bump":
        return Bump(d["center"], d["radius"], _cplx(d.get("amp", 1.0)))
    if kind == "trig":
        return Trig([(t["freq"], _cplx(t["amp"])) for t in d["terms"]], d.get("n"))
    if kind == "sum":
        return Sum([coefficient_from_json(t) for t in d["terms"]], d["n"])
    if kind == "product":
        return Product([coefficient_from_json(t) for t in d["factors"]])
    if kind == "scale":
        return Scale(_cplx(d["factor"]), coefficient_from_json(d["arg"]))
    if kind == "deriv":
        return Deriv(coefficient_from_json(d["arg"]), d["alpha"])
    if kind == "conj":
        return Conj(coefficient_from_json(d["arg"]))
    raise ValueError(f"unknown coefficient kind {kind!r}")


def jet(c: Coefficient, x, order: int) -> dict:
    """All partial derivatives of ``c`` at a single point ``x`` up to total ``order``.

    Returns a mapping multi-index -> complex value of ``d^alpha c(x)``.
    """
    J = c.jet(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, c.n), order)
    return {a: complex(J.derivative(a)[0]) for a in multi_indices(c.n, order)}


# ---------------------------------------------------------------------------
# fibered functions
# ---------------------------------------------------------------------------
class FiberedFunction:
    """``f(x, theta) = sum_m f_m(x) e^{i<m,theta>}`` with finitely many modes.

    Instances are immutable; all operations return new objects.
    """

    def __init__(self, n: int, modes: Mapping, real: bool = False, base: str = "plane"):
        if base not in ("plane", "torus"):
            raise ValueError(f"unknown base kind {base!r}")
        clean = {}
        for m, c in modes.items():
            m = tuple(int(v) for v in np.atleast_1d(m))
            if len(m) != n or c.n != n:
                raise DimensionError("mode/coefficient dimension mismatch")
            if c.is_zero:
                continue
            clean[m] = add_coefficients([clean[m], c]) if m in clean else c
        self.n = n
        self.modes = MappingProxyType(dict(sorted(clean.items())))
        self.real = bool(real)
        self.base = base

    # basic structure
    @property
    def band_limit(self) -> int:
        return max((max(abs(v) for v in m) for m in self.modes), default=0)

    @property
    def is_zero(self) -> bool:
        return not self.modes

    def mode(self, m) -> Coefficient:
        return self.modes.get(tuple(m), zero(self.n))

    def support_box(self, tol=DECAY_TOL):
        if not self.modes:
            return np.zeros(self.n), np.zeros(self.n)
        boxes = [c.support_box(tol) for c in self.modes.values()]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

    @property
    def periodic(self) -> bool:
        return all(c.periodic for c in self.modes.values())

    def __repr__(self):
        return (f"FiberedFunction(n={self.n}, modes={list(self.modes)}, real={self.real}, "
                f"base={self.base!r})")

    def _like(self, modes, real):
        return FiberedFunction(self.n, modes, real=real, base=self.base)

    def _check(self, other):
        if self.n != other.n:
            raise DimensionError("dimension mismatch")
        if self.base != other.base:
            raise ValueError("base kind mismatch")

    # evaluation
    def evaluate(self, x, theta):
        x = _points(x, self.n)
        theta = _points(theta, self.n)
        if theta.shape[0] == 1 and x.shape[0] > 1:
            theta = np.repeat(theta, x.shape[0], axis=0)
        if x.shape[0] == 1 and theta.shape[0] > 1:
            x = np.repeat(x, theta.shape[0], axis=0)
        out = np.zeros(x.shape[0], dtype=complex)
        for m, c in self.modes.items():
            out += c.value(x) * np.exp(1j * (theta @ np.array(m, dtype=float)))
        return out

    def grid_values(self, xs, thetas):
        """Values on the product of point sets: shape (len(xs), len(thetas))."""
        xs = _points(xs, self.n)
        thetas = _points(thetas, self.n)
        ms = list(self.modes)
        if not ms:
            return np.zeros((xs.shape[0], thetas.shape[0]), dtype=complex)
        F = np.stack([self.modes[m].value(xs) for m in ms], axis=1)
        E = np.exp(1j * (np.array(ms, dtype=float) @ thetas.T))
        return F @ E

    # algebra
    def __add__(self, other):
        self._check(other)
        modes = dict(self.modes)
        for m, c in other.modes.items():
            modes[m] = add_coefficients([modes[m], c]) if m in modes else c
        return self._like(modes, self.real and other.real)

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        c = complex(c)
        modes = {m: scale_coefficient(c, v) for m, v in self.modes.items()}
        return self._like(modes, self.real and c.imag == 0)

    def __mul__(self, other):
        if isinstance(other, FiberedFunction):
            return multiply(self, other)
        return self.scale(other)

    __rmul__ = __mul__

    def conj(self):
        modes = {tuple(-v for v in m): c.conj() for m, c in self.modes.items()}
        return self._like(modes, self.real)

    def d_theta(self, i: int):
        modes = {m: scale_coefficient(1j * m[i], c) for m, c in self.modes.items() if m[i]}
        return self._like(modes, self.real)

    def d_x(self, alpha):
        if isinstance(alpha, int):
            e = [0] * self.n
            e[alpha] = 1
            alpha = e
        modes = {m: derivative(c, alpha) for m, c in self.modes.items()}
        return self._like(modes, self.real)

    def times_base(self, c: Coefficient, real=False):
        """Multiply by a theta-independent coefficient function."""
        modes = {m: multiply_coefficients(c, v) for m, v in self.modes.items()}
        return self._like(modes, self.real and real)

    def shear(self, P):
        """Pull back along ``(x, theta) -> (x, theta + P x)``: mode m picks up ``e^{i<Pm, x>}``."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        modes = {}
        for m, c in self.modes.items():
            w = P @ np.array(m, dtype=float)
            if np.any(w):
                c = multiply_coefficients(c, Trig([(tuple(w / (2 * np.pi)), 1.0)], self.n))
            modes[m] = c
        return self._like(modes, self.real)

    # serialization
    def to_json(self) -> dict:
        return {"n": self.n, "base": self.base, "real": self.real,
                "modes": [{"m": list(m), "coeff": c.to_json()} for m, c in self.modes.items()]}

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, d: Mapping, validate=True) -> "FiberedFunction":
        n = int(d["n"])
        modes = {}
        for entry in d["modes"]:
            m = tuple(int(v) for v in entry["m"])
            c = coefficient_from_json(entry["coeff"])
            modes[m] = add_coefficients([modes[m], c]) if m in modes else c
        f = cls(n, modes, real=bool(d.get("real", False)), base=d.get("base", "plane"))
        if validate and f.real:
            f.check_real()
        if validate and f.base == "torus" and not f.periodic:
            raise ValueError("torus-base function has non-periodic coefficients")
        return f

    @classmethod
    def loads(cls, s: str) -> "FiberedFunction":
        return cls.from_json(json.loads(s))

    def check_real(self, npts=16, tol=1e-12):
        """Sampled check of the conjugate symmetry ``f_{-m} = conj(f_m)``."""
        lo, hi = self.support_box()
        lo = np.where(np.isfinite(lo), lo, 0.0)
        hi = np.where(np.isfinite(hi), hi, 1.0)
        X = lo + (hi - lo) * np.linspace(0.05, 0.95, npts)[:, None]
        for m, c in self.modes.items():
            mm = tuple(-v for v in m)
            a = c.value(X)
            b = self.mode(mm).value(X)
            scale = max(1.0, float(np.max(np.abs(a))))
            if np.max(np.abs(b - np.conj(a))) > tol * scale:
                raise ValueError(f"function flagged real but modes {m} and {mm} are not conjugate")


def evaluate(f: FiberedFunction, x, theta):
    """Pointwise value of ``f``; scalars in, scalar out."""
    out = f.evaluate(x, theta)
    return complex(out[0]) if out.shape[0] == 1 else out


def multiply(f: FiberedFunction, g: FiberedFunction) -> FiberedFunction:
    f._check(g)
    modes: dict = {}
    for m1, a in f.modes.items():
        for m2, b in g.modes.items():
            p = tuple(x + y for x, y in zip(m1, m2))
            modes.setdefault(p, []).append(multiply_coefficients(a, b))
    return f._like({p: add_coefficients(t) for p, t in modes.items()}, f.real and g.real)


def poisson_bracket(f: FiberedFunction, g: FiberedFunction) -> FiberedFunction:
    """``{f, g} = sum_i (d_{x_i} f d_{theta_i} g - d_{theta_i} f d_{x_i} g)``."""
    f._check(g)
    out = None
    for i in range(f.n):
        term = multiply(f.d_x(i), g.d_theta(i)) - multiply(f.d_theta(i), g.d_x(i))
        out = term if out is None else out + term
    return FiberedFunction(f.n, out.modes, real=f.real and g.real, base=f.base)


def single_mode(m, coeff: Coefficient, base="plane", real=False) -> FiberedFunction:
    m = tuple(np.atleast_1d(m).tolist())
    return FiberedFunction(len(m), {m: coeff}, real=real, base=base)


def pullback(coeff: Coefficient, base="plane", real=True) -> FiberedFunction:
    return FiberedFunction(coeff.n, {(0,) * coeff.n: coeff}, real=real, base=base)


def real_from_modes(half: Mapping, base="plane", n=None) -> FiberedFunction:
    """Real function from coefficients for a half set of modes.

    ``half`` maps m -> c_m; the mode -m gets conj(c_m).  A zero mode entry is
    kept as given (it must already be real-valued).
    """
    modes = {}
    for m, c in half.items():
        m = tuple(np.atleast_1d(m).tolist())
        n = len(m)
        if not any(m):
            modes[m] = add_coefficients([modes[m], c]) if m in modes else c
            continue
        mm = tuple(-v for v in m)
        modes[m] = add_coefficients([modes[m], c]) if m in modes else c
        cc = c.conj()
        modes[mm] = add_coefficients([modes[mm], cc]) if mm in modes else cc
    return FiberedFunction(n, modes, real=True, base=base)


def cos_theta(envelope: Coefficient, base="plane", axis=0) -> FiberedFunction:
    """``envelope(x) * cos(theta_axis)`` for a real envelope."""
    e = [0] * envelope.n
    e[axis] = 1
    return real_from_modes({tuple(e): scale_coefficient(0.5, envelope)}, base=base)


def sin_theta(envelope: Coefficient, base="plane", axis=0) -> FiberedFunction:
    """``envelope(x) * sin(theta_axis)`` for a real envelope."""
    e = [0] * envelope.n
    e[axis] = 1
    return real_from_modes({tuple(e): scale_coefficient(-0.5j, envelope)}, base=base)
