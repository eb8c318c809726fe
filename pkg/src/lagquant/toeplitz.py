"""Berezin-Toeplitz operators for constant complex structures.

The complex structure is a Siegel form ``Omega = P + iQ``.  On the plane the
coherent states ``Psi_b`` are indexed by the same lattice as the real
polarization, so both quantizations act on one index set.  On the torus the
states are lattice sums of plane coherent states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .fields import FiberedFunction
from .hilbert import BandOperator, Lattice
from .quantizer import plane_lattice, quantize_model, quantize_torus

GH_START = 40
GH_MAX = 640
QUAD_TOL = 1e-9
THETA_SUM_TOL = 1e-14


class QuadratureError(ArithmeticError):
    pass


class SiegelForm:
    """``Omega = P + iQ`` with ``P`` symmetric and ``Q`` symmetric positive definite."""

    def __init__(self, P, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        n = Q.shape[0]
        P = np.zeros((n, n)) if P is None else np.atleast_2d(np.asarray(P, dtype=float))
        if P.shape != (n, n) or Q.shape != (n, n):
            raise ValueError("P and Q must be square of equal size")
        if not np.allclose(P, P.T, atol=1e-14) or not np.allclose(Q, Q.T, atol=1e-14):
            raise ValueError("P and Q must be symmetric")
        try:
            self.L = np.linalg.cholesky(Q)
        except np.linalg.LinAlgError as exc:
            raise ValueError("Q must be positive definite") from exc
        self.P, self.Q, self.n = P, Q, n

    @classmethod
    def standard(cls, n=1):
        return cls(np.zeros((n, n)), np.eye(n))

    @property
    def omega(self) -> np.ndarray:
        return self.P + 1j * self.Q

    def normalization_sq(self, k: int) -> float:
        """``a_{k,Q}^2 = (k/pi)^{n/2} det(Q)^{1/2}``."""
        return (k / np.pi) ** (self.n / 2) * math.sqrt(np.linalg.det(self.Q))

    def normalization(self, k: int) -> float:
        return math.sqrt(self.normalization_sq(k))

    def to_json(self):
        return {"P": self.P.tolist(), "Q": self.Q.tolist()}


@dataclass
class CoherentFrame:
    k: int
    omega: SiegelForm
    lattice: Lattice | None = None

    @property
    def a(self) -> float:
        return self.omega.normalization(self.k)

    @property
    def a_sq(self) -> float:
        return self.omega.normalization_sq(self.k)

    def state(self, b, x, theta) -> np.ndarray:
        """Plane coherent state ``a exp(ik/2 (x-b) Omega (x-b)) exp(ik <b, theta>)``."""
        n = self.omega.n
        x = np.asarray(x, dtype=float).reshape(-1, n)
        theta = np.asarray(theta, dtype=float).reshape(-1, n)
        b = np.asarray(b, dtype=float).reshape(n)
        d = x - b
        quad = np.einsum("pi,ij,pj->p", d, self.omega.omega, d)
        return self.a * np.exp(0.5j * self.k * quad + 1j * self.k * theta @ b)

    def theta_state(self, b, x, theta) -> np.ndarray:
        """Lattice sum of plane states over ``b + l``, truncated where negligible."""
        n = self.omega.n
        x = np.asarray(x, dtype=float).reshape(-1, n)
        qmin = float(np.linalg.eigvalsh(self.omega.Q)[0])
        R = math.sqrt(2 * math.log(1 / THETA_SUM_TOL) / (self.k * qmin))
        b = np.asarray(b, dtype=float).reshape(n)
        lo = np.floor(x.min(axis=0) - b - R).astype(int)
        hi = np.ceil(x.max(axis=0) - b + R).astype(int)
        grids = np.meshgrid(*[np.arange(a, c + 1) for a, c in zip(lo, hi)], indexing="ij")
        out = np.zeros(x.shape[0], dtype=complex)
        for l in np.stack([g.ravel() for g in grids], axis=1):
            out += self.state(b + l, x, theta)
        return out


def gauss_hermite(n: int, order: int):
    """Tensor Gauss-Hermite nodes and weights for ``int g(z) exp(-|z|^2) dz``."""
    z, w = np.polynomial.hermite.hermgauss(order)
    grids = np.meshgrid(*([z] * n), indexing="ij")
    wgrids = np.meshgrid(*([w] * n), indexing="ij")
    Z = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return Z, W


def _gaussian_average_gh(func, omega: SiegelForm, k, mids, order):
    # pi^{-n/2} sum_i w_i func(mid + L^{-T} z_i / sqrt(k))
    n = omega.n
    Z, W = gauss_hermite(n, order)
    Y = np.linalg.solve(omega.L.T, Z.T).T / math.sqrt(k)
    pts = (mids[:, None, :] + Y[None, :, :]).reshape(-1, n)
    vals = func(pts, np.broadcast_to(Y, (mids.shape[0],) + Y.shape).reshape(-1, n))
    return vals.reshape(mids.shape[0], -1) @ W / np.pi ** (n / 2)


def _gaussian_average_gl(func, omega: SiegelForm, k, mids, panels, lo, hi):
    # composite Gauss-Legendre over the support box, for compactly supported kinds
    n = omega.n
    xg, wg = np.polynomial.legendre.leggauss(16)
    edges = [np.linspace(lo[i], hi[i], panels + 1) for i in range(n)]
    nodes, weights = [], []
    for i in range(n):
        a, b = edges[i][:-1, None], edges[i][1:, None]
        nodes.append(((a + b) / 2 + (b - a) / 2 * xg).ravel())
        weights.append(((b - a) / 2 * wg).ravel())
    G = np.meshgrid(*nodes, indexing="ij")
    X = np.stack([g.ravel() for g in G], axis=1)
    Wt = np.prod(np.stack([g.ravel() for g in np.meshgrid(*weights, indexing="ij")], axis=1),
                 axis=1)
    out = np.empty(mids.shape[0], dtype=complex)
    a2 = omega.normalization_sq(k)
    for r, mid in enumerate(mids):
        Y = X - mid
        gauss = np.exp(-k * np.einsum("pi,ij,pj->p", Y, omega.Q, Y))
        out[r] = a2 * np.sum(Wt * gauss * func(X, Y))
    return out


def _band_elements(coeff, p, omega: SiegelForm, k, mids):
    """``a^2 e^{-pQp/4k} int f_p(x) e^{-k yQy + i<y, Pp>} dx`` with ``y = x - mid``."""
    p = np.asarray(p, dtype=float)
    Pp = omega.P @ p
    pref = math.exp(-float(p @ omega.Q @ p) / (4 * k))
    if np.any(Pp):
        def func(X, Y):
            return coeff.value(X) * np.exp(1j * (Y @ Pp))
    else:
        def func(X, Y):
            return coeff.value(X)
    if coeff.has_bump:
        lo, hi = coeff.support_box()
        panels = 32
        prev = _gaussian_average_gl(func, omega, k, mids, panels, lo, hi)
        while True:
            panels *= 2
            cur = _gaussian_average_gl(func, omega, k, mids, panels, lo, hi)
            if np.max(np.abs(cur - prev)) < QUAD_TOL:
                return pref * cur
            if panels >= 1024:
                raise QuadratureError("composite quadrature did not stabilize")
            prev = cur
    order = GH_START
    prev = _gaussian_average_gh(func, omega, k, mids, order)
    while True:
        order *= 2
        cur = _gaussian_average_gh(func, omega, k, mids, order)
        if np.max(np.abs(cur - prev)) < QUAD_TOL:
            return pref * cur
        if order >= GH_MAX:
            raise QuadratureError("Gauss-Hermite order doubling did not stabilize")
        prev = cur


def bt_matrix_element(f: FiberedFunction, frame: CoherentFrame, b, c) -> complex:
    """``<Psi_b, T(f) Psi_c>`` for plane lattice points ``b``, ``c``."""
    k = frame.k
    b = np.asarray(b, dtype=float).reshape(f.n)
    c = np.asarray(c, dtype=float).reshape(f.n)
    pf = k * (b - c)
    p = np.rint(pf)
    if np.max(np.abs(pf - p)) > 1e-9:
        raise ValueError("k (b - c) must be integral")
    p = tuple(int(v) for v in p)
    if p not in f.modes:
        return 0.0j
    mid = ((b + c) / 2).reshape(1, f.n)
    return complex(_band_elements(f.modes[p], p, frame.omega, k, mid)[0])


def bt_operator(f: FiberedFunction, frame: CoherentFrame, lattice: Lattice | None = None):
    """Berezin-Toeplitz operator on a plane lattice window."""
    k = frame.k
    lat = lattice or frame.lattice or bt_lattice([f], frame.omega, k)
    X = lat.points
    bands = {}
    for m, c in f.modes.items():
        mids = lat.midpoints(m)
        valid = lat.valid(m)
        vals = np.zeros(lat.size, dtype=complex)
        if np.any(valid):
            vals[valid] = _band_elements(c, m, frame.omega, k, mids[valid])
        bands[m] = vals
    return BandOperator(lat, bands)


def theta_bt_operator(f: FiberedFunction, frame: CoherentFrame):
    """Toeplitz operator in the theta basis of the torus, ``k^n``-dimensional.

    The lattice sum over shifts ``l`` pairs row ``b + l`` with column ``c``;
    the fiber mode involved is ``p = k(b - c) + k l``.  A band-limited ``f``
    only has finitely many such modes, so each mode contributes to the band
    ``p mod k``.  Shifts whose Gaussian factor falls below the relative
    threshold are dropped.
    """
    if not f.periodic:
        raise ValueError("theta-basis operator needs coefficients of period 1")
    k = frame.k
    lat = Lattice.torus(f.n, k)
    X = lat.points
    lead = max((math.exp(-float(np.array(m) @ frame.omega.Q @ np.array(m)) / (4 * k))
                for m in f.modes), default=0.0)
    bands = {}
    for m, c in f.modes.items():
        m_arr = np.array(m, dtype=float)
        if math.exp(-float(m_arr @ frame.omega.Q @ m_arr) / (4 * k)) < THETA_SUM_TOL * lead:
            continue
        vals = _band_elements(c, m, frame.omega, k, lat.midpoints(m))
        q = lat.canonical_offset(m)
        bands[q] = bands[q] + vals if q in bands else vals
    return BandOperator(lat, bands)


def bt_lattice(funcs, omega: SiegelForm, k: int, window=None) -> Lattice:
    """Plane window wide enough for both the symbol and the coherent-state tails."""
    qmin = float(np.linalg.eigvalsh(omega.Q)[0])
    margin = 1.0 + math.sqrt(40.0 / (k * qmin))
    return plane_lattice(funcs, k, window, margin)


def dq_bt_distance(f: FiberedFunction, omega: SiegelForm, k: int, A=None, window=None) -> float:
    """``|| phi_{H_P}(f) - T(f) ||`` on the common lattice.

    ``A`` is the constant horizontal field; it must equal ``omega.P``.  A
    constant field has vanishing transport phase, so the real-polarization
    side is the model operator.
    """
    if A is not None:
        C = np.atleast_2d(np.asarray(getattr(A, "constant", A), dtype=float))
        if getattr(A, "terms", ()) or not np.allclose(C, omega.P):
            raise ValueError("the horizontal field must be the constant P of the Siegel form")
    frame = CoherentFrame(k, omega)
    if f.is_zero:
        return 0.0
    if f.base == "torus":
        D = quantize_torus(f, k) - theta_bt_operator(f, frame)
    else:
        lat = bt_lattice([f], omega, k, window)
        D = quantize_model(f, k, lattice=lat) - bt_operator(f, frame, lat)
    return D.op_norm()


def shear(f: FiberedFunction, P) -> FiberedFunction:
    """Change of coordinates ``(x, theta) -> (x, theta + P x)`` on a function."""
    return f.shear(P)


def gaussian_moment_constant(Q) -> float:
    """``C_Q = a^2 int |x| exp(-xQx) dx`` at level 1."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = Q.shape[0]
    if n == 1:
        return 1.0 / math.sqrt(math.pi * Q[0, 0])
    # |L^{-T} z| averaged over exp(-|z|^2)/pi^{n/2}: radial part times angular mean
    L = np.linalg.cholesky(Q)
    Linv = np.linalg.inv(L.T)
    radial = math.exp(gammaln((n + 1) / 2) - gammaln(n / 2))
    if n == 2:
        t, w = np.polynomial.legendre.leggauss(200)
        phi = np.pi * (t + 1)
        U = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        ang = np.sum(w * np.linalg.norm(U @ Linv.T, axis=1)) * np.pi / (2 * np.pi)
        return radial * ang
    Z, W = gauss_hermite(n, 24)
    return float(np.sum(W * np.linalg.norm(Z @ Linv.T, axis=1)) / np.pi ** (n / 2))


def delta_defect(g, Q, k, x0=None, order=160):
    """``|g(x0) - a^2 int g(x) exp(-k (x-x0)Q(x-x0)) dx|`` for a callable ``g``."""
    omega = SiegelForm(None, Q)
    n = omega.n
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n)
    avg = _gaussian_average_gh(lambda X, Y: g(X), omega, k, x0.reshape(1, n), order)[0]
    return abs(g(x0.reshape(1, n))[0] - avg)
