"""Quantization maps from fibered functions to banded lattice operators.

Three schemes share one entry rule.  The band at offset ``m`` is

    K(x + m/k, x) = exp(i * phase(x, m, k)) * f_m(x + m/(2k))

where ``phase`` is the transport phase of the horizontal field ``A``.  The
phase vanishes for the model scheme, and the torus scheme lifts along
shortest arcs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .fields import DECAY_TOL, FiberedFunction
from .hilbert import BandOperator, Lattice

PHASE_TOL = 1e-10
PHASE_MIN_STEPS = 64
PHASE_MAX_STEPS = 1 << 16


class WindowTooSmallError(ValueError):
    pass


class BandTooWideError(ValueError):
    pass


# ---------------------------------------------------------------------------
# horizontal field
# ---------------------------------------------------------------------------
class HorizontalField:
    """``A(x) = C + sum_t M_t sin(2 pi <q_t, x> + phi_t)``, entries ``A[i, j] = A_j^i``.

    Trigonometric terms keep first and second derivatives analytic.  Integral
    frequencies make the field periodic on the torus.
    """

    def __init__(self, n: int, constant=None, terms: Sequence = ()):
        self.n = int(n)
        C = np.zeros((n, n)) if constant is None else np.asarray(constant, dtype=float)
        self.constant = C.reshape(n, n)
        clean = []
        for M, q, phi in terms:
            M = np.asarray(M, dtype=float).reshape(n, n)
            q = np.asarray(q, dtype=float).reshape(n)
            clean.append((M, q, float(phi)))
        self.terms = tuple(clean)

    @classmethod
    def zero(cls, n: int) -> "HorizontalField":
        return cls(n)

    @classmethod
    def sin(cls, amp=1.0, freq=1.0, phase=0.0) -> "HorizontalField":
        """The scalar field ``amp * sin(2 pi freq x + phase)`` for n = 1."""
        return cls(1, None, [([[amp]], [freq], phase)])

    @property
    def is_constant(self) -> bool:
        return all(not np.any(M) or not np.any(q) for M, q, _ in self.terms)

    @property
    def periodic(self) -> bool:
        return all(np.all(np.mod(q, 1.0) == 0) for _, q, _ in self.terms)

    @property
    def grad_norm_bound(self) -> float:
        """Sup over x of the Frobenius norm of ``dA`` (a global bound)."""
        return float(sum(2 * np.pi * np.linalg.norm(q) * np.linalg.norm(M)
                         for M, q, _ in self.terms))

    def _pts(self, X):
        X = np.asarray(X, dtype=float)
        return X.reshape(-1, self.n)

    def value(self, X) -> np.ndarray:
        """Array of shape (npts, n, n)."""
        X = self._pts(X)
        out = np.broadcast_to(self.constant, (X.shape[0], self.n, self.n)).copy()
        for M, q, phi in self.terms:
            out += np.sin(2 * np.pi * X @ q + phi)[:, None, None] * M
        return out

    def grad(self, X) -> np.ndarray:
        """``G[:, i, j, l] = d A_j^i / d x_l``."""
        X = self._pts(X)
        out = np.zeros((X.shape[0], self.n, self.n, self.n))
        for M, q, phi in self.terms:
            c = np.cos(2 * np.pi * X @ q + phi)
            out += c[:, None, None, None] * (2 * np.pi) * M[:, :, None] * q[None, None, :]
        return out

    def hess(self, X) -> np.ndarray:
        """``H[:, i, j, l, r] = d^2 A_j^i / d x_l d x_r``."""
        X = self._pts(X)
        out = np.zeros((X.shape[0],) + (self.n,) * 4)
        for M, q, phi in self.terms:
            s = np.sin(2 * np.pi * X @ q + phi)
            qq = np.outer(q, q)
            out -= s[:, None, None, None, None] * (2 * np.pi) ** 2 * M[:, :, None, None] * qq
        return out

    def directional(self, X, u) -> np.ndarray:
        """``<u, A(x) u>`` at every point."""
        X = self._pts(X)
        u = np.asarray(u, dtype=float)
        out = np.full(X.shape[0], float(u @ self.constant @ u))
        for M, q, phi in self.terms:
            out += np.sin(2 * np.pi * X @ q + phi) * float(u @ M @ u)
        return out

    def to_json(self) -> dict:
        return {"kind": "general", "n": self.n, "constant": self.constant.tolist(),
                "terms": [{"M": M.tolist(), "q": q.tolist(), "phi": phi}
                          for M, q, phi in self.terms]}

    @classmethod
    def from_json(cls, d: Mapping, n: int | None = None) -> "HorizontalField":
        kind = d.get("kind", "general")
        if kind == "sin":
            n = int(d.get("n", n or 1))
            amp = np.asarray(d.get("amp", 1.0), dtype=float)
            M = amp * np.eye(n) if amp.ndim == 0 else amp.reshape(n, n)
            q = np.broadcast_to(np.asarray(d.get("freq", 1.0), dtype=float), (n,))
            return cls(n, None, [(M, q, d.get("phase", 0.0))])
        if kind == "constant":
            C = np.atleast_2d(np.asarray(d["matrix"], dtype=float))
            return cls(C.shape[0], C)
        if kind == "zero":
            return cls(int(d.get("n", n or 1)))
        if kind == "general":
            n = int(d.get("n", n or 1))
            terms = [(t["M"], t["q"], t.get("phi", 0.0)) for t in d.get("terms", [])]
            return cls(n, d.get("constant"), terms)
        raise ValueError(f"unknown horizontal field kind {kind!r}")


# ---------------------------------------------------------------------------
# covers
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PlaneCover:
    """The trivial cover of the plane; two points are close within ``radius``."""

    radius: float = math.inf

    @property
    def closeness_radius(self) -> float:
        return self.radius


@dataclass(frozen=True)
class TorusCover:
    """``charts`` arcs of half-width ``half_width`` centered at ``j / charts`` per axis.

    Points closer than ``2 * half_width - 1/charts`` share a chart, and every
    chart is an arc shorter than half a period.
    """

    charts: int = 8
    half_width: float = 0.2
    offset: float = 0.0

    def __post_init__(self):
        if not 0 < self.half_width < 0.25:
            raise ValueError("chart half-width must lie in (0, 1/4)")
        if 2 * self.half_width <= 1.0 / self.charts:
            raise ValueError("charts do not overlap; not a cover")

    @property
    def closeness_radius(self) -> float:
        return 2 * self.half_width - 1.0 / self.charts

    def common_chart(self, x, y) -> int:
        """Index of a chart containing both points (per-axis, n = 1 coordinates)."""
        x, y = float(x) % 1.0, float(y) % 1.0
        d = ((y - x + 0.5) % 1.0) - 0.5
        for j in range(self.charts):
            c = j / self.charts + self.offset
            a = ((x - c + 0.5) % 1.0) - 0.5
            if abs(a) < self.half_width and abs(a + d) < self.half_width:
                return j
        raise BandTooWideError("points share no chart")


# ---------------------------------------------------------------------------
# transport phase
# ---------------------------------------------------------------------------
def _phase_simpson(A: HorizontalField, mid, u, h, steps, cache=None):
    # RK4 for alpha' = a(t) is Simpson's rule; integrate 0 -> +h and 0 -> -h.
    # ``cache`` holds the samples of the previous (half as fine) grid, which
    # are every other node of this one.
    total = np.zeros(mid.shape[0])
    samples = {}
    for sgn in (1.0, -1.0):
        t = sgn * h * np.linspace(0.0, 1.0, 2 * steps + 1)
        a = np.empty((mid.shape[0], t.size))
        if cache is not None:
            a[:, ::2] = cache[sgn]
            fresh = range(1, t.size, 2)
        else:
            fresh = range(t.size)
        for i in fresh:
            a[:, i] = A.directional(mid + t[i] * u, u)
        samples[sgn] = a
        w = np.ones(2 * steps + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w *= sgn * h / (6 * steps)
        beta = a @ w                        # <u, alpha(+-h)>
        moment = (a * t) @ w                # int_0^{+-h} s <u, alpha'(s)> ds
        total += -h * beta + sgn * moment
    return total, samples


def horizontal_phase(A: HorizontalField, x, m, k: int, tol: float = PHASE_TOL,
                     min_steps: int = PHASE_MIN_STEPS):
    """Transport phase for the step from ``x`` to ``x + m/k``.

    ``x`` may be one point or an array of points; ``m`` is one integer offset.
    The result is ``k * (-<m/2k, alpha(h) + alpha(-h)> + int_{-h}^{h} <s u, alpha'(s)> ds)``
    with ``alpha' = A(u)`` along the segment through the midpoint.
    """
    X = np.asarray(x, dtype=float).reshape(-1, A.n)
    m = np.asarray(m, dtype=float).reshape(A.n)
    norm = float(np.linalg.norm(m))
    scalar = np.ndim(x) <= 1 and X.shape[0] == 1
    if norm == 0.0 or A.is_constant:
        out = np.zeros(X.shape[0])
        return float(out[0]) if scalar else out
    u = m / norm
    h = norm / (2 * k)
    mid = X + m / (2 * k)
    steps = int(min_steps)
    prev, cache = _phase_simpson(A, mid, u, h, steps)
    prev = prev * k
    while True:
        steps *= 2
        cur, cache = _phase_simpson(A, mid, u, h, steps, cache)
        cur = cur * k
        if np.max(np.abs(cur - prev)) < tol:
            break
        if steps >= max(PHASE_MAX_STEPS, 4 * min_steps):
            raise ArithmeticError("phase integration did not reach tolerance")
        prev = cur
    return float(cur[0]) if scalar else cur


def phase_bound(A: HorizontalField, m, k: int) -> float:
    """``(5/24) |dA| |m|^3 / k^2``."""
    m = np.asarray(m, dtype=float)
    return 5.0 / 24.0 * A.grad_norm_bound * float(np.linalg.norm(m)) ** 3 / k**2


# ---------------------------------------------------------------------------
# lattices and windows
# ---------------------------------------------------------------------------
def plane_window(funcs: Sequence[FiberedFunction], k: int, margin: float = 1.0,
                 tol: float = DECAY_TOL):
    """Box containing every coefficient's decay radius plus ``band/k + margin``."""
    los, his, band = [], [], 0
    for f in funcs:
        if f.is_zero:
            continue
        lo, hi = f.support_box(tol)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise WindowTooSmallError("function has no decay radius; pass an explicit window")
        los.append(lo)
        his.append(hi)
        band = max(band, f.band_limit)
    if not los:
        n = funcs[0].n
        return np.full(n, -margin), np.full(n, margin)
    pad = band / k + margin
    return np.min(los, axis=0) - pad, np.max(his, axis=0) + pad


def plane_lattice(funcs: Sequence[FiberedFunction], k: int, window=None, margin=1.0) -> Lattice:
    n = funcs[0].n
    if window is None:
        lo, hi = plane_window(funcs, k, margin)
        return Lattice.plane(n, k, lo, hi)
    lo, hi = window
    lat = Lattice.plane(n, k, lo, hi)
    for f in funcs:
        if f.is_zero:
            continue
        flo, fhi = f.support_box()
        if not (np.all(np.isfinite(flo)) and np.all(np.isfinite(fhi))):
            continue
        wlo, whi = lat.window
        if np.any(flo < wlo) or np.any(fhi > whi):
            raise WindowTooSmallError(
                f"window [{wlo.tolist()}, {whi.tolist()}] misses the decay box "
                f"[{flo.tolist()}, {fhi.tolist()}]")
    return lat


def _check_lattice(f: FiberedFunction, lattice: Lattice):
    if lattice.n != f.n:
        raise ValueError("dimension mismatch between function and lattice")


def _assemble(f: FiberedFunction, k: int, lattice: Lattice, A=None, lift=False):
    bands = {}
    X = lattice.points
    for m, c in f.modes.items():
        mv = np.array(m, dtype=float)
        # midpoints from integers so that (b, c) and (c, b) see the same point
        vals = c.value(lattice.midpoints(m))
        if A is not None and any(m):
            vals = vals * np.exp(1j * horizontal_phase(A, X, mv, k))
        bands[m] = vals
    return BandOperator(lattice, bands)


def quantize_model(f: FiberedFunction, k: int, window=None, lattice: Lattice | None = None):
    """The model map: ``K(b, c) = f_{k(b-c)}((b + c)/2)``."""
    if f.base != "plane":
        raise ValueError("model quantizer needs a plane-base function")
    if k < 1:
        raise ValueError("k must be positive")
    lattice = lattice or plane_lattice([f], k, window)
    _check_lattice(f, lattice)
    return _assemble(f, k, lattice)


def quantize_general(f: FiberedFunction, A: HorizontalField, k: int, cover=None, window=None,
                     lattice: Lattice | None = None):
    """The map with horizontal-transport phases on the plane."""
    if f.base != "plane":
        raise ValueError("use quantize_torus for torus-base functions")
    cover = cover or PlaneCover()
    if f.band_limit / k > cover.closeness_radius:
        raise BandTooWideError(
            f"band {f.band_limit}/k = {f.band_limit / k:.3g} exceeds closeness radius "
            f"{cover.closeness_radius:.3g}")
    lattice = lattice or plane_lattice([f], k, window)
    _check_lattice(f, lattice)
    return _assemble(f, k, lattice, A=None if A.is_constant else A)


def quantize_torus(f: FiberedFunction, k: int, A: HorizontalField | None = None, cover=None):
    """The ``k^n``-dimensional torus quantizer with shortest-arc lifts."""
    if not f.periodic:
        raise ValueError("torus quantizer needs coefficients of period 1")
    if A is not None and not A.periodic:
        raise ValueError("horizontal field must be periodic on the torus")
    if 4 * f.band_limit >= k:
        raise BandTooWideError(f"band limit {f.band_limit} must satisfy 4M < k = {k}")
    if cover is not None and f.band_limit / k > cover.closeness_radius:
        raise BandTooWideError("band exceeds the cover's closeness radius")
    lattice = Lattice.torus(f.n, k)
    return _assemble(f, k, lattice, A=None if A is None or A.is_constant else A)


@dataclass
class Scheme:
    """A quantization scheme: ``model``, ``general`` (plane, with A) or ``torus``."""

    kind: str = "model"
    A: HorizontalField | None = None
    cover: object = None
    window: tuple | None = None
    margin: float = 1.0

    def __post_init__(self):
        if self.kind not in ("model", "general", "torus"):
            raise ValueError(f"unknown scheme {self.kind!r}")

    @property
    def base(self) -> str:
        return "torus" if self.kind == "torus" else "plane"

    def lattice(self, funcs: Sequence[FiberedFunction], k: int) -> Lattice:
        if self.kind == "torus":
            return Lattice.torus(funcs[0].n, k)
        return plane_lattice(funcs, k, self.window, self.margin)

    def quantize(self, f: FiberedFunction, k: int, lattice: Lattice | None = None):
        if self.kind == "model":
            return quantize_model(f, k, self.window, lattice)
        if self.kind == "general":
            A = self.A or HorizontalField.zero(f.n)
            return quantize_general(f, A, k, self.cover, self.window, lattice)
        return quantize_torus(f, k, self.A, self.cover)

    def to_json(self) -> dict:
        d = {"kind": self.kind}
        if self.A is not None:
            d["A"] = self.A.to_json()
        if self.window is not None:
            d["window"] = [np.asarray(w, dtype=float).tolist() for w in self.window]
        return d

    @classmethod
    def from_json(cls, d: Mapping | None, n: int = 1) -> "Scheme":
        d = d or {}
        A = HorizontalField.from_json(d["A"], n) if d.get("A") else None
        cover = None
        if "cover" in d:
            c = d["cover"]
            cover = TorusCover(c.get("charts", 8), c.get("half_width", 0.2), c.get("offset", 0.0)) \
                if d.get("kind") == "torus" else PlaneCover(c.get("radius", math.inf))
        window = tuple(d["window"]) if d.get("window") is not None else None
        return cls(d.get("kind", "model"), A, cover, window, d.get("margin", 1.0))


def quantize(f: FiberedFunction, k: int, scheme: Scheme | None = None, lattice=None):
    return (scheme or Scheme()).quantize(f, k, lattice)
