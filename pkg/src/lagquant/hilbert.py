"""Level-k Hilbert spaces over Bohr-Sommerfeld lattices and banded operators.

States are indexed by lattice points ``b = l / k`` (``l`` integral).  On the
plane only a finite box window is materialized; on the torus all ``k^n``
residues are present.  An operator is stored by diagonal offsets ``p``: the
band ``V_p`` holds ``K(x + p/k, x)`` for every column point ``x``.
"""
from __future__ import annotations

import csv
import math
from typing import Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_NORM_LIMIT = 2048
POWER_SEED = 42
POWER_TOL = 1e-10


class LatticeMismatchError(ValueError):
    pass


class Lattice:
    """Bohr-Sommerfeld points of level ``k``, a plane window or the whole torus."""

    def __init__(self, n: int, k: int, base: str, lo_index, hi_index):
        if k < 1:
            raise ValueError("level k must be a positive integer")
        self.n = int(n)
        self.k = int(k)
        self.base = base
        self.lo_index = np.array(lo_index, dtype=int).reshape(self.n)
        self.hi_index = np.array(hi_index, dtype=int).reshape(self.n)
        if np.any(self.hi_index < self.lo_index):
            raise ValueError("empty lattice window")
        self.shape = tuple(int(s) for s in self.hi_index - self.lo_index + 1)
        self.size = int(np.prod(self.shape))
        grids = np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(self.lo_index, self.hi_index)],
                            indexing="ij")
        self.indices = np.stack([g.ravel() for g in grids], axis=1)
        self.points = self.indices / self.k

    @classmethod
    def plane(cls, n: int, k: int, lo, hi) -> "Lattice":
        """Window ``prod [lo_i, hi_i]``, snapped outward to the lattice."""
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,))
        lo_i = np.floor(lo * k + 1e-9).astype(int)
        hi_i = np.ceil(hi * k - 1e-9).astype(int)
        return cls(n, k, "plane", lo_i, hi_i)

    @classmethod
    def torus(cls, n: int, k: int) -> "Lattice":
        return cls(n, k, "torus", np.zeros(n, dtype=int), np.full(n, k - 1))

    @property
    def window(self):
        return self.lo_index / self.k, self.hi_index / self.k

    def __eq__(self, other):
        return (isinstance(other, Lattice) and self.n == other.n and self.k == other.k
                and self.base == other.base
                and np.array_equal(self.lo_index, other.lo_index)
                and np.array_equal(self.hi_index, other.hi_index))

    def __hash__(self):
        return hash((self.n, self.k, self.base, tuple(self.lo_index), tuple(self.hi_index)))

    def __repr__(self):
        if self.base == "torus":
            return f"Lattice.torus(n={self.n}, k={self.k})"
        lo, hi = self.window
        return f"Lattice.plane(n={self.n}, k={self.k}, lo={lo.tolist()}, hi={hi.tolist()})"

    def canonical_offset(self, p):
        """Offsets are taken mod k on the torus (centered residues)."""
        p = tuple(int(v) for v in p)
        if self.base == "torus":
            h = self.k // 2
            p = tuple(((v + h) % self.k) - h for v in p)
        return p

    def index_of(self, l) -> int:
        """Flat index of the integer point ``l`` (wrapped on the torus)."""
        l = np.asarray(l, dtype=int)
        if self.base == "torus":
            l = l % self.k
        rel = l - self.lo_index
        if np.any(rel < 0) or np.any(rel >= np.array(self.shape)):
            raise IndexError(f"lattice point {l.tolist()} outside window")
        return int(np.ravel_multi_index(tuple(rel), self.shape))

    def shift(self, values, p):
        """``out[x] = values[x + p/k]``, zero-filled outside a plane window."""
        values = np.asarray(values)
        grid = values.reshape(self.shape)
        if self.base == "torus":
            out = np.roll(grid, shift=tuple(-int(v) for v in p), axis=tuple(range(self.n)))
            return out.reshape(-1)
        out = np.zeros_like(grid)
        src, dst = [], []
        for v, N in zip(p, self.shape):
            v = int(v)
            if abs(v) >= N:
                return out.reshape(-1)
            if v >= 0:
                src.append(slice(v, N))
                dst.append(slice(0, N - v))
            else:
                src.append(slice(0, N + v))
                dst.append(slice(-v, N))
        out[tuple(dst)] = grid[tuple(src)]
        return out.reshape(-1)

    def midpoints(self, p) -> np.ndarray:
        """``x + p/(2k)`` for every column ``x``, computed as ``(2l + p) / 2k``."""
        return (2 * self.indices + np.asarray(p, dtype=int)) / (2 * self.k)

    def valid(self, p) -> np.ndarray:
        """Mask of columns ``x`` whose row ``x + p/k`` lies in the lattice."""
        return self.shift(np.ones(self.size, dtype=bool), p)

    def neighbor(self, p) -> np.ndarray:
        """Flat index of ``x + p/k`` for each ``x`` (``-1`` where absent)."""
        return self.shift(np.arange(self.size), p) if self.base == "torus" else np.where(
            self.valid(p), self.shift(np.arange(self.size), p), -1)


class BandOperator:
    """Operator on the lattice Hilbert space, stored as diagonal bands."""

    def __init__(self, lattice: Lattice, bands: Mapping | None = None):
        self.lattice = lattice
        acc: dict = {}
        for p, v in (bands or {}).items():
            p = lattice.canonical_offset(p)
            v = np.asarray(v, dtype=complex).reshape(lattice.size)
            if lattice.base == "plane":
                v = np.where(lattice.valid(p), v, 0.0)
            acc[p] = acc[p] + v if p in acc else v.copy()
        self.bands = {p: acc[p] for p in sorted(acc)}
        for v in self.bands.values():
            v.flags.writeable = False

    # constructors
    @classmethod
    def zero(cls, lattice):
        return cls(lattice, {})

    @classmethod
    def identity(cls, lattice):
        return cls.diagonal(lattice, np.ones(lattice.size))

    @classmethod
    def diagonal(cls, lattice, d):
        return cls(lattice, {(0,) * lattice.n: d})

    @classmethod
    def from_dense(cls, lattice, M, tol=0.0):
        M = np.asarray(M, dtype=complex)
        bands = {}
        idx = lattice.indices
        for j in range(lattice.size):
            for i in np.nonzero(np.abs(M[:, j]) > tol)[0]:
                p = lattice.canonical_offset(idx[i] - idx[j])
                bands.setdefault(p, np.zeros(lattice.size, dtype=complex))[j] += M[i, j]
        return cls(lattice, bands)

    # structure
    @property
    def band_width(self) -> int:
        return max((max(abs(v) for v in p) for p in self.bands), default=0)

    @property
    def shape(self):
        return (self.lattice.size, self.lattice.size)

    def band(self, p) -> np.ndarray:
        p = self.lattice.canonical_offset(p)
        if p in self.bands:
            return self.bands[p]
        return np.zeros(self.lattice.size, dtype=complex)

    def nonzero_bands(self, tol=0.0):
        return [p for p, v in self.bands.items() if np.max(np.abs(v), initial=0.0) > tol]

    def _check(self, other):
        if self.lattice != other.lattice:
            raise LatticeMismatchError(f"{self.lattice!r} vs {other.lattice!r}")

    # algebra
    def __add__(self, other):
        self._check(other)
        bands = dict(self.bands)
        for p, v in other.bands.items():
            bands[p] = bands[p] + v if p in bands else v
        return BandOperator(self.lattice, bands)

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        return BandOperator(self.lattice, {p: c * v for p, v in self.bands.items()})

    def __mul__(self, c):
        if isinstance(c, BandOperator):
            return self.compose(c)
        return self.scale(c)

    def __rmul__(self, c):
        return self.scale(c)

    def __matmul__(self, other):
        return self.compose(other)

    def compose(self, other):
        """``(A B)(x + p/k, x) = sum_m A(x + p/k, x + m/k) B(x + m/k, x)``."""
        self._check(other)
        lat = self.lattice
        out: dict = {}
        for m, bv in other.bands.items():
            for q, av in self.bands.items():
                p = lat.canonical_offset(np.add(m, q))
                term = lat.shift(av, m) * bv
                out[p] = out[p] + term if p in out else term
        return BandOperator(lat, out)

    def adjoint(self):
        """``A*(x - p/k, x) = conj(A(x, x - p/k))``."""
        lat = self.lattice
        bands = {}
        for p, v in self.bands.items():
            q = lat.canonical_offset(tuple(-x for x in p))
            w = np.conj(lat.shift(v, q))
            bands[q] = bands[q] + w if q in bands else w
        return BandOperator(lat, bands)

    def commutator(self, other):
        return self.compose(other) - other.compose(self)

    # materialization
    def to_sparse(self):
        lat = self.lattice
        rows, cols, vals = [], [], []
        cols_all = np.arange(lat.size)
        for p, v in self.bands.items():
            nb = lat.neighbor(p)
            keep = (nb >= 0) & (v != 0)
            rows.append(nb[keep])
            cols.append(cols_all[keep])
            vals.append(v[keep])
        if not rows:
            return sp.csr_matrix(self.shape, dtype=complex)
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=self.shape)

    def to_dense(self):
        lat = self.lattice
        M = np.zeros(self.shape, dtype=complex)
        cols = np.arange(lat.size)
        for p, v in self.bands.items():
            nb = lat.neighbor(p)
            keep = nb >= 0
            np.add.at(M, (nb[keep], cols[keep]), v[keep])
        return M

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(v))) for v in self.bands.values()), default=0.0)

    def is_hermitian(self, tol=0.0) -> bool:
        return (self - self.adjoint()).max_abs() <= tol

    # norms
    def band_norm_bound(self) -> float:
        """``sum_p sup_x |K(x + p/k, x)|``, an upper bound for the operator norm."""
        return float(sum(np.max(np.abs(v), initial=0.0) for v in self.bands.values()))

    def op_norm(self) -> float:
        """Largest singular value of the materialized operator."""
        if not self.bands or self.max_abs() == 0.0:
            return 0.0
        if self.lattice.size <= DENSE_NORM_LIMIT:
            M = self.to_dense()
            if np.array_equal(M, M.conj().T):
                return float(np.max(np.abs(np.linalg.eigvalsh(M))))
            return float(np.linalg.svd(M, compute_uv=False)[0])
        return _sparse_norm(self.to_sparse())

    def to_csv(self, path):
        """Write the nonzero entries as ``row_index..., col_index..., re, im``."""
        lat = self.lattice
        S = self.to_sparse().tocoo()
        order = np.lexsort((S.col, S.row))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"row_{i}" for i in range(lat.n)] + [f"col_{i}" for i in range(lat.n)]
                       + ["re", "im"])
            for t in order:
                r, c, z = S.row[t], S.col[t], S.data[t]
                w.writerow([int(v) for v in lat.indices[r]] + [int(v) for v in lat.indices[c]]
                           + [repr(float(z.real)), repr(float(z.imag))])

    def __repr__(self):
        return f"BandOperator({self.lattice!r}, bands={list(self.bands)})"


def _sparse_norm(S) -> float:
    """Largest singular value via Krylov (Lanczos) iteration on ``S* S``.

    The start vector is seeded deterministically; the returned value is
    certified by the eigen-residual of the converged vector.
    """
    SH = S.conj().T.tocsr()
    rng = np.random.default_rng(POWER_SEED)
    v0 = rng.standard_normal(S.shape[1]) + 1j * rng.standard_normal(S.shape[1])
    op = spla.LinearOperator(S.shape, matvec=lambda x: SH @ (S @ x), dtype=complex)
    vals, vecs = spla.eigsh(op, k=1, which="LA", tol=POWER_TOL * 1e-2, v0=v0)
    lam, v = float(vals[0]), vecs[:, 0]
    resid = np.linalg.norm(SH @ (S @ v) - lam * v)
    if resid > math.sqrt(POWER_TOL) * max(lam, 1e-300):
        raise ArithmeticError(f"norm iteration did not converge (residual {resid:.3g})")
    return math.sqrt(max(lam, 0.0))


def op_norm(A: BandOperator) -> float:
    return A.op_norm()


def band_norm_bound(A: BandOperator) -> float:
    return A.band_norm_bound()


def compose(A: BandOperator, B: BandOperator) -> BandOperator:
    return A.compose(B)


def commutator(A: BandOperator, B: BandOperator) -> BandOperator:
    return A.commutator(B)
