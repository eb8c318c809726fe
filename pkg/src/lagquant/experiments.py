"""Convergence scans over the level k and their reporting."""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .fields import FiberedFunction, poisson_bracket
from .hilbert import BandOperator
from .quantizer import HorizontalField, Scheme, horizontal_phase, phase_bound
from .star import expansion_residual
from .toeplitz import SiegelForm, dq_bt_distance

SCHEMA_VERSION = 1
EXPERIMENTS = ("norm-convergence", "commutator-rate", "star-residual", "bt-compare",
               "abelian-compare", "phase-bound")
PLANE_K = (8, 16, 32, 64)
TORUS_K = (12, 16, 24, 32, 48, 64)
HERMITIAN_TOL = 1e-12
BOUND_SLACK = 1e-12


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# slope fitting
# ---------------------------------------------------------------------------
def loglog_fit(ks, values):
    """Least-squares slope, intercept and R^2 of ``log value`` against ``log k``."""
    ks = np.asarray(ks, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = values > 0
    if keep.sum() < 2:
        return math.nan, math.nan, math.nan
    x, y = np.log(ks[keep]), np.log(values[keep])
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([slope, icpt])
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return float(slope), float(icpt), r2


def fit_window(npts: int) -> int:
    """Rows used for the asymptotic fit: the last half, but never fewer than 3."""
    return min(npts, max(3, math.ceil(npts / 2)))


@dataclass
class ConvergenceRecord:
    experiment: str
    ks: list = field(default_factory=list)
    values: list = field(default_factory=list)
    normalized: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def add(self, k, value, normalized):
        self.ks.append(int(k))
        self.values.append(float(value))
        self.normalized.append(float(normalized))

    def fit(self):
        """Slope over the tail window; exact-zero rows are excluded."""
        rows = [(k, v) for k, v in zip(self.ks, self.values) if v > 0 and math.isfinite(v)]
        if len(rows) < 2:
            return math.nan, math.nan
        tail = rows[-fit_window(len(rows)):]
        slope, _, r2 = loglog_fit([k for k, _ in tail], [v for _, v in tail])
        return slope, r2

    @property
    def slope(self):
        return self.fit()[0]

    @property
    def r2(self):
        return self.fit()[1]

    def slope_so_far(self):
        out = []
        for i in range(len(self.ks)):
            out.append(loglog_fit(self.ks[: i + 1], self.values[: i + 1])[0])
        return out

    @property
    def ok(self) -> bool:
        return not self.failures

    def csv_text(self) -> str:
        lines = ["k,value,normalized,slope_so_far"]
        for k, v, nv, s in zip(self.ks, self.values, self.normalized, self.slope_so_far()):
            lines.append(f"{k},{v:.17g},{nv:.17g},{s:.17g}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        slope, r2 = self.fit()
        return {"experiment": self.experiment, "k": self.ks, "slope": _nan_none(slope),
                "r2": _nan_none(r2), "fit_rows": fit_window(len(self.ks)) if self.ks else 0,
                "checks": self.checks, "failures": self.failures, "notes": self.notes,
                "ok": self.ok}

    def write(self, path):
        path = Path(path)
        path.write_text(self.csv_text())
        path.with_suffix(".summary.json").write_text(json.dumps(self.summary(), indent=2) + "\n")


def _nan_none(v):
    return None if v is None or not math.isfinite(v) else v


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------
def load_function(spec, base_dir=None) -> FiberedFunction:
    if spec is None:
        raise ConfigError("missing function")
    if isinstance(spec, (str, Path)):
        p = Path(spec)
        if base_dir is not None and not p.is_absolute():
            p = Path(base_dir) / p
        spec = json.loads(p.read_text())
    if not spec.get("modes"):
        raise ConfigError("empty function: no fiber modes given")
    return FiberedFunction.from_json(spec)


def validate_config(cfg: Mapping) -> dict:
    cfg = dict(cfg)
    if cfg.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema {cfg.get('schema')!r}")
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}")
    if "k_list" in cfg:
        ks = [int(k) for k in cfg["k_list"]]
        if len(ks) < 3:
            raise ConfigError("k_list needs at least 3 levels for a slope fit")
        if any(b <= a for a, b in zip(ks, ks[1:])) or ks[0] < 1:
            raise ConfigError("k_list must be strictly ascending positive integers")
        cfg["k_list"] = ks
    return cfg


def _scheme(cfg, n) -> Scheme:
    return Scheme.from_json(cfg.get("scheme"), n)


def _k_list(cfg, scheme_kind):
    return cfg.get("k_list") or list(TORUS_K if scheme_kind == "torus" else PLANE_K)


def _omega(cfg, n) -> SiegelForm:
    d = cfg.get("omega") or {}
    P = d.get("P")
    Q = d.get("Q", np.eye(n).tolist())
    return SiegelForm(P, Q)


def _map(fn: Callable, args: Sequence, jobs: int):
    if jobs <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, args))


# ---------------------------------------------------------------------------
# sup norm
# ---------------------------------------------------------------------------
def sup_norm(f: FiberedFunction, grid: int | None = None, refine_tol: float = 1e-8) -> float:
    """``sup |f|`` by a dense grid search followed by local refinement."""
    n = f.n
    if f.is_zero:
        return 0.0
    if grid is None:
        grid = 512 if n == 1 else 48
    if f.base == "torus":
        lo, hi = np.zeros(n), np.ones(n)
    else:
        lo, hi = f.support_box(1e-12)
    axes = [np.linspace(lo[i], hi[i], grid) for i in range(n)]
    X = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    th_axes = [np.linspace(0, 2 * np.pi, grid, endpoint=False)] * n
    T = np.stack([g.ravel() for g in np.meshgrid(*th_axes, indexing="ij")], axis=1)
    V = np.abs(f.grid_values(X, T))
    best = float(V.max())
    flat = np.argsort(V, axis=None)[-4:]
    for idx in flat:
        i, j = np.unravel_index(idx, V.shape)
        z0 = np.concatenate([X[i], T[j]])

        def neg(z):
            return -abs(f.evaluate(z[:n].reshape(1, n), z[n:].reshape(1, n))[0])
        res = minimize(neg, z0, method="Nelder-Mead",
                       options={"xatol": refine_tol * 1e-2, "fatol": refine_tol * 1e-3,
                                "maxiter": 4000})
        best = max(best, -float(res.fun))
    return best


# ---------------------------------------------------------------------------
# per-k tasks (module level so they pickle)
# ---------------------------------------------------------------------------
def _op_checks(ops: Mapping[str, BandOperator], real: Mapping[str, bool]):
    out = {}
    for name, op in ops.items():
        if real.get(name):
            out[f"hermitian:{name}"] = (op - op.adjoint()).max_abs()
        out[f"norm_bound_gap:{name}"] = op.op_norm() - op.band_norm_bound()
    return out


def _norm_task(args):
    fj, sj, k, target = args
    f = FiberedFunction.from_json(fj)
    scheme = Scheme.from_json(sj, f.n)
    op = scheme.quantize(f, k, scheme.lattice([f], k))
    value = abs(op.op_norm() - target)
    return value, _op_checks({"phi_f": op}, {"phi_f": f.real})


def _commutator_task(args):
    fj, gj, sj, k = args
    f = FiberedFunction.from_json(fj)
    g = FiberedFunction.from_json(gj)
    scheme = Scheme.from_json(sj, f.n)
    pb = poisson_bracket(f, g)
    lat = scheme.lattice([f, g, pb], k)
    F, G = scheme.quantize(f, k, lat), scheme.quantize(g, k, lat)
    R = F.commutator(G) + scheme.quantize(pb, k, lat).scale(1j / k)
    return R.op_norm(), _op_checks({"phi_f": F, "phi_g": G}, {"phi_f": f.real, "phi_g": g.real})


def _star_task(args):
    fj, gj, sj, k, l, include_theta = args
    f = FiberedFunction.from_json(fj)
    g = FiberedFunction.from_json(gj)
    scheme = Scheme.from_json(sj, f.n)
    return expansion_residual(f, g, k, l, scheme, include_theta), {}


def _bt_task(args):
    fj, P, Q, k = args
    f = FiberedFunction.from_json(fj)
    return dq_bt_distance(f, SiegelForm(P, Q), k), {}


def _collect(rec: ConvergenceRecord, ks, results, norm_fn):
    for k, (value, checks) in zip(ks, results):
        rec.add(k, value, norm_fn(k, value))
        for name, v in checks.items():
            worst = rec.checks.get(name)
            rec.checks[name] = v if worst is None else max(worst, v)
    for name, v in rec.checks.items():
        if name.startswith("hermitian:") and v > HERMITIAN_TOL:
            rec.failures.append({"check": name, "value": v, "limit": HERMITIAN_TOL})
        if name.startswith("norm_bound_gap:") and v > BOUND_SLACK:
            rec.failures.append({"check": name, "value": v, "limit": BOUND_SLACK})
    return rec


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------
def run_norm_convergence(cfg: Mapping, jobs: int = 1, base_dir=None) -> ConvergenceRecord:
    """Rows ``(k, | ||phi(f)|| - ||f||_sup |)``."""
    cfg = validate_config({**cfg, "experiment": "norm-convergence"})
    f = load_function(cfg.get("f"), base_dir)
    scheme = _scheme(cfg, f.n)
    ks = _k_list(cfg, scheme.kind)
    target = sup_norm(f)
    args = [(f.to_json(), scheme.to_json(), k, target) for k in ks]
    rec = ConvergenceRecord("norm-convergence")
    rec.notes.append(f"sup_norm={target!r}")
    return _collect(rec, ks, _map(_norm_task, args, jobs),
                    lambda k, v: v / target if target else math.nan)


def run_commutator_rate(cfg: Mapping, jobs: int = 1, base_dir=None) -> ConvergenceRecord:
    """Rows ``(k, ||[phi f, phi g] + (i/k) phi({f, g})||)``; normalized by ``k^2``."""
    cfg = validate_config({**cfg, "experiment": "commutator-rate"})
    f = load_function(cfg.get("f"), base_dir)
    g = load_function(cfg.get("g"), base_dir)
    scheme = _scheme(cfg, f.n)
    ks = _k_list(cfg, scheme.kind)
    args = [(f.to_json(), g.to_json(), scheme.to_json(), k) for k in ks]
    rec = ConvergenceRecord("commutator-rate")
    return _collect(rec, ks, _map(_commutator_task, args, jobs), lambda k, v: v * k**2)


def run_star_residual(cfg: Mapping, jobs: int = 1, base_dir=None) -> ConvergenceRecord:
    """Rows ``(k, ||phi f phi g - sum_{j<=l} (-i/k)^j phi(C_j)||)``; normalized by ``k^{l+1}``."""
    cfg = validate_config({**cfg, "experiment": "star-residual"})
    f = load_function(cfg.get("f"), base_dir)
    g = load_function(cfg.get("g"), base_dir)
    scheme = _scheme(cfg, f.n)
    l = int(cfg.get("l", 1))
    inc = bool(cfg.get("include_theta", True))
    ks = _k_list(cfg, scheme.kind)
    args = [(f.to_json(), g.to_json(), scheme.to_json(), k, l, inc) for k in ks]
    rec = ConvergenceRecord("star-residual")
    rec.notes.append(f"l={l}")
    return _collect(rec, ks, _map(_star_task, args, jobs), lambda k, v: v * k ** (l + 1))


def run_bt_compare(cfg: Mapping, jobs: int = 1, base_dir=None) -> ConvergenceRecord:
    """Rows ``(k, ||phi(f) - T(f)||)`` normalized by ``sqrt(k)``; plane or torus by ``f.base``."""
    exp = cfg.get("experiment", "bt-compare")
    if exp not in ("bt-compare", "abelian-compare"):
        exp = "bt-compare"
    cfg = validate_config({**cfg, "experiment": exp})
    f = load_function(cfg.get("f"), base_dir)
    want = "torus" if exp == "abelian-compare" else "plane"
    if f.base != want:
        raise ConfigError(f"{exp} needs a {want}-base function")
    om = _omega(cfg, f.n)
    if "scheme" in cfg and (cfg["scheme"] or {}).get("A"):
        A = HorizontalField.from_json(cfg["scheme"]["A"], f.n)
        if A.terms or not np.allclose(A.constant, om.P):
            raise ConfigError("the horizontal field must be the constant P of omega")
    ks = cfg.get("k_list") or list(TORUS_K if want == "torus" else PLANE_K + (128,))
    args = [(f.to_json(), om.P.tolist(), om.Q.tolist(), k) for k in ks]
    rec = ConvergenceRecord(exp)
    return _collect(rec, ks, _map(_bt_task, args, jobs), lambda k, v: v * math.sqrt(k))


def run_abelian_compare(cfg: Mapping, jobs: int = 1, base_dir=None) -> ConvergenceRecord:
    return run_bt_compare({**cfg, "experiment": "abelian-compare"}, jobs, base_dir)


def phase_samples(n_samples: int, seed: int, ks, max_m: int = 8, cap: float = 10.0):
    """Random ``(x, m, k)`` with ``|m|^3 / k^2 <= cap``, drawn deterministically."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n_samples:
        k = int(rng.choice(ks))
        m = int(rng.integers(1, max_m + 1)) * int(rng.choice([-1, 1]))
        if abs(m) ** 3 / k**2 > cap:
            continue
        out.append((float(rng.uniform(0.0, 1.0)), m, k))
    return out


def _phase_task(args):
    Aj, x, m, k = args
    A = HorizontalField.from_json(Aj)
    ph = horizontal_phase(A, [x], [m], k)
    return ph


def run_phase_bound(cfg: Mapping, jobs: int = 1, seed: int | None = None) -> ConvergenceRecord:
    """Per-k rows of the worst ratio ``|phase| / ((5/24) |dA| |m|^3 / k^2)``."""
    cfg = validate_config({**cfg, "experiment": "phase-bound"})
    Aj = (cfg.get("scheme") or {}).get("A") or cfg.get("A") or {"kind": "sin"}
    A = HorizontalField.from_json(Aj)
    if A.n != 1:
        raise ConfigError("phase-bound samples scalar offsets; use n = 1")
    ks = cfg.get("k_list") or [8, 12, 16, 24, 32, 48, 64]
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    samples = phase_samples(int(cfg.get("samples", 500)), seed, ks)
    rec = ConvergenceRecord("phase-bound")
    if A.grad_norm_bound == 0.0:
        rec.notes.append("vacuous: zero gradient")
        for k in ks:
            rec.add(k, math.nan, math.nan)
        rec.checks["max_ratio"] = None
        return rec
    phases = _map(_phase_task, [(A.to_json(), x, m, k) for x, m, k in samples], jobs)
    worst = {k: 0.0 for k in ks}
    for (x, m, k), ph in zip(samples, phases):
        worst[k] = max(worst[k], abs(ph) / phase_bound(A, [m], k))
    for k in ks:
        rec.add(k, worst[k], math.nan)
    overall = max(worst.values())
    rec.checks["max_ratio"] = overall
    rec.checks["samples"] = len(samples)
    if overall > 1.0:
        rec.failures.append({"check": "phase_bound", "value": overall, "limit": 1.0})
    return rec


RUNNERS = {
    "norm-convergence": run_norm_convergence,
    "commutator-rate": run_commutator_rate,
    "star-residual": run_star_residual,
    "bt-compare": run_bt_compare,
    "abelian-compare": run_abelian_compare,
}


def run(cfg: Mapping, jobs: int = 1, seed: int | None = None, base_dir=None):
    exp = cfg.get("experiment")
    if exp == "phase-bound":
        return run_phase_bound(cfg, jobs, seed)
    if exp not in RUNNERS:
        raise ConfigError(f"unknown experiment {exp!r}")
    return RUNNERS[exp](cfg, jobs, base_dir)
