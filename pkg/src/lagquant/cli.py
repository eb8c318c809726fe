"""Command line front end: ``lagquant <experiment> --config cfg.json --out rows.csv``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .fields import FiberedFunction
from .quantizer import Scheme


def _floats(text):
    return json.loads(text) if text.strip().startswith("[") else [float(t) for t in text.split(",")]


def _matrix(text, n):
    v = np.asarray(_floats(text), dtype=float)
    return v.reshape(n, n).tolist() if v.size == n * n else np.diag(v).tolist()


def build_parser():
    p = argparse.ArgumentParser(prog="lagquant",
                                description="Convergence scans for torus-fibration quantizers.")
    p.add_argument("experiment", choices=list(ex.EXPERIMENTS) + ["export-operator"])
    p.add_argument("--config", required=True, help="JSON experiment config (schema 1)")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--jobs", type=int, default=1, help="worker processes, one task per k")
    p.add_argument("--seed", type=int, default=None, help="seed for sampled experiments")
    p.add_argument("--k-list", help="comma-separated levels, overrides the config")
    p.add_argument("--k", type=int, help="level for export-operator")
    p.add_argument("--f", help="function JSON file, overrides the config")
    p.add_argument("--g", help="second function JSON file")
    p.add_argument("--l", type=int, help="truncation order for star-residual")
    p.add_argument("--P", help="real part of Omega (entries, comma-separated)")
    p.add_argument("--Q", help="imaginary part of Omega (entries, comma-separated)")
    return p


def load_config(args) -> dict:
    path = Path(args.config)
    try:
        cfg = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ex.ConfigError(f"cannot read config {path}: {exc}") from exc
    if args.experiment != "export-operator":
        cfg["experiment"] = args.experiment
    if args.k_list:
        cfg["k_list"] = [int(k) for k in args.k_list.split(",")]
    if args.f:
        cfg["f"] = str(Path(args.f).resolve())
    if args.g:
        cfg["g"] = str(Path(args.g).resolve())
    if args.l is not None:
        cfg["l"] = args.l
    n = int(cfg.get("n", 1))
    if args.P or args.Q:
        om = dict(cfg.get("omega") or {})
        if args.P:
            om["P"] = _matrix(args.P, n)
        if args.Q:
            om["Q"] = _matrix(args.Q, n)
        cfg["omega"] = om
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def export_operator(cfg, k, out, base_dir=None):
    f = ex.load_function(cfg.get("f"), base_dir)
    scheme = Scheme.from_json(cfg.get("scheme"), f.n)
    op = scheme.quantize(f, k, scheme.lattice([f], k))
    op.to_csv(out)
    return op


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    base_dir = Path(args.config).resolve().parent
    try:
        cfg = load_config(args)
        if args.experiment == "export-operator":
            k = args.k or int(cfg.get("k", 8))
            export_operator(cfg, k, args.out, base_dir)
            return 0
        rec = ex.run(cfg, jobs=args.jobs, seed=args.seed, base_dir=base_dir)
    except (ex.ConfigError, ValueError, ArithmeticError) as exc:
        print(json.dumps({"ok": False, "error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2
    rec.write(args.out)
    slope, r2 = rec.fit()
    print(f"{rec.experiment}: {len(rec.ks)} rows -> {args.out} (slope {slope:.4g}, R^2 {r2:.4g})")
    if not rec.ok:
        print(json.dumps({"ok": False, "failures": rec.failures}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
