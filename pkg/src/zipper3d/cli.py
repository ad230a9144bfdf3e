"""zipper3d command line.

Exit codes: 0 success, 1 usage or configuration error, 2 a check failed or
a search did not converge / stayed undecided.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace

import numpy as np

from . import certify, cstar, family as F, suite
from .zipper import refine, validate, zipper_to_dict

MAX_RENDER_DEPTH = 10
MAX_RENDER_POINTS = 20_000_000


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _clean(o):
    """Make a report JSON-safe: numpy scalars/arrays to Python, non-finite floats to null."""
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer, int)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else None
    return o


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def _write(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise UsageError(f"cannot read config: {e}") from e
    except json.JSONDecodeError as e:
        raise UsageError(f"config is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


def _family(conf: dict, args) -> tuple:
    fam = conf.get("family", {})
    if not isinstance(fam, dict):
        raise UsageError("'family' must be an object")
    try:
        cfg = F.FamilyConfig.from_dict(fam)
        if args.seed is not None:
            cfg = replace(cfg, seed=int(args.seed))
        xi = F.ParamXi.from_dict(conf["xi"]) if "xi" in conf else F.default_xi(cfg)
        F.check_xi(cfg, xi)
    except (KeyError, TypeError, ValueError) as e:
        raise UsageError(f"bad family/xi config: {e}") from e
    return cfg, xi


def _opt(args, conf, name, default, cast=int):
    v = getattr(args, name, None)
    if v is None:
        v = conf.get(name, default)
    try:
        return cast(v)
    except (TypeError, ValueError) as e:
        raise UsageError(f"bad value for {name}: {v!r}") from e


def _grid(args, conf):
    g = args.grid if args.grid is not None else conf.get("grid", "3x3x3")
    if isinstance(g, (list, tuple)):
        dims = tuple(int(x) for x in g)
    else:
        try:
            dims = tuple(int(x) for x in str(g).lower().split("x"))
        except ValueError as e:
            raise UsageError(f"bad grid {g!r}, expected AxBxC") from e
    if len(dims) != 3 or min(dims) < 1:
        raise UsageError(f"bad grid {g!r}, expected AxBxC with positive entries")
    return dims


# -- commands --------------------------------------------------------------------

def cmd_build(args, conf):
    cfg, xi = _family(conf, args)
    z = F.build_zipper(cfg, xi)
    rep = validate(z, 1e-9)
    _write(dumps({"family": cfg.to_dict(), "xi": xi.to_dict(), "zipper": zipper_to_dict(z),
                  "validation": rep.to_dict()}), args.out)
    return 0 if rep.passed else 2


def cmd_render(args, conf):
    cfg, xi = _family(conf, args)
    depth = _opt(args, conf, "depth", 3)
    n_maps = 2 * cfg.m
    if depth < 0 or depth > MAX_RENDER_DEPTH:
        raise UsageError(f"render depth must be in 0..{MAX_RENDER_DEPTH}")
    if n_maps ** depth + 1 > MAX_RENDER_POINTS:
        raise UsageError(f"depth {depth} gives {n_maps ** depth + 1} points, above {MAX_RENDER_POINTS}")
    poly = refine(F.build_zipper(cfg, xi), F.linear_zipper(cfg), depth)
    out = args.out
    if out in (None, "-"):
        sys.stdout.write("t,x,y,z\n")
        for tt, p in zip(poly.params, poly.points):
            sys.stdout.write(",".join(repr(float(c)) for c in (tt, *p)) + "\n")
    elif out.endswith(".ply"):
        poly.to_ply(out)
    else:
        poly.to_csv(out)
    return 0


def cmd_verify(args, conf):
    cfg, xi = _family(conf, args)
    checks = conf.get("checks")
    if checks is not None and not isinstance(checks, list):
        raise UsageError("'checks' must be a list of check-group names")
    try:
        rep = suite.run_suite(cfg, xi, checks)
    except KeyError as e:
        raise UsageError(str(e)) from e
    _write(dumps(rep), args.out)
    return 0 if suite.suite_passed(rep) else 2


def cmd_sigma(args, conf):
    cfg, _ = _family(conf, args)
    k_max = _opt(args, conf, "kmax", 200)
    if k_max < 1:
        raise UsageError("kmax must be >= 1")
    seq = F.enumerate_sigma(cfg, k_max)
    inv = F.sigma_invariance(cfg, k_max)
    ok = seq.injective and seq.increasing and inv["all_subsets"] and inv["identical"]
    _write(dumps({"k_max": k_max, "pairs": [list(p) for p in seq.pairs], "injective": seq.injective,
                  "increasing": seq.increasing, "invariance": inv}), args.out)
    return 0 if ok else 2


def cmd_witness(args, conf):
    cfg, xi = _family(conf, args)
    eps = _opt(args, conf, "eps", 0.05, float)
    max_n = _opt(args, conf, "maxn", 10_000)
    out = {}
    if "k" in conf:
        k = int(conf["k"])
        w = F.wsp_witness_sigma(cfg, xi, k)
        out["sigma_witness"] = dict(w.to_dict(), k=k)
    seq, dists, record = suite.witness_decay(cfg, xi, max_n)
    out["cone_sequence"] = seq.to_dict()
    out["witness_distances"] = dists
    out["record"] = record
    ok = bool(record) and record[-1] < eps
    out["converged"] = ok
    _write(dumps(out), args.out)
    return 0 if ok else 2


def cmd_jordan(args, conf):
    cfg, xi = _family(conf, args)
    k = _opt(args, conf, "kmax", conf.get("k_checked", 4))
    depth = _opt(args, conf, "depth", 14)
    cert = certify.jordan_check(cfg, xi, k, depth)
    _write(dumps(cert.to_dict()), args.out)
    return 0 if cert.all_gaps_positive else 2


def cmd_scan(args, conf):
    cfg, _ = _family(conf, args)
    dims = _grid(args, conf)
    k = _opt(args, conf, "kmax", conf.get("k_checked", 4))
    depth = _opt(args, conf, "depth", 14)
    threads = _opt(args, conf, "threads", 1)
    rows = certify.scan_d(cfg, dims, k, depth, threads)
    if args.out and args.out.endswith(".csv"):
        certify.scan_to_csv(rows, args.out)
    else:
        _write(dumps({"grid": list(dims), "k_checked": k, "max_depth": depth,
                      "rows": [{"xi": p.to_dict(), "min_gap": g, "all_gaps_positive": ok} for p, g, ok in rows],
                      "fraction_positive": sum(r[2] for r in rows) / len(rows)}), args.out)
    return 0 if any(r[2] for r in rows) else 2


def cmd_group(args, conf):
    cfg, _ = _family(conf, args)
    eps = _opt(args, conf, "eps", 0.1, float)
    max_n = _opt(args, conf, "maxn", 100_000)
    g = conf.get("generators")
    if g is None:
        pair = cstar.GenPair.polar(cfg.q1, cfg.alpha1, cfg.q2m, -cfg.alpha2m)
    else:
        try:
            pair = cstar.GenPair(complex(*g["xi"]), complex(*g["eta"]))
        except (KeyError, TypeError, ValueError) as e:
            raise UsageError(f"bad generators: {e}") from e
    pc = cstar.phase_coverage(pair, eps=eps, max_n=max_n)
    _write(dumps({"generators": {"xi": [pair.xi.real, pair.xi.imag], "eta": [pair.eta.real, pair.eta.imag]},
                  "phase_coverage": pc}), args.out)
    return 0 if pc["verdict"] == "second-type evidence" else 2


COMMANDS = {"build": cmd_build, "render": cmd_render, "verify": cmd_verify, "sigma": cmd_sigma,
            "witness": cmd_witness, "jordan": cmd_jordan, "scan": cmd_scan, "group": cmd_group}


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="zipper3d", description="Self-similar zipper arcs in R^3: build, render, verify, certify.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--depth", type=int)
    p.add_argument("--kmax", type=int)
    p.add_argument("--grid", help="AxBxC")
    p.add_argument("--eps", type=float)
    p.add_argument("--maxn", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int)
    return p


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
        conf = load_config(args.config)
        return COMMANDS[args.command](args, conf)
    except UsageError as e:
        print(f"zipper3d: error: {e}", file=sys.stderr)
        return 1
    except (F.FamilyError, ValueError) as e:
        print(f"zipper3d: error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"zipper3d: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
