"""Sampled verification of the numeric claims attached to the family.

Every entry is ``{claimed, computed, tolerance, pass}``. Nothing here is a
proof: bounds over solids are checked on deterministic probe sets.
"""
from __future__ import annotations

import math

import numpy as np

from . import family as F
from .cstar import GenPair, cone_sequence, phase_coverage
from .zipper import holder_exponent, similarity_dimension, validate


def _item(claimed, computed, tol, ok, **extra):
    d = {"claimed": claimed, "computed": computed, "tolerance": tol, "pass": bool(ok)}
    d.update(extra)
    return d


def alpha_m4_slope(theta: float, h: float = 1e-7) -> float:
    return (F.alpha_m4(theta + h) - F.alpha_m4(theta - h)) / (2.0 * h)


def check_dimension(cfg, xi):
    vals = []
    for p in F.grid(cfg):
        q = F.build_zipper(cfg, p).ratios
        s = similarity_dimension(q)
        vals.append((s, abs(float(np.sum(q ** s)) - 1.0)))
    smax = max(v[0] for v in vals)
    res = max(v[1] for v in vals)
    return {"dimension_bound": _item(1.28, smax, 1e-12, smax < 1.28 and res < 1e-12, moran_residual=res)}


def check_holder(cfg, xi):
    t = F.linear_zipper(cfg)
    h = min(holder_exponent(F.build_zipper(cfg, p).ratios, np.asarray(t.ratios)) for p in F.grid(cfg))
    return {"holder_bound": _item(0.75, h, 0.0, h > 0.75)}


# high-precision value of alpha_{m+4}(beta0 - mu) for the default mu
ALPHA_M4_EDGE = 0.28398185017181046


def check_alpha_m4(cfg, xi):
    out = {"alpha_m4_zero": _item(0.0, F.alpha_m4(F.BETA0), 1e-12, abs(F.alpha_m4(F.BETA0)) < 1e-12)}
    lo, hi = F.BETA0 - cfg.mu, F.BETA0 - 0.5 * cfg.mu
    slopes = [abs(alpha_m4_slope(th)) for th in np.linspace(lo + 1e-6, hi, 41)]
    out["alpha_m4_slope"] = _item([14.0, 20.0], [min(slopes), max(slopes)], 0.0,
                                  14.0 < min(slopes) and max(slopes) < 20.0)
    v = F.alpha_m4(lo)
    out["alpha_m4_edge"] = _item(0.2843, v, 5e-4, abs(v - 0.2843) < 5e-4, oracle=ALPHA_M4_EDGE)
    return out


def check_bicone_angles(cfg, xi):
    dm, d0 = [], []
    for p in F.grid(cfg):
        a, b = F.dihedrals(cfg, p)
        dm.append(a if a is not None else 0.0)
        d0.append(b if b is not None else math.nan)
    tol = 5e-3
    out = {
        "dihedral_V_mid": _item(0.545, max(dm), tol, max(dm) <= 0.545 + tol),
        "dihedral_V0_mid": _item([0.224, 0.317], [min(d0), max(d0)], tol,
                               np.all(np.isfinite(d0)) and min(d0) > 0.224 - tol and max(d0) < 0.317 + tol),
    }
    ch = F.build_bicones(cfg, xi).checks
    out["V0_apex_only"] = _item(0.0, ch["V0_min_angle_margin"], 0.0, ch["V0_apex"])
    out["V1_apex_only"] = _item(0.0, ch["V1_angle_margin"], 0.0, ch["V1_apex"])
    return out


def check_structure(cfg, xi):
    ch = F.build_bicones(cfg, xi).checks
    return {
        "A1_inside_V": _item(0.0, ch["A1_max_outside"], 1e-12, ch["A1"]),
        "A2_disjoint": _item(0.0, ch["A2_min_gap"], 0.0, ch["A2"]),
        "A3_apex_only": _item(0.0, ch["A3_min_angle_margin"], 0.0, ch["A3"]),
    }


def check_sets(cfg, xi):
    ra, rb = F.sets_ab(cfg, xi)
    out = {}
    for tag, r in (("A", ra), ("B", rb)):
        out[f"set_R_{tag}"] = _item(2.214, r.R, 5e-3, abs(r.R - 2.214) < 5e-3)
        out[f"set_ball_W_{tag}"] = _item(r.ball_radius, r.ball_max_distance, 0.0, r.ball_contains_all)
        out[f"sets_distance_{tag}"] = _item(1.06, r.max_ratio, 0.0, r.max_ratio <= 1.06)
        az = max(abs(r.azimuth_range[0]), abs(r.azimuth_range[1]))
        out[f"sets_azimuth_{tag}"] = _item(math.sqrt(5.0) * cfg.mu, az, 0.0, az <= math.sqrt(5.0) * cfg.mu)
        lo, hi = r.polar_range
        out[f"sets_polar_{tag}"] = _item([cfg.beta1, cfg.beta2], [lo, hi], 1e-3,
                                         lo >= cfg.beta1 - 1e-3 and hi <= cfg.beta2 + 1e-3)
        out[f"sets_axis_ratio_{tag}"] = _item(1.095, r.axis_distance_ratio, 1e-3,
                                              r.axis_distance_ratio < 1.095 + 1e-3, presumptive=True)
    return out


def _line_distance(p, a, ang):
    d = np.array([math.cos(ang), math.sin(ang)])
    v = np.asarray(p[:2]) - np.asarray(a[:2])
    return abs(v[0] * d[1] - v[1] * d[0])


def check_vertices(cfg, xi):
    z = F.build_vertices(cfg, xi)
    zp = F.build_zipper(cfg, xi)
    m = cfg.m
    lens = np.linalg.norm(np.diff(z, axis=0), axis=1) / 6.0
    vr = float(np.max(np.abs(zp.ratios - lens)))
    mirror = np.array([-z[::-1, 0], z[::-1, 1], z[::-1, 2]]).T
    skip = {1, m - 1, m + 1, 2 * m - 1}
    sym = max(float(np.linalg.norm(mirror[i] - z[i])) for i in range(2 * m + 1)
              if i not in skip and 2 * m - i not in skip)

    def tri(idx, beta):
        d = []
        for i in idx:
            base = z[0] if i < m else z[-1]
            ang = beta if i < m else math.pi - beta
            d.append(_line_distance(z[i], base, ang))
        return max(d)

    t0 = tri((m - 4, m - 3, m + 3, m + 4), F.BETA0)
    t1 = tri((m - 5, m - 2, m + 2, m + 5), cfg.beta1)
    v = validate(zp, 1e-9)
    return {
        "vertex_ratio_consistency": _item(0.0, vr, 1e-12, vr < 1e-12),
        "vertex_symmetry": _item(0.0, sym, 1e-12, sym < 1e-12),
        "unit_edge_m": _item(1.0, float(np.linalg.norm(z[m] - z[m - 1])), 1e-3,
                             abs(np.linalg.norm(z[m] - z[m - 1]) - 1.0) < 1e-3),
        "beta0_triangle": _item(0.0, t0, 1e-3, t0 < 1e-3),
        "beta1_triangle": _item(0.0, t1, 1e-3, t1 < 1e-3),
        "zipper_valid": _item(0.0, max(v.residual_start + v.residual_end), 1e-9, v.passed),
    }


def check_sigma(cfg, xi):
    k_max = 200
    seq = F.enumerate_sigma(cfg, k_max)
    inv = F.sigma_invariance(cfg, k_max)
    return {
        "sigma_bijective": _item(True, seq.injective and seq.increasing, 0.0, seq.injective and seq.increasing),
        "sigma_invariance": _item(True, inv["all_subsets"] and inv["identical"], 0.0,
                                  inv["all_subsets"] and inv["identical"]),
    }


def check_displacement(cfg, xi, n_pairs: int = 4):
    rng = np.random.default_rng(cfg.seed)
    sigma = F.enumerate_sigma(cfg, 60)
    t = F.linear_zipper(cfg)
    dom = cfg.domain()
    out = {}
    agg: dict = {}
    for _ in range(n_pairs):
        eta = F.ParamXi(*[lo + (hi - lo) * rng.random() for lo, hi in dom])
        k = int(rng.integers(1, 12))
        rep = F.displacement_report(cfg, xi, eta, k, n_probes=500, n_param=20, sigma=sigma, t=t)
        for name, it in rep.checks.items():
            agg.setdefault(name, []).append(it)
    for name, items in agg.items():
        worst = next((it for it in items if not it["pass"]), items[0])
        out[name] = dict(worst, samples=len(items))
        out[name]["pass"] = all(it["pass"] for it in items)
    return out


def check_transition(cfg, xi):
    dom = cfg.domain()
    eta = F.ParamXi(xi.rho * 1.005 if dom[0][0] < xi.rho * 1.005 < dom[0][1] else xi.rho * 0.995,
                    xi.theta, xi.phi)
    f = F.transition_map(cfg, xi, eta)
    want = eta.rho / xi.rho
    return {"transition_ratio": _item(want, f.ratio, 1e-12, abs(f.ratio - want) < 1e-12)}


def check_witness(cfg, xi):
    # the generators were tuned at the default xi, so that is where M is the identity
    n2, n1 = F.TUNED_EXPONENTS
    w = F.wsp_witness(cfg, F.default_xi(cfg), n2, n1)
    return {"witness_identity": _item(0.0, w.distance, 1e-6, w.distance < 1e-6, exponents=[n2, n1])}


def witness_decay(cfg, xi, max_n: int = 10_000, eps: float = 0.05) -> tuple:
    """Exponent pairs suggested by the cone sequence, the witness distance at
    each, and the running record of those distances."""
    cd = F.cone_data(cfg, xi)
    seq = cone_sequence(cd["f1"], cd["f2"], cd["w1"], cd["w2"], eps, max_n, target=cd["target"], min_n=1)
    dists = [F.wsp_witness(cfg, xi, n, m).distance for n, m in seq.pairs]
    record, best = [], math.inf
    for d in dists:
        if d < best:
            best = d
            record.append(d)
    return seq, dists, record


def check_generators(cfg, xi):
    g = GenPair(cfg.q1 * complex(math.cos(cfg.alpha1), math.sin(cfg.alpha1)),
                cfg.q2m * complex(math.cos(-cfg.alpha2m), math.sin(-cfg.alpha2m)))
    pc = phase_coverage(g, eps=0.1, max_n=10 ** 5)
    return {"second_type_evidence": _item(16, pc["hits"], 0, pc["hits"] == 16, verdict=pc["verdict"])}


CHECKS = {
    "dimension": check_dimension,
    "holder": check_holder,
    "alpha_m4": check_alpha_m4,
    "bicone_angles": check_bicone_angles,
    "structure": check_structure,
    "sets": check_sets,
    "vertices": check_vertices,
    "sigma": check_sigma,
    "displacement": check_displacement,
    "transition": check_transition,
    "witness": check_witness,
    "generators": check_generators,
}


def run_suite(cfg: F.FamilyConfig, xi: F.ParamXi | None = None, checks=None) -> dict:
    """Run the named check groups (all by default); returns a flat report."""
    xi = xi or F.default_xi(cfg)
    names = list(CHECKS) if checks is None else list(checks)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {unknown}")
    out = {}
    for n in names:
        try:
            out.update(CHECKS[n](cfg, xi))
        except (F.FamilyError, ValueError) as e:
            out[n] = _item(None, None, None, False, error=str(e))
    return out


def suite_passed(report: dict) -> bool:
    return all(v["pass"] for v in report.values())
