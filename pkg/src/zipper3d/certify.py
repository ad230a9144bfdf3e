"""Ball-exclusion certificates for subarcs of zipper attractors.

Pieces are images of a root ball B0 ⊇ V under cylinder maps; two pieces
whose balls are apart are disjoint. Branch and bound refines the larger
piece until every surviving pair is separated or the depth runs out.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import family as F
from .geom import compose
from .zipper import Zipper, cylinder_map

MAX_PAIRS = 2_000_000


@dataclass(frozen=True)
class ArcPiece:
    address: tuple
    center: np.ndarray
    radius: float


@dataclass
class GapReport:
    k: int
    lower_gap: float
    depth_used: int
    undecided_distance: float | None = None
    reason: str = ""
    pair: tuple | None = None

    @property
    def certified(self) -> bool:
        return self.lower_gap > 0.0

    def to_dict(self) -> dict:
        return {"k": self.k, "lower_gap": self.lower_gap, "depth_used": self.depth_used,
                "certified": self.certified, "undecided_distance": self.undecided_distance,
                "reason": self.reason, "pair": list(self.pair) if self.pair else None}


@dataclass
class JordanCert:
    xi: F.ParamXi
    checked_k: int
    all_gaps_positive: bool
    structural_a1a3: bool
    caveat: str
    gaps: list = field(default_factory=list)

    @property
    def min_gap(self) -> float:
        return min((g.lower_gap for g in self.gaps), default=math.inf)

    def to_dict(self) -> dict:
        return {"xi": self.xi.to_dict(), "checked_k": self.checked_k, "all_gaps_positive": self.all_gaps_positive,
                "structural_a1a3": self.structural_a1a3, "caveat": self.caveat,
                "min_gap": None if math.isinf(self.min_gap) else self.min_gap,
                "gaps": [g.to_dict() for g in self.gaps]}


def root_ball(z: Zipper) -> tuple:
    """Smallest ball around the bicone on z_0 z_n: its axis midpoint, half its length."""
    a, b = z.vertices[0], z.vertices[-1]
    return 0.5 * (a + b), 0.5 * float(np.linalg.norm(b - a))


def piece(z: Zipper, address) -> ArcPiece:
    c0, r0 = root_ball(z)
    s = cylinder_map(z, address)
    return ArcPiece(tuple(address), s.apply(c0), s.ratio * r0)


class _Side:
    """Frontier pieces pre o S_w, stored as linear part, shift and depth."""

    __slots__ = ("lin", "shift", "rad", "depth")

    def __init__(self, lin, shift, rad, depth):
        self.lin, self.shift, self.rad, self.depth = lin, shift, rad, depth

    def take(self, idx):
        return _Side(self.lin[idx], self.shift[idx], self.rad[idx], self.depth[idx])

    def centers(self, c0):
        return np.einsum("nij,j->ni", self.lin, c0) + self.shift


def _side_from(maps, r0):
    lin = np.stack([s.ratio * s.matrix for s in maps])
    shift = np.stack([s.shift for s in maps])
    rad = np.array([s.ratio * r0 for s in maps])
    return lin, shift, rad


def _children(side: _Side, sel, z_lin, z_shift, z_scale):
    n_maps = z_lin.shape[0]
    lin = np.einsum("nij,mjk->nmik", side.lin[sel], z_lin).reshape(-1, 3, 3)
    shift = (np.einsum("nij,mj->nmi", side.lin[sel], z_shift) + side.shift[sel][:, None, :]).reshape(-1, 3)
    rad = (side.rad[sel][:, None] * z_scale[None, :]).ravel()
    depth = np.repeat(side.depth[sel] + 1, n_maps)
    return lin, shift, rad, depth


def _bnb(z: Zipper, pre_a: list, pre_b: list, max_depth: int, max_pairs: int = MAX_PAIRS):
    """Lower bound on dist(∪ pre_a(γ), ∪ pre_b(γ)); 0 when undecided.

    Returns ``(gap, depth_used, undecided_distance, reason)``.
    """
    c0, r0 = root_ball(z)
    scale, mats, shifts = z.arrays()
    z_lin = scale[:, None, None] * mats
    n_maps = len(z.maps)
    la, sa, ra = _side_from(pre_a, r0)
    lb, sb, rb = _side_from(pre_b, r0)
    na, nb = len(pre_a), len(pre_b)
    ia, ib = np.repeat(np.arange(na), nb), np.tile(np.arange(nb), na)
    A = _Side(la[ia], sa[ia], ra[ia], np.zeros(na * nb, dtype=np.int64))
    B = _Side(lb[ib], sb[ib], rb[ib], np.zeros(na * nb, dtype=np.int64))
    best = math.inf
    depth_used = 0
    while A.rad.size:
        d = np.linalg.norm(A.centers(c0) - B.centers(c0), axis=1) - A.rad - B.rad
        sep = d > 0.0
        if sep.any():
            best = min(best, float(d[sep].min()))
        live = np.flatnonzero(~sep)
        if live.size == 0:
            break
        A, B = A.take(live), B.take(live)
        split_a = A.rad >= B.rad
        split_a = np.where(A.depth >= max_depth, False, split_a)
        split_a = np.where(B.depth >= max_depth, A.depth < max_depth, split_a)
        stuck = (A.depth >= max_depth) & (B.depth >= max_depth)
        if stuck.any():
            return 0.0, max_depth, float(d[live][stuck].min()), "undecided at max depth"
        if live.size * n_maps > max_pairs:
            return 0.0, depth_used, float(d[live].min()), "pair budget exhausted"
        ka, kb = np.flatnonzero(split_a), np.flatnonzero(~split_a)
        parts_a, parts_b = [], []
        if ka.size:
            ca = _children(A, ka, z_lin, shifts, scale)
            parts_a.append(ca)
            rep = np.repeat(ka, n_maps)
            parts_b.append((B.lin[rep], B.shift[rep], B.rad[rep], B.depth[rep]))
        if kb.size:
            cb = _children(B, kb, z_lin, shifts, scale)
            rep = np.repeat(kb, n_maps)
            parts_a.append((A.lin[rep], A.shift[rep], A.rad[rep], A.depth[rep]))
            parts_b.append(cb)
        A = _Side(*(np.concatenate(x) for x in zip(*parts_a)))
        B = _Side(*(np.concatenate(x) for x in zip(*parts_b)))
        depth_used = int(max(A.depth.max(), B.depth.max()))
    return best, depth_used, None, "separated"


def min_gap(z: Zipper, a, b, max_depth: int, max_pairs: int = MAX_PAIRS) -> float:
    """Certified lower bound on the distance between S_a(γ) and S_b(γ); 0 if undecided."""
    a, b = tuple(a), tuple(b)
    if a == b:
        return 0.0
    g, *_ = _bnb(z, [cylinder_map(z, a)], [cylinder_map(z, b)], max_depth, max_pairs)
    return g


def min_gap_report(z: Zipper, a, b, max_depth: int, max_pairs: int = MAX_PAIRS) -> GapReport:
    a, b = tuple(a), tuple(b)
    if a == b:
        return GapReport(0, 0.0, 0, 0.0, "identical pieces")
    g, du, und, why = _bnb(z, [cylinder_map(z, a)], [cylinder_map(z, b)], max_depth, max_pairs)
    return GapReport(0, g, du, und, why)


# -- Sigma pieces --------------------------------------------------------------

def _a_digits(cfg):
    return (cfg.m - 4, cfg.m - 3, cfg.m - 2)


def _b_digits(cfg):
    return (cfg.m + 3, cfg.m + 4, cfg.m + 5)


def decompose_intersection(cfg: F.FamilyConfig, xi: F.ParamXi, k_max: int = 20) -> list:
    """Address pairs of the pieces that can meet in S_m(γ) ∩ S_{m+1}(γ) besides z_m.

    Entry k: A-side addresses (m+1, 1^{i_k}, d) for d over the A digits and
    B-side addresses (m, 2m^{j_k}, e) over the B digits (1-based digits).
    """
    F.check_xi(cfg, xi)
    sig = F.enumerate_sigma(cfg, k_max)
    m = cfg.m
    out = []
    for k, (i, j) in enumerate(sig.pairs, start=1):
        out.append({"k": k, "i": i, "j": j,
                    "a": [(m + 1,) + (1,) * i + (d,) for d in _a_digits(cfg)],
                    "b": [(m,) + (2 * m,) * j + (e,) for e in _b_digits(cfg)]})
    return out


def sigma_gap(cfg: F.FamilyConfig, xi: F.ParamXi, i: int, j: int, max_depth: int,
              zp: Zipper | None = None, max_pairs: int = MAX_PAIRS) -> GapReport:
    """Certified gap between S_{m+1}S_1^i(γ_A) and S_m S_2m^j(γ_B), in true units."""
    zp = zp or F.build_zipper(cfg, xi)
    pre_a, pre_b, log_lam = F.local_pieces(cfg, xi, i, j)
    # local digit maps are 0-based inside the zipper
    pa = [compose(pre_a, zp.maps[d - 1]) for d in _a_digits(cfg)]
    pb = [compose(pre_b, zp.maps[e - 1]) for e in _b_digits(cfg)]
    g, du, und, why = _bnb(zp, pa, pb, max_depth, max_pairs)
    lam = math.exp(log_lam)
    return GapReport(0, g * lam, du, None if und is None else und * lam, why, (i, j))


def jordan_check(cfg: F.FamilyConfig, xi: F.ParamXi, k_checked: int, max_depth: int,
                 max_pairs: int = MAX_PAIRS) -> JordanCert:
    """Structural A1-A3 plus certified gaps for the first ``k_checked`` Σ pairs."""
    F.check_xi(cfg, xi)
    ch = F.build_bicones(cfg, xi).checks
    structural = bool(ch["A1"] and ch["A2"] and ch["A3"])
    gaps = []
    if k_checked > 0:
        sig = F.enumerate_sigma(cfg, max(2 * k_checked + 10, 40))
        zp = F.build_zipper(cfg, xi)
        for k in range(1, k_checked + 1):
            i, j = sig[k]
            rep = sigma_gap(cfg, xi, i, j, max_depth, zp, max_pairs)
            rep.k = k
            gaps.append(rep)
    ok = structural and all(g.certified for g in gaps)
    caveat = (f"gaps certified only for Sigma pairs k <= {k_checked}; pairs with k > {k_checked} "
              "are unchecked, so this is not a proof that the arc is Jordan")
    return JordanCert(xi, k_checked, ok, structural, caveat, gaps)


def scan_d(cfg: F.FamilyConfig, grid_dims=(3, 3, 3), k_checked: int = 4, max_depth: int = 14,
           threads: int = 1, max_pairs: int = MAX_PAIRS) -> list:
    """min certified gap at each interior grid point of D, in grid order.

    Rows are ``(xi, min_gap, all_gaps_positive)``. A grid with 2n+1 points per
    axis contains the n-point grid, so refining never loses a sample.
    """
    if any(int(n) < 1 for n in grid_dims):
        raise ValueError("grid dimensions must be >= 1")
    pts = F.grid(cfg, tuple(int(n) for n in grid_dims))

    def one(p):
        c = jordan_check(cfg, p, k_checked, max_depth, max_pairs)
        g = c.min_gap if c.gaps else (math.inf if c.structural_a1a3 else 0.0)
        return p, g, c.all_gaps_positive

    if threads <= 1:
        return [one(p) for p in pts]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(one, pts))


def scan_to_csv(rows, path) -> None:
    with open(path, "w") as f:
        f.write("rho,theta,phi,min_gap,all_gaps_positive\n")
        for p, g, ok in rows:
            f.write(f"{p.rho!r},{p.theta!r},{p.phi!r},{float(g)!r},{int(ok)}\n")


# -- coverage of the intersection by Sigma pieces ---------------------------------

def outside_v1_coverage(cfg: F.FamilyConfig, xi: F.ParamXi, n_samples: int = 20000, depth: int = 16,
                        n_max: int = 60) -> dict:
    """Sampled check that points of γ outside the open bicone V1 lie in some
    S_1^n(A) or S_2m^n(B)."""
    from .geom import bicone_contains, inverse, power
    from .zipper import parametrize

    zp = F.build_zipper(cfg, xi)
    t = F.linear_zipper(cfg)
    bs = F.build_bicones(cfg, xi, check=False)
    rng = np.random.default_rng(cfg.seed)
    u = rng.random(n_samples)
    pts = parametrize(zp, t, u, depth)
    z = zp.vertices
    # open V1: strictly inside by a margin
    inner = bicone_contains(bs.V1, pts, tol=-1e-12)
    ends = (np.linalg.norm(pts - z[0], axis=1) < 1e-9) | (np.linalg.norm(pts - z[-1], axis=1) < 1e-9)
    cand = np.flatnonzero(~inner & ~ends)
    covered = np.zeros(cand.size, dtype=bool)
    a_set, b_set = F.set_a_bicones(cfg, bs), F.set_b_bicones(cfg, bs)
    s1i, s2i = inverse(zp.maps[0]), inverse(zp.maps[-1])
    for n in range(n_max + 1):
        if covered.all():
            break
        y = pts[cand]
        ya = power(s1i, n).apply(y) if n else y
        yb = power(s2i, n).apply(y) if n else y
        inA = np.any([bicone_contains(b, ya, tol=1e-9) for b in a_set], axis=0)
        inB = np.any([bicone_contains(b, yb, tol=1e-9) for b in b_set], axis=0)
        covered |= inA | inB
    return {"samples": n_samples, "outside_v1": int(cand.size), "covered": int(covered.sum()),
            "pass": bool(covered.all())}


def near_intersection_coverage(cfg: F.FamilyConfig, xi: F.ParamXi, depth: int = 10, eps: float = 1e-3,
                               k_max: int = 40, n_samples: int = 200_000, piece_samples: int = 20_000) -> dict:
    """Points of S_m(γ) within eps of S_{m+1}(γ), away from z_m, must lie within
    eps of a Σ piece on their own side.

    Both halves are sampled at random parameters (a full render at this depth
    would need 24^depth points). The pair (0, 0) is included with Σ: it is the
    first non-negative solution of the defining inequality.
    """
    from scipy.spatial import cKDTree

    from .zipper import parametrize

    zp = F.build_zipper(cfg, xi)
    t = F.linear_zipper(cfg)
    m = cfg.m
    rng = np.random.default_rng(cfg.seed)
    st = np.concatenate((t.starts, [1.0]))
    um = st[m - 1] + (st[m] - st[m - 1]) * rng.random(n_samples)
    um1 = st[m] + (st[m + 1] - st[m]) * rng.random(n_samples)
    pm, pm1 = parametrize(zp, t, um, depth), parametrize(zp, t, um1, depth)
    d, idx = cKDTree(pm1).query(pm, distance_upper_bound=eps)
    near = np.isfinite(d) & (np.linalg.norm(pm - zp.vertices[m], axis=1) > eps)
    pairs = [(0, 0)] + list(F.enumerate_sigma(cfg, k_max).pairs)
    # pieces whose size drops below eps sit inside the excluded ball around z_m
    depth_cut = int(math.ceil(math.log(eps / 6.0) / math.log(max(cfg.q1, cfg.q2m)))) + 1

    def side_tree(head, rep, digits, exps):
        pts = []
        for n in exps:
            if n > depth_cut:
                continue
            for e in digits:
                lo, hi = t.cylinder((head,) + (rep,) * n + (e,))
                pts.append(parametrize(zp, t, lo + (hi - lo) * rng.random(piece_samples), depth))
        return cKDTree(np.concatenate(pts))

    tree_m = side_tree(m, 2 * m, _b_digits(cfg), sorted({p[1] for p in pairs}))
    tree_m1 = side_tree(m + 1, 1, _a_digits(cfg), sorted({p[0] for p in pairs}))
    da, _ = tree_m.query(pm[near])
    db, _ = tree_m1.query(pm1[idx[near]])
    bad = int(np.sum((da > eps) | (db > eps)))
    return {"near_points": int(near.sum()), "outside_sigma": bad, "pass": bad == 0, "eps": eps,
            "depth": depth, "samples": n_samples}


# -- hypotheses of the general-position theorem ----------------------------------

def _regress(dx, dy, lo=1e-6, hi=1e-1):
    ok = (dy >= lo) & (dy <= hi) & (dx > 0)
    if ok.sum() < 3:
        return math.nan, math.nan
    b, a = np.polyfit(np.log(dx[ok]), np.log(dy[ok]), 1)
    return float(b), float(math.exp(a))


def genpos_hypotheses(cfg: F.FamilyConfig, region=None, k: int = 1, samples: int = 400) -> dict:
    """Sampled bi-Lipschitz quotients in xi and Hölder regression in (s, t) for
    f(xi, s, t) = φ(xi, s) - ψ(xi, t) on the k-th Σ pair."""
    from .zipper import holder_exponent, parametrize

    region = region or cfg.domain()
    dom = cfg.domain()
    for (lo, hi), (dlo, dhi) in zip(region, dom):
        if not (dlo <= lo < hi <= dhi):
            raise ValueError("region must lie inside D")
    rng = np.random.default_rng(cfg.seed + 101 * k)
    sig = F.enumerate_sigma(cfg, max(2 * k + 10, 40))
    i_k, j_k = sig[k]
    t = F.linear_zipper(cfg)
    m = cfg.m
    st = np.concatenate((t.starts, [1.0]))
    ia, ib = (st[m - 5], st[m - 2]), (st[m + 2], st[m + 5])

    def draw():
        return F.ParamXi(*[lo + (hi - lo) * (0.02 + 0.96 * rng.random()) for lo, hi in region])

    def f_local(xi, s, tt):
        zp = F.build_zipper(cfg, xi)
        pa, pb, _ = F.local_pieces(cfg, xi, i_k, j_k)
        return pa.apply(parametrize(zp, t, s, 18)) - pb.apply(parametrize(zp, t, tt, 18))

    s = ia[0] + (ia[1] - ia[0]) * rng.random(8)
    tt = ib[0] + (ib[1] - ib[0]) * rng.random(8)
    quots = []
    for _ in range(max(1, samples // 40)):
        xi, eta = draw(), draw()
        dxi = float(np.linalg.norm(xi.as_array() - eta.as_array()))
        if dxi == 0.0:
            continue
        r_hat = math.sqrt(5.0) * xi.rho / 6.0
        df = np.linalg.norm(f_local(xi, s, tt) - f_local(eta, s, tt), axis=1)
        quots.extend((df / (dxi * r_hat)).tolist())
    lo_b = 0.8 * 0.98 / math.sqrt(5.0) * math.sqrt(0.41)
    hi_b = 1.22 * math.sqrt(1.59)
    xi0 = draw()
    zp = F.build_zipper(cfg, xi0)
    pa, pb, _ = F.local_pieces(cfg, xi0, i_k, j_k)
    # Hölder regression of φ on I_A (an affine image of I_Ak)
    u1 = ia[0] + (ia[1] - ia[0]) * rng.random(samples)
    du = 10.0 ** rng.uniform(-6.0, -1.0, samples) * (ia[1] - ia[0])
    u2 = np.clip(u1 + du, ia[0], ia[1])
    d_s = np.linalg.norm(pa.apply(parametrize(zp, t, u1, 18)) - pa.apply(parametrize(zp, t, u2, 18)), axis=1)
    scale_a = (ia[1] - ia[0])
    exp_s, c_s = _regress(np.abs(u2 - u1) / scale_a, d_s / pa.ratio)
    # joint (s, t) regression
    v1 = ib[0] + (ib[1] - ib[0]) * rng.random(samples)
    dv = 10.0 ** rng.uniform(-6.0, -1.0, samples) * (ib[1] - ib[0])
    v2 = np.clip(v1 + dv, ib[0], ib[1])
    f1 = pa.apply(parametrize(zp, t, u1, 18)) - pb.apply(parametrize(zp, t, v1, 18))
    f2 = pa.apply(parametrize(zp, t, u2, 18)) - pb.apply(parametrize(zp, t, v2, 18))
    d_st = np.linalg.norm(f1 - f2, axis=1)
    dist_st = np.maximum(np.abs(u2 - u1) / scale_a, np.abs(v2 - v1) / (ib[1] - ib[0]))
    exp_st, c_st = _regress(dist_st, d_st / pa.ratio)
    theory = holder_exponent(zp.ratios, np.asarray(t.ratios))
    return {
        "k": k, "pair": [i_k, j_k],
        "bilipschitz": {"min_quotient": min(quots), "max_quotient": max(quots), "bracket": [lo_b, hi_b],
                        "within": bool(lo_b < min(quots) and max(quots) < hi_b), "samples": len(quots)},
        "holder_s": {"exponent": exp_s, "constant": c_s, "theory": theory,
                     "within_0.05": bool(abs(exp_s - theory) < 0.05)},
        "holder_st": {"exponent": exp_st, "constant": c_st},
        "exponent_gt_2_3": bool(exp_st > 2.0 / 3.0),
    }
