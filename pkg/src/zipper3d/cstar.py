"""Two-generator subgroups of C* and the cone analogue used for WSP witnesses."""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .geom import Similarity3, quat_to_axis_angle, unit, vec

TWO_PI = 2.0 * math.pi
_WINDOW = 4


class CStarError(ValueError):
    pass


@dataclass(frozen=True)
class GenPair:
    xi: complex
    eta: complex

    def __post_init__(self):
        if self.xi == 0 or self.eta == 0:
            raise CStarError("generators must be nonzero")

    @classmethod
    def polar(cls, r: float, alpha: float, R: float, beta: float) -> "GenPair":
        return cls(cmath.rect(r, alpha), cmath.rect(R, beta))


@dataclass
class ApproxSeq:
    """Record-breaking pairs; ``residuals`` is strictly decreasing."""

    pairs: list
    residuals: list
    converged: bool
    max_n: int
    extra: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "converged" if self.converged else "not-converged"

    def to_dict(self) -> dict:
        d = {"pairs": [list(p) for p in self.pairs], "residuals": list(self.residuals),
             "verdict": self.verdict, "max_n": self.max_n}
        d.update(self.extra)
        return d


@dataclass(frozen=True)
class DensityCert:
    verdict: str
    witness: tuple | None
    height: int
    alpha: float
    beta: float

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "witness": list(self.witness) if self.witness else None,
                "height": self.height, "alpha": self.alpha, "beta": self.beta}


def _records(ns, ms, res, first=None):
    pairs, vals = [], []
    best = math.inf if first is None else first
    for n, m, r in zip(ns.tolist(), ms.tolist(), res.tolist()):
        if r < best:
            best = r
            pairs.append((n, m))
            vals.append(r)
    return pairs, vals


# -- Kronecker-type density test ---------------------------------------------

def kronecker_test(u: complex, v: complex, height: int, analytic_independent: bool = False) -> DensityCert:
    """Look for an integer relation k*alpha + l*beta + m = 0 where alpha*u + beta*v = 1.

    A relation proves the group is not dense. Absence up to ``height`` is
    only "inconclusive" unless the caller vouches (``analytic_independent``)
    that no relation exists at any height.
    """
    u, v = complex(u), complex(v)
    if v == 0 or abs((u / v).imag) < 1e-12:
        raise CStarError("degenerate direction: Im(u/v) = 0")
    det = u.real * v.imag - u.imag * v.real
    alpha = v.imag / det
    beta = -u.imag / det
    wit, found = _accel.kron_search(alpha, beta, int(height), 1e-12)
    if found:
        return DensityCert("dependent", wit, int(height), alpha, beta)
    return DensityCert("dense" if analytic_independent else "inconclusive", None, int(height), alpha, beta)


def relation_search(alpha: float, beta: float, height: int) -> DensityCert:
    """The integer-relation search alone, for coefficients given directly."""
    wit, found = _accel.kron_search(float(alpha), float(beta), int(height), 1e-12)
    return DensityCert("dependent" if found else "inconclusive", wit if found else None, int(height),
                       float(alpha), float(beta))


# -- approximation sequences in C* ------------------------------------------

def _partners(g: GenPair, z1: complex, z2: complex, ns, max_m: int):
    c = z1 / z2
    return _accel.best_partner(ns, math.log(abs(c)), cmath.phase(c), math.log(abs(g.xi)), cmath.phase(g.xi),
                               math.log(abs(g.eta)), cmath.phase(g.eta), 0, max_m, _WINDOW)


def ratio_sequence(g: GenPair, z1: complex, z2: complex, eps: float, max_n: int, min_n: int = 0) -> ApproxSeq:
    """Record pairs (n, m) for z1 xi^n / (z2 eta^m) -> 1, 0 <= n, m <= max_n."""
    if z1 == 0 or z2 == 0:
        raise CStarError("z1, z2 must be nonzero")
    if not eps > 0:
        raise CStarError("eps must be positive")
    ns = np.arange(min_n, max_n + 1, dtype=np.int64)
    ms, res = _partners(g, complex(z1), complex(z2), ns, max_n)
    pairs, vals = _records(ns, ms, res)
    b = cmath.phase(g.eta)
    # the limit phase statement is ambiguous between n_k and m_k; report both
    extra = {"phase_n_beta": [[math.cos(n * b), math.sin(n * b)] for n, _ in pairs],
             "phase_m_beta": [[math.cos(m * b), math.sin(m * b)] for _, m in pairs]}
    return ApproxSeq(pairs, vals, bool(vals) and vals[-1] < eps, max_n, extra)


def unit_grid(n: int = 16) -> list:
    return [cmath.exp(2j * math.pi * k / n) for k in range(n)]


def phase_coverage(g: GenPair, targets=None, eps: float = 0.1, max_n: int = 10 ** 5) -> dict:
    """Which phases e^{i n alpha} occur along xi^n eta^m ~ 1.

    Every target hit is evidence (not proof) that the phase-limit group is
    the whole circle.
    """
    targets = unit_grid() if targets is None else list(targets)
    if not targets:
        raise CStarError("targets must be non-empty")
    ns = np.arange(1, max_n + 1, dtype=np.int64)
    # xi^n eta^m with m <= 0 is xi^n / eta^{-m}
    ms, res = _partners(g, 1.0, 1.0, ns, max_n)
    a = cmath.phase(g.xi)
    ok = res < eps
    # negative n: the conjugate-inverse pair has residual |1/w - 1| and phase -n*alpha
    ph = np.remainder(ns[ok] * a, TWO_PI)
    w_res = res[ok]
    phases = np.concatenate([ph, -ph])
    scores = np.concatenate([w_res, w_res / np.maximum(1.0 - w_res, 1e-300)])
    nsel = np.concatenate([ns[ok], -ns[ok]])
    msel = np.concatenate([-ms[ok], ms[ok]])
    keep = scores < eps
    phases, nsel, msel = phases[keep], nsel[keep], msel[keep]
    per = []
    for tau in targets:
        tau = complex(tau)
        if phases.size:
            d = np.abs(np.exp(1j * phases) - tau)
            j = int(np.argmin(d))
            per.append({"target": [tau.real, tau.imag], "distance": float(d[j]), "n": int(nsel[j]),
                        "m": int(msel[j]), "hit": bool(d[j] < eps)})
        else:
            per.append({"target": [tau.real, tau.imag], "distance": math.inf, "n": None, "m": None, "hit": False})
    hits = sum(p["hit"] for p in per)
    verdict = "second-type evidence" if hits == len(per) else ("first-type evidence" if hits else "no evidence")
    return {"targets": per, "hits": hits, "verdict": verdict, "eps": eps, "max_n": max_n}


# -- cone version --------------------------------------------------------------

def _orbit_dirs(f: Similarity3, w: np.ndarray, origin: np.ndarray, n: np.ndarray) -> tuple:
    """Unit directions and log radii of f^n(w) about ``origin`` (Rodrigues, one product per n)."""
    axis, ang = quat_to_axis_angle(f.quat)
    v = w - origin
    r0 = np.linalg.norm(v)
    v = v / r0
    th = np.remainder(n * ang, TWO_PI)[:, None]
    k = axis[None, :]
    d = v * np.cos(th) + np.cross(k, v) * np.sin(th) + k * (k @ v) * (1.0 - np.cos(th))
    return d, math.log(r0) + n * f.log_ratio


def _angles(d, ref):
    return np.arctan2(np.linalg.norm(np.cross(d, ref), axis=-1), np.sum(d * ref, axis=-1))


def cone_sequence(f1: Similarity3, f2: Similarity3, w1, w2, eps: float, max_n: int,
                  target=None, min_n: int = 0) -> ApproxSeq:
    """Record pairs (n, m) along which f1^n(w1) and f2^m(w2) approach each other
    on a common ray.

    With ``target`` (a direction from the common fixed point) the residual is
    |log radius ratio| + angle(f1^n w1, target) + angle(f2^m w2, target);
    without it the two angles are replaced by the angle between the points.
    """
    w1, w2 = vec(w1), vec(w2)
    o = f1.fixed_point()
    o2 = f2.fixed_point()
    if np.linalg.norm(o - o2) > 1e-9 * max(1.0, np.linalg.norm(o)):
        raise CStarError("f1 and f2 need a common fixed point")
    for f, w in ((f1, w1), (f2, w2)):
        ax, ang = quat_to_axis_angle(f.quat)
        v = w - o
        if np.linalg.norm(v) == 0.0 or (ang and np.linalg.norm(np.cross(unit(v), ax)) < 1e-12):
            raise CStarError("start point lies on the rotation axis")
    if f2.log_ratio == 0.0:
        raise CStarError("f2 must have ratio != 1")
    ns = np.arange(min_n, max_n + 1, dtype=np.int64)
    ms_all = np.arange(0, max_n + 1, dtype=np.int64)
    d1, l1 = _orbit_dirs(f1, w1, o, ns)
    d2, l2 = _orbit_dirs(f2, w2, o, ms_all)
    mc = np.rint((l1 - l2[0]) / f2.log_ratio).astype(np.int64)
    cand = np.clip(mc[:, None] + np.arange(-_WINDOW, _WINDOW + 1)[None, :], 0, max_n)
    lr = np.abs(l1[:, None] - l2[cand])
    if target is None:
        ang = _angles(d1[:, None, :], d2[cand])
    else:
        t = unit(target)
        ang = _angles(d1, t)[:, None] + _angles(d2, t)[cand]
    cost = lr + ang
    j = np.argmin(cost, axis=1)
    rows = np.arange(ns.size)
    pairs, vals = _records(ns, cand[rows, j], cost[rows, j])
    extra = {"mode": "target" if target is not None else "relative"}
    return ApproxSeq(pairs, vals, bool(vals) and vals[-1] < eps, max_n, extra)


def report(obj) -> dict:
    return obj.to_dict() if hasattr(obj, "to_dict") else dict(obj)
