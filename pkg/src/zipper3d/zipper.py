"""Zippers, linear parametrizations of their attractors and related bounds."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import _accel
from .geom import Similarity3, compose, vec

Address = tuple  # digits are 1-based, as in S_{i_1 ... i_k}


class ZipperError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Zipper:
    maps: tuple
    vertices: np.ndarray
    signature: tuple

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(self.maps))
        object.__setattr__(self, "vertices", np.array(self.vertices, dtype=float).reshape(-1, 3))
        object.__setattr__(self, "signature", tuple(int(e) for e in self.signature))
        m = len(self.maps)
        if len(self.signature) != m or self.vertices.shape[0] != m + 1:
            raise ZipperError(f"inconsistent lengths: {m} maps, {len(self.signature)} signature "
                              f"bits, {self.vertices.shape[0]} vertices")
        if any(e not in (0, 1) for e in self.signature):
            raise ZipperError("signature bits must be 0 or 1")

    @property
    def m(self) -> int:
        return len(self.maps)

    @property
    def ratios(self) -> np.ndarray:
        return np.array([s.ratio for s in self.maps])

    def arrays(self):
        """(scale, rotation matrices, shifts) stacked for the kernels."""
        return (self.ratios, np.ascontiguousarray([s.matrix for s in self.maps]),
                np.ascontiguousarray([s.shift for s in self.maps]))


@dataclass(frozen=True)
class LinearZipper:
    """Affine zipper on [0, 1] with ratios ``p`` (sum 1) and a signature."""

    ratios: tuple
    signature: tuple

    def __post_init__(self):
        p = tuple(float(x) for x in self.ratios)
        object.__setattr__(self, "ratios", p)
        object.__setattr__(self, "signature", tuple(int(e) for e in self.signature))
        if len(p) != len(self.signature):
            raise ZipperError("ratios and signature differ in length")
        if any(x <= 0.0 for x in p) or abs(sum(p) - 1.0) > 1e-12:
            raise ZipperError("linear zipper ratios must be positive and sum to 1")

    @property
    def m(self) -> int:
        return len(self.ratios)

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.ratios)[:-1]))

    def map(self, i: int):
        """T_i as ``(slope, offset)`` (slope < 0 under reversal)."""
        a, p = self.starts[i - 1], self.ratios[i - 1]
        return (-p, a + p) if self.signature[i - 1] else (p, a)

    def apply(self, i: int, t):
        k, b = self.map(i)
        return k * np.asarray(t) + b

    def cylinder(self, addr: Sequence[int]) -> tuple[float, float]:
        """Parameter interval T_addr([0, 1])."""
        k, b = 1.0, 0.0
        for d in addr:
            kd, bd = self.map(d)
            k, b = k * kd, k * bd + b
        lo, hi = sorted((b, k + b))
        return lo, hi


class ValidationReport(NamedTuple):
    passed: bool
    residual_start: list
    residual_end: list
    tol: float

    def to_dict(self):
        return {"pass": self.passed, "tol": self.tol, "max_residual": max(self.residual_start + self.residual_end),
                "residual_start": self.residual_start, "residual_end": self.residual_end}


def validate(z: Zipper, tol: float = 1e-9) -> ValidationReport:
    """Check S_i(z_0) = z_{i-1+e_i} and S_i(z_m) = z_{i-e_i}."""
    v = z.vertices
    r0, r1 = [], []
    for i, (s, e) in enumerate(zip(z.maps, z.signature), start=1):
        r0.append(float(np.linalg.norm(s.apply(v[0]) - v[i - 1 + e])))
        r1.append(float(np.linalg.norm(s.apply(v[-1]) - v[i - e])))
    ok = max(r0 + r1) < tol and bool(np.all(z.ratios < 1.0))
    return ValidationReport(ok, r0, r1, tol)


def check_address(z_or_m, addr: Sequence[int]) -> tuple:
    m = z_or_m if isinstance(z_or_m, int) else z_or_m.m
    addr = tuple(int(d) for d in addr)
    for d in addr:
        if not 1 <= d <= m:
            raise ZipperError(f"digit {d} outside 1..{m}")
    return addr


def cylinder_map(z: Zipper, addr: Sequence[int]) -> Similarity3:
    out = Similarity3.identity()
    for d in check_address(z, addr):
        out = compose(out, z.maps[d - 1])
    return out


def shift(addr: Sequence[int], k: int) -> tuple:
    return tuple(addr)[k:]


def prepend(prefix: Sequence[int], addr: Sequence[int]) -> tuple:
    return tuple(prefix) + tuple(addr)


def _check_pair(z: Zipper, t: LinearZipper):
    if z.signature != t.signature:
        raise ZipperError("zipper and linear zipper signatures differ")


def diameter_bound(z: Zipper) -> float:
    """Upper bound on diam(gamma): the self-map-invariant ball around z_0, z_m."""
    c = 0.5 * (z.vertices[0] + z.vertices[-1])
    return 2.0 * root_radius(z, c)


def root_radius(z: Zipper, center) -> float:
    """Radius of a ball about ``center`` mapped into itself by every S_i."""
    q = z.ratios
    d = np.array([np.linalg.norm(s.apply(center) - center) for s in z.maps])
    return float(np.max(d / (1.0 - q)))


def parametrize(z: Zipper, t: LinearZipper, u, depth: int = 14):
    """phi(u) for the (S, T)-equivariant parametrization; u scalar or array.

    Descends ``depth`` address digits of ``u`` under ``T`` and applies the
    cylinder map to z_0 or z_m, whichever the remaining parameter is closer to.
    """
    _check_pair(z, t)
    if depth < 0:
        raise ZipperError("depth must be non-negative")
    scalar = np.ndim(u) == 0
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any((u < 0.0) | (u > 1.0)):
        raise ZipperError("parameter outside [0, 1]")
    digits, tail = _accel.descend(u, t.starts, np.asarray(t.ratios), np.asarray(t.signature, dtype=np.bool_),
                                  depth)
    anchors = np.where((tail <= 0.5)[:, None], z.vertices[0], z.vertices[-1])
    pts = _accel.chain_apply(digits, anchors, *z.arrays())
    # phi(0) = z_0 and phi(1) = z_m hold exactly; don't let rounding in the chain move them
    pts[u == 0.0] = z.vertices[0]
    pts[u == 1.0] = z.vertices[-1]
    return pts[0] if scalar else pts


def address_of(t: LinearZipper, u: float, depth: int) -> tuple:
    digits, _ = _accel.descend_np(np.array([u]), t.starts, np.asarray(t.ratios),
                                  np.asarray(t.signature, dtype=bool), depth)
    return tuple(int(d) + 1 for d in digits[0])


@dataclass(frozen=True)
class Polyline:
    params: np.ndarray
    points: np.ndarray

    def __len__(self):
        return len(self.params)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t,x,y,z\n")
            for tt, p in zip(self.params, self.points):
                fh.write(",".join(repr(float(c)) for c in (tt, *p)) + "\n")

    def to_ply(self, path):
        n = len(self.params)
        with open(path, "w") as fh:
            fh.write("ply\nformat ascii 1.0\n")
            fh.write(f"element vertex {n}\nproperty double x\nproperty double y\nproperty double z\n")
            fh.write(f"element edge {n - 1}\nproperty int vertex1\nproperty int vertex2\nend_header\n")
            for p in self.points:
                fh.write(" ".join(repr(float(c)) for c in p) + "\n")
            for i in range(n - 1):
                fh.write(f"{i} {i + 1}\n")


def refine(z: Zipper, t: LinearZipper, depth: int) -> Polyline:
    """All depth-``depth`` cylinder endpoints, ordered by parameter.

    Point ``j`` of a cylinder ``a`` of length depth-1 is S_a(z_j), at
    parameter T_a(c_j) with c_j the breakpoints of T.
    """
    _check_pair(z, t)
    if depth < 0:
        raise ZipperError("depth must be non-negative")
    v = z.vertices
    if depth == 0:
        return Polyline(np.array([0.0, 1.0]), np.array([v[0], v[-1]]))
    scale, mats, shifts = z.arrays()
    # composite maps of all addresses of length depth-1
    cs, cm, cb = np.ones(1), np.eye(3)[None], np.zeros((1, 3))
    tk, tb = np.ones(1), np.zeros(1)
    slopes = np.array([t.map(i)[0] for i in range(1, z.m + 1)])
    offs = np.array([t.map(i)[1] for i in range(1, z.m + 1)])
    for _ in range(depth - 1):
        cb = (cs[:, None, None] * np.einsum("nij,mj->nmi", cm, shifts) + cb[:, None, :]).reshape(-1, 3)
        cs = (cs[:, None] * scale[None, :]).ravel()
        cm = np.einsum("nij,mjk->nmik", cm, mats).reshape(-1, 3, 3)
        tb = (tk[:, None] * offs[None, :] + tb[:, None]).ravel()
        tk = (tk[:, None] * slopes[None, :]).ravel()
    breaks = np.concatenate(([0.0], np.cumsum(t.ratios)))
    params = (tk[:, None] * breaks[None, :] + tb[:, None]).ravel()
    pts = (cs[:, None, None] * np.einsum("nij,kj->nki", cm, v) + cb[:, None, :]).reshape(-1, 3)
    order = np.argsort(params, kind="stable")
    params, pts = params[order], pts[order]
    keep = np.concatenate(([True], np.diff(params) > 1e-15))
    params, pts = params[keep], pts[keep]
    params[0], params[-1] = 0.0, 1.0
    pts[0], pts[-1] = v[0], v[-1]
    return Polyline(params, pts)


def holder_exponent(z_ratios, t_ratios) -> float:
    """Exact Hoelder exponent min_i log q_i / log p_i of the parametrization."""
    q = np.asarray(z_ratios.ratios if isinstance(z_ratios, Zipper) else z_ratios, dtype=float)
    p = np.asarray(t_ratios.ratios if isinstance(t_ratios, LinearZipper) else t_ratios, dtype=float)
    if q.shape != p.shape:
        raise ZipperError("ratio lists differ in length")
    if np.any((q <= 0) | (q >= 1)) or np.any((p <= 0) | (p >= 1)):
        raise ZipperError("all ratios must lie in (0, 1)")
    return float(np.min(np.log(q) / np.log(p)))


def similarity_dimension(ratios) -> float:
    """Root s of sum q_i^s = 1 (Moran equation)."""
    q = np.asarray(ratios, dtype=float)
    if q.size == 0 or np.any((q <= 0) | (q >= 1)):
        raise ZipperError("ratios must be a non-empty list in (0, 1)")
    lq = np.log(q)

    def f(s):
        return float(np.sum(np.exp(s * lq))) - 1.0

    lo, hi = 1e-6, 64.0
    if f(lo) < 0.0:
        raise ZipperError("similarity dimension below bracket")
    if f(hi) > 0.0:
        raise ZipperError("similarity dimension above bracket")
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    s = 0.5 * (lo + hi)
    for _ in range(3):
        d = float(np.sum(lq * np.exp(s * lq)))
        if d == 0.0:
            break
        s_new = s - f(s) / d
        if abs(f(s_new)) <= abs(f(s)):
            s = s_new
    return s


# -- collage bounds -------------------------------------------------------------

class CollageBound(NamedTuple):
    lower: float
    upper: float
    delta: float
    slack: float
    status: str = "sampled"


def _system_delta(s: Zipper, t: Zipper, probe) -> tuple[float, float]:
    if s.m != t.m:
        raise ZipperError("systems have different sizes")
    delta = max(float(np.max(np.linalg.norm(b.apply(probe) - a.apply(probe), axis=1)))
                for a, b in zip(s.maps, t.maps))
    q = float(max(np.max(s.ratios), np.max(t.ratios)))
    return delta, q


def collage_b1(s: Zipper, t: Zipper, v_probe, j: Sequence[int], d1: float, d2: float) -> CollageBound:
    """Two-sided bound on |psi(sigma) - phi(sigma)| for sigma in the j-cylinder."""
    probe = np.atleast_2d(np.asarray(v_probe, dtype=float))
    delta, q = _system_delta(s, t, probe)
    sj, tj = cylinder_map(s, j), cylinder_map(t, j)
    slack = sj.ratio * delta / (1.0 - q)
    if d1 <= slack:
        raise ZipperError(f"bound vacuous: d1={d1} <= q_j*delta/(1-q)={slack}")
    dj = np.linalg.norm(tj.apply(probe) - sj.apply(probe), axis=1)
    if not (d1 < dj.min() and dj.max() < d2):
        raise ZipperError(f"sampled hypothesis fails: |Delta_j| in [{dj.min()}, {dj.max()}], "
                          f"need ({d1}, {d2})")
    return CollageBound(d1 - slack, d2 + slack, delta, slack)


def collage_b2(s: Zipper, t: Zipper, v_probe, i: Sequence[int], j: Sequence[int],
               d1: float, d2: float) -> CollageBound:
    """Bound on |psi(sigma) - phi(sigma) - psi(tau) + phi(tau)|, sigma in the
    i-cylinder and tau in the j-cylinder."""
    probe = np.atleast_2d(np.asarray(v_probe, dtype=float))
    delta, q = _system_delta(s, t, probe)
    si, ti = cylinder_map(s, i), cylinder_map(t, i)
    sj, tj = cylinder_map(s, j), cylinder_map(t, j)
    slack = (si.ratio + sj.ratio) * delta / (1.0 - q)
    if d1 <= slack:
        raise ZipperError(f"bound vacuous: d1={d1} <= (q_i+q_j)*delta/(1-q)={slack}")
    di = ti.apply(probe) - si.apply(probe)
    dj = tj.apply(probe) - sj.apply(probe)
    diff = np.linalg.norm(di[:, None, :] - dj[None, :, :], axis=2)
    if not (d1 < diff.min() and diff.max() < d2):
        raise ZipperError(f"sampled hypothesis fails: |Delta_i - Delta_j| in [{diff.min()}, {diff.max()}]")
    return CollageBound(d1 - slack, d2 + slack, delta, slack)


# -- serialization ------------------------------------------------------------

def zipper_to_dict(z: Zipper) -> dict:
    from .geom import quat_to_axis_angle

    maps = []
    for s in z.maps:
        axis, ang = quat_to_axis_angle(s.quat)
        maps.append({"ratio": s.ratio, "axis": [float(a) for a in axis], "angle": float(ang),
                     "shift": [float(c) for c in s.shift]})
    return {"vertices": [[float(c) for c in v] for v in z.vertices],
            "signature": list(z.signature), "maps": maps}


def zipper_from_dict(d: dict) -> Zipper:
    from .geom import quat_from_axis_angle

    try:
        maps = [Similarity3.make(float(e["ratio"]), quat_from_axis_angle(e["axis"], float(e["angle"])),
                                 vec(e["shift"])) for e in d["maps"]]
        return Zipper(maps, np.asarray(d["vertices"], dtype=float), d["signature"])
    except (KeyError, TypeError) as exc:
        raise ZipperError(f"malformed zipper document: {exc}") from exc


def linear_zipper_on_segment(p: Sequence[float], signature: Sequence[int], a=(0.0, 0.0, 0.0),
                             b=(1.0, 0.0, 0.0)) -> Zipper:
    """The affine zipper with ratios ``p`` realized on the segment [a, b] in R^3."""
    a, b = vec(a), vec(b)
    lz = LinearZipper(p, signature)
    verts = [a + c * (b - a) for c in np.concatenate(([0.0], np.cumsum(lz.ratios)))]
    maps = []
    from .geom import similarity_from_segment, unit

    n = unit(np.cross(b - a, [0.0, 0.0, 1.0]) if abs(unit(b - a)[2]) < 0.9 else np.cross(b - a, [1.0, 0, 0]))
    for i, e in enumerate(lz.signature):
        lo, hi = verts[i], verts[i + 1]
        if e:
            lo, hi = hi, lo
        # a reversed 1-D map is a half-turn about the normal: orientation preserving in R^3
        n2 = -n if e else n
        maps.append(similarity_from_segment(a, b, n, lo, hi, n2))
    return Zipper(maps, verts, lz.signature)
