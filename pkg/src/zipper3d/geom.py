"""Similarity algebra in R^3, bicones and a few metric bounds.

Points are plain ``numpy`` arrays of shape ``(3,)``. Rotations are unit
quaternions ``(w, x, y, z)``; a :class:`Similarity3` acts as
``x -> ratio * R x + shift`` and stores ``log(ratio)`` so that long powers
such as ``S_1^n`` with ``n`` in the thousands do not underflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

ANGLE_TOL = 1e-9


class GeometryError(ValueError):
    """Raised when a geometric precondition does not hold."""


def vec(x, y=None, z=None) -> np.ndarray:
    if y is None:
        out = np.asarray(x, dtype=float).reshape(3)
    else:
        out = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(out)):
        raise GeometryError("non-finite coordinates")
    return out


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise GeometryError("zero vector has no direction")
    return v / n


def angle_between(u, v) -> float:
    """Angle in [0, pi], computed with atan2 for accuracy near 0 and pi."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return math.atan2(np.linalg.norm(np.cross(u, v)), float(np.dot(u, v)))


# -- quaternions -------------------------------------------------------------

def quat_mul(a, b) -> np.ndarray:
    w0, x0, y0, z0 = a
    w1, x1, y1, z1 = b
    return np.array([
        w0 * w1 - x0 * x1 - y0 * y1 - z0 * z1,
        w0 * x1 + x0 * w1 + y0 * z1 - z0 * y1,
        w0 * y1 - x0 * z1 + y0 * w1 + z0 * x1,
        w0 * z1 + x0 * y1 - y0 * x1 + z0 * w1,
    ])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    # canonical hemisphere keeps comparisons and serialization stable
    if q[0] < 0.0 or (q[0] == 0.0 and next((c for c in q[1:] if c != 0.0), 0.0) < 0.0):
        q = -q
    return q


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = unit(axis)
    h = 0.5 * math.remainder(angle, 2.0 * math.pi)
    return quat_normalize(np.concatenate(([math.cos(h)], math.sin(h) * axis)))


def quat_to_axis_angle(q) -> tuple[np.ndarray, float]:
    """Axis and angle in [0, pi]; the axis is arbitrary (x) for the identity."""
    q = quat_normalize(q)
    s = np.linalg.norm(q[1:])
    if s < 1e-300:
        return np.array([1.0, 0.0, 0.0]), 0.0
    return q[1:] / s, 2.0 * math.atan2(s, q[0])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    return quat_normalize(q)


QUAT_ID = np.array([1.0, 0.0, 0.0, 0.0])


# -- similarities ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Similarity3:
    """Orientation-preserving similarity ``x -> ratio * R(x) + shift``."""

    log_ratio: float
    quat: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        if not math.isfinite(self.log_ratio):
            raise GeometryError("similarity ratio must be positive and finite")
        object.__setattr__(self, "quat", quat_normalize(self.quat))
        object.__setattr__(self, "shift", vec(self.shift))

    @classmethod
    def make(cls, ratio: float, quat=QUAT_ID, shift=(0.0, 0.0, 0.0)) -> "Similarity3":
        if not ratio > 0.0:
            raise GeometryError(f"ratio must be positive, got {ratio}")
        return cls(math.log(ratio), quat, shift)

    @classmethod
    def identity(cls) -> "Similarity3":
        return cls(0.0, QUAT_ID, np.zeros(3))

    @classmethod
    def homothety(cls, ratio: float, center=(0.0, 0.0, 0.0)) -> "Similarity3":
        c = vec(center)
        return cls.make(ratio, QUAT_ID, c - ratio * c)

    @classmethod
    def rotation(cls, axis_point, axis_dir, angle: float) -> "Similarity3":
        """Rotation by ``angle`` (right-hand rule) about the oriented line."""
        q = quat_from_axis_angle(axis_dir, angle)
        p = vec(axis_point)
        return cls(0.0, q, p - quat_to_matrix(q) @ p)

    @classmethod
    def translation(cls, t) -> "Similarity3":
        return cls(0.0, QUAT_ID, vec(t))

    @property
    def ratio(self) -> float:
        return math.exp(self.log_ratio)

    @cached_property
    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.quat)

    def __call__(self, x) -> np.ndarray:
        return self.apply(x)

    def apply(self, x) -> np.ndarray:
        """Apply to one point ``(3,)`` or a batch ``(n, 3)``."""
        x = np.asarray(x, dtype=float)
        return self.ratio * (x @ self.matrix.T) + self.shift

    def linear_apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return self.ratio * (v @ self.matrix.T)

    def __matmul__(self, other: "Similarity3") -> "Similarity3":
        return compose(self, other)

    def fixed_point(self) -> np.ndarray:
        """Unique fixed point; requires ratio != 1 or a trivial rotation."""
        a = np.eye(3) - self.ratio * self.matrix
        return np.linalg.solve(a, self.shift)

    def __repr__(self) -> str:
        axis, ang = quat_to_axis_angle(self.quat)
        return (f"Similarity3(ratio={self.ratio:.6g}, axis={np.round(axis, 6).tolist()}, "
                f"angle={ang:.6g}, shift={np.round(self.shift, 6).tolist()})")


def compose(a: Similarity3, b: Similarity3) -> Similarity3:
    """``a o b``: apply ``b`` first."""
    return Similarity3(
        a.log_ratio + b.log_ratio,
        quat_mul(a.quat, b.quat),
        a.ratio * (a.matrix @ b.shift) + a.shift,
    )


def compose_all(*maps: Similarity3) -> Similarity3:
    out = Similarity3.identity()
    for s in maps:
        out = compose(out, s)
    return out


def inverse(s: Similarity3) -> Similarity3:
    rt = s.matrix.T
    return Similarity3(
        -s.log_ratio,
        np.array([s.quat[0], -s.quat[1], -s.quat[2], -s.quat[3]]),
        -(rt @ s.shift) / s.ratio,
    )


def power(s: Similarity3, n: int) -> Similarity3:
    """``s^n`` for ``n >= 0`` via the fixed point, exact in angle and log-ratio.

    Rotation angles are multiplied once and reduced modulo 2*pi instead of
    accumulated, so ``n`` in the tens of thousands keeps full phase accuracy.
    """
    if n < 0:
        raise GeometryError("negative powers: use inverse() first")
    if n == 0:
        return Similarity3.identity()
    if n == 1:
        return s
    axis, ang = quat_to_axis_angle(s.quat)
    q = quat_from_axis_angle(axis, math.remainder(n * ang, 2.0 * math.pi)) if ang else QUAT_ID
    if abs(s.log_ratio) < 1e-14:
        # isometry: fall back to repeated squaring
        out, base, k = Similarity3.identity(), s, n
        while k:
            if k & 1:
                out = compose(out, base)
            base = compose(base, base)
            k >>= 1
        return out
    c = s.fixed_point()
    lr = n * s.log_ratio
    rn = math.exp(lr)
    return Similarity3(lr, q, c - rn * (quat_to_matrix(q) @ c))


def similarity_from_segment(p, q, n, o, d, n2) -> Similarity3:
    """Similarity sending ``p -> o``, ``q -> d`` whose rotation sends ``n -> n2``.

    ``n`` must be a unit normal of ``pq`` and ``n2`` a unit normal of ``od``.
    """
    p, q, n, o, d, n2 = (vec(v) for v in (p, q, n, o, d, n2))
    pq, od = q - p, d - o
    lp, lo = np.linalg.norm(pq), np.linalg.norm(od)
    if lp == 0.0 or lo == 0.0:
        raise GeometryError("degenerate segment")
    u1, u2 = pq / lp, od / lo
    for nv in (n, n2):
        if abs(np.linalg.norm(nv) - 1.0) > ANGLE_TOL:
            raise GeometryError("normal vectors must be unit length")
    if abs(np.dot(u1, n)) > ANGLE_TOL or abs(np.dot(u2, n2)) > ANGLE_TOL:
        raise GeometryError("normal is not perpendicular to its segment")
    f1 = np.column_stack([u1, n, np.cross(u1, n)])
    f2 = np.column_stack([u2, n2, np.cross(u2, n2)])
    rot = f2 @ f1.T
    ratio = lo / lp
    return Similarity3.make(ratio, quat_from_matrix(rot), o - ratio * (rot @ p))


def planar_segment_map(p, q, o, d) -> Similarity3:
    """XY-plane preserving similarity sending ``p -> o`` and ``q -> d``."""
    ez = np.array([0.0, 0.0, 1.0])
    return similarity_from_segment(p, q, ez, o, d, ez)


def identity_distance(s: Similarity3, probe) -> float:
    probe = np.atleast_2d(np.asarray(probe, dtype=float))
    if probe.size == 0:
        raise GeometryError("empty probe set")
    return float(np.max(np.linalg.norm(s.apply(probe) - probe, axis=1)))


# -- bicones -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Bicone:
    """Two right circular cones glued along the disk at the axis midpoint."""

    apex_a: np.ndarray
    apex_b: np.ndarray
    half_angle: float

    def __post_init__(self):
        object.__setattr__(self, "apex_a", vec(self.apex_a))
        object.__setattr__(self, "apex_b", vec(self.apex_b))
        if np.linalg.norm(self.apex_b - self.apex_a) == 0.0:
            raise GeometryError("bicone apexes coincide")
        if not 0.0 < self.half_angle < math.pi / 2:
            raise GeometryError("half angle must lie in (0, pi/2)")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.apex_b - self.apex_a))

    @property
    def axis(self) -> np.ndarray:
        return (self.apex_b - self.apex_a) / self.length

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.apex_a + self.apex_b)

    @property
    def base_radius(self) -> float:
        return 0.5 * self.length * math.tan(self.half_angle)

    def with_half_angle(self, half_angle: float) -> "Bicone":
        return Bicone(self.apex_a, self.apex_b, half_angle)

    def _axial(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        rel = x - self.apex_a
        t = rel @ self.axis
        r = np.linalg.norm(rel - np.outer(t, self.axis), axis=1)
        return t, r

    def support(self, d) -> np.ndarray:
        """Farthest point of the bicone in direction ``d``."""
        d = np.asarray(d, dtype=float)
        u = self.axis
        perp = d - np.dot(d, u) * u
        pn = np.linalg.norm(perp)
        cands = [self.apex_a, self.apex_b]
        if pn > 0.0:
            cands.append(self.center + self.base_radius * perp / pn)
        vals = [np.dot(d, c) for c in cands]
        return cands[int(np.argmax(vals))]

    def sample(self, n: int, seed: int = 0, surface_fraction: float = 0.5) -> np.ndarray:
        """Deterministic low-discrepancy sample of the solid and its surface.

        Returns exactly ``n`` points, the two apexes included.
        """
        from scipy.stats import qmc

        if n < 3:
            raise GeometryError("need at least 3 sample points")
        sob = qmc.Sobol(d=3, scramble=True, seed=seed)
        m = int(math.ceil(math.log2(n)))
        u = sob.random_base2(m)[:n - 2]
        n = n - 2
        t = u[:, 0]
        prof = np.minimum(t, 1.0 - t) * self.length * math.tan(self.half_angle)
        n_surf = int(round(surface_fraction * n))
        rad = np.sqrt(u[:, 1]) * prof
        rad[:n_surf] = prof[:n_surf]
        ang = 2.0 * math.pi * u[:, 2]
        e1 = unit(np.cross(self.axis, _least_aligned(self.axis)))
        e2 = np.cross(self.axis, e1)
        pts = (self.apex_a + np.outer(t * self.length, self.axis)
               + (rad * np.cos(ang))[:, None] * e1 + (rad * np.sin(ang))[:, None] * e2)
        return np.vstack([pts, self.apex_a, self.apex_b])


def _least_aligned(u) -> np.ndarray:
    e = np.zeros(3)
    e[int(np.argmin(np.abs(u)))] = 1.0
    return e


def bicone_contains(b: Bicone, x, tol: float = 1e-12) -> bool | np.ndarray:
    """Closed-bicone membership; vectorized over a batch of points."""
    t, r = b._axial(x)
    lim = np.minimum(t, b.length - t) * math.tan(b.half_angle)
    ok = (t >= -tol) & (t <= b.length + tol) & (r <= lim + tol)
    return bool(ok[0]) if np.ndim(x) == 1 else ok


def bicone_distance(b: Bicone, x) -> np.ndarray | float:
    """Euclidean distance from points to the solid bicone (0 inside).

    Works in the meridian half-plane, where the bicone is the triangle
    (0, 0), (L/2, h), (L, 0).
    """
    t, r = b._axial(x)
    L, h = b.length, b.base_radius
    tri = np.array([[0.0, 0.0], [0.5 * L, h], [L, 0.0]])
    pts = np.column_stack([t, r])
    inside = bicone_contains(b, np.atleast_2d(np.asarray(x, dtype=float)))
    best = np.full(len(pts), np.inf)
    for i in range(3):
        a, c = tri[i], tri[(i + 1) % 3]
        ac = c - a
        s = np.clip(((pts - a) @ ac) / (ac @ ac), 0.0, 1.0)
        best = np.minimum(best, np.linalg.norm(pts - (a + s[:, None] * ac), axis=1))
    best = np.where(inside, 0.0, best)
    return float(best[0]) if np.ndim(x) == 1 else best


def convex_separation(support_a, support_b, guess, n_dirs: int = 400) -> tuple[float, np.ndarray]:
    """Best separating direction between two convex bodies given support maps.

    Returns ``(gap, d)`` with ``gap = min_a d.a - max_b d.b``; a positive gap
    certifies disjointness (the plane orthogonal to ``d`` separates them).
    """
    from scipy.optimize import minimize

    def gap(d):
        d = unit(d)
        return float(np.dot(d, support_a(-d)) - np.dot(d, support_b(d)))

    rng = np.random.default_rng(12345)
    dirs = rng.normal(size=(n_dirs, 3))
    dirs = np.vstack([unit(guess), dirs / np.linalg.norm(dirs, axis=1)[:, None]])
    vals = [gap(d) for d in dirs]
    d0 = dirs[int(np.argmax(vals))]
    res = minimize(lambda d: -gap(d), d0, method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 2000})
    best = unit(res.x) if -res.fun > max(vals) else d0
    return gap(best), best


def common_generator_dihedral(b1: Bicone, b2: Bicone) -> float | None:
    """Dihedral angle at the shared apex between the planes through the axis
    of ``b2`` that contain the common generators of the two cones.

    Returns ``None`` when the cones meet only at the apex.
    """
    shared = None
    for p in (b1.apex_a, b1.apex_b):
        for q in (b2.apex_a, b2.apex_b):
            if np.linalg.norm(p - q) <= 1e-12 * max(1.0, np.linalg.norm(p)):
                if shared is not None:
                    raise GeometryError("bicones share both apexes")
                shared = p
    if shared is None:
        raise GeometryError("bicones do not share an apex")
    u1 = unit((b1.apex_b if np.allclose(b1.apex_a, shared) else b1.apex_a) - shared)
    u2 = unit((b2.apex_b if np.allclose(b2.apex_a, shared) else b2.apex_a) - shared)
    g = angle_between(u1, u2)
    if g < ANGLE_TOL:
        raise GeometryError("coaxial cones: surfaces coincide, dihedral undefined")
    # spherical cosine theorem in the triangle (u2, u1, generator)
    c = ((math.cos(b1.half_angle) - math.cos(b2.half_angle) * math.cos(g))
         / (math.sin(b2.half_angle) * math.sin(g)))
    if abs(c) > 1.0:
        return None
    return 2.0 * math.acos(c)


def ball_displacement_ratio(center, r: float, plane_point, plane_normal) -> float:
    """Bound on max/min displacement over a ball for a homothety-rotation
    whose axis lies in the given plane."""
    n = vec(plane_normal)
    if abs(np.linalg.norm(n) - 1.0) > ANGLE_TOL:
        raise GeometryError("plane normal must be a unit vector")
    d = abs(float(np.dot(vec(center) - vec(plane_point), n)))
    if d <= r:
        raise GeometryError("ball meets the plane")
    return (d + r) / (d - r)


def skew_frame_bounds(e1, e2, e3, lam1: float, lam2: float) -> tuple[float, float]:
    """Two-sided norm bounds for ``sum x_i r_i e_i`` with ``lam1 < r_i < lam2``."""
    es = [vec(e) for e in (e1, e2, e3)]
    for e in es:
        if abs(np.linalg.norm(e) - 1.0) > ANGLE_TOL:
            raise GeometryError("frame vectors must be unit length")
    if not 0.0 < lam1 <= lam2:
        raise GeometryError("need 0 < lam1 <= lam2")
    dev = max(abs(angle_between(es[i], es[j]) - math.pi / 2)
              for i, j in ((0, 1), (0, 2), (1, 2)))
    if dev >= math.pi / 2:
        raise GeometryError("frame is degenerate")
    s = math.sin(dev)
    return lam1 * math.sqrt(max(0.0, 1.0 - 2.0 * s)), lam2 * math.sqrt(1.0 + 2.0 * s)


def spherical_coords(x, origin, polar_axis, azimuth_dir) -> np.ndarray:
    """(radius, azimuth, polar) of points in the frame given by a polar axis
    and an azimuth reference direction (projected orthogonal to the axis)."""
    x = np.atleast_2d(np.asarray(x, dtype=float)) - vec(origin)
    ez = unit(polar_axis)
    ex = unit(np.asarray(azimuth_dir, dtype=float) - np.dot(azimuth_dir, ez) * ez)
    ey = np.cross(ez, ex)
    a, b, c = x @ ex, x @ ey, x @ ez
    rad = np.linalg.norm(x, axis=1)
    out = np.column_stack([rad, np.arctan2(b, a), np.arctan2(np.hypot(a, b), c)])
    return out[0] if out.shape[0] == 1 else out
