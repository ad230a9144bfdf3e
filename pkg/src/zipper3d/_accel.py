"""Hot inner loops, each in a numba and a plain-numpy flavour.

The numba versions are used unless ``ZIPPER3D_NO_NUMBA=1`` is set in the
environment (or numba is not importable). Both flavours are always exposed
as ``<name>_nb`` / ``<name>_np`` so tests and benchmarks can compare them.
"""
import math
import os

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("ZIPPER3D_NO_NUMBA", "0") not in ("1", "true", "yes")

TWO_PI = 2.0 * math.pi


# -- address descent ---------------------------------------------------------

def descend_np(u, starts, ps, rev, depth):
    u = np.asarray(u, dtype=np.float64).copy()
    n = u.shape[0]
    m = starts.shape[0]
    digits = np.empty((n, depth), dtype=np.int64)
    for lev in range(depth):
        i = np.searchsorted(starts, u, side="right") - 1
        i = np.clip(i, 0, m - 1)
        t = np.clip((u - starts[i]) / ps[i], 0.0, 1.0)
        u = np.where(rev[i], 1.0 - t, t)
        digits[:, lev] = i
    return digits, u


def _descend_py(u, starts, ps, rev, depth):
    n = u.shape[0]
    m = starts.shape[0]
    digits = np.empty((n, depth), dtype=np.int64)
    tail = np.empty(n, dtype=np.float64)
    for k in range(n):
        x = u[k]
        for lev in range(depth):
            i = m - 1
            while i > 0 and starts[i] > x:
                i -= 1
            t = (x - starts[i]) / ps[i]
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            if rev[i]:
                t = 1.0 - t
            digits[k, lev] = i
            x = t
        tail[k] = x
    return digits, tail


# -- evaluating address chains -----------------------------------------------

def chain_apply_np(digits, anchors, scale, mats, shifts):
    x = np.array(anchors, dtype=np.float64)
    for lev in range(digits.shape[1] - 1, -1, -1):
        d = digits[:, lev]
        x = scale[d][:, None] * np.einsum("nij,nj->ni", mats[d], x) + shifts[d]
    return x


def _chain_apply_py(digits, anchors, scale, mats, shifts):
    n, depth = digits.shape
    out = np.empty((n, 3))
    for k in range(n):
        x0 = anchors[k, 0]
        x1 = anchors[k, 1]
        x2 = anchors[k, 2]
        for lev in range(depth - 1, -1, -1):
            d = digits[k, lev]
            s = scale[d]
            a = mats[d]
            y0 = s * (a[0, 0] * x0 + a[0, 1] * x1 + a[0, 2] * x2) + shifts[d, 0]
            y1 = s * (a[1, 0] * x0 + a[1, 1] * x1 + a[1, 2] * x2) + shifts[d, 1]
            y2 = s * (a[2, 0] * x0 + a[2, 1] * x1 + a[2, 2] * x2) + shifts[d, 2]
            x0, x1, x2 = y0, y1, y2
        out[k, 0] = x0
        out[k, 1] = x1
        out[k, 2] = x2
    return out


# -- best partner exponent for C* approximation --------------------------------

def best_partner_np(ns, c_log, c_arg, lr1, a1, lr2, a2, m_lo, m_hi, window):
    """For each n pick m in [m_lo, m_hi] minimizing |log|w|| + |arg w| where
    ``w = exp(c_log + n*lr1 - m*lr2 + i*(c_arg + n*a1 - m*a2))``.

    Returns ``(m_best, residual)`` with ``residual = |w - 1|``.
    """
    ns = np.asarray(ns, dtype=np.int64)
    if lr2 != 0.0:
        mc = np.rint((c_log + ns * lr1) / lr2).astype(np.int64)
        offs = np.arange(-window, window + 1, dtype=np.int64)
        cand = np.clip(mc[:, None] + offs[None, :], m_lo, m_hi)
    else:
        cand = np.broadcast_to(np.arange(m_lo, m_hi + 1, dtype=np.int64), (ns.size, m_hi - m_lo + 1))
    lm = c_log + ns[:, None] * lr1 - cand * lr2
    ph = np.remainder(c_arg + np.remainder(ns[:, None] * a1, TWO_PI) - np.remainder(cand * a2, TWO_PI)
                      + math.pi, TWO_PI) - math.pi
    cost = np.abs(lm) + np.abs(ph)
    j = np.argmin(cost, axis=1)
    rows = np.arange(ns.size)
    lmb, phb = lm[rows, j], ph[rows, j]
    res = np.abs(np.exp(lmb) * np.exp(1j * phb) - 1.0)
    return cand[rows, j], res


def _mod2pi(x):
    return x - TWO_PI * math.floor(x / TWO_PI)


def _wrap(x):
    return _mod2pi(x + math.pi) - math.pi


def _best_partner_py(ns, c_log, c_arg, lr1, a1, lr2, a2, m_lo, m_hi, window):
    n_out = ns.shape[0]
    mbest = np.empty(n_out, dtype=np.int64)
    resid = np.empty(n_out, dtype=np.float64)
    for k in range(n_out):
        n = ns[k]
        if lr2 != 0.0:
            mc = int(np.rint((c_log + n * lr1) / lr2))
            lo = max(m_lo, mc - window)
            hi = min(m_hi, mc + window)
            if lo > hi:
                lo = hi = min(max(mc, m_lo), m_hi)
        else:
            lo, hi = m_lo, m_hi
        best = np.inf
        bm = lo
        blm = 0.0
        bph = 0.0
        pn = _mod2pi(n * a1)
        for m in range(lo, hi + 1):
            lm = c_log + n * lr1 - m * lr2
            ph = _wrap(c_arg + pn - _mod2pi(m * a2))
            cost = abs(lm) + abs(ph)
            if cost < best:
                best = cost
                bm = m
                blm = lm
                bph = ph
        mbest[k] = bm
        r = math.exp(blm)
        resid[k] = math.hypot(r * math.cos(bph) - 1.0, r * math.sin(bph))
    return mbest, resid


# -- integer relation search -------------------------------------------------

def kron_search_np(alpha, beta, height, tol):
    """Smallest-height (k, l, m) != 0, |.| <= height, with k*a + l*b + m ~ 0."""
    best = (0, 0, 0)
    best_h = height + 1
    ls = np.arange(-height, height + 1, dtype=np.int64)
    for k in range(0, height + 1):
        if k >= best_h:
            break
        sel = ls if k > 0 else ls[ls > 0]
        sel = sel[np.abs(sel) < best_h]
        if sel.size == 0:
            continue
        v = k * alpha + sel * beta
        mm = -np.rint(v)
        ok = (np.abs(v + mm) < tol) & (np.abs(mm) <= height)
        if ok.any():
            idx = np.flatnonzero(ok)
            h = np.maximum(np.maximum(k, np.abs(sel[idx])), np.abs(mm[idx]))
            j = int(np.argmin(h))
            if h[j] < best_h:
                best_h = int(h[j])
                best = (k, int(sel[idx][j]), int(mm[idx][j]))
    return best, best_h <= height


def _kron_search_py(alpha, beta, height, tol):
    bk = 0
    bl = 0
    bm = 0
    best_h = height + 1
    for k in range(0, height + 1):
        if k >= best_h:
            break
        for l in range(-height, height + 1):
            if k == 0 and l <= 0:
                continue
            if abs(l) >= best_h:
                continue
            v = k * alpha + l * beta
            m = -np.rint(v)
            if abs(v + m) < tol and abs(m) <= height:
                h = max(k, abs(l), int(abs(m)))
                if h < best_h:
                    best_h = h
                    bk = k
                    bl = l
                    bm = int(m)
    return (bk, bl, bm), best_h <= height


if HAVE_NUMBA:
    _mod2pi = njit(cache=True)(_mod2pi)
    _wrap = njit(cache=True)(_wrap)
    descend_nb = njit(cache=True)(_descend_py)
    chain_apply_nb = njit(cache=True)(_chain_apply_py)
    best_partner_nb = njit(cache=True)(_best_partner_py)
    kron_search_nb = njit(cache=True)(_kron_search_py)
else:  # pragma: no cover
    descend_nb = descend_np
    chain_apply_nb = chain_apply_np
    best_partner_nb = best_partner_np
    kron_search_nb = kron_search_np


def descend(u, starts, ps, rev, depth):
    u = np.ascontiguousarray(u, dtype=np.float64)
    if USE_NUMBA:
        return descend_nb(u, starts, ps, rev, depth)
    return descend_np(u, starts, ps, rev, depth)


def chain_apply(digits, anchors, scale, mats, shifts):
    anchors = np.ascontiguousarray(anchors, dtype=np.float64)
    if USE_NUMBA:
        return chain_apply_nb(digits, anchors, scale, mats, shifts)
    return chain_apply_np(digits, anchors, scale, mats, shifts)


def best_partner(ns, c_log, c_arg, lr1, a1, lr2, a2, m_lo, m_hi, window):
    ns = np.ascontiguousarray(ns, dtype=np.int64)
    args = (float(c_log), float(c_arg), float(lr1), float(a1), float(lr2), float(a2),
            int(m_lo), int(m_hi), int(window))
    if USE_NUMBA:
        return best_partner_nb(ns, *args)
    return best_partner_np(ns, *args)


def kron_search(alpha, beta, height, tol):
    if USE_NUMBA:
        (k, l, m), found = kron_search_nb(float(alpha), float(beta), int(height), float(tol))
        return (int(k), int(l), int(m)), bool(found)
    return kron_search_np(float(alpha), float(beta), int(height), float(tol))
