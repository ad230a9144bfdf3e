"""Acceptance criteria, one test each; the terminal summary prints a
PASS/FAIL line per criterion. Timed sections run after a warm-up so that
numba compilation is not billed to any one criterion."""
import math
import time

import numpy as np
import pytest

import collage1d as c1
import oracles
from zipper3d import family as F
from zipper3d import suite
from zipper3d.certify import scan_d
from zipper3d.zipper import (collage_b1, collage_b2, diameter_bound, holder_exponent, parametrize,
                             similarity_dimension)


@pytest.fixture(scope="module")
def cfg():
    c = F.FamilyConfig()
    z = F.build_zipper(c, F.default_xi(c))
    parametrize(z, F.linear_zipper(c), np.linspace(0, 1, 10), 4)
    return c


@pytest.fixture(scope="module")
def grid27(cfg):
    return F.grid(cfg, (3, 3, 3))


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


@pytest.mark.criterion(1, "similarity dimension < 1.28 on 27 grid points")
def test_similarity_dimension(cfg, grid27):
    with Timer() as tm:
        dims, res = [], []
        for p in grid27:
            q = F.build_zipper(cfg, p).ratios
            s = similarity_dimension(q)
            dims.append(s)
            res.append(abs(float(np.sum(q ** s)) - 1.0))
    assert len(dims) == 27
    assert max(dims) < 1.28
    assert max(res) < 1e-12
    assert tm.seconds < 1.0


@pytest.mark.criterion(2, "Hoelder exponent > 3/4 on 27 grid points")
def test_holder_exponent(cfg, grid27):
    with Timer() as tm:
        t = F.linear_zipper(cfg)
        h = [holder_exponent(F.build_zipper(cfg, p).ratios, np.asarray(t.ratios)) for p in grid27]
    assert min(h) > 0.75
    assert tm.seconds < 1.0


@pytest.mark.criterion(3, "alpha_{m+4}: zero at beta0, |slope| in (14, 20)")
def test_alpha_m4(cfg):
    with Timer() as tm:
        zero = F.alpha_m4(F.BETA0)
        lo, hi = F.BETA0 - cfg.mu, F.BETA0 - cfg.mu / 2
        slopes = [abs(suite.alpha_m4_slope(th)) for th in np.linspace(lo + 1e-6, hi, 41)]
    assert abs(zero) < 1e-12
    assert 14.0 < min(slopes) and max(slopes) < 20.0
    assert tm.seconds < 1.0


@pytest.mark.criterion(4, "dihedral constants on 27 grid points")
def test_dihedrals(cfg, grid27):
    tol = 5e-3
    with Timer() as tm:
        d = [F.dihedrals(cfg, p) for p in grid27]
    dm = [a for a, _ in d]
    d0 = [b for _, b in d]
    assert all(a is not None and a <= 0.545 + tol for a in dm)
    assert all(b is not None and 0.224 - tol < b < 0.317 + tol for b in d0)
    assert tm.seconds < 5.0


@pytest.mark.criterion(5, "A-set: R = 2.214, 2000 probes inside ball W")
def test_set_a(cfg):
    with Timer() as tm:
        ra, _ = F.sets_ab(cfg, F.default_xi(cfg), n_probes=2000)
    assert len(ra.probes) == 2000
    assert abs(ra.R - 2.214) < 5e-3
    assert ra.ball_radius == pytest.approx(0.036 * ra.R)
    assert ra.ball_contains_all
    assert tm.seconds < 5.0


@pytest.mark.criterion(6, "Sigma = diagonal for 1/6 generators, invariant in q_{m+1}")
def test_sigma(oracle):
    sixth = F.FamilyConfig(q1=1 / 6, alpha1=0.0, q2m=1 / 6, alpha2m=0.0)
    with Timer() as tm:
        seq = F.enumerate_sigma(sixth, 200)
        inv = F.sigma_invariance(sixth, 200)
    assert list(seq.pairs) == [(k, k) for k in range(1, 201)]
    assert [list(p) for p in seq.pairs] == oracle["sigma_sixth_200"]
    assert seq.pairs == tuple(oracles.sigma_brute(1 / 6, 1 / 6, 200))
    assert len(inv["ratios"]) == 11 and inv["identical"] and inv["all_subsets"]
    assert tm.seconds < 1.0


@pytest.mark.criterion(7, "displacement brackets on 50 random (xi, eta, k)")
def test_displacement(cfg):
    rng = np.random.default_rng(7)
    dom = cfg.domain()
    sigma = F.enumerate_sigma(cfg, 60)
    t = F.linear_zipper(cfg)
    names = ("bilipschitz", "delta_k_bound", "two_sided", "bracket")
    failures = []
    with Timer() as tm:
        for _ in range(50):
            xi, eta = (F.ParamXi(*[lo + (hi - lo) * (0.01 + 0.98 * rng.random()) for lo, hi in dom])
                       for _ in range(2))
            k = int(rng.integers(1, 13))
            rep = F.displacement_report(cfg, xi, eta, k, n_probes=1000, n_param=30, sigma=sigma, t=t)
            failures += [(k, n, rep.checks[n]) for n in names if not rep.checks[n]["pass"]]
    assert not failures, failures[:3]
    assert tm.seconds < 60.0


@pytest.mark.criterion(8, "collage bounds B1/B2 on 20 synthetic 1-D pairs")
def test_collage():
    rng = np.random.default_rng(2024)
    probe = c1.probe()
    with Timer() as tm:
        for _ in range(20):
            s, t = c1.random_pair(rng)
            zs, zt = c1.as_zipper(s), c1.as_zipper(t)
            deltas = [zt.maps[j].apply(probe)[:, 0] - zs.maps[j].apply(probe)[:, 0] for j in range(2)]
            exact = [c1.displacements(s, t, j, 12) for j in range(2)]
            for j in range(2):
                dj = np.abs(deltas[j])
                b = collage_b1(zs, zt, probe, (j + 1,), 0.999 * dj.min(), 1.001 * dj.max())
                e = np.abs(exact[j])
                assert b.lower <= e.min() and e.max() <= b.upper
            lo, hi = c1.diff_range(deltas[0], deltas[1])
            b = collage_b2(zs, zt, probe, (1,), (2,), 0.999 * lo, 1.001 * hi)
            elo, ehi = c1.diff_range(exact[0], exact[1])
            assert b.lower <= elo and ehi <= b.upper
    assert tm.seconds < 30.0


@pytest.mark.criterion(9, "WSP witness record decays below 0.05 within max_n = 1e4")
def test_witness_decay(cfg):
    with Timer() as tm:
        seq, dists, record = suite.witness_decay(cfg, F.default_xi(cfg), max_n=10_000)
    assert len(record) >= 2
    assert all(b < a for a, b in zip(record, record[1:]))
    assert record[-1] < 0.05
    assert all(b < a for a, b in zip(seq.residuals, seq.residuals[1:]))
    assert tm.seconds < 120.0


@pytest.mark.slow
@pytest.mark.criterion(10, "5x5x5 scan: some grid point certified for k <= 4")
def test_jordan_scan(cfg):
    with Timer() as tm:
        rows = scan_d(cfg, (5, 5, 5), k_checked=4, max_depth=14)
    assert len(rows) == 125
    good = [r for r in rows if r[2]]
    print(f"certified grid points: {len(good)}/125")
    assert good
    assert tm.seconds < 600.0


@pytest.mark.criterion(11, "parametrization: equivariance, Hoelder witness, endpoints")
def test_parametrization(cfg):
    xi = F.default_xi(cfg)
    z, t = F.build_zipper(cfg, xi), F.linear_zipper(cfg)
    depth = 14
    rng = np.random.default_rng(11)
    with Timer() as tm:
        diam = diameter_bound(z)
        q = float(z.ratios.max())
        u = rng.random(10_000)
        phi = parametrize(z, t, u, depth)
        eq = 0.0
        for i in range(1, z.m + 1):
            lhs = parametrize(z, t, np.clip(t.apply(i, u), 0.0, 1.0), depth)
            eq = max(eq, float(np.max(np.linalg.norm(lhs - z.maps[i - 1].apply(phi), axis=1))))
        a = holder_exponent(z.ratios, np.asarray(t.ratios))
        const = 2.0 * diam / min(t.ratios) ** a
        s1 = rng.random(10_000)
        s2 = np.clip(s1 + 10.0 ** rng.uniform(-9, 0, 10_000) * rng.choice([-1, 1], 10_000), 0, 1)
        d = np.linalg.norm(parametrize(z, t, s1, depth) - parametrize(z, t, s2, depth), axis=1)
        # both evaluations carry a truncation error of at most diam*q^depth
        slack = 2.0 * diam * q ** depth
        ok = d <= const * np.abs(s1 - s2) ** a + slack
        ends = (np.array_equal(parametrize(z, t, 0.0, depth), z.vertices[0])
                and np.array_equal(parametrize(z, t, 1.0, depth), z.vertices[-1]))
    assert eq <= 2.0 * diam * q ** depth
    assert ok.all(), float(np.max(d / (const * np.abs(s1 - s2) ** a + slack)))
    assert ends
    assert tm.seconds < 60.0
    assert math.isfinite(const)
