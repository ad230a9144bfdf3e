import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from zipper3d import family as F
from zipper3d.certify import (decompose_intersection, genpos_hypotheses, jordan_check, min_gap, min_gap_report,
                              near_intersection_coverage, outside_v1_coverage, piece, root_ball, scan_d,
                              scan_to_csv, sigma_gap)
from zipper3d.geom import bicone_distance
from zipper3d.zipper import parametrize


@pytest.fixture(scope="module")
def fam():
    cfg = F.FamilyConfig()
    xi = F.default_xi(cfg)
    return cfg, xi, F.build_zipper(cfg, xi), F.linear_zipper(cfg)


def _sample(z, t, addrs, n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for a in addrs:
        lo, hi = t.cylinder(a)
        out.append(parametrize(z, t, lo + (hi - lo) * rng.random(n // len(addrs)), 16))
    return np.concatenate(out)


def _closest(p, q):
    d, _ = cKDTree(q).query(p)
    return float(d.min())


class TestPieces:
    def test_root_ball_holds_v(self, fam):
        cfg, xi, z, _ = fam
        c, r = root_ball(z)
        v = F.build_bicones(cfg, xi, check=False).V.sample(2000, seed=1)
        assert np.max(np.linalg.norm(v - c, axis=1)) <= r + 1e-12

    def test_piece_radius(self, fam):
        _, _, z, _ = fam
        p = piece(z, (3, 5))
        assert p.radius == pytest.approx(z.ratios[2] * z.ratios[4] * root_ball(z)[1], rel=1e-14)


class TestMinGap:
    def test_identical(self, fam):
        assert min_gap(fam[2], (4, 2), (4, 2), 8) == 0.0

    def test_adjacent_touch(self, fam):
        rep = min_gap_report(fam[2], (1,), (2,), 8)
        assert rep.lower_gap == 0.0 and not rep.certified

    def test_separated_and_sound(self, fam):
        cfg, xi, z, t = fam
        g = min_gap(z, (1,), (3,), 6)
        assert g > 0
        a, b = _sample(z, t, [(1,)], 100_000, 0), _sample(z, t, [(3,)], 100_000, 1)
        assert _closest(a, b) >= g
        # the pieces lie in V_1 and V_3, which are themselves apart
        bs = F.build_bicones(cfg, xi, check=False)
        assert np.min(bicone_distance(bs.Vi[3], a)) > 0

    def test_monotone_in_depth(self, fam):
        z = fam[2]
        gs = [min_gap(z, (2, 7), (4, 1), d) for d in (1, 2, 4, 6, 8)]
        assert all(x <= y for x, y in zip(gs, gs[1:]))
        assert gs[-1] > 0

    def test_sigma_gap_sound(self, fam):
        cfg, xi, z, t = fam
        rep = sigma_gap(cfg, xi, 1, 1, 14)
        assert rep.certified
        m = cfg.m
        a = _sample(z, t, [(m + 1, 1, d) for d in (m - 4, m - 3, m - 2)], 99_999, 2)
        b = _sample(z, t, [(m, 2 * m, e) for e in (m + 3, m + 4, m + 5)], 99_999, 3)
        assert _closest(a, b) >= rep.lower_gap


class TestDecompose:
    def test_matches_sigma(self, fam):
        cfg, xi, _, _ = fam
        dec = decompose_intersection(cfg, xi, 60)
        assert [(d["i"], d["j"]) for d in dec] == list(F.enumerate_sigma(cfg, 60).pairs)
        m = cfg.m
        assert dec[0]["a"][0] == (m + 1, 1, m - 4) and dec[0]["b"][-1] == (m, 2 * m, m + 5)

    def test_off_sigma_pair_separated(self, fam):
        cfg, xi, _, _ = fam
        assert (1, 2) not in F.enumerate_sigma(cfg, 10).pairs
        assert sigma_gap(cfg, xi, 1, 2, 12).certified

    def test_z_m_shared(self, fam):
        cfg, _, z, t = fam
        m = cfg.m
        hi_m = t.cylinder((m,))[1]
        assert np.allclose(parametrize(z, t, hi_m, 30), z.vertices[m], atol=1e-12)
        assert np.allclose(parametrize(z, t, t.cylinder((m + 1,))[0], 30), z.vertices[m], atol=1e-12)

    def test_outside_v1(self, fam):
        cfg, xi, _, _ = fam
        r = outside_v1_coverage(cfg, xi)
        assert r["pass"] and r["outside_v1"] > 0

    def test_near_intersection(self, fam):
        cfg, xi, _, _ = fam
        r = near_intersection_coverage(cfg, xi)
        assert r["near_points"] > 0 and r["outside_sigma"] == 0


class TestJordan:
    def test_structural_only(self, fam):
        cfg, xi, _, _ = fam
        c = jordan_check(cfg, xi, 0, 10)
        assert c.gaps == [] and c.structural_a1a3 and c.all_gaps_positive
        assert "unchecked" in c.caveat

    def test_default_eight_pairs(self, fam):
        cfg, xi, _, _ = fam
        c = jordan_check(cfg, xi, 8, 14)
        assert c.all_gaps_positive and len(c.gaps) == 8
        assert "k <= 8" in c.caveat

    def test_tuned_collision(self, fam):
        # the generators close the witness loop at these exponents, so the pieces meet
        cfg, xi, _, _ = fam
        n_2m, n_1 = F.TUNED_EXPONENTS
        assert (n_1, n_2m) in F.enumerate_sigma(cfg, 1100).pairs
        rep = sigma_gap(cfg, xi, n_1, n_2m, 14, max_pairs=200_000)
        assert rep.lower_gap == 0.0


class TestScan:
    def test_single_point(self, fam):
        cfg, _, _, _ = fam
        (p, g, ok), = scan_d(cfg, (1, 1, 1), 2, 12)
        c = jordan_check(cfg, p, 2, 12)
        assert g == c.min_gap and ok == c.all_gaps_positive

    def test_refinement_keeps_best(self, fam):
        cfg = fam[0]
        coarse = scan_d(cfg, (1, 1, 1), 1, 10)
        fine = scan_d(cfg, (3, 1, 1), 1, 10)
        assert coarse[0][0] in [r[0] for r in fine]
        assert max(r[1] for r in fine) >= coarse[0][1]

    def test_deterministic_across_threads(self, fam, tmp_path):
        cfg = fam[0]
        a = scan_d(cfg, (2, 1, 1), 1, 10, threads=1)
        b = scan_d(cfg, (2, 1, 1), 1, 10, threads=2)
        scan_to_csv(a, tmp_path / "a.csv")
        scan_to_csv(b, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_bad_dims(self, fam):
        with pytest.raises(ValueError):
            scan_d(fam[0], (0, 1, 1))


class TestGenpos:
    def test_hypotheses(self, fam):
        cfg = fam[0]
        r = genpos_hypotheses(cfg, k=1, samples=400)
        assert r["bilipschitz"]["within"]
        assert abs(r["holder_s"]["exponent"] - r["holder_s"]["theory"]) < 0.05
        assert r["holder_st"]["exponent"] > 0.75 - 0.05
        assert r["exponent_gt_2_3"]

    def test_region_checked(self, fam):
        cfg = fam[0]
        (r0, r1), th, ph = cfg.domain()
        with pytest.raises(ValueError):
            genpos_hypotheses(cfg, region=((r0, r1 + 0.1), th, ph))

    def test_gap_is_finite(self, fam):
        cfg, xi, _, _ = fam
        assert math.isfinite(jordan_check(cfg, xi, 1, 10).min_gap)
