import cmath
import math

import numpy as np
import pytest

from zipper3d import _accel
from zipper3d import family as F
from zipper3d.cstar import (CStarError, GenPair, cone_sequence, kronecker_test, phase_coverage, ratio_sequence,
                            relation_search, unit_grid)
from zipper3d.geom import Similarity3, compose, inverse, quat_from_axis_angle


def test_genpair_rejects_zero():
    with pytest.raises(CStarError):
        GenPair(0, 0.5)


class TestKronecker:
    def test_parallel_rejected(self):
        with pytest.raises(CStarError, match="degenerate"):
            kronecker_test(1 + 1j, 2 + 2j, 5)

    def test_half_third(self, oracle):
        # u/2 + v/3 = 1 with u/v not real
        c = kronecker_test(1 + 2j, 1.5 - 3j, 4)
        assert c.alpha == pytest.approx(0.5) and c.beta == pytest.approx(1 / 3)
        assert c.verdict == "dependent"
        k, l, m = c.witness
        assert max(abs(k), abs(l), abs(m)) == oracle["relation_half_third_height"]
        assert abs(k * c.alpha + l * c.beta + m) < 1e-12
        # the triple quoted with this example is a relation too, just not the shortest
        assert abs(2 * c.alpha + 3 * c.beta - 2) < 1e-12

    def test_sqrt_pair_inconclusive(self):
        c = relation_search(math.sqrt(2), math.sqrt(3), 10 ** 4)
        assert c.verdict == "inconclusive" and c.witness is None

    def test_dense_only_when_vouched(self):
        u, v = 1 + 1j, 1 - 2j
        assert kronecker_test(u, v, 20).verdict != "dense"
        c = kronecker_test(u, v, 20, analytic_independent=True)
        assert c.verdict in ("dense", "dependent")


class TestRatioSequence:
    def test_equal_real_generators(self):
        s = ratio_sequence(GenPair(0.3, 0.3), 1.0, 1.0, 0.05, 50, min_n=1)
        assert s.pairs == [(1, 1)] and s.residuals[0] < 1e-15 and s.converged

    def test_zero_pair_first(self):
        s = ratio_sequence(GenPair(0.16 * cmath.exp(0.01j), 0.17 * cmath.exp(0.013j)), 2j, 2j, 0.05, 100)
        assert s.pairs[0] == (0, 0) and s.residuals[0] == 0.0

    def test_detuned_pair(self):
        g = GenPair(0.16 * cmath.exp(0.01j), 0.17 * cmath.exp(0.013j))
        s = ratio_sequence(g, 1.0, 1.0, 0.05, 5000, min_n=1)
        assert np.all(np.diff(s.residuals) < 0)
        assert s.residuals[-1] < 0.05 and s.converged
        again = ratio_sequence(g, 1.0, 1.0, 0.05, 5000, min_n=1)
        assert again.pairs == s.pairs and again.residuals == s.residuals

    def test_residuals_match_definition(self):
        g = GenPair(0.16 * cmath.exp(0.01j), 0.17 * cmath.exp(0.013j))
        z1, z2 = 0.7 + 0.2j, 1.1 - 0.4j
        s = ratio_sequence(g, z1, z2, 0.05, 3000)
        for (n, m), r in zip(s.pairs, s.residuals):
            direct = abs(cmath.exp(cmath.log(z1 / z2) + n * cmath.log(g.xi) - m * cmath.log(g.eta)) - 1)
            assert r == pytest.approx(direct, rel=1e-9, abs=1e-12)

    def test_opposite_phase_unreachable(self):
        s = ratio_sequence(GenPair(1 / 6, 1 / 6), cmath.exp(1j * math.pi), 1.0, 0.05, 1000)
        assert min(s.residuals) >= 2.0 - 1e-12
        assert s.verdict == "not-converged"

    def test_report_has_both_phase_readings(self):
        d = ratio_sequence(GenPair(0.16 * cmath.exp(0.01j), 0.17 * cmath.exp(0.013j)), 1, 1, 0.05, 200,
                           min_n=1).to_dict()
        assert len(d["phase_n_beta"]) == len(d["phase_m_beta"]) == len(d["pairs"])


class TestPhaseCoverage:
    def test_unit_target(self):
        r = phase_coverage(GenPair(0.3, 0.3), targets=[1.0], eps=0.1, max_n=10)
        assert r["hits"] == 1 and r["targets"][0]["distance"] < 1e-12

    def test_fifth_roots(self):
        r = phase_coverage(GenPair.polar(0.3, 2 * math.pi / 5, 0.3, 0.0), eps=0.1, max_n=2000)
        assert r["verdict"] == "first-type evidence"
        for t in r["targets"]:
            if t["hit"]:
                tau = complex(*t["target"])
                assert abs(tau ** 5 - 1) < 1e-9

    def test_family_generators(self):
        cfg = F.FamilyConfig()
        r = phase_coverage(GenPair.polar(cfg.q1, cfg.alpha1, cfg.q2m, -cfg.alpha2m), eps=0.1, max_n=10 ** 5)
        assert r["hits"] == 16 and r["verdict"] == "second-type evidence"

    def test_empty_targets(self):
        with pytest.raises(CStarError):
            phase_coverage(GenPair(0.3, 0.3), targets=[])

    def test_grid(self):
        g = unit_grid()
        assert len(g) == 16 and abs(g[4] - 1j) < 1e-15


def _spiral(ratio, angle, axis=(0, 0, 1.0), centre=(0, 0, 0.0)):
    q = quat_from_axis_angle(np.asarray(axis, float), angle)
    lin = Similarity3.make(ratio, q, [0, 0, 0])
    c = np.asarray(centre, float)
    return Similarity3.make(ratio, q, c - lin.apply(c))


class TestConeSequence:
    def test_same_orbit(self):
        f = _spiral(0.2, 0.7)
        s = cone_sequence(f, f, [1, 0, 0.3], [1, 0, 0.3], 0.05, 50, min_n=1)
        assert s.pairs[0] == (1, 1) and s.residuals[0] < 1e-12

    def test_on_axis(self):
        f = _spiral(0.2, 0.7)
        with pytest.raises(CStarError, match="axis"):
            cone_sequence(f, f, [0, 0, 1.0], [1, 0, 0], 0.05, 10)

    def test_needs_common_fixed_point(self):
        with pytest.raises(CStarError):
            cone_sequence(_spiral(0.2, 0.7), _spiral(0.2, 0.7, centre=(1, 0, 0)), [1, 1, 0], [1, 2, 0], 0.05, 10)

    def test_rotation_equivariant(self):
        f1, f2 = _spiral(0.16, 0.011), _spiral(0.17, -0.013)
        w1, w2 = np.array([1.0, 0.2, 0.5]), np.array([0.3, 1.0, 0.4])
        tgt = np.array([0.6, 0.8, 0.5])
        g = Similarity3.make(1.0, quat_from_axis_angle(np.array([1.0, 2.0, -0.5]), 1.1), [0.3, -2.0, 5.0])
        gi = inverse(g)
        h1, h2 = compose(g, compose(f1, gi)), compose(g, compose(f2, gi))
        rot = g.matrix
        a = cone_sequence(f1, f2, w1, w2, 0.05, 3000, target=tgt)
        b = cone_sequence(h1, h2, g.apply(w1), g.apply(w2), 0.05, 3000, target=rot @ tgt)
        assert a.pairs == b.pairs
        assert np.allclose(a.residuals, b.residuals, atol=1e-10, rtol=0)

    def test_family_witness_decay(self):
        cfg = F.FamilyConfig()
        d = F.cone_data(cfg, F.default_xi(cfg))
        s = cone_sequence(d["f1"], d["f2"], d["w1"], d["w2"], 0.05, 10 ** 4, target=d["target"])
        assert np.all(np.diff(s.residuals) < 0)
        assert s.residuals[-1] < 0.05

    def test_commensurate_angles_stall(self):
        # both orbits visit only 7 directions, so a generic ray stays out of reach
        f1, f2 = _spiral(0.16, 2 * math.pi * 2 / 7), _spiral(0.17, 2 * math.pi * 3 / 7)
        s = cone_sequence(f1, f2, [1, 0, 0.3], [1, 0, 0.3], 0.05, 5000, target=[0.31, 0.17, 0.9])
        assert not s.converged
        assert s.residuals[-1] > 0.05


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")
class TestKernelsAgree:
    def test_descend_and_chain(self):
        cfg = F.FamilyConfig()
        z = F.build_zipper(cfg, F.default_xi(cfg))
        t = F.linear_zipper(cfg)
        u = np.random.default_rng(0).random(500)
        args = (t.starts, np.asarray(t.ratios), np.asarray(t.signature, dtype=np.bool_), 9)
        d1, u1 = _accel.descend_nb(u, *args)
        d2, u2 = _accel.descend_np(u, *args)
        assert np.array_equal(d1, d2) and np.allclose(u1, u2, atol=1e-12)
        anchors = np.tile(z.vertices[0], (500, 1))
        p1 = _accel.chain_apply_nb(d1, anchors, *z.arrays())
        p2 = _accel.chain_apply_np(d1, anchors, *z.arrays())
        assert np.allclose(p1, p2, atol=1e-13)

    def test_best_partner(self):
        ns = np.arange(0, 4000, dtype=np.int64)
        args = (0.1, 0.4, math.log(0.16), 0.01, math.log(0.17), 0.013, 0, 4000, 4)
        m1, r1 = _accel.best_partner_nb(ns, *args)
        m2, r2 = _accel.best_partner_np(ns, *args)
        assert np.array_equal(m1, m2) and np.allclose(r1, r2, rtol=1e-9, atol=1e-13)

    @pytest.mark.parametrize("a, b", [(0.5, 1 / 3), (math.sqrt(2), math.sqrt(3)), (0.25, 0.75)])
    def test_kron(self, a, b):
        (k1, l1, m1), f1 = _accel.kron_search_nb(a, b, 60, 1e-12)
        w2, f2 = _accel.kron_search_np(a, b, 60, 1e-12)
        assert bool(f1) == f2
        if f2:
            assert max(abs(k1), abs(l1), abs(m1)) == max(map(abs, w2))
