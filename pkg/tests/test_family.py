import dataclasses
import json
import math

import numpy as np
import pytest

from zipper3d import family as F
from zipper3d import suite
from zipper3d.geom import identity_distance, quat_to_axis_angle
from zipper3d.zipper import validate


@pytest.fixture(scope="module")
def cfg():
    return F.FamilyConfig()


@pytest.fixture(scope="module")
def xi(cfg):
    return F.default_xi(cfg)


class TestConfig:
    def test_small_m(self):
        with pytest.raises(F.FamilyError):
            F.FamilyConfig(m=11)

    def test_generator_window(self):
        with pytest.raises(F.FamilyError, match="0.003"):
            F.FamilyConfig(q1=0.17)
        F.FamilyConfig(q1=0.17, enforce_generator_window=False)

    def test_round_trip(self, cfg):
        back = F.FamilyConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert back == cfg

    @pytest.mark.parametrize("bad", [dict(rho=1.03), dict(theta=F.BETA0), dict(phi=F.MU)])
    def test_xi_outside_domain(self, cfg, xi, bad):
        with pytest.raises(F.FamilyError):
            F.build_vertices(cfg, dataclasses.replace(xi, **bad))

    def test_grid_interior(self, cfg):
        pts = F.grid(cfg, (5, 5, 5))
        assert len(pts) == 125
        for p in pts:
            F.check_xi(cfg, p)

    def test_bicone_angles(self, cfg):
        assert cfg.beta1 < cfg.beta0 < cfg.beta2
        assert cfg.beta0 - cfg.beta1 == pytest.approx(2 * cfg.mu)


class TestVertices:
    def test_fixed_entries(self, cfg, xi):
        z = F.build_vertices(cfg, xi)
        m = cfg.m
        assert np.allclose(z[0], [-3, 0.8, 0]) and np.allclose(z[-1], [3, 0.8, 0])
        assert np.array_equal(z[m], [0, 0, 0])
        assert np.allclose(z[m + 1], [xi.rho * math.sin(xi.theta), xi.rho * math.cos(xi.theta), 0])
        assert np.all(z[:, 2] == 0)

    def test_unit_edge(self, cfg, xi):
        z = F.build_vertices(cfg, xi)
        assert np.linalg.norm(z[cfg.m] - z[cfg.m - 1]) == pytest.approx(1.0, abs=1e-3)
        assert np.allclose(z[cfg.m - 1, :2], [-0.447, 0.894], atol=1e-3)

    def test_equal_division(self, cfg, xi):
        z = F.build_vertices(cfg, xi)
        steps = np.linalg.norm(np.diff(z[2:cfg.m - 4], axis=0), axis=1)
        assert np.ptp(steps) < 1e-12

    def test_mirror(self, cfg, xi):
        z = F.build_vertices(cfg, xi)
        n = 2 * cfg.m
        skip = {1, cfg.m - 1, cfg.m + 1, n - 1}
        for i in range(n + 1):
            if i not in skip and n - i not in skip:
                assert np.allclose(z[i], [-z[n - i, 0], z[n - i, 1], 0], atol=1e-15)


class TestMaps:
    def test_valid(self, cfg):
        for p in F.grid(cfg):
            assert validate(F.build_zipper(cfg, p), 1e-9).passed

    def test_signature(self, cfg):
        sig = F.signature(cfg)
        assert sum(sig) == 1 and sig[cfg.m + 3] == 1

    def test_ratios(self, cfg, xi, oracle):
        z = F.build_zipper(cfg, xi)
        m = cfg.m
        lens = np.linalg.norm(np.diff(z.vertices, axis=0), axis=1) / 6
        assert np.max(np.abs(z.ratios - lens)) < 1e-12
        assert z.ratios[m - 1] == pytest.approx(1 / 6, abs=1e-15)
        # the table segment (-0.899, 1.798) -> (-0.447, 0.894) ends at z_{m-1}
        assert z.ratios[m - 2] == pytest.approx(oracle["q_m_minus_2_table"], abs=1e-3)

    def test_end_generators(self, cfg, xi):
        S = F.build_maps(cfg, xi)
        z = F.build_vertices(cfg, xi)
        n = 2 * cfg.m
        assert np.allclose(S[1].fixed_point(), z[0], atol=1e-12)
        assert np.allclose(S[n].fixed_point(), z[n], atol=1e-12)
        for s, ang in ((S[1], cfg.alpha1), (S[n], cfg.alpha2m)):
            axis, a = quat_to_axis_angle(s.quat)
            assert a == pytest.approx(ang, abs=1e-12)
            assert abs(abs(axis[0]) - 1) < 1e-12

    def test_planar_maps_keep_plane(self, cfg, xi):
        S = F.build_maps(cfg, xi)
        moving = {1, cfg.m + 1, cfg.m + 4, 2 * cfg.m}
        probe = np.random.default_rng(0).normal(size=(50, 3)) * [3, 1, 0]
        for i in range(1, 2 * cfg.m + 1):
            if i not in moving:
                assert np.max(np.abs(S[i].apply(probe)[:, 2])) < 1e-12

    def test_moving_maps(self, cfg, xi):
        eta = dataclasses.replace(xi, theta=xi.theta + 0.001, phi=0.002)
        a, b = F.build_maps(cfg, xi), F.build_maps(cfg, eta)
        probe = np.random.default_rng(1).normal(size=(50, 3))
        moved = {i for i in range(1, 2 * cfg.m + 1)
                 if np.max(np.abs(a[i].apply(probe) - b[i].apply(probe))) > 1e-12}
        assert moved == {cfg.m + 1, cfg.m + 2, cfg.m + 4}


class TestAlphaM4:
    def test_zero_at_beta0(self):
        assert abs(F.alpha_m4(F.BETA0)) < 1e-12

    def test_oracle_values(self, cfg, oracle):
        assert F.alpha_m4(F.BETA0 - cfg.mu) == pytest.approx(oracle["alpha_m4_edge"], rel=1e-12)
        assert F.alpha_m4(F.BETA0 - cfg.mu / 2) == pytest.approx(oracle["alpha_m4_half"], rel=1e-12)

    def test_slopes_against_oracle(self, cfg, oracle):
        lo, hi = F.BETA0 - cfg.mu + 1e-6, F.BETA0 - cfg.mu / 2
        s = [abs(suite.alpha_m4_slope(t)) for t in np.linspace(lo, hi, 41)]
        assert min(s) == pytest.approx(oracle["alpha_m4_slope_min"], rel=1e-6)
        assert max(s) == pytest.approx(oracle["alpha_m4_slope_max"], rel=1e-6)

    def test_domain(self):
        with pytest.raises(F.FamilyError):
            F.alpha_m4(F.BETA0 + 0.5)


class TestBicones:
    def test_structure(self, cfg, xi):
        ch = F.build_bicones(cfg, xi).checks
        assert all(ch[k] for k in ("A1", "A2", "A3", "V0_apex", "V1_apex"))

    def test_dihedrals(self, cfg, xi):
        a, b = F.dihedrals(cfg, xi)
        assert a <= 0.545 + 5e-3
        assert 0.224 - 5e-3 < b < 0.317 + 5e-3

    def test_sets(self, cfg, xi, oracle):
        ra, rb = F.sets_ab(cfg, xi)
        for r in (ra, rb):
            assert r.R == pytest.approx(2.214, abs=5e-3)
            assert r.ball_contains_all and r.max_ratio <= 1.06
            assert r.ball_radius == pytest.approx(0.036 * r.R)
        # the ball of radius 0.036R about a point at 1.03R sees distances in [0.994R, 1.066R]
        assert (1.03 + 0.036) / (1.03 - 0.036) < oracle["w_ball_ratio"]


class TestSigma:
    def sixth(self):
        return F.FamilyConfig(q1=1 / 6, alpha1=0.0, q2m=1 / 6, alpha2m=0.0)

    def test_diagonal(self, oracle):
        seq = F.enumerate_sigma(self.sixth(), 200)
        assert [list(p) for p in seq.pairs] == oracle["sigma_sixth_200"]
        assert (1, 2) not in seq.pairs

    def test_detuned(self, oracle):
        got = F.sigma_pairs(0.1665, 0.1669, 200)
        assert [list(p) for p in got] == oracle["sigma_detuned_200"]
        cfg = F.FamilyConfig(q1=0.1665, alpha1=0.0, q2m=0.1669, alpha2m=0.0)
        seq = F.enumerate_sigma(cfg, 200)
        assert seq.injective and seq.increasing

    def test_one_based(self, cfg):
        seq = F.enumerate_sigma(cfg, 40)
        assert seq[1] == seq.pairs[0] == (1, 1)
        with pytest.raises(F.FamilyError):
            seq[0]

    def test_ratio_window(self):
        with pytest.raises(F.FamilyError):
            F.enumerate_sigma(F.FamilyConfig(q1=0.21, enforce_generator_window=False), 10)

    def test_invariance(self, cfg):
        r = F.sigma_invariance(cfg, 200)
        assert r["identical"] and r["all_subsets"] and len(r["ratios"]) == 11


class TestTransition:
    def test_identity(self, cfg, xi):
        assert identity_distance(F.transition_map(cfg, xi, xi), np.eye(3)) < 1e-12

    def test_rho_only(self, cfg, xi):
        eta = dataclasses.replace(xi, rho=1.01)
        f = F.transition_map(cfg, xi, eta)
        assert f.ratio == pytest.approx(1.01, rel=1e-12)
        assert quat_to_axis_angle(f.quat)[1] < 1e-9
        assert np.allclose(f.fixed_point(), 0, atol=1e-12)

    def test_generic_ratio(self, cfg, xi):
        eta = F.ParamXi(0.995, F.BETA0 - 0.6 * cfg.mu, 0.004)
        assert F.transition_map(cfg, xi, eta).ratio == pytest.approx(0.995, rel=1e-12)


class TestDisplacement:
    def test_same_parameter(self, cfg, xi):
        rep = F.displacement_report(cfg, xi, xi, 1, n_probes=300, n_param=10)
        assert rep.delta_star == 0.0 and rep.passed

    def test_rho_step(self, cfg, xi):
        eta = dataclasses.replace(xi, rho=xi.rho + 0.01)
        rep = F.displacement_report(cfg, xi, eta, 1, n_probes=500, n_param=20)
        assert rep.passed, {k: v for k, v in rep.checks.items() if not v["pass"]}
        assert abs(rep.info["xk_azimuth"]) < 0.295

    def test_k_outside_sigma(self, cfg, xi):
        with pytest.raises(F.FamilyError):
            F.displacement_report(cfg, xi, xi, 500, sigma=F.enumerate_sigma(cfg, 40))


class TestWitness:
    def test_deterministic(self, cfg, xi):
        a, b = F.wsp_witness_sigma(cfg, xi, 1), F.wsp_witness_sigma(cfg, xi, 1)
        assert a.distance == b.distance > 0
        assert a.anchor_defect < 1e-12

    def test_tuned_identity(self, cfg, xi):
        w = F.wsp_witness(cfg, xi, *F.TUNED_EXPONENTS)
        assert w.distance < 1e-6

    def test_ratio_bookkeeping(self, cfg, xi):
        q = F.build_zipper(cfg, xi).ratios
        m = cfg.m
        w = F.wsp_witness(cfg, xi, 3, 5)
        want = (q[m] * q[0] ** 5 * q[m - 4]) / (q[m - 1] * q[-1] ** 3 * q[m + 3])
        assert math.exp(w.log_ratio) == pytest.approx(want, rel=1e-12)


class TestSuite:
    def test_defaults_pass(self, cfg):
        rep = suite.run_suite(cfg)
        assert suite.suite_passed(rep), [k for k, v in rep.items() if not v["pass"]]
        assert all(set(v) >= {"claimed", "computed", "tolerance", "pass"} for v in rep.values())

    def test_wide_mu_breaks_dihedrals(self, cfg):
        rep = suite.run_suite(dataclasses.replace(cfg, mu=0.05), checks=["bicone_angles"])
        assert not rep["dihedral_V_mid"]["pass"]

    def test_unknown_check(self, cfg):
        with pytest.raises(KeyError):
            suite.run_suite(cfg, checks=["nope"])
