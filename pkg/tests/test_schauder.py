"""The exponent laboratory: witnesses, caps, blow-up scan, dyadic ladder."""

import numpy as np
import pytest

from conelab.geometry import ConeAngles, ConePoint
from conelab.domains import PolydiskDomain
from conelab.elliptic import EllipticProblem, SolverConfig, solve_dirichlet
from conelab.fields import polynomial_smooth, make_field
from conelab.schauder import (anchored_profile_exponent, constant_blowup_scan,
                              dyadic_ladder, ladder_center, measure_schauder,
                              measured_oscillation, sharpness_witness,
                              solved_field_exponents,
                              solved_first_order_exponents)

A075 = ConeAngles((0.75,), 2)


class TestSharpnessWitness:
    def test_single_factor(self):
        w = sharpness_witness(A075)
        e = w.entries["NjD_factor0"]
        assert abs(e["fitted"] - 1.0 / 3.0) <= 0.03

    def test_two_factors_mixed_cap(self):
        w = sharpness_witness(ConeAngles((0.6, 0.9), 2))
        assert abs(w.entries["NjD_factor0"]["fitted"] - (1 / 0.6 - 1)) <= 0.03
        assert abs(w.entries["NjD_factor1"]["fitted"] - (1 / 0.9 - 1)) <= 0.03
        assert abs(w.entries["NjNk_01"]["fitted"] - (1 / 0.9 - 1)) <= 0.03
        assert w.passed(0.03)


class TestSolvedFieldExponents:
    def test_harmonic_re_z_first_order(self):
        # boundary data Re z_1: N_1 u profile r^(1/b - 1), fit 1/3 +/- 0.05
        rep = solve_dirichlet(
            EllipticProblem(PolydiskDomain(A075, 1.0, 1.0), A075, f=None,
                            phi="re_z:0"),
            SolverConfig(n_radial=64, n_theta=8, n_tangential=9))
        fits = solved_first_order_exponents(rep.u)
        assert abs(fits[str(("r", 0))].alpha_hat - 1 / 3) <= 0.05

    def test_singular_forcing_cap(self):
        # f = r^0.2, beta = 0.8 (cap 0.25): Delta_1 u exponent ~ 0.2
        ang = ConeAngles((0.8,), 2)
        dom = PolydiskDomain(ang, 1.0, 1.0, tangential_periodic=True)
        rep = solve_dirichlet(EllipticProblem(dom, ang, f="r_pow:0.2:0",
                                              phi="zero"),
                              SolverConfig(n_radial=96, n_theta=8,
                                           n_tangential=3))
        fit = solved_field_exponents(rep.u, tags=[("lap", 0)], r_clip=0.4)
        assert abs(fit[str(("lap", 0))].alpha_hat - 0.2) <= 0.05

    def test_smooth_forcing_caps_at_one_over_beta(self):
        # f smooth (a polynomial), beta = 0.9: the N_1 D' exponent caps at
        # 1/0.9 - 1 ~ 0.111 even though the data is C-infinity
        ang = ConeAngles((0.9,), 2)
        dom = PolydiskDomain(ang, 1.0, 1.0)
        base = polynomial_smooth()
        rep = solve_dirichlet(
            EllipticProblem(dom, ang, f=lambda c: 0.1 * base(c),
                            phi="witness_tangential:0:0"),
            SolverConfig(n_radial=96, n_theta=8, n_tangential=9))
        alpha_hat, coef = anchored_profile_exponent(rep.u, (("r", 0), ("s", 0)))
        assert alpha_hat is not None
        assert abs(alpha_hat - (1 / 0.9 - 1)) <= 0.03
        assert coef > 0.1  # the singular profile is genuinely present

    def test_cap_monotone_in_beta(self):
        # fitted caps for N_j D' u non-increasing in beta, within 0.05
        fitted = []
        for b in (0.55, 0.7, 0.85):
            ang = ConeAngles((b,), 2)
            rep = solve_dirichlet(
                EllipticProblem(PolydiskDomain(ang, 1.0, 1.0), ang, f=None,
                                phi="witness_tangential:0:0"),
                SolverConfig(n_radial=64, n_theta=8, n_tangential=9))
            a_hat, _ = anchored_profile_exponent(rep.u, (("r", 0), ("s", 0)))
            fitted.append(a_hat)
            assert abs(a_hat - (1 / b - 1)) <= 0.05, (b, a_hat)
        assert fitted[0] > fitted[1] > fitted[2]


class TestMeasureSchauder:
    def test_full_measurement_pipeline(self):
        m = measure_schauder(A075, alpha=0.25, f_spec="r_pow:0.3:0",
                             phi_spec="zero",
                             config=SolverConfig(n_radial=32, n_theta=8,
                                                 n_tangential=7))
        assert np.isfinite(m.ratio) and m.ratio > 0
        assert str(("lap", 0)) in m.fits

    def test_out_of_range_alpha_still_runs(self):
        # sharpness studies scan past the cap; the run must proceed
        m = measure_schauder(A075, alpha=0.9, f_spec="one", phi_spec="zero",
                             config=SolverConfig(n_radial=16, n_theta=8,
                                                 n_tangential=5))
        assert np.isfinite(m.ratio)

    def test_scale_stability_of_ratio(self):
        # pullback problem at lambda = 1/2: v(x) = u(x/2) solves the
        # rescaled equation; the measured Schauder ratio is scale-stable
        lam = 0.5
        f_a = make_field("r_pow:0.3:0")
        cfg = SolverConfig(n_radial=48, n_theta=8, n_tangential=7)
        m_a = measure_schauder(A075, 0.25, f_a, "zero", cfg)

        def f_b(c):
            # lambda^2 f(lambda x): cone scaling multiplies r and s by lambda
            return lam**2 * (lam * c.r(0)) ** 0.3

        m_b = measure_schauder(A075, 0.25, f_b, "zero", cfg)
        assert m_b.ratio == pytest.approx(m_a.ratio, rel=0.10)


class TestBlowupScan:
    def test_monotone_with_good_fit(self):
        ang = ConeAngles((0.8,), 2)
        scan = constant_blowup_scan(ang, [0.05, 0.10, 0.15, 0.20, 0.23, 0.245],
                                    f_spec="r_sq:0",
                                    config=SolverConfig(n_radial=32, n_theta=8,
                                                        n_tangential=9))
        assert scan.monotone
        assert scan.fit_residual <= 0.10
        assert scan.cap == pytest.approx(0.25)

    def test_cap_positions_respected(self):
        # beta = 0.6 vs 0.9: caps 2/3 vs 1/9; ratios finite strictly below
        for b, grid in ((0.6, [0.1, 0.3, 0.5, 0.6]), (0.9, [0.02, 0.05, 0.08, 0.1])):
            ang = ConeAngles((b,), 2)
            scan = constant_blowup_scan(ang, grid, f_spec="r_sq:0",
                                        config=SolverConfig(n_radial=24,
                                                            n_theta=8,
                                                            n_tangential=7))
            assert np.all(np.isfinite(scan.ratios))
            assert scan.cap == pytest.approx(1 / b - 1)

    def test_alpha_grid_validation(self):
        ang = ConeAngles((0.8,), 2)
        with pytest.raises(ValueError):
            constant_blowup_scan(ang, [0.1, 0.3])   # 0.3 > cap


def _ladder_setup(f_spec, n_radial=48):
    ang = A075
    dom = PolydiskDomain(ang, 1.0, 1.0, tangential_periodic=True)
    rep = solve_dirichlet(EllipticProblem(dom, ang, f=f_spec, phi="zero"),
                          SolverConfig(n_radial=n_radial, n_theta=8,
                                       n_tangential=5))
    return rep


class TestDyadicLadder:
    P = ConePoint(((0.1, 0.3),), (0.0, 0.0))

    def test_zero_forcing_exact(self):
        rep = _ladder_setup(None, n_radial=32)
        ladder = dyadic_ladder(self.P, rep.u, "zero", k_range=(2, 4),
                               n_radial=10, n_s=5)
        for lvl in ladder.levels:
            assert lvl.c0_gap < 1e-7, (lvl.k, lvl.c0_gap)

    def test_constant_forcing_exact(self):
        rep = _ladder_setup("const:1.3", n_radial=32)
        ladder = dyadic_ladder(self.P, rep.u, "const:1.3", k_range=(2, 4),
                               n_radial=10, n_s=5)
        for lvl in ladder.levels:
            # constant-rhs ladder: same equation, same boundary, up to the
            # base solution's interpolation error
            assert lvl.c0_gap < 5e-4, (lvl.k, lvl.c0_gap)

    def test_singular_forcing_ratios_bounded(self):
        rep = _ladder_setup("r_pow:0.3:0")
        ladder = dyadic_ladder(self.P, rep.u, "r_pow:0.3:0", k_range=(2, 6),
                               n_radial=16, n_s=7)
        ratios = [lvl.c0_ratio for lvl in ladder.levels]
        assert max(ratios) <= 1.0
        assert max(ratios) / min(ratios) <= 10.0

    def test_regime_structure_two_factors(self):
        # k_near = 5 (r_1 = 0.04), k_far = 2 (r_2 = 0.35): the middle
        # regime [k_far + 2, k_near) is the single level k = 4
        ang = ConeAngles((0.7, 0.7), 2)
        p = ConePoint(((0.04, 0.3), (0.35, 1.0)), ())
        regimes = [ladder_center(p, ang, k)[2] for k in range(2, 7)]
        assert regimes[0] == "projected_deep"
        assert regimes[1] == "projected_deep"
        assert regimes[2] == "projected_nearest"
        assert regimes[3] == "at_p" and regimes[4] == "at_p"

    def test_point_on_stratum_rejected(self):
        rep = _ladder_setup(None, n_radial=16)
        bad = ConePoint(((0.0, 0.0),), (0.0, 0.0))
        with pytest.raises(ValueError):
            dyadic_ladder(bad, rep.u, "zero")

    def test_depth_limit_enforced(self):
        rep = _ladder_setup(None, n_radial=16)
        far = ConePoint(((0.9, 0.0),), (0.0, 0.0))
        with pytest.raises(ValueError):
            dyadic_ladder(far, rep.u, "zero", k_range=(2, 9))

    def test_recentration_invariance(self):
        # replacing f by f - f(p) and u by u - shift leaves the ladder gaps
        # unchanged to solver tolerance.  The paraboloid shift needs Dirichlet
        # tangential faces (s^2 is not periodic).
        f_spec = "r_pow:0.3:0"
        dom = PolydiskDomain(A075, 1.0, 1.0)
        cfg = SolverConfig(n_radial=32, n_theta=8, n_tangential=9)
        rep = solve_dirichlet(EllipticProblem(dom, A075, f=f_spec, phi="zero"),
                              cfg)
        p = self.P
        lad_plain = dyadic_ladder(p, rep.u, f_spec, k_range=(2, 4),
                                  n_radial=12, n_s=5)
        f_fn = make_field(f_spec)
        f_p = 0.1**0.3
        m = A075.tangential_dim

        def f_shift(c):
            return f_fn(c) - f_p

        rep2 = solve_dirichlet(
            EllipticProblem(dom, A075, f=f_shift,
                            phi=lambda c: -(f_p / (2 * m)) * (c.s(0)**2 + c.s(1)**2)),
            cfg)
        from conelab.grids import GridFunction
        shift = GridFunction.from_callable(
            rep2.u.grid, lambda c: (f_p / (2 * m)) * (c.s(0)**2 + c.s(1)**2))
        # u2 + shift solves the original discrete problem with phi = 0
        recon = GridFunction(rep2.u.grid, rep2.u.values + shift.values)
        assert np.abs(recon.values - rep.u.values).max() < 1e-8
        lad_shift = dyadic_ladder(p, recon, f_spec, k_range=(2, 4),
                                  n_radial=12, n_s=5)
        for a, b in zip(lad_plain.levels, lad_shift.levels):
            assert a.c0_gap == pytest.approx(b.c0_gap, rel=1e-4, abs=1e-8)

    def test_decay_shape(self):
        # log gap of u_k - u_{k+1} decreases with k for Dini forcing
        rep = _ladder_setup("r_pow:0.3:0")
        ladder = dyadic_ladder(self.P, rep.u, "r_pow:0.3:0", k_range=(2, 6),
                               n_radial=16, n_s=7)
        gaps = [lvl.c0_gap for lvl in ladder.levels]
        assert all(gaps[i + 1] < gaps[i] for i in range(len(gaps) - 1))


def test_measured_oscillation_matches_analytic_power():
    rep = _ladder_setup(None, n_radial=16)
    om = measured_oscillation(rep.u.grid, make_field("r_pow:0.3:0"))
    for r in (0.05, 0.1, 0.3):
        assert om(r) == pytest.approx(r**0.3, rel=0.08)
