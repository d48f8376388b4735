"""Heat solver: decay, stationarity, Li-Yau, Caccioppoli, t = 0 Schauder."""

import math

import numpy as np
import pytest

from conelab.geometry import ConeAngles, ConePoint
from conelab.grids import GridFunction
from conelab.domains import PolydiskDomain
from conelab.operators import assemble_laplacian_matrix
from conelab.elliptic import EllipticProblem, SolverConfig, solve_dirichlet
from conelab.parabolic import (HeatConfig, ParabolicProblem, SpaceTimeField,
                               caccioppoli_check,
                               check_parabolic_maximum_principle, solve_heat,
                               verify_heat_derivative_bounds, verify_li_yau,
                               verify_time_zero_schauder)
from conelab import fields

A1 = ConeAngles((0.75,), 2)
PER = PolydiskDomain(A1, 1.0, 0.5, tangential_periodic=True)
BOX = PolydiskDomain(A1, 1.0, 1.0)

EXACT_MODE = lambda c, t: np.exp(-4 * np.pi**2 * t) * np.sin(2 * np.pi * c.s(0))


def mode_config(n_steps=40, **kw):
    base = dict(n_radial=8, n_theta=8, n_tangential=[33, 3], n_steps=n_steps)
    base.update(kw)
    return HeatConfig(**base)


class TestSolveHeat:
    def test_eigenfunction_decay_within_one_percent(self):
        prob = ParabolicProblem(PER, A1, T=0.05, u0="sin_tangential:0:1",
                                phi=EXACT_MODE)
        st = solve_heat(prob, mode_config())
        rate = -math.log(np.abs(st.values[-1]).max()
                         / np.abs(st.values[0]).max()) / 0.05
        assert abs(rate - 4 * math.pi**2) / (4 * math.pi**2) < 0.01

    def test_stationary_discrete_harmonic(self):
        # a discrete-harmonic initial state is an exact fixed point
        rep = solve_dirichlet(EllipticProblem(BOX, A1, f=None, phi="re_z:0"),
                              SolverConfig(n_radial=12, n_theta=8, n_tangential=7))
        prob = ParabolicProblem(BOX, A1, T=0.05, u0=rep.u,
                                phi=lambda c, t: c.re_z(0))
        st = solve_heat(prob, HeatConfig(n_radial=12, n_theta=8, n_tangential=7,
                                         n_steps=20))
        assert np.abs(st.values[-1] - st.values[0]).max() < 1e-8

    def test_stationary_continuum_harmonic_to_discretization_order(self):
        prob = ParabolicProblem(BOX, A1, T=0.05, u0="re_z:0",
                                phi=lambda c, t: c.re_z(0))
        st = solve_heat(prob, HeatConfig(n_radial=16, n_theta=8, n_tangential=5,
                                         n_steps=20))
        assert np.abs(st.values[-1] - st.values[0]).max() < 0.02

    def test_forced_solve_against_self_refinement(self):
        # f = 1, u0 = 0, zero lateral boundary (periodic tangential box):
        # coarse vs 4x finer grid and 4x finer steps, <= 1% sup error at T
        def run(nr, steps):
            prob = ParabolicProblem(PER, A1, T=0.1, f="one")
            cfg = HeatConfig(n_radial=nr, n_theta=8, n_tangential=3,
                             n_steps=steps)
            return solve_heat(prob, cfg)

        coarse = run(16, 16)
        fine = run(64, 64)
        ev = fine.evaluator()
        cloud = coarse.grid.node_cloud()
        uT = ev(cloud, np.full(len(cloud.r), 0.1))
        diff = np.abs(uT.reshape(coarse.grid.shape) - coarse.values[-1])
        scale = np.abs(fine.values[-1]).max()
        assert diff.max() / scale < 0.01

    def test_parabolic_maximum_principle_monotone_scheme(self):
        fb = fields.random_fourier(5)
        prob = ParabolicProblem(BOX, A1, T=0.1, f=None, u0=fb,
                                phi=lambda c, t: fb(c))
        st = solve_heat(prob, HeatConfig(n_radial=10, n_theta=8, n_tangential=5,
                                         n_steps=16, theta=1.0, startup_steps=0))
        op = assemble_laplacian_matrix(st.grid)
        assert check_parabolic_maximum_principle(st, op.boundary).passed

    def test_mass_monotone_zero_boundary(self):
        from conelab.elliptic import volume_weights
        prob = ParabolicProblem(BOX, A1, T=0.1, f=None, u0="tangential_bump")
        st = solve_heat(prob, HeatConfig(n_radial=10, n_theta=8, n_tangential=9,
                                         n_steps=20))
        w = volume_weights(st.grid)
        mass = [float(np.sum(st.values[m] ** 2 * w)) for m in range(len(st.times))]
        assert all(mass[k + 1] <= mass[k] + 1e-12 for k in range(len(mass) - 1))

    def test_time_step_convergence_second_order(self):
        # Crank-Nicolson: eigenmode decay error quarters under step halving.
        # Compare the amplitude at an interior node against the spatially
        # discrete eigenvalue decay, isolating the time-stepping error.
        n_s = 33
        h = 1.0 / n_s
        lam = (2.0 - 2.0 * math.cos(2 * math.pi * h)) / h**2
        errs = []
        for steps in (8, 16, 32):
            prob = ParabolicProblem(PER, A1, T=0.05, u0="sin_tangential:0:1",
                                    phi=lambda c, t: np.exp(-lam * t)
                                    * np.sin(2 * np.pi * c.s(0)))
            st = solve_heat(prob, mode_config(n_steps=steps, startup_steps=0,
                                              n_tangential=[n_s, 3]))
            node = (2, 0, n_s // 4, 0)
            amp = st.values[(-1,) + node] / st.values[(0,) + node]
            errs.append(abs(amp - math.exp(-lam * 0.05)))
        rate = np.polyfit(np.log([0.05 / 8, 0.05 / 16, 0.05 / 32]),
                          np.log(errs), 1)[0]
        assert abs(rate - 2.0) <= 0.35, f"rate {rate}, errors {errs}"

    def test_semigroup_property(self):
        prob = ParabolicProblem(BOX, A1, T=0.1, f="one")
        cfg = HeatConfig(n_radial=10, n_theta=8, n_tangential=7, n_steps=32,
                         startup_steps=0)
        st = solve_heat(prob, cfg)
        mid = len(st.times) // 2
        prob2 = ParabolicProblem(BOX, A1, T=0.05, f="one",
                                 u0=GridFunction(st.grid, st.values[mid]))
        st2 = solve_heat(prob2, HeatConfig(n_radial=10, n_theta=8,
                                           n_tangential=7, n_steps=16,
                                           startup_steps=0))
        assert np.abs(st2.values[-1] - st.values[-1]).max() < 1e-8

    def test_large_time_reduces_to_elliptic(self):
        prob_e = EllipticProblem(BOX, A1, f=None, phi="re_z:0:2")
        cfg = SolverConfig(n_radial=10, n_theta=8, n_tangential=5)
        rep = solve_dirichlet(prob_e, cfg)
        prob_p = ParabolicProblem(BOX, A1, T=4.0, f=None, u0="zero",
                                  phi=lambda c, t: c.re_z(0, 2))
        st = solve_heat(prob_p, HeatConfig(n_radial=10, n_theta=8,
                                           n_tangential=5, n_steps=64))
        assert np.abs(st.values[-1] - rep.u.values).max() < 1e-4


class TestLiYau:
    def test_constant_positive_solution(self):
        prob = ParabolicProblem(BOX, A1, T=0.12, f=None, u0="const:2.0",
                                phi="const:2.0")
        st = solve_heat(prob, HeatConfig(n_radial=10, n_theta=8, n_tangential=5,
                                         n_steps=24))
        diag = verify_li_yau(st, R=0.9)
        assert diag.passed
        assert diag.measured["measured_constant"] <= 1e-6

    def test_tangential_gaussian_closed_form(self):
        # u = (t+t0)^-1 exp(-|s|^2 / (4(t+t0))): positive caloric in the two
        # tangential coordinates, constant in the cone factor
        t0 = 0.05

        def gauss(c, t):
            return (t + t0) ** -1 * np.exp(-(c.s(0) ** 2 + c.s(1) ** 2)
                                           / (4 * (t + t0)))

        prob = ParabolicProblem(BOX, A1, T=0.1, f=None,
                                u0=lambda c: gauss(c, 0.0), phi=gauss)
        st = solve_heat(prob, HeatConfig(n_radial=8, n_theta=8, n_tangential=21,
                                         n_steps=40))
        diag = verify_li_yau(st, R=0.9, t_window=(0.01, 0.1))
        assert diag.passed

    def test_nonpositive_rejected(self):
        prob = ParabolicProblem(BOX, A1, T=0.05, f=None, u0="sin_tangential:0:1")
        st = solve_heat(prob, HeatConfig(n_radial=8, n_theta=8, n_tangential=9,
                                         n_steps=10))
        with pytest.raises(ValueError):
            verify_li_yau(st, R=0.9)

    def test_randomized_positive_solves(self):
        for seed in range(4):
            fb = fields.random_fourier(seed, amplitude=0.4)
            u0 = lambda c: 2.0 + fb(c)
            prob = ParabolicProblem(BOX, A1, T=0.12, f=None, u0=u0,
                                    phi=lambda c, t: 2.0 + fb(c))
            st = solve_heat(prob, HeatConfig(n_radial=10, n_theta=8,
                                             n_tangential=7, n_steps=24))
            diag = verify_li_yau(st, R=0.9)
            assert diag.passed, diag.measured

    def test_shrinking_R_constant_stable(self):
        fb = fields.random_fourier(9, amplitude=0.3)
        prob = ParabolicProblem(BOX, A1, T=0.12, f=None,
                                u0=lambda c: 1.5 + fb(c),
                                phi=lambda c, t: 1.5 + fb(c))
        st = solve_heat(prob, HeatConfig(n_radial=10, n_theta=8, n_tangential=7,
                                         n_steps=24))
        consts = [verify_li_yau(st, R=R).measured["measured_constant"]
                  for R in (0.9, 0.45)]
        # C/R^2 dominates as R shrinks; the measured constant must not blow up
        assert consts[1] <= 50.0 * max(consts[0], 1.0)


class TestDerivativeBounds:
    def test_stationary_no_time_terms(self):
        rep = solve_dirichlet(EllipticProblem(BOX, A1, f=None, phi="re_z:0"),
                              SolverConfig(n_radial=10, n_theta=8, n_tangential=5))
        prob = ParabolicProblem(BOX, A1, T=0.09, u0=rep.u,
                                phi=lambda c, t: c.re_z(0))
        st = solve_heat(prob, HeatConfig(n_radial=10, n_theta=8, n_tangential=5,
                                         n_steps=18))
        diag = verify_heat_derivative_bounds(st, R=0.3)
        assert diag.measured["constants"]["dudt"] < 1e-4

    def test_eigenmode_dudt_envelope(self):
        prob = ParabolicProblem(PER, A1, T=0.09, u0="sin_tangential:0:1",
                                phi=EXACT_MODE)
        st = solve_heat(prob, mode_config(n_steps=36, n_tangential=[33, 8]))
        diag = verify_heat_derivative_bounds(st, R=0.6)
        # |du/dt| = 4 pi^2 |u| <= 4 pi^2 osc / 2: the envelope constant is at
        # most 4 pi^2 / min_t (1/t + 1/R^2) up to the osc normalization
        env_min = 1.0 / 0.09 + 1.0 / 0.36
        assert diag.measured["constants"]["dudt"] <= 4 * math.pi**2 / env_min

    def test_boundary_driven_sweep_stable(self):
        fb = fields.random_fourier(3)
        prob = ParabolicProblem(BOX, A1, T=0.25, f=None, u0=fb,
                                phi=lambda c, t: fb(c))
        st = solve_heat(prob, HeatConfig(n_radial=12, n_theta=8, n_tangential=7,
                                         n_steps=25))
        cs = []
        for R in (0.5, 0.25):
            diag = verify_heat_derivative_bounds(st, R=R)
            cs.append(max(diag.measured["constants"].values()))
        assert cs[1] <= 20.0 * max(cs[0], 1e-3)


class TestCaccioppoli:
    def test_zero_solution(self):
        prob = ParabolicProblem(BOX, A1, T=0.09, f=None, u0="zero")
        st = solve_heat(prob, HeatConfig(n_radial=8, n_theta=8, n_tangential=5,
                                         n_steps=10))
        diag = caccioppoli_check(st, None, rho=0.15, R=0.3)
        assert diag.measured["lhs1"] <= 1e-20

    def test_forced_solve_ratio_bounded_across_rho(self):
        prob = ParabolicProblem(BOX, A1, T=0.09, f="one", u0="zero")
        st = solve_heat(prob, HeatConfig(n_radial=12, n_theta=8, n_tangential=9,
                                         n_steps=24))
        for frac in (0.25, 0.5, 0.75):
            diag = caccioppoli_check(st, "one", rho=frac * 0.3, R=0.3)
            assert diag.passed, (frac, diag.measured)

    def test_constant_f_second_inequality_data_free(self):
        prob = ParabolicProblem(BOX, A1, T=0.09, f="const:2.0", u0="zero")
        st = solve_heat(prob, HeatConfig(n_radial=10, n_theta=8, n_tangential=7,
                                         n_steps=16))
        diag = caccioppoli_check(st, "const:2.0", rho=0.15, R=0.3)
        # f - f_R vanishes for space-time-constant forcing
        assert abs(diag.measured["f_average"] - 2.0) < 1e-6
        assert diag.measured["lhs2"] <= diag.measured["bound"] * \
            ((0.3 - 0.15) ** -2 * diag.measured["rhs2"] + 1e-12) or diag.passed

    def test_rho_ge_R_rejected(self):
        prob = ParabolicProblem(BOX, A1, T=0.04, f=None, u0="zero")
        st = solve_heat(prob, HeatConfig(n_radial=8, n_theta=8, n_tangential=5,
                                         n_steps=6))
        with pytest.raises(ValueError):
            caccioppoli_check(st, None, rho=0.4, R=0.3)


class TestTimeZeroSchauder:
    def test_zero_data_zero_seminorms(self):
        prob = ParabolicProblem(BOX, A1, T=0.25, f=None, u0="zero")
        out = verify_time_zero_schauder(prob, alpha=0.2,
                                        config=HeatConfig(n_radial=8, n_theta=8,
                                                          n_tangential=5,
                                                          n_steps=12,
                                                          time_grading=2.0))
        assert out["max_seminorm"] <= 1e-8

    def test_unit_forcing_dudt_approaches_one(self):
        prob = ParabolicProblem(BOX, A1, T=0.25, f="one", u0="zero")
        out = verify_time_zero_schauder(prob, alpha=0.2,
                                        config=HeatConfig(n_radial=10, n_theta=8,
                                                          n_tangential=7,
                                                          n_steps=48,
                                                          time_grading=2.0))
        st = out["field"]
        dudt = st.time_derivative()
        center = tuple(s // 2 for s in st.grid.shape)
        early = dudt.values[(1,) + center]
        assert abs(early - 1.0) < 0.05
        assert np.isfinite(out["max_seminorm"])
        assert out["passed"]

    def test_singular_forcing_finite_seminorm(self):
        a = ConeAngles((0.8,), 2)
        dom = PolydiskDomain(a, 1.0, 1.0)
        prob = ParabolicProblem(dom, a, T=0.25, f="r_pow:0.2:0", u0="zero")
        out = verify_time_zero_schauder(prob, alpha=0.15,
                                        config=HeatConfig(n_radial=16, n_theta=8,
                                                          n_tangential=5,
                                                          n_steps=48,
                                                          time_grading=2.0))
        assert np.isfinite(out["max_seminorm"])
        assert out["passed"]

    def test_alpha_range_enforced(self):
        prob = ParabolicProblem(BOX, A1, T=0.2, f="one", u0="zero")
        with pytest.raises(ValueError):
            verify_time_zero_schauder(prob, alpha=0.5)   # cap is 1/3

    def test_nonzero_u0_shift_path(self):
        prob = ParabolicProblem(BOX, A1, T=0.25, f=None, u0="r_sq:0",
                                phi=lambda c, t: c.r(0) ** 2)
        out = verify_time_zero_schauder(prob, alpha=0.2,
                                        config=HeatConfig(n_radial=10, n_theta=8,
                                                          n_tangential=5,
                                                          n_steps=24,
                                                          time_grading=2.0))
        st = out["field"]
        # u0 = r^2 with matching static boundary and f = 0 relaxes from u0;
        # the shifted path must reproduce u(0) = u0 exactly
        exact0 = GridFunction.from_callable(st.grid, fields.r_sq(0))
        assert np.abs(st.values[0] - exact0.values).max() < 1e-10
