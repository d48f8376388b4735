"""Holder norms, weighted norms, parabolic norms, exponent fitting."""

import math

import numpy as np
import pytest

from conelab.geometry import ConeAngles, PointCloud, pairwise_cone_distance
from conelab.grids import GridFunction, eval_on_cloud, polydisk_grid
from conelab.domains import (PairSet, PolydiskDomain, radial_axis_pairs,
                             stratified_pairs)
from conelab.norms import (ExponentFit, HolderReport, SpaceTimePairSet,
                           c2alpha_norm, fit_exponent, fit_exponent_from_pairs,
                           holder_seminorm, parabolic_holder, parabolic_pairs,
                           weighted_norm, shell_table_csv)

A1 = ConeAngles((0.75,), 2)


def radial_cloud(angles, rs, theta=0.0):
    n = len(rs)
    return PointCloud(np.asarray(rs)[:, None], np.full((n, 1), theta),
                      np.zeros((n, angles.tangential_dim)), angles)


def radial_pairs_with_zero(angles, alpha_profile=None, n=60, r_max=0.5,
                           r_min=1e-8):
    lad = np.concatenate([[0.0], np.geomspace(r_min, r_max, n)])
    xs, ys = [], []
    for i in range(len(lad)):
        for j in range(i + 1, len(lad)):
            # distances below r_min carry no zero-anchored extremal pair
            if lad[j] - lad[i] >= r_min:
                xs.append(lad[i])
                ys.append(lad[j])
    x = radial_cloud(angles, xs)
    y = radial_cloud(angles, ys)
    return PairSet(x, y, pairwise_cone_distance(x, y))


class TestHolderSeminorm:
    def test_power_profile_attains_one(self):
        alpha = 0.4
        pairs = radial_pairs_with_zero(A1)
        rep = holder_seminorm(lambda c: c.r[:, 0] ** alpha, pairs, alpha)
        assert rep.seminorm == pytest.approx(1.0, abs=1e-12)
        assert rep.argmax_pair[0][0][0] == 0.0  # attained against the stratum

    def test_constant_zero(self):
        pairs = radial_pairs_with_zero(A1)
        rep = holder_seminorm(lambda c: np.full(len(c.r), 2.5), pairs, 0.5)
        assert rep.seminorm == 0.0

    def test_radial_derivative_witness_against_brute_force(self):
        # N_1 u for u = Re z_1, beta = 3/4: seminorm of (1/b) r^(1/b-1) cos t
        # at alpha = 1/3; oracle = dense 1D pair enumeration
        b, alpha = 0.75, 1.0 / 3.0
        profile = lambda r: (1 / b) * r ** (1 / b - 1)
        dense = np.concatenate([[0.0], np.geomspace(1e-10, 0.5, 4000)])
        best = 0.0
        # subadditive profile: the sup is attained against r = 0
        best = max(best, float(np.max(profile(dense[1:]) / dense[1:] ** alpha)))
        pairs = radial_pairs_with_zero(A1, n=200)
        rep = holder_seminorm(lambda c: profile(c.r[:, 0]), pairs, alpha)
        assert rep.seminorm == pytest.approx(best, rel=1e-6)
        assert np.isfinite(rep.seminorm)

    def test_alpha_range_and_empty_pairs(self):
        pairs = radial_pairs_with_zero(A1)
        with pytest.raises(ValueError):
            holder_seminorm(lambda c: c.r[:, 0], pairs, 1.5)
        empty = PairSet(pairs.x.take(slice(0, 0)), pairs.y.take(slice(0, 0)),
                        pairs.dist[:0])
        with pytest.raises(ValueError):
            holder_seminorm(lambda c: c.r[:, 0], empty, 0.5)

    def test_scaling_and_subadditivity(self):
        rng = np.random.default_rng(0)
        dom = PolydiskDomain(A1, 1.0, 1.0)
        pairs = stratified_pairs(dom, 800, rng)
        u = lambda c: np.sin(c.r[:, 0]) + c.s[:, 0]
        v = lambda c: np.cos(3 * c.s[:, 1])
        su = holder_seminorm(u, pairs, 0.5).seminorm
        sv = holder_seminorm(v, pairs, 0.5).seminorm
        s_lin = holder_seminorm(lambda c: 3.0 * u(c), pairs, 0.5).seminorm
        assert s_lin == pytest.approx(3.0 * su, rel=1e-12)
        s_sum = holder_seminorm(lambda c: u(c) + v(c), pairs, 0.5).seminorm
        assert s_sum <= su + sv + 1e-12

    def test_monotone_in_alpha_on_unit_pairs(self):
        rng = np.random.default_rng(1)
        dom = PolydiskDomain(A1, 1.0, 1.0)
        pairs = stratified_pairs(dom, 600, rng)
        keep = pairs.dist <= 1.0
        pairs = PairSet(pairs.x.take(keep), pairs.y.take(keep), pairs.dist[keep])
        u = lambda c: np.tanh(c.r[:, 0] + 0.3 * c.s[:, 0])
        vals = [holder_seminorm(u, pairs, a).seminorm for a in (0.2, 0.5, 0.9)]
        assert vals[0] <= vals[1] <= vals[2]

    def test_monotone_under_refinement(self):
        rng = np.random.default_rng(2)
        dom = PolydiskDomain(A1, 1.0, 1.0)
        p1 = stratified_pairs(dom, 300, rng)
        p2 = p1.concat(stratified_pairs(dom, 300, rng))
        u = lambda c: c.r[:, 0] ** 0.3
        assert holder_seminorm(u, p2, 0.25).seminorm >= \
            holder_seminorm(u, p1, 0.25).seminorm


class TestC2Alpha:
    def test_constant_norm_is_one(self):
        g = polydisk_grid(A1, 1.0, 10, 8, 1.0, 5)
        out = c2alpha_norm(GridFunction.from_callable(g, lambda c: 1.0 + 0 * c.r(0)),
                           alpha=0.25)
        assert out["norm"] == pytest.approx(1.0, abs=1e-9)
        assert out["grad_C0"] == pytest.approx(0.0, abs=1e-10)

    def test_tangential_quadratic(self):
        g = polydisk_grid(A1, 1.0, 10, 8, 1.0, 7)
        u = GridFunction.from_callable(g, lambda c: c.s(0) ** 2 + c.s(1) ** 2)
        out = c2alpha_norm(u, alpha=0.25)
        semis = out["T_seminorms"]
        for tag, val in semis.items():
            if "lap" in tag or "'r'" in tag or "th" in tag:
                assert val < 1e-8, f"{tag}: {val}"
        # (D')^2 is constant: its Holder seminorm also vanishes
        assert semis[str((("s", 0), ("s", 0)))] < 1e-8

    def test_re_z_squared_beta08_matches_symbolic(self):
        # u = Re z^2 = r^{2/b} cos 2t, b = 0.8: apply_T outputs match the
        # symbolic derivatives; C^{2,alpha} norm finite for alpha < 0.25
        b = 0.8
        a = ConeAngles((b,), 1)
        g = polydisk_grid(a, 1.0, 48, 16)
        u = GridFunction.from_callable(g, lambda c: c.re_z(0, 2))
        from conelab.operators import apply_T, apply_first
        from conelab.grids import GridCoords
        c = GridCoords(g)
        r = np.broadcast_to(c.r(0), g.shape)
        t = np.broadcast_to(c.theta(0), g.shape)
        # symbolic: d/dr (r^{2/b} cos 2t) = (2/b) r^{2/b-1} cos 2t
        sym = (2 / b) * r ** (2 / b - 1) * np.cos(2 * t)
        got = apply_first(u, ("r", 0)).values
        mask = (r > 0.2) & (r < 0.95)
        assert np.abs(got - sym)[mask].max() < 2e-2
        out = c2alpha_norm(u, alpha=0.2)
        assert np.isfinite(out["norm"])


class TestWeightedNorms:
    def setup_method(self):
        self.dom = PolydiskDomain(A1, 1.0, 1.0)
        rng = np.random.default_rng(5)
        self.points = self.dom.sample(500, rng)
        self.pairs = stratified_pairs(self.dom, 500, rng)

    def test_sigma_zero_matches_starred_bit_exact(self):
        u = lambda c: np.sin(c.r[:, 0]) * c.s[:, 0]
        w0 = weighted_norm(u, 0.0, 0.3, self.dom, self.points, self.pairs)
        dx = self.dom.boundary_distance(self.points)
        dxp = self.dom.boundary_distance(self.pairs.x)
        dyp = self.dom.boundary_distance(self.pairs.y)
        starred_c0 = float(np.max(dx**0.0 * np.abs(u(self.points))))
        assert w0["C0_weighted"] == starred_c0
        q = np.minimum(dxp, dyp) ** 0.3 * np.abs(u(self.pairs.x) - u(self.pairs.y)) \
            / self.pairs.dist**0.3
        assert w0["seminorm_weighted"] == float(q.max())

    def test_constant_sigma_one_gives_inradius(self):
        w = weighted_norm(lambda c: np.ones(len(c.r)), 1.0, 0.3, self.dom,
                          self.points)
        dx = self.dom.boundary_distance(self.points)
        assert w["C0_weighted"] == pytest.approx(float(dx.max()))
        assert w["C0_weighted"] <= 1.0 + 1e-12

    def test_blowup_field_finite_for_matching_sigma(self):
        # u = d_x^{-1/2}: sigma = 1/2 weight is identically one; sigma = 0
        # diverges as samples approach the boundary
        u = lambda c: self.dom.boundary_distance(c) ** (-0.5)

        def ev(cloud):
            return self.dom.boundary_distance(cloud) ** (-0.5)

        w_half = weighted_norm(ev, 0.5, 0.3, self.dom, self.points)
        assert w_half["C0_weighted"] == pytest.approx(1.0, abs=1e-12)
        sups = []
        rng = np.random.default_rng(0)
        for margin in (1e-2, 1e-4, 1e-6):
            cloud = self.dom.sample(400, rng)
            # push samples toward the boundary
            r = cloud.r.copy()
            r[:, 0] = 1.0 - margin * (1 + np.arange(400) % 7)
            near = PointCloud(r, cloud.theta, cloud.s, A1)
            sups.append(weighted_norm(ev, 0.0, 0.3, self.dom, near)["C0_weighted"])
        assert sups[0] < sups[1] < sups[2]

    def test_boundary_point_rejected_for_nonpositive_power(self):
        r = self.points.r.copy()
        r[0, 0] = 1.0
        onb = PointCloud(r, self.points.theta, self.points.s, A1)
        with pytest.raises(ValueError):
            weighted_norm(lambda c: np.ones(len(c.r)), -0.5, 0.3, self.dom, onb)


class TestParabolicHolder:
    def test_pure_time_field(self):
        pairs = radial_pairs_with_zero(A1, n=20)
        tx = np.zeros(len(pairs))
        ty = np.full(len(pairs), 0.04)
        st = parabolic_pairs(pairs, tx, ty)
        rep = parabolic_holder(lambda c, t: t, st, alpha=1.0)
        # |dt| / max(sqrt dt, d)^1: bounded by sqrt dt when space gap small
        assert rep.seminorm <= math.sqrt(0.04) + 1e-9

    def test_time_independent_reduces_to_elliptic(self):
        rng = np.random.default_rng(0)
        dom = PolydiskDomain(A1, 1.0, 1.0)
        pairs = stratified_pairs(dom, 400, rng)
        u = lambda c: np.cos(c.r[:, 0]) + c.s[:, 1]
        ell = holder_seminorm(u, pairs, 0.4)
        st = parabolic_pairs(pairs, np.full(len(pairs), 0.3), np.full(len(pairs), 0.3))
        par = parabolic_holder(lambda c, t: u(c), st, 0.4)
        assert par.seminorm == pytest.approx(ell.seminorm, rel=1e-12)

    def test_heat_slice_comparison(self):
        # solved tangential eigenmode vs its closed form, same pair set
        from conelab.parabolic import HeatConfig, ParabolicProblem, solve_heat
        dom = PolydiskDomain(A1, 1.0, 0.5, tangential_periodic=True)
        exact = lambda c, t: np.exp(-4 * np.pi**2 * t) * np.sin(2 * np.pi * c.s(0))
        prob = ParabolicProblem(dom, A1, T=0.05, u0="sin_tangential:0:1", phi=exact)
        st = solve_heat(prob, HeatConfig(n_radial=6, n_theta=8,
                                         n_tangential=[33, 3], n_steps=32))
        ev = st.evaluator()
        rng = np.random.default_rng(1)
        pairs = stratified_pairs(dom, 300, rng)
        tx = rng.uniform(0.0, 0.05, len(pairs))
        ty = rng.uniform(0.0, 0.05, len(pairs))
        stp = parabolic_pairs(pairs, tx, ty)
        solved = parabolic_holder(lambda c, t: ev(c, t), stp, 0.5)

        def closed(c, t):
            return np.exp(-4 * np.pi**2 * t) * np.sin(2 * np.pi * c.s[:, 0])

        ref = parabolic_holder(closed, stp, 0.5)
        assert solved.seminorm == pytest.approx(ref.seminorm, rel=0.05)


class TestExponentFitting:
    def test_power_profile(self):
        pairs = radial_pairs_with_zero(A1, n=80)
        fit = fit_exponent(lambda c: (4 / 3) * c.r[:, 0] ** (1 / 3), pairs)
        assert fit.alpha_hat == pytest.approx(1 / 3, abs=0.02)

    def test_flat_sentinel(self):
        pairs = radial_pairs_with_zero(A1, n=30)
        fit = fit_exponent(lambda c: np.zeros(len(c.r)), pairs)
        assert fit.flat and fit.alpha_hat is None

    def test_too_few_decades_rejected(self):
        x = radial_cloud(A1, [0.1, 0.2])
        y = radial_cloud(A1, [0.2, 0.3])
        pairs = PairSet(x, y, pairwise_cone_distance(x, y))
        with pytest.raises(ValueError):
            fit_exponent(lambda c: c.r[:, 0], pairs)

    def test_degenerate_shells_rejected(self):
        osc = np.array([1.0, 1.0])
        dist = np.array([0.5, 0.5])
        with pytest.raises(ValueError):
            fit_exponent_from_pairs(osc, dist)

    def test_shell_csv(self):
        fit = ExponentFit(0.5, 0.01, [(0.1, 0.3), (0.2, 0.4)])
        text = shell_table_csv(fit)
        assert text.splitlines()[0] == "distance,sup_oscillation"
        assert len(text.splitlines()) == 3


def test_holder_report_validation():
    with pytest.raises(ValueError):
        HolderReport(0.5, -1.0)
    with pytest.raises(ValueError):
        HolderReport(0.5, 1.0, fitted_exponent=5.0)
    rep = HolderReport(0.5, 1.0, fitted_exponent=0.5, seed=7)
    assert "seminorm" in rep.to_json()
