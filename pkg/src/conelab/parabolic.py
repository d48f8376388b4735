"""Heat solvers on the cone with Li-Yau, Caccioppoli and t=0 diagnostics.

Time stepping is the theta-scheme (Crank-Nicolson by default) with one
implicit-Euler startup step to damp the data/force corner at t = 0; the
spatial operator is the assembled conical Laplacian (flat or non-flat).
Maximum-principle diagnostics run the monotone implicit-Euler scheme, under
which the discrete parabolic maximum principle is exact up to solver
tolerance.
"""

from __future__ import annotations

import inspect
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import ConeAngles, ConePoint, PointCloud
from .grids import Grid, GridFunction, eval_on_cloud
from .operators import (MetricField, apply_T, apply_first,
                        assemble_laplacian_matrix, gradient_norm, T_family)
from .domains import PolydiskDomain
from .elliptic import Diagnostic, SolverConfig
from .fields import make_field
from .linalg import CachedDirectSolver, DIRECT_LIMIT, SolverError, solve_sparse
from .norms import HolderReport, holder_quotients


def _timed(fn):
    """Wrap a field spec into signature (coords, t)."""
    if fn is None:
        return None
    f = make_field(fn) if not callable(fn) else fn
    try:
        n_par = len(inspect.signature(f).parameters)
    except (TypeError, ValueError):
        n_par = 1
    if n_par >= 2:
        return f
    return lambda c, t: f(c)


@dataclass
class ParabolicProblem:
    """du/dt = Delta u + f on domain x (0, T], u(0) = u0, u = phi laterally."""

    domain: PolydiskDomain
    angles: ConeAngles
    T: float
    f: object = None
    u0: object = "zero"
    phi: object = "zero"
    metric: object = None      # MetricField, or callable t -> MetricField

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("final time must be positive")
        self.f_fn = _timed(self.f)
        self.phi_fn = _timed(self.phi)
        if not isinstance(self.u0, GridFunction):
            self.u0_fn = make_field(self.u0)
        else:
            self.u0_fn = None


@dataclass
class HeatConfig(SolverConfig):
    n_steps: int = 64
    theta: float = 0.5
    startup_steps: int = 1
    time_grading: float | None = None   # t_i = T (i/n)^q near t = 0

    def times(self, T: float) -> np.ndarray:
        i = np.arange(self.n_steps + 1, dtype=float)
        if self.time_grading is None:
            return T * i / self.n_steps
        return T * (i / self.n_steps) ** self.time_grading


@dataclass
class SpaceTimeField:
    """Grid function per time level; values shape (n_levels, *grid.shape)."""

    grid: Grid
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if len(self.times) < 2:
            raise ValueError("need at least two time levels")
        if self.values.shape != (len(self.times),) + self.grid.shape:
            raise ValueError("value shape does not match (times, grid)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("space-time field carries non-finite values")

    def level(self, m: int) -> GridFunction:
        return GridFunction(self.grid, self.values[m])

    def time_derivative(self) -> "SpaceTimeField":
        """Centered first differences in time (one-sided at the ends)."""
        out = np.empty_like(self.values)
        t = self.times
        out[0] = (self.values[1] - self.values[0]) / (t[1] - t[0])
        out[-1] = (self.values[-1] - self.values[-2]) / (t[-1] - t[-2])
        for m in range(1, len(t) - 1):
            out[m] = (self.values[m + 1] - self.values[m - 1]) / (t[m + 1] - t[m - 1])
        return SpaceTimeField(self.grid, t, out)

    def evaluator(self):
        """(cloud, times) -> values, linear in time, linear on the grid."""
        interps = [self.level(m).interpolator() for m in range(len(self.times))]
        times = self.times

        def ev(cloud: PointCloud, ts) -> np.ndarray:
            ts = np.asarray(ts, dtype=float)
            idx = np.clip(np.searchsorted(times, ts, side="right") - 1, 0, len(times) - 2)
            lo = times[idx]
            hi = times[idx + 1]
            w = np.clip((ts - lo) / np.maximum(hi - lo, 1e-300), 0.0, 1.0)
            out = np.empty(len(ts))
            for m in np.unique(idx):
                sel = idx == m
                sub = cloud.take(np.flatnonzero(sel))
                out[sel] = (1 - w[sel]) * interps[m](sub) + w[sel] * interps[m + 1](sub)
            return out

        return ev


def solve_heat(problem: ParabolicProblem, config: HeatConfig | None = None) -> SpaceTimeField:
    """Theta-scheme heat solve; boundary and initial rows are exact."""
    config = config or HeatConfig()
    grid = config.grid_for(problem.domain)
    times = config.times(problem.T)

    metric = problem.metric
    static_metric = metric if not callable(metric) else None
    op = assemble_laplacian_matrix(grid, static_metric)
    bflat = op.boundary.ravel()
    iflat = ~bflat
    n = grid.size
    ident = sp.identity(n, format="csr")

    bcloud = grid.node_cloud().take(bflat)
    if problem.u0_fn is not None:
        u = GridFunction.from_callable(grid, problem.u0_fn).values.ravel().copy()
    else:
        u = problem.u0.values.ravel().copy()
    u[bflat] = eval_on_cloud(lambda c: problem.phi_fn(c, times[0]), bcloud) \
        if problem.phi_fn is not None else 0.0

    def f_at(t):
        if problem.f_fn is None:
            return np.zeros(n)
        return GridFunction.from_callable(grid, lambda c: problem.f_fn(c, t)).values.ravel()

    out = np.empty((len(times),) + grid.shape)
    out[0] = u.reshape(grid.shape)
    factor_cache = {}
    startup_left = config.startup_steps
    for m in range(1, len(times)):
        dt = times[m] - times[m - 1]
        theta_eff = 1.0 if startup_left > 0 else config.theta
        key = (round(math.log(dt), 12), theta_eff, m if callable(metric) else -1)
        if key not in factor_cache:
            if callable(metric):
                op = assemble_laplacian_matrix(grid, metric(times[m]))
            Ai = sp.diags(iflat.astype(float)) @ op.matrix
            M1 = (ident - theta_eff * dt * Ai).tolil()
            for i in np.flatnonzero(bflat):
                M1.rows[i] = [int(i)]
                M1.data[i] = [1.0]
            M1 = M1.tocsr()
            M2 = ident + (1.0 - theta_eff) * dt * Ai
            solver = CachedDirectSolver(M1) if n <= DIRECT_LIMIT else None
            factor_cache[key] = (M1, M2, solver)
        M1, M2, solver = factor_cache[key]
        fmix = theta_eff * f_at(times[m]) + (1 - theta_eff) * f_at(times[m - 1])
        rhs = M2 @ u + dt * np.where(iflat, fmix, 0.0)
        if problem.phi_fn is not None:
            rhs[bflat] = eval_on_cloud(lambda c: problem.phi_fn(c, times[m]), bcloud)
        else:
            rhs[bflat] = 0.0
        if solver is not None:
            u_new, res = solver.solve(rhs)
        else:
            u_new, info = solve_sparse(M1, rhs, tol=config.tol)
            res = info.residual
        if res > 1e3 * config.tol:
            raise SolverError(f"heat step {m} residual {res:.2e} above tolerance")
        u = u_new
        out[m] = u.reshape(grid.shape)
        if startup_left > 0:
            startup_left -= 1
    return SpaceTimeField(grid, times, out)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def parabolic_boundary_range(st: SpaceTimeField, boundary: np.ndarray):
    """Range of u over the parabolic boundary: initial slab + lateral shell."""
    vals = [st.values[0].ravel()]
    bmask = boundary.ravel()
    for m in range(len(st.times)):
        vals.append(st.values[m].ravel()[bmask])
    allv = np.concatenate(vals)
    return float(allv.min()), float(allv.max())


def check_parabolic_maximum_principle(st: SpaceTimeField, boundary: np.ndarray,
                                      defect: float = 1e-8) -> Diagnostic:
    lo, hi = parabolic_boundary_range(st, boundary)
    umin, umax = float(st.values.min()), float(st.values.max())
    worst = max(lo - umin, umax - hi, 0.0)
    return Diagnostic("parabolic_maximum_principle", worst <= defect,
                      dict(worst_violation=worst, defect=defect,
                           boundary_range=(lo, hi), range=(umin, umax)))


POSITIVITY_FLOOR = 1e-14


def verify_li_yau(st: SpaceTimeField, R: float, C_bound: float = 200.0,
                  t_window=(0.01, 0.1)) -> Diagnostic:
    """Li-Yau gradient bound for positive solutions of the zero-force heat
    equation: sup_{B(0,2R/3)} (|grad u|^2/u^2 - 2 du/dt / u) <= C/R^2 + 2n/t."""
    grid = st.grid
    if float(st.values.min()) <= 0.0:
        raise ValueError("Li-Yau needs a positive solution")
    n = grid.angles.n
    dist = grid.distance_from(ConePoint.origin(grid.angles))
    region = dist <= 2.0 * R / 3.0
    dudt = st.time_derivative()
    worst_c = -math.inf
    rows = []
    for m, t in enumerate(st.times):
        if not (t_window[0] <= t <= t_window[1]):
            continue
        u = np.maximum(st.values[m], POSITIVITY_FLOOR)
        g = gradient_norm(st.level(m))
        lhs = (g**2 / u**2 - 2.0 * dudt.values[m] / u)[region].max()
        bound = C_bound / R**2 + 2.0 * n / t
        rows.append((float(t), float(lhs), float(bound)))
        worst_c = max(worst_c, (lhs - 2.0 * n / t) * R**2)
    if not rows:
        raise ValueError("no sampled times inside the window")
    passed = all(lhs <= bound for _, lhs, bound in rows)
    return Diagnostic("li_yau", passed,
                      dict(samples=rows, measured_constant=float(worst_c),
                           bound_constant=C_bound, R=R))


def verify_heat_derivative_bounds(st: SpaceTimeField, R: float,
                                  C_bound: float = 500.0,
                                  t_skip: int = 2) -> Diagnostic:
    """Interior derivative bounds for zero-force solves on B(0,R) x (0,R^2]:
    weighted gradients, singular Laplacians, mixed derivatives and du/dt
    against (1/t + 1/R^2)^power * osc envelopes; measured constants reported."""
    grid = st.grid
    dist = grid.distance_from(ConePoint.origin(grid.angles))
    inner = dist <= R / 2.0
    ball = dist <= R
    osc = float(st.values[:, ball].max() - st.values[:, ball].min())
    osc = max(osc, 1e-300)
    dudt = st.time_derivative()
    fam = T_family(grid.angles)
    constants = {"grad_sq": 0.0, "lap": 0.0, "mixed": 0.0, "dudt": 0.0, "grad_T": 0.0}
    for m, t in enumerate(st.times):
        if m < t_skip or t <= 0.0:
            continue
        env1 = (1.0 / t + 1.0 / R**2)
        lvl = st.level(m)
        g2 = gradient_norm(lvl)**2
        constants["grad_sq"] = max(constants["grad_sq"], g2[inner].max() / (env1 * osc**2))
        lap_sup = max(np.abs(apply_T(lvl, tag).values[inner]).max() for tag in fam["lap"])
        constants["lap"] = max(constants["lap"], lap_sup / (env1 * osc))
        if fam["NN"]:
            nn_sup = max(np.abs(apply_T(lvl, tag).values[inner]).max() for tag in fam["NN"])
            constants["mixed"] = max(constants["mixed"], nn_sup / (env1 * osc))
        constants["dudt"] = max(constants["dudt"],
                                np.abs(dudt.values[m][inner]).max() / (env1 * osc))
        gT = np.zeros(grid.shape)
        for tag in fam["lap"]:
            gT = np.maximum(gT, gradient_norm(apply_T(lvl, tag)))
        for tag in fam["DD"]:
            gT = np.maximum(gT, gradient_norm(apply_T(lvl, tag)))
        constants["grad_T"] = max(constants["grad_T"],
                                  gT[inner].max() / (env1**1.5 * osc))
    passed = all(v <= C_bound for v in constants.values())
    return Diagnostic("heat_derivative_bounds", passed,
                      dict(constants=constants, bound=C_bound, R=R, osc=osc))


def caccioppoli_check(st: SpaceTimeField, f_fn, rho: float, R: float,
                      C_bound: float = 100.0) -> Diagnostic:
    """Discrete Caccioppoli energy inequalities on Q_rho vs Q_R.

    First: sup_t int_{B_rho} u^2 + intint_{Q_rho} |grad u|^2
           <= C [ (R-rho)^-2 intint_{Q_R} u^2 + (R-rho)^2 intint_{Q_R} f^2 ].
    Second: gradient and second-order energy against (f - f_R)^2, where f_R
    is the Q_R average and second-order energy is the T-family square sum.
    Requires u(0) = 0.
    """
    if rho >= R:
        raise ValueError("need rho < R")
    grid = st.grid
    if float(np.abs(st.values[0]).max()) > 1e-12:
        raise ValueError("Caccioppoli assumes u(0) = 0")
    from .elliptic import volume_weights
    w = volume_weights(grid)
    dist = grid.distance_from(ConePoint.origin(grid.angles))
    b_rho, b_R = dist <= rho, dist <= R
    t = st.times
    f_timed = _timed(f_fn)

    def space_int(arr, mask):
        return float(np.sum(arr * w * mask))

    def time_int(series, tmax):
        sel = t <= tmax + 1e-14
        ts = t[sel]
        vals = np.asarray(series)[sel]
        trap = getattr(np, "trapezoid", np.trapz)
        return float(trap(vals, ts))

    grads = [gradient_norm(st.level(m))**2 for m in range(len(t))]
    fvals = [GridFunction.from_callable(grid, lambda c: f_timed(c, tv)).values
             if f_timed is not None else np.zeros(grid.shape) for tv in t]

    u2_rho = [space_int(st.values[m]**2, b_rho) for m in range(len(t))]
    g_rho = [space_int(grads[m], b_rho) for m in range(len(t))]
    u2_R = [space_int(st.values[m]**2, b_R) for m in range(len(t))]
    f2_R = [space_int(fvals[m]**2, b_R) for m in range(len(t))]
    lhs1 = max(u2_rho[m] for m in range(len(t)) if t[m] <= rho**2 + 1e-14) \
        + time_int(g_rho, rho**2)
    rhs1 = (R - rho) ** (-2) * time_int(u2_R, R**2) \
        + (R - rho) ** 2 * time_int(f2_R, R**2)

    fam = T_family(grid.angles)
    second = []
    for m in range(len(t)):
        lvl = st.level(m)
        acc = np.zeros(grid.shape)
        for group in ("lap", "NN", "ND", "DD"):
            for tag in fam[group]:
                acc += apply_T(lvl, tag).values ** 2
        second.append(space_int(acc, b_rho))
    vol_R = time_int([space_int(np.ones(grid.shape), b_R)] * len(t), R**2)
    f_avg = time_int([space_int(fvals[m], b_R) for m in range(len(t))], R**2) / max(vol_R, 1e-300)
    fdev_R = [space_int((fvals[m] - f_avg) ** 2, b_R) for m in range(len(t))]
    g_R = [space_int(grads[m], b_R) for m in range(len(t))]
    lhs2 = max(g_rho[m] for m in range(len(t)) if t[m] <= rho**2 + 1e-14) \
        + time_int(second, rho**2)
    rhs2 = (R - rho) ** (-2) * time_int(g_R, R**2) + time_int(fdev_R, R**2)

    ratio1 = lhs1 / max(rhs1, 1e-300)
    ratio2 = lhs2 / max(rhs2, 1e-300)
    return Diagnostic("caccioppoli", max(ratio1, ratio2) <= C_bound,
                      dict(lhs1=lhs1, rhs1=rhs1, ratio1=ratio1,
                           lhs2=lhs2, rhs2=rhs2, ratio2=ratio2,
                           f_average=f_avg, bound=C_bound))


def verify_time_zero_schauder(problem: ParabolicProblem, alpha: float,
                              config: HeatConfig | None = None,
                              n_pairs: int = 2000, seed: int = 0,
                              C_bound: float = 1e4) -> dict:
    """Parabolic Holder seminorms of Tu and du/dt down to t = 0.

    Needs u0 = 0, or a C^{2,alpha} u0 handled through the shift
    u_hat = u - u0 with forcing f - Delta u0.  Pairs include t -> 0 and
    pure-time pairs; reports per-operator HolderReports plus the measured
    constant against ||u||_C0 + [f]-scale data.
    """
    cap = min(1.0 / problem.angles.beta_max - 1.0, 1.0)
    if not (0.0 < alpha < cap):
        raise ValueError(f"alpha must lie in (0, {cap:.4f})")
    config = config or HeatConfig(n_steps=96, time_grading=2.0)
    grid = config.grid_for(problem.domain)

    u0_grid = None
    run_problem = problem
    if problem.u0 != "zero" and problem.u0 is not None:
        if isinstance(problem.u0, GridFunction):
            u0_grid = problem.u0
        else:
            u0_grid = GridFunction.from_callable(grid, make_field(problem.u0))
        from .operators import apply_conical_laplacian
        lap_u0 = apply_conical_laplacian(u0_grid)
        base_f = _timed(problem.f)
        lap_interp = lap_u0.interpolator()

        def f_shift(c, t):
            base = base_f(c, t) if base_f is not None else 0.0
            if hasattr(c, "cloud"):
                return base - lap_interp(c.cloud)
            return base - lap_u0.values

        u0_interp = u0_grid.interpolator()

        def phi_shift(c, t):
            base = problem.phi_fn(c, t) if problem.phi_fn is not None else 0.0
            if hasattr(c, "cloud"):
                return base - u0_interp(c.cloud)
            return base - u0_grid.values

        run_problem = ParabolicProblem(problem.domain, problem.angles, problem.T,
                                       f=f_shift, u0="zero", phi=phi_shift,
                                       metric=problem.metric)

    st = solve_heat(run_problem, config)
    if u0_grid is not None:
        st = SpaceTimeField(st.grid, st.times, st.values + u0_grid.values[None])

    rng = np.random.default_rng(seed)
    dist = st.grid.distance_from(ConePoint.origin(st.grid.angles))
    region = (dist <= 0.5)
    sel_t = st.times <= problem.T / 2 + 1e-14
    t_idx = np.flatnonzero(sel_t)
    flat_region = np.flatnonzero(region.ravel())
    cloud = st.grid.node_cloud()

    def sample_pairs(values_t):
        ii = rng.choice(flat_region, n_pairs)
        jj = rng.choice(flat_region, n_pairs)
        mi = rng.choice(t_idx, n_pairs)
        mj = rng.choice(t_idx, n_pairs)
        # pure-time pairs at fixed nodes, including the earliest levels
        kk = rng.choice(flat_region, n_pairs // 2)
        m1 = rng.choice(t_idx, n_pairs // 2)
        m0 = np.zeros(n_pairs // 2, dtype=int)
        ii = np.concatenate([ii, kk])
        jj = np.concatenate([jj, kk])
        mi = np.concatenate([mi, m1])
        mj = np.concatenate([mj, m0])
        from .geometry import pairwise_cone_distance
        dsp = pairwise_cone_distance(cloud.take(ii), cloud.take(jj))
        dpar = np.maximum(np.sqrt(np.abs(st.times[mi] - st.times[mj])), dsp)
        good = dpar > 0
        vx = values_t[mi[good], ii[good]]
        vy = values_t[mj[good], jj[good]]
        return vx, vy, dpar[good]

    reports = {}
    fam = T_family(st.grid.angles)
    flat_vals = {}
    for group in ("lap", "NN", "ND", "DD"):
        for tag in fam[group]:
            arr = np.stack([apply_T(st.level(m), tag).values.ravel()
                            for m in range(len(st.times))])
            flat_vals[str(tag)] = arr
    flat_vals["dudt"] = np.stack([v.ravel() for v in st.time_derivative().values])
    for name, arr in flat_vals.items():
        vx, vy, d = sample_pairs(arr)
        q = holder_quotients(vx, vy, d, alpha)
        reports[name] = HolderReport(alpha, float(q.max()), pair_count=len(d), seed=seed)
    u_scale = float(np.abs(st.values).max())
    worst = max(r.seminorm for r in reports.values())
    return dict(reports=reports, max_seminorm=worst, u_scale=u_scale,
                measured_constant=worst / max(u_scale, 1e-300),
                passed=bool(np.isfinite(worst) and worst / max(u_scale, 1e-300) <= C_bound),
                field=st)
