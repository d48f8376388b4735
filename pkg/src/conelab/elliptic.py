"""Dirichlet solvers for the conical Laplace equation with diagnostics.

Two solution paths are provided and cross-validated: the direct cone-polar
discretization of `operators`, and the smooth eps-regularized Cartesian path
of `cartesian` driven down a decreasing eps schedule.  Diagnostics cover the
discrete maximum principle, the interior gradient/Laplacian/mixed-derivative
estimates, the boundary barrier constructions on the exact metric ball, and
the L^1 Sobolev quotient under the cone volume element.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import ConeAngles, ConePoint, PointCloud
from .grids import (CloudCoords, Grid, GridCoords, GridFunction, eval_on_cloud,
                    polydisk_grid)
from .operators import (AssembledOperator, apply_conical_laplacian, apply_first,
                        apply_T, assemble_laplacian_matrix, gradient_norm,
                        MetricField)
from .domains import ConeBallDomain, PolydiskDomain
from .cartesian import (CartesianGrid, assemble_regularized, cartesian_box_grid,
                        evaluate_on_cartesian)
from .fields import make_field
from .linalg import LinearSolveInfo, SolverError, solve_sparse


@dataclass
class SolverConfig:
    n_radial: int = 32
    n_theta: int = 8
    n_tangential: int = 13
    tol: float = 1e-10
    max_iter: int = 4000
    method: str = "auto"
    grading: float | None = None
    recenter_point: ConePoint | None = None

    def grid_for(self, domain) -> Grid:
        if isinstance(domain, PolydiskDomain):
            return polydisk_grid(domain.angles, domain.radii, self.n_radial,
                                 self.n_theta, domain.tangential_halfwidth,
                                 self.n_tangential, domain.tangential_periodic,
                                 self.grading)
        if isinstance(domain, ConeBallDomain):
            R = domain.radius
            return polydisk_grid(domain.angles, (R,) * domain.angles.p,
                                 self.n_radial, self.n_theta, R,
                                 self.n_tangential, False, self.grading)
        raise TypeError(f"unsupported domain {type(domain).__name__}")


@dataclass
class EllipticProblem:
    """Delta u = f in the domain, u = phi on its boundary."""

    domain: object
    angles: ConeAngles
    f: object = None          # field spec or None (zero right-hand side)
    phi: object = "zero"
    metric: MetricField | None = None

    def __post_init__(self):
        if isinstance(self.domain, PolydiskDomain):
            if any(not (0 < R <= 1) for R in self.domain.radii):
                raise ValueError("polydisk radii must lie in (0, 1]")
        if isinstance(self.domain, ConeBallDomain) and not (0 < self.domain.radius <= 1):
            raise ValueError("ball radius must lie in (0, 1]")
        self.f_fn = make_field(self.f) if self.f is not None else None
        self.phi_fn = make_field(self.phi)


@dataclass
class SolveReport:
    u: GridFunction
    residual: float
    info: LinearSolveInfo
    problem: EllipticProblem
    config: SolverConfig
    operator: AssembledOperator
    rhs: np.ndarray
    eps_gaps: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return self.info.iterations


def _ball_boundary_mask(grid: Grid, domain: ConeBallDomain) -> np.ndarray:
    """Cut-cell mask: polydisk faces plus every node at distance >= R."""
    outside = grid.distance_from(ConePoint.origin(grid.angles)) >= domain.radius
    return grid.boundary_mask() | outside


def _dirichlet_values(grid: Grid, domain, phi_fn, mask: np.ndarray) -> np.ndarray:
    cloud = grid.node_cloud().take(mask.ravel())
    if isinstance(domain, ConeBallDomain):
        cloud = domain.project_to_boundary(cloud)
    return eval_on_cloud(phi_fn, cloud)


def solve_dirichlet(problem: EllipticProblem, config: SolverConfig | None = None) -> SolveReport:
    """Solve the Dirichlet problem on the cone-polar grid.

    Interior rows are the assembled conical operator; boundary rows are
    exact.  With config.recenter_point = p the right-hand side is shifted to
    f - f(p) and the tangential paraboloid f(p)/(2(2n-2p)) |s - s(p)|^2 is
    added back to the solution (the ladder normalization).
    """
    config = config or SolverConfig()
    grid = config.grid_for(problem.domain)
    op = assemble_laplacian_matrix(grid, problem.metric)
    boundary = op.boundary
    if isinstance(problem.domain, ConeBallDomain):
        boundary = _ball_boundary_mask(grid, problem.domain)
        mat = op.matrix.tolil()
        extra = np.flatnonzero(boundary.ravel() & ~op.boundary.ravel())
        for i in extra:
            mat.rows[i] = [int(i)]
            mat.data[i] = [1.0]
        op = AssembledOperator(grid, mat.tocsr(), boundary, op.diag_dominance_margin)

    shift = None
    f_fn = problem.f_fn
    if config.recenter_point is not None:
        m = grid.angles.tangential_dim
        if m == 0:
            raise ValueError("recentration needs tangential coordinates")
        p0 = config.recenter_point
        f0 = float(eval_on_cloud(f_fn, PointCloud(
            [[p0.r(j) for j in range(grid.angles.p)]],
            [[p0.theta(j) for j in range(grid.angles.p)]],
            [list(p0.tangential)], grid.angles))[0]) if f_fn is not None else 0.0
        s0 = np.asarray(p0.tangential)

        def shift_field(c):
            out = 0.0
            for k in range(m):
                out = out + (c.s(k) - s0[k]) ** 2
            return f0 / (2.0 * m) * out

        shift = GridFunction.from_callable(grid, shift_field)
        base_f = f_fn

        def f_fn(c, _base=base_f, _f0=f0):
            base = _base(c) if _base is not None else 0.0
            return base - _f0

    rhs = np.zeros(grid.shape)
    if f_fn is not None:
        rhs = GridFunction.from_callable(grid, f_fn).values.copy()
    rhs = rhs.ravel()
    bflat = boundary.ravel()
    bvals = _dirichlet_values(grid, problem.domain, problem.phi_fn, boundary)
    if shift is not None:
        bvals = bvals - shift.values.ravel()[bflat]
    rhs[bflat] = bvals

    x, info = solve_sparse(op.matrix, rhs, tol=config.tol, method=config.method,
                           max_iter=config.max_iter)
    resid = float(np.abs(op.matrix @ x - rhs)[~bflat].max()) / max(1.0, np.abs(rhs).max())
    u = GridFunction(grid, x.reshape(grid.shape))
    if shift is not None:
        u = GridFunction(grid, u.values + shift.values)
    return SolveReport(u, resid, info, problem, config, op, rhs)


# ---------------------------------------------------------------------------
# The eps-regularization path on Cartesian grids
# ---------------------------------------------------------------------------

DEFAULT_EPS_SCHEDULE = (1e-2, 1e-3, 1e-4, 1e-5)


@dataclass
class EpsilonSolve:
    eps: float
    values: np.ndarray
    grid: CartesianGrid
    interior: np.ndarray
    info: LinearSolveInfo


def solve_via_epsilon_ladder(problem: EllipticProblem, eps_schedule=DEFAULT_EPS_SCHEDULE,
                             n_xy: int = 33, n_tangential: int = 9,
                             tol: float = 1e-10):
    """Solve the smooth Dirichlet problems down a decreasing eps schedule.

    Per-factor disks {|z_j| < R_j^(1/beta_j)} are cut out of the uniform
    Cartesian box with Shortley-Weller stencils; the operator carries the
    4/beta^2 cone-convention rescaling so the eps -> 0 limit matches the
    cone-polar solver.  Returns the per-eps solves plus the sup-norm gaps
    between consecutive iterates (monitored Cauchy behavior).
    """
    eps_schedule = tuple(eps_schedule)
    if any(e2 >= e1 for e1, e2 in zip(eps_schedule, eps_schedule[1:])):
        raise ValueError("eps schedule must be strictly decreasing")
    if eps_schedule[-1] <= 0:
        raise ValueError("last eps must stay positive")
    if not isinstance(problem.domain, PolydiskDomain):
        raise TypeError("the eps ladder runs on polydisk domains")
    angles = problem.angles
    radii_z = tuple(R ** (1.0 / b) for R, b in zip(problem.domain.radii, angles.betas))
    grid = cartesian_box_grid(angles, [R * 1.0001 for R in radii_z], n_xy,
                              problem.domain.tangential_halfwidth, n_tangential)

    def phi_pts(pts):
        cloud = _cart_points_to_cloud(pts, angles)
        return eval_on_cloud(problem.phi_fn, cloud)

    def f_cart(c):
        return problem.f_fn(c) if problem.f_fn is not None else np.asarray(0.0)

    solves, gaps = [], []
    prev = None
    for eps in eps_schedule:
        system = assemble_regularized(grid, eps, radii_z, rescale_to_cone=True)
        rhs = system.rhs(f_fn=f_cart, phi_fn=phi_pts)
        x, info = solve_sparse(system.matrix, rhs, tol=tol)
        vals = x.reshape(grid.shape)
        solves.append(EpsilonSolve(eps, vals, grid, system.interior, info))
        if prev is not None:
            gaps.append(float(np.abs(vals - prev)[system.interior].max()))
        prev = vals
    return solves, gaps


def _cart_points_to_cloud(pts: np.ndarray, angles: ConeAngles) -> PointCloud:
    p = angles.p
    r = np.empty((len(pts), p))
    th = np.empty((len(pts), p))
    for j, b in enumerate(angles.betas):
        x, y = pts[:, 2 * j], pts[:, 2 * j + 1]
        rho = np.hypot(x, y)
        r[:, j] = rho**b
        th[:, j] = np.mod(np.arctan2(y, x), 2 * np.pi)
    s = pts[:, 2 * p:]
    return PointCloud(r, th, s, angles)


def compare_solvers(report: SolveReport, eps_solve: EpsilonSolve,
                    margin: float = 0.9) -> float:
    """Sup difference between the cone-polar solution and the Cartesian
    eps solution, sampled on polar nodes strictly inside the domain."""
    grid = report.u.grid
    angles = grid.angles
    cloud = grid.node_cloud()
    keep = np.ones(len(cloud), dtype=bool)
    dom = report.problem.domain
    for j, R in enumerate(dom.radii):
        keep &= cloud.r[:, j] <= margin * R
    keep &= np.all(np.abs(cloud.s) <= margin * dom.tangential_halfwidth, axis=1)
    sub = cloud.take(keep)
    # map to cartesian coordinates
    cols = []
    for j, b in enumerate(angles.betas):
        rho = sub.r[:, j] ** (1.0 / b)
        cols.append(rho * np.cos(sub.theta[:, j]))
        cols.append(rho * np.sin(sub.theta[:, j]))
    for k in range(angles.tangential_dim):
        cols.append(sub.s[:, k])
    pts = np.stack(cols, axis=1)
    from scipy.interpolate import RegularGridInterpolator
    interp = RegularGridInterpolator(eps_solve.grid.axes, eps_solve.values,
                                     method="linear", bounds_error=False,
                                     fill_value=None)
    u_eps = interp(pts)
    u_polar = report.u.values.ravel()[keep.ravel()]
    return float(np.abs(u_eps - u_polar).max())


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


MARGIN_FLOOR = 1e-8  # strict subharmonicity margin required of barriers


@dataclass
class Diagnostic:
    name: str
    passed: bool
    measured: dict


def check_maximum_principle(report: SolveReport, defect: float | None = None) -> Diagnostic:
    """inf boundary phi - delta <= u <= sup boundary phi + delta.

    For the monotone interior stencils the discrete principle is exact up to
    the linear-solve residual; delta defaults to a small multiple of it.
    """
    if report.problem.f_fn is not None:
        raise ValueError("maximum principle check needs a zero right-hand side")
    bvals = report.u.values[report.operator.boundary]
    scale = max(1.0, float(np.abs(bvals).max()))
    if defect is None:
        defect = 100.0 * max(report.residual, report.config.tol) * scale
    lo, hi = float(bvals.min()), float(bvals.max())
    umin, umax = float(report.u.values.min()), float(report.u.values.max())
    worst = max(lo - umin, umax - hi, 0.0)
    return Diagnostic("maximum_principle", worst <= defect,
                      dict(worst_violation=worst, defect=defect,
                           boundary_range=(lo, hi), solution_range=(umin, umax)))


def verify_interior_estimates(report: SolveReport, center: ConePoint | None = None,
                              R: float | None = None, constant: float = 50.0) -> Diagnostic:
    """Cheng-Yau / singular-Laplacian / mixed-derivative interior estimates.

    For a discrete-harmonic u: sup_{B(0,2R/3)} |grad u| <= C osc/R and
    sup_{B(0,R/2)} (|Delta_j u| + |N_i N_j u|) <= C osc/R^2.  The measured
    best constants are reported; C comes from config, never from the paper.
    """
    if report.problem.f_fn is not None:
        raise ValueError("interior estimates assume a harmonic solution")
    grid = report.u.grid
    center = center or ConePoint.origin(grid.angles)
    if R is None:
        R = min(min(report.problem.domain.radii),
                report.problem.domain.tangential_halfwidth)
    dist = grid.distance_from(center)
    inner23 = dist <= 2.0 * R / 3.0
    inner12 = dist <= R / 2.0
    ball = dist <= R
    osc = float(report.u.values[ball].max() - report.u.values[ball].min())
    # constant solutions: all sups vanish, constants reported as 0
    osc = max(osc, 1e-12 * max(1.0, float(np.abs(report.u.values).max())))
    grad = gradient_norm(report.u)
    sup_grad = float(grad[inner23].max())
    sup_lap = 0.0
    for j in range(grid.angles.p):
        sup_lap = max(sup_lap, float(np.abs(apply_T(report.u, ("lap", j)).values[inner12]).max()))
    sup_mixed = 0.0
    for j in range(grid.angles.p):
        for k in range(j + 1, grid.angles.p):
            for a in ("r", "th"):
                for b in ("r", "th"):
                    tv = apply_T(report.u, ((a, j), (b, k)))
                    sup_mixed = max(sup_mixed, float(np.abs(tv.values[inner12]).max()))
    c_grad = sup_grad * R / osc
    c_lap = sup_lap * R**2 / osc
    c_mixed = sup_mixed * R**2 / osc
    ok = max(c_grad, c_lap, c_mixed) <= constant
    return Diagnostic("interior_estimates", ok,
                      dict(c_grad=c_grad, c_lap=c_lap, c_mixed=c_mixed,
                           sup_grad=sup_grad, sup_lap=sup_lap,
                           sup_mixed=sup_mixed, osc=osc, R=R, bound=constant))


def comparison_check(r1: SolveReport, r2: SolveReport, defect: float | None = None) -> Diagnostic:
    """Discrete comparison principle: f1 <= f2 and phi1 >= phi2 imply
    u1 >= u2 - delta nodewise (flat metric)."""
    if defect is None:
        defect = 100.0 * max(r1.residual, r2.residual, r1.config.tol) * \
            max(1.0, float(np.abs(r1.u.values).max()), float(np.abs(r2.u.values).max()))
    gap = float((r2.u.values - r1.u.values).max())
    return Diagnostic("comparison", gap <= defect, dict(worst=gap, defect=defect))


# ---------------------------------------------------------------------------
# Barrier constructions on the exact metric ball (boundary classes)
# ---------------------------------------------------------------------------


def classify_boundary_point(q: ConePoint, angles: ConeAngles, radius: float = 1.0,
                            atol: float = 1e-9) -> str:
    d0 = math.sqrt(sum(q.r(j) ** 2 for j in range(angles.p)) + sum(s**2 for s in q.tangential))
    if abs(d0 - radius) > atol:
        raise ValueError("point does not lie on the sphere d_beta(0,.) = R")
    zero = [q.r(j) <= atol for j in range(angles.p)]
    if all(zero):
        return "deep_stratum"      # z_1 = ... = z_p = 0
    if not any(zero):
        return "off_strata"
    return "single_stratum"


def _cart_coords_of(q: ConePoint, angles: ConeAngles) -> np.ndarray:
    cols = []
    for j, b in enumerate(angles.betas):
        rho = q.r(j) ** (1.0 / b)
        cols.extend((rho * math.cos(q.theta(j)), rho * math.sin(q.theta(j))))
    cols.extend(q.tangential)
    return np.array(cols)


def barrier_validate(q: ConePoint, angles: ConeAngles, case: str, eps: float = 1e-4,
                     n_samples: int = 1000, seed: int = 0,
                     A_schedule_max: float = 2.0**20, f_max: float = 0.0) -> Diagnostic:
    """Validate the boundary barrier for the given class of q on the unit ball.

    deep_stratum: Psi_q(z) = |z - q'|^2 - 4 with q' the Euclidean antipode;
    checked sign pattern on boundary samples and discrete Delta_eps
    subharmonicity.  off_strata / single_stratum: exterior-sphere function
    G(z) = |z - q~|^(2-2n) - r_q^(2-2n) combined with A (d_beta(0,z)^2 - 1).
    A runs over a doubling schedule; the first admissible value is recorded.
    A = 0 is reported as failing the subharmonicity margin.
    """
    got = classify_boundary_point(q, angles)
    if got != case:
        raise ValueError(f"classification mismatch: expected {case}, point is {got}")
    rng = np.random.default_rng(seed)
    ball = ConeBallDomain(angles, 1.0)
    bpts = ball.boundary_sample(n_samples, rng)
    q_cart = _cart_coords_of(q, angles)
    n = angles.n

    def cart_of_cloud(cloud: PointCloud) -> np.ndarray:
        cols = []
        for j, b in enumerate(angles.betas):
            rho = cloud.r[:, j] ** (1.0 / b)
            cols.append(rho * np.cos(cloud.theta[:, j]))
            cols.append(rho * np.sin(cloud.theta[:, j]))
        for k in range(angles.tangential_dim):
            cols.append(cloud.s[:, k])
        return np.stack(cols, axis=1)

    bcart = cart_of_cloud(bpts)
    measured = {}

    if case == "deep_stratum":
        psi_b = np.sum((bcart + q_cart) ** 2, axis=1) - 4.0
        away = np.linalg.norm(bcart - q_cart, axis=1) > 1e-6
        sign_ok = bool(np.all(psi_b[away] < 0.0)) and abs(
            np.sum((q_cart + q_cart) ** 2) - 4.0) < 1e-9
        # Delta_eps Psi = sum_j c_j(z) * 1 + (n-p): strictly positive
        interior = ball.sample(n_samples, rng)
        icart = cart_of_cloud(interior)
        lap = np.zeros(len(icart))
        for j, b in enumerate(angles.betas):
            rho2 = icart[:, 2 * j] ** 2 + icart[:, 2 * j + 1] ** 2
            lap += (rho2 + eps) ** (1.0 - b)
        lap += (n - angles.p)
        sub_margin = float(lap.min())
        required = max(f_max, MARGIN_FLOOR)
        A, admissible = 1.0, None
        while A <= A_schedule_max:
            if sub_margin * A >= required:
                admissible = A
                break
            A *= 2.0
        measured.update(sign_ok=sign_ok, subharmonic_margin=sub_margin,
                        first_admissible_A=admissible,
                        A0_fails=bool(0.0 < required))
        passed = sign_ok and admissible is not None
        return Diagnostic("barrier_deep_stratum", passed, measured)

    # exterior-sphere classes
    if case == "off_strata":
        grad = np.concatenate([
            np.concatenate([
                2 * angles.betas[j] * (q.r(j) ** (1.0 / angles.betas[j])) ** (2 * angles.betas[j] - 2)
                * q_cart[2 * j:2 * j + 2] for j in range(angles.p)]),
            2 * np.asarray(q.tangential)])
    else:
        # tangency against the single-cone ball of the nonvanishing factors
        grad = np.zeros(2 * n)
        for j in range(angles.p):
            if q.r(j) > 1e-9:
                rho = q.r(j) ** (1.0 / angles.betas[j])
                grad[2 * j:2 * j + 2] = (2 * angles.betas[j] * rho ** (2 * angles.betas[j] - 2)
                                         * q_cart[2 * j:2 * j + 2])
        grad[2 * angles.p:] = 2 * np.asarray(q.tangential)
    nu = grad / np.linalg.norm(grad)

    r_q = 0.25
    ok_sign = False
    while r_q > 1e-4:
        q_tilde = q_cart + r_q * nu
        dist_b = np.linalg.norm(bcart - q_tilde, axis=1)
        away = np.linalg.norm(bcart - q_cart, axis=1) > 1e-6
        if np.all(dist_b[away] > r_q * (1 + 1e-9)):
            ok_sign = True
            break
        r_q *= 0.5
    G = lambda pts: np.linalg.norm(pts - q_tilde, axis=1) ** (2 - 2 * n) - r_q ** (2 - 2 * n)
    g_b = G(bcart)
    sign_ok = ok_sign and bool(np.all(g_b[away] < 1e-12)) and abs(G(q_cart[None, :])[0]) < 1e-9

    # subharmonicity of Psi = A (d_beta^2 - 1) + G on interior samples
    interior = ball.sample(n_samples, rng)
    icart = cart_of_cloud(interior)

    def lap_eps_G(pts):
        # Delta_eps of |z - q~|^(2-2n): radial profile phi(t) = t^(1-n), t = |z-q~|^2
        d = pts - q_tilde
        t = np.sum(d**2, axis=1)
        out = np.zeros(len(pts))
        for j, b in enumerate(angles.betas):
            rho2 = pts[:, 2 * j] ** 2 + pts[:, 2 * j + 1] ** 2
            c = (rho2 + eps) ** (1.0 - b)
            dz2 = d[:, 2 * j] ** 2 + d[:, 2 * j + 1] ** 2
            out += c * ((1 - n) * t ** (-n) + (1 - n) * (-n) * t ** (-n - 1) * dz2)
        for k in range(angles.tangential_dim):
            dk2 = d[:, 2 * angles.p + k] ** 2
            out += (1 - n) * t ** (-n) * 0.5 + (1 - n) * (-n) * t ** (-n - 1) * dk2
        return out

    def lap_eps_dist2(pts):
        out = np.zeros(len(pts))
        for j, b in enumerate(angles.betas):
            rho2 = pts[:, 2 * j] ** 2 + pts[:, 2 * j + 1] ** 2
            c = (rho2 + eps) ** (1.0 - b)
            out += c * (b**2) * np.maximum(rho2, 1e-30) ** (b - 1)
        out += (n - angles.p)
        return out

    lapG = lap_eps_G(icart)
    lapD = lap_eps_dist2(icart)
    required = max(f_max, MARGIN_FLOOR)
    A, admissible = 1.0, None
    while A <= A_schedule_max:
        if float((A * lapD + lapG).min()) >= required:
            admissible = A
            break
        A *= 2.0
    measured.update(sign_ok=sign_ok, exterior_radius=r_q,
                    first_admissible_A=admissible,
                    A0_fails=bool(float(lapG.min()) < required))
    passed = sign_ok and admissible is not None
    return Diagnostic(f"barrier_{case}", passed, measured)


# ---------------------------------------------------------------------------
# Sobolev quotient
# ---------------------------------------------------------------------------


def volume_weights(grid: Grid) -> np.ndarray:
    """Quadrature weights for the cone volume element prod_j beta_j r_j."""
    w = np.ones(grid.shape)
    for i, ax in enumerate(grid.axes):
        nodes = ax.nodes
        if ax.periodic:
            wi = np.full(ax.size, ax.period / ax.size)
        else:
            wi = np.zeros(ax.size)
            wi[:-1] += 0.5 * np.diff(nodes)
            wi[1:] += 0.5 * np.diff(nodes)
        shape = [1] * len(grid.axes)
        shape[i] = ax.size
        w = w * wi.reshape(shape)
    c = GridCoords(grid)
    for j, b in enumerate(grid.angles.betas):
        w = w * (b * c.r(j))
    return w


def sobolev_check(h: GridFunction, c_sob: float = 20.0, collar: int = 2) -> Diagnostic:
    """Quotient of the Sobolev inequality under the cone volume element:
    (int h^(2n/(n-1)) dV)^((n-1)/n) <= C int |grad h|^2 dV.

    The gradient enters squared: the exponent pair (2n/(n-1), (n-1)/n) is
    the L^2 Sobolev form in real dimension 2n, and only the squared right-
    hand side makes the quotient invariant under h -> lambda h.
    """
    grid = h.grid
    n = grid.angles.n
    mask = np.zeros(grid.shape, dtype=bool)
    for i, ax in enumerate(grid.axes):
        if ax.periodic:
            continue
        sl = [slice(None)] * len(grid.axes)
        sl[i] = slice(ax.size - collar, ax.size)
        mask[tuple(sl)] = True
        if not (ax.kind == "radial" and ax.pole):
            sl[i] = slice(0, collar)
            mask[tuple(sl)] = True
    if float(np.abs(h.values[mask]).max(initial=0.0)) > 1e-12 * max(1.0, np.abs(h.values).max()):
        raise ValueError("field is not compactly supported inside the collar")
    w = volume_weights(grid)
    num = float(np.sum(np.abs(h.values) ** (2 * n / (n - 1)) * w)) ** ((n - 1) / n)
    den = float(np.sum(gradient_norm(h) ** 2 * w))
    ratio = num / max(den, 1e-300)
    return Diagnostic("sobolev", ratio <= c_sob, dict(ratio=ratio, bound=c_sob))
