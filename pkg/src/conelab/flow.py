"""Toy conical Monge-Ampere flow in rotationally invariant reduction.

The potential flow  dphi/dt = log((omega_hat_t + i ddbar phi)^n / omega_0^n) + f
is run for theta-independent potentials on a product of cone factors and a
periodic tangential box.  In this symmetry class the normalized complex
Hessian is diagonal in the epsilon-frame with entries

    cone factor j:     Lam_j phi = (phi_rr + phi_r / r) / 4,
    tangential pair t: Lam_t phi = (phi_aa + phi_bb) / 4,

so the determinant ratio collapses to the product of the one-dimensional
factors (c_m(t) + Lam_m phi) with c_m the reference-family coefficient
(c = 1 for the flat start).  Positivity of every factor within the
[1/C0, C0] sandwich is the enforced metric-equivalence invariant.

Each implicit time step solves Psi(phi_new) = 0 by damped Newton iteration;
the Newton correction solves the backward-Euler discretization of the linear
conical heat equation v_t - Delta_{omega_hat,phi} v = -residual, which is
exactly the linearization D Psi_phi(v) = v/dt - sum_m Lam_m v / (c_m + Lam_m phi).
The outer radial faces carry a natural (zero normal derivative) condition:
the compact-manifold setting has no boundary and the toy closes itself off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import ConeAngles
from .grids import Axis, RADIAL, TANGENTIAL, radial_axis, tangential_axis
from .linalg import CachedDirectSolver, solve_sparse
from .operators import derivative_matrix, fd_weights


@dataclass(frozen=True)
class FlowGrid:
    """Reduced grid: one radial axis per cone factor + tangential axes."""

    angles: ConeAngles
    axes: tuple

    @property
    def shape(self):
        return tuple(ax.size for ax in self.axes)

    @property
    def size(self):
        return int(np.prod(self.shape))

    def coords(self):
        return np.meshgrid(*(ax.nodes for ax in self.axes), indexing="ij", sparse=True)


def flow_grid(angles: ConeAngles, radius: float = 1.0, n_radial: int = 24,
              box_halfwidth: float = 0.5, n_tangential: int = 17) -> FlowGrid:
    axes = [radial_axis(radius, n_radial, b) for b in angles.betas]
    for _ in range(angles.tangential_dim):
        axes.append(tangential_axis(-box_halfwidth, box_halfwidth, n_tangential,
                                    periodic=True))
    return FlowGrid(angles, tuple(axes))


def _axis_op(grid: FlowGrid, mat, axis_idx):
    shape = grid.shape
    before = int(np.prod(shape[:axis_idx], dtype=int))
    after = int(np.prod(shape[axis_idx + 1:], dtype=int))
    return sp.kron(sp.identity(before, format="csr"),
                   sp.kron(mat, sp.identity(after, format="csr"), format="csr"),
                   format="csr")


def _radial_lambda(axis: Axis) -> sp.csr_matrix:
    """(u_rr + u_r/r)/4 with the pole closure (u(r1) - u(0)) / r1^2."""
    x = axis.nodes
    k = len(x)
    mat = sp.lil_matrix((k, k))
    for i in range(1, k):
        lo = min(max(i - 1, 0), k - 3)
        sub = x[lo:lo + 3]
        w = fd_weights(sub, x[i], 2) + fd_weights(sub, x[i], 1) / x[i]
        mat[i, lo:lo + 3] = 0.25 * w
    mat[0, 0] = -1.0 / x[1] ** 2
    mat[0, 1] = 1.0 / x[1] ** 2
    return mat.tocsr()


def direction_operators(grid: FlowGrid):
    """The n normalized Hessian directions Lam_m as sparse matrices."""
    angles = grid.angles
    ops = []
    for j in range(angles.p):
        ops.append(_axis_op(grid, _radial_lambda(grid.axes[j]), j))
    for t in range(angles.n - angles.p):
        a = angles.p + 2 * t
        b = a + 1
        d2a = _axis_op(grid, derivative_matrix(grid.axes[a], 2), a)
        d2b = _axis_op(grid, derivative_matrix(grid.axes[b], 2), b)
        ops.append(0.25 * (d2a + d2b))
    return ops


def _neumann_rows(grid: FlowGrid):
    """Row indices of outer radial faces plus their one-sided d/dr matrices."""
    rows_all = []
    mats = []
    for j in range(grid.angles.p):
        ax = grid.axes[j]
        d1 = derivative_matrix(ax, 1)
        mats.append(_axis_op(grid, d1, j))
        mask = np.zeros(grid.shape, dtype=bool)
        sl = [slice(None)] * len(grid.shape)
        sl[j] = -1
        mask[tuple(sl)] = True
        rows_all.append(mask.ravel())
    return rows_all, mats


@dataclass
class FlowConfig:
    dt: float = 1e-3
    newton_tol: float = 1e-11
    max_newton: int = 30
    max_halvings: int = 8
    sandwich: float = 4.0        # C0: every factor inside [1/C0, C0]
    positivity_floor: float = 1e-10


@dataclass
class FlowState:
    """Potential trajectory of the toy flow."""

    grid: FlowGrid
    times: list
    values: list                 # phi per accepted time, grid-shaped arrays
    c_fn: object                 # c_fn(t) -> per-direction coefficients, len n
    f_fn: object                 # f_fn(coords, t) -> forcing array or scalar
    config: FlowConfig = field(default_factory=FlowConfig)

    @property
    def t(self) -> float:
        return self.times[-1]

    @property
    def phi(self) -> np.ndarray:
        return self.values[-1]

    def factors(self, ops=None, t=None, phi=None):
        """The n metric surrogate factors c_m + Lam_m phi at a state."""
        ops = ops or direction_operators(self.grid)
        t = self.t if t is None else t
        phi = self.phi if phi is None else phi
        cs = self.c_fn(t)
        out = []
        for m, op in enumerate(ops):
            out.append(cs[m] + (op @ phi.ravel()).reshape(self.grid.shape))
        return out


class FlowCoords:
    def __init__(self, grid: FlowGrid):
        self.grid = grid
        self._c = grid.coords()
        self.angles = grid.angles

    def r(self, j):
        return self._c[j]

    def s(self, k):
        return self._c[self.grid.angles.p + k]


def _forcing(grid: FlowGrid, f_fn, t) -> np.ndarray:
    if f_fn is None:
        return np.zeros(grid.shape)
    return np.broadcast_to(np.asarray(f_fn(FlowCoords(grid), t), dtype=float),
                           grid.shape).copy()


def initial_state(grid: FlowGrid, c_fn=None, f_fn=None,
                  config: FlowConfig | None = None) -> FlowState:
    """phi(., 0) = 0 with the flat reference (all coefficients 1)."""
    n = grid.angles.n
    c_fn = c_fn or (lambda t: np.ones(n))
    return FlowState(grid, [0.0], [np.zeros(grid.shape)], c_fn, f_fn,
                     config or FlowConfig())


def flow_residual(state: FlowState, phi_new: np.ndarray, t_new: float,
                  dt: float, ops) -> np.ndarray:
    """Psi(phi_new) = (phi_new - phi_old)/dt - sum_m log(c_m + Lam_m phi_new) - f."""
    logdet = np.zeros(state.grid.shape)
    for fac in state.factors(ops, t_new, phi_new):
        if fac.min() <= 0:
            return np.full(state.grid.shape, np.inf)
        logdet += np.log(fac)
    f = _forcing(state.grid, state.f_fn, t_new)
    return (phi_new - state.phi) / dt - logdet - f


def linearized_operator(state: FlowState, phi: np.ndarray, t: float, dt: float,
                        ops) -> sp.csr_matrix:
    """D Psi_phi = I/dt - sum_m diag(1/(c_m + Lam_m phi)) Lam_m, with the
    Neumann rows replacing the outer radial faces."""
    grid = state.grid
    n = grid.size
    A = sp.identity(n, format="csr") * (1.0 / dt)
    factors = state.factors(ops, t, phi)
    for op, fac in zip(ops, factors):
        A = A - sp.diags(1.0 / fac.ravel()) @ op
    rows_all, mats = _neumann_rows(grid)
    A = A.tolil()
    for rows, mat in zip(rows_all, mats):
        idx = np.flatnonzero(rows)
        matc = mat.tocsr()
        for i in idx:
            start, end = matc.indptr[i], matc.indptr[i + 1]
            A.rows[i] = list(matc.indices[start:end])
            A.data[i] = list(matc.data[start:end])
    return A.tocsr()


def _boundary_rows_mask(grid: FlowGrid) -> np.ndarray:
    rows_all, _ = _neumann_rows(grid)
    mask = np.zeros(grid.size, dtype=bool)
    for rows in rows_all:
        mask |= rows
    return mask


def _step_residual(state: FlowState, phi, t_new, dt, ops, bmask) -> np.ndarray:
    """Newton residual: Psi on interior rows, the radial Neumann defect on
    the outer faces.  Infinite when a determinant factor loses positivity."""
    res = flow_residual(state, phi, t_new, dt, ops).ravel()
    if not np.all(np.isfinite(res)):
        return res
    res[bmask] = _radial_slope(state.grid, phi)[bmask]
    return res


def step_ma_flow(state: FlowState, dt: float | None = None) -> FlowState:
    """One implicit step by damped Newton; rejects on positivity breach
    (halving dt) and enforces the metric-equivalence sandwich."""
    cfg = state.config
    dt = cfg.dt if dt is None else dt
    ops = direction_operators(state.grid)
    bmask = _boundary_rows_mask(state.grid)
    halvings = 0
    while True:
        t_new = state.t + dt
        phi = state.phi.copy()
        res = _step_residual(state, phi, t_new, dt, ops, bmask)
        ok = np.all(np.isfinite(res))
        it = 0
        while ok and it < cfg.max_newton:
            rn = float(np.abs(res).max())
            if rn <= cfg.newton_tol:
                break
            A = linearized_operator(state, phi, t_new, dt, ops)
            delta, info = solve_sparse(A, -res, tol=1e-12)
            lam = 1.0
            for _ in range(cfg.max_halvings):
                cand = phi + lam * delta.reshape(state.grid.shape)
                res_c = _step_residual(state, cand, t_new, dt, ops, bmask)
                if np.all(np.isfinite(res_c)) and \
                        float(np.abs(res_c).max()) <= rn * (1 - 1e-4 * lam) + 1e-30:
                    phi, res = cand, res_c
                    break
                lam *= 0.5
            else:
                ok = False
            it += 1
        if ok and float(np.abs(res).max()) <= cfg.newton_tol * 10:
            factors = state.factors(ops, t_new, phi)
            fmin = min(float(f.min()) for f in factors)
            fmax = max(float(f.max()) for f in factors)
            if fmin >= max(1.0 / cfg.sandwich, cfg.positivity_floor) \
                    and fmax <= cfg.sandwich:
                state.times.append(t_new)
                state.values.append(phi)
                return state
        halvings += 1
        if halvings > cfg.max_halvings:
            raise RuntimeError("flow step rejected: Newton failed or "
                               "positivity breached at the minimum step")
        dt *= 0.5


def _radial_slope(grid: FlowGrid, phi: np.ndarray) -> np.ndarray:
    out = np.zeros(grid.size)
    for j in range(grid.angles.p):
        d1 = _axis_op(grid, derivative_matrix(grid.axes[j], 1), j)
        sl = np.zeros(grid.shape, dtype=bool)
        s = [slice(None)] * len(grid.shape)
        s[j] = -1
        sl[tuple(s)] = True
        out[sl.ravel()] = (d1 @ phi.ravel())[sl.ravel()]
    return out


def run_flow(state: FlowState, T: float, dt: float | None = None) -> FlowState:
    dt = dt or state.config.dt
    while state.t < T - 1e-12:
        step = min(dt, T - state.t)
        step_ma_flow(state, step)
    return state


def ricci_potential(state: FlowState, m: int | None = None) -> np.ndarray:
    """log(omega_t^n / omega_0^n) = phi_dot - f, via the determinant formula."""
    ops = direction_operators(state.grid)
    idx = len(state.times) - 1 if m is None else m
    t = state.times[idx]
    logdet = np.zeros(state.grid.shape)
    for fac in state.factors(ops, t, state.values[idx]):
        logdet += np.log(np.maximum(fac, 1e-300))
    return logdet


def linearization_check(state: FlowState, direction: np.ndarray, dt: float = 1e-3,
                        h: float = 1e-5) -> float:
    """Relative gap between D Psi_phi(v) and the centered finite difference
    of Psi in direction v (the inverse-function-theorem consistency check)."""
    ops = direction_operators(state.grid)
    t_new = state.t + dt
    phi = state.phi
    v = direction
    r_plus = flow_residual(state, phi + h * v, t_new, dt, ops)
    r_minus = flow_residual(state, phi - h * v, t_new, dt, ops)
    fd = (r_plus - r_minus) / (2 * h)
    lin = v / dt
    for m, op in enumerate(ops):
        fac = state.factors(ops, t_new, phi)[m]
        lin = lin - (op @ v.ravel()).reshape(state.grid.shape) / fac
    scale = max(float(np.abs(lin).max()), 1e-300)
    return float(np.abs(fd - lin).max()) / scale


# ---------------------------------------------------------------------------
# The Kahler-Ricci toy and the short-time horizon
# ---------------------------------------------------------------------------


def krf_reference(angles: ConeAngles, chi_tangential: float):
    """Reference family omega_hat_t = omega_0 + t * chi with chi a constant
    multiple of the flat tangential form: cone directions stay at 1, each
    tangential direction drifts as 1 + chi t."""
    p, n = angles.p, angles.n

    def c_fn(t):
        return np.array([1.0] * p + [1.0 + chi_tangential * t] * (n - p))

    return c_fn


@dataclass
class KrfReport:
    state: FlowState
    drift_slope: float
    chi: float
    ricci_seminorm: float
    horizon: float


def run_krf_toy(angles: ConeAngles, chi: float, T: float, f_fn=None,
                grid: FlowGrid | None = None, config: FlowConfig | None = None,
                alpha: float = 0.25) -> KrfReport:
    """Run the toy conical Kahler-Ricci flow and report the linear drift of
    the tangential metric coefficient, plus the parabolic Holder seminorm of
    the normalized Ricci potential along the trajectory."""
    grid = grid or flow_grid(angles)
    state = initial_state(grid, krf_reference(angles, chi), f_fn, config)
    run_flow(state, T)
    ops = direction_operators(grid)
    tang_dir = angles.p  # first tangential direction
    ts, coefs = [], []
    for m, t in enumerate(state.times):
        fac = state.factors(ops, t, state.values[m])[tang_dir] if angles.n > angles.p \
            else state.factors(ops, t, state.values[m])[0]
        ts.append(t)
        coefs.append(float(np.mean(fac)))
    ts = np.asarray(ts)
    coefs = np.asarray(coefs)
    A = np.stack([ts, np.ones_like(ts)], axis=1)
    slope = float(np.linalg.lstsq(A, coefs, rcond=None)[0][0])
    sem = ricci_potential_seminorm(state, alpha)
    return KrfReport(state, slope, chi, sem, state.t)


def ricci_potential_seminorm(state: FlowState, alpha: float,
                             n_samples: int = 400, seed: int = 0) -> float:
    """Parabolic Holder seminorm of phi_dot - f sampled on the trajectory."""
    rng = np.random.default_rng(seed)
    grid = state.grid
    pots = [ricci_potential(state, m).ravel() for m in range(len(state.times))]
    times = np.asarray(state.times)
    if len(times) < 2:
        return 0.0
    nodes = grid.size
    ii = rng.integers(0, nodes, n_samples)
    jj = rng.integers(0, nodes, n_samples)
    mi = rng.integers(0, len(times), n_samples)
    mj = rng.integers(0, len(times), n_samples)
    coords = np.meshgrid(*(ax.nodes for ax in grid.axes), indexing="ij")
    flat = np.stack([c.ravel() for c in coords], axis=1)
    best = 0.0
    for a in range(n_samples):
        if ii[a] == jj[a] and mi[a] == mj[a]:
            continue
        dsp = float(np.linalg.norm(flat[ii[a]] - flat[jj[a]]))
        d = max(math.sqrt(abs(times[mi[a]] - times[mj[a]])), dsp)
        if d <= 0:
            continue
        q = abs(pots[mi[a]][ii[a]] - pots[mj[a]][jj[a]]) / d**alpha
        best = max(best, q)
    return best


def find_short_time_horizon(state_builder, eps_ball: float, T_max: float,
                            alpha: float = 0.25, dt: float | None = None) -> float:
    """Largest dyadic T with the trajectory inside the eps-ball of the
    measured C^{2+alpha} surrogate norm ||phi||: monotone in eps."""
    state = state_builder()
    run_flow(state, T_max, dt)
    ops = direction_operators(state.grid)
    times = np.asarray(state.times)
    norms = np.empty(len(times))
    for m, t in enumerate(times):
        phi = state.values[m]
        second = max(float(np.abs(op @ phi.ravel()).max()) for op in ops)
        norms[m] = float(np.abs(phi).max()) + second
    running = np.maximum.accumulate(norms)
    T = T_max
    while T > 1e-6:
        sel = times <= T + 1e-15
        if running[sel].max() <= eps_ball:
            return T
        T /= 2.0
    raise RuntimeError("no admissible horizon at the minimum dyadic step")
