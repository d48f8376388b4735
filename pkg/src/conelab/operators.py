"""Discrete conical operators on cone-polar tensor grids.

The Laplacian convention is fixed once for the whole artifact: per conical
factor it is the polar identity

    L_j u = u_rr + u_r / r + u_thth / (beta_j^2 r^2),

and the tangential part is the full real Laplacian sum_k u_{s_k s_k}.  This
is exactly the Laplace-Beltrami operator of the cone metric.  The complex
Hessian entry in the epsilon_j-frame is L_j u / 4, so the trace-form complex
Laplacian (weight |z|^(2-2beta) d^2/dz dzbar per factor) equals
(beta_j^2 / 4) L_j; all cross-checks against Cartesian realizations apply
this per-factor rescaling.  See also `cartesian.apply_regularized_laplacian`.

Apex handling: at r_j = 0 the factor operator is closed by the standard
finite-volume pole condition L_j u(0) = 4 (mean_theta u(r_1) - u(0)) / r_1^2.
First-derivative stencils at nodes where the centered weight would break
monotonicity (h_+ > 2 r_i, reachable only for grading exponents above
log2(3)) fall back to the forward difference so the interior rows stay an
M-matrix and the discrete maximum principle holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import ConeAngles
from .grids import ANGULAR, RADIAL, TANGENTIAL, Axis, Grid, GridFunction

# ---------------------------------------------------------------------------
# 1D stencils
# ---------------------------------------------------------------------------


def fd_weights(x, x0, m):
    """Finite-difference weights for the m-th derivative at x0 (Fornberg)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((n, m + 1))
    c[0, 0] = 1.0
    c1, c4 = 1.0, x[0] - x0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def derivative_matrix(axis: Axis, order: int) -> sp.csr_matrix:
    """Sparse 1D derivative matrix, second-order accurate.

    Interior rows use centered 3-point stencils; ends use one-sided 3-point
    stencils, or wrap around for periodic axes.
    """
    x = axis.nodes
    k = len(x)
    mat = sp.lil_matrix((k, k))
    if axis.periodic:
        ext = np.concatenate([[x[0] - (x[0] + axis.period - x[-1])], x,
                              [x[-1] + (x[0] + axis.period - x[-1])]])
        for i in range(k):
            w = fd_weights(ext[i:i + 3], x[i], order)
            mat[i, (i - 1) % k] += w[0]
            mat[i, i] += w[1]
            mat[i, (i + 1) % k] += w[2]
    else:
        for i in range(k):
            lo = min(max(i - 1, 0), k - 3)
            w = fd_weights(x[lo:lo + 3], x[i], order)
            mat[i, lo:lo + 3] = w
    return mat.tocsr()


def _radial_block(axis: Axis) -> sp.csr_matrix:
    """Radial part u_rr + u_r / r on one radial axis; apex row left empty.

    Rows where the centered u_r/r weight on the inner neighbor would turn
    negative switch the first derivative to the forward difference.
    """
    x = axis.nodes
    k = len(x)
    mat = sp.lil_matrix((k, k))
    start = 1 if axis.pole else 0
    for i in range(start, k):
        lo = min(max(i - 1, 0), k - 3)
        sub = x[lo:lo + 3]
        w2 = fd_weights(sub, x[i], 2)
        w1 = fd_weights(sub, x[i], 1)
        if 0 < i < k - 1:
            hp = x[i + 1] - x[i]
            if hp > 2.0 * x[i]:  # monotonicity guard near the apex
                w1 = np.array([0.0, -1.0 / hp, 1.0 / hp])
        mat[i, lo:lo + 3] = w2 + w1 / x[i]
    return mat.tocsr()


def _axis_operator(grid: Grid, mat: sp.spmatrix, axis_idx: int) -> sp.csr_matrix:
    """Lift a 1D operator on one axis to the full tensor grid (C order)."""
    shape = grid.shape
    before = int(np.prod(shape[:axis_idx], dtype=int))
    after = int(np.prod(shape[axis_idx + 1:], dtype=int))
    return sp.kron(sp.identity(before, format="csr"),
                   sp.kron(mat, sp.identity(after, format="csr"), format="csr"),
                   format="csr")


def _coef_diag(grid: Grid, coef) -> sp.dia_matrix:
    c = np.broadcast_to(np.asarray(coef, dtype=float), grid.shape)
    return sp.diags(c.ravel())


def factor_laplacian(grid: Grid, j: int) -> sp.csr_matrix:
    """Full-grid matrix of L_j = u_rr + u_r/r + u_thth/(beta^2 r^2), with the
    finite-volume apex closure when the radial axis carries the pole."""
    beta = grid.angles.betas[j]
    rax, tax = grid.radial(j), grid.theta(j)
    out = _axis_operator(grid, _radial_block(rax), 2 * j)
    r = rax.nodes.copy()
    if rax.pole:
        r[0] = 1.0  # placeholder; apex theta-coefficient vanishes below
    cth = 1.0 / (beta**2 * r**2)
    if rax.pole:
        cth[0] = 0.0
    shape = [1] * len(grid.axes)
    shape[2 * j] = len(r)
    out = out + _coef_diag(grid, cth.reshape(shape)) @ _axis_operator(
        grid, derivative_matrix(tax, 2), 2 * j + 1)
    if rax.pole:
        out = out + _apex_closure(grid, j)
    return out.tocsr()


def _apex_closure(grid: Grid, j: int) -> sp.csr_matrix:
    """Pole rows: L_j u(0) = 4 (mean_theta u(r_1, .) - u(0)) / r_1^2."""
    rax, tax = grid.radial(j), grid.theta(j)
    r1 = rax.nodes[1]
    kr, kt = rax.size, tax.size
    block = sp.lil_matrix((kr * kt, kr * kt))
    w = 4.0 / r1**2
    for it in range(kt):
        row = it  # (ir=0, it)
        block[row, row] = -w
        for it2 in range(kt):
            block[row, kt + it2] += w / kt  # (ir=1, it2)
    shape = grid.shape
    before = int(np.prod(shape[:2 * j], dtype=int))
    after = int(np.prod(shape[2 * j + 2:], dtype=int))
    return sp.kron(sp.identity(before, format="csr"),
                   sp.kron(block.tocsr(), sp.identity(after, format="csr"), format="csr"),
                   format="csr")


def flat_laplacian(grid: Grid) -> sp.csr_matrix:
    """Full-grid conical Laplacian Delta_beta (no boundary row treatment)."""
    out = None
    for j in range(grid.angles.p):
        blk = factor_laplacian(grid, j)
        out = blk if out is None else out + blk
    for k in range(grid.angles.tangential_dim):
        idx = grid.axis_index(TANGENTIAL, k)
        blk = _axis_operator(grid, derivative_matrix(grid.tangential(k), 2), idx)
        out = blk if out is None else out + blk
    return out.tocsr()


def apply_conical_laplacian(u: GridFunction, angles: ConeAngles | None = None) -> GridFunction:
    """Delta_beta u on the grid; second-order accurate away from r = 0."""
    grid = u.grid
    if angles is not None and angles != grid.angles:
        raise ValueError("angle vector does not match the grid")
    if any(ax.size < 3 for ax in grid.axes):
        raise ValueError("grid too small for second-order stencils")
    vals = flat_laplacian(grid) @ u.values.ravel()
    return GridFunction(grid, vals.reshape(grid.shape))


# ---------------------------------------------------------------------------
# The second-order operator family T
# ---------------------------------------------------------------------------

FIRST_ORDER_KINDS = ("r", "th", "s")


def first_order_matrix(grid: Grid, op) -> sp.csr_matrix:
    """Full-grid matrix of a first-order operator.

    op is ("r", j) for d/dr_j, ("th", j) for (beta_j r_j)^-1 d/dtheta_j, or
    ("s", k) for d/ds_k.  The ("th", j) rows at the apex are zeroed; callers
    needing apex values extrapolate radially (see apply_T).
    """
    kind, idx = op
    if kind == "r":
        return _axis_operator(grid, derivative_matrix(grid.radial(idx), 1), 2 * idx)
    if kind == "s":
        ax_i = grid.axis_index(TANGENTIAL, idx)
        return _axis_operator(grid, derivative_matrix(grid.tangential(idx), 1), ax_i)
    if kind == "th":
        rax = grid.radial(idx)
        beta = grid.angles.betas[idx]
        r = rax.nodes.copy()
        coef = np.zeros_like(r)
        pos = r > 0
        coef[pos] = 1.0 / (beta * r[pos])
        shape = [1] * len(grid.axes)
        shape[2 * idx] = len(r)
        d1 = _axis_operator(grid, derivative_matrix(grid.theta(idx), 1), 2 * idx + 1)
        return (_coef_diag(grid, coef.reshape(shape)) @ d1).tocsr()
    raise ValueError(f"unknown first-order operator {op}")


def _fix_apex_rows(grid: Grid, values: np.ndarray, ops) -> np.ndarray:
    """Radially extrapolate values onto apex slices of factors whose angular
    derivative was taken (the 1/r coefficient is not defined at r = 0)."""
    for kind, j in ops:
        if kind == "th" and grid.radial(j).pole:
            sl1 = [slice(None)] * values.ndim
            sl2 = [slice(None)] * values.ndim
            sl0 = [slice(None)] * values.ndim
            sl0[2 * j], sl1[2 * j], sl2[2 * j] = 0, 1, 2
            values[tuple(sl0)] = 2.0 * values[tuple(sl1)] - values[tuple(sl2)]
    return values


def apply_first(u: GridFunction, op) -> GridFunction:
    """Apply one of the first-order operators N_j (either kind) or D'."""
    vals = (first_order_matrix(u.grid, op) @ u.values.ravel()).reshape(u.grid.shape)
    return GridFunction(u.grid, _fix_apex_rows(u.grid, vals, [op]))


def validate_T_tag(tag, angles: ConeAngles):
    if isinstance(tag, tuple) and len(tag) == 2 and tag[0] == "lap":
        if not 0 <= tag[1] < angles.p:
            raise ValueError(f"no conical factor {tag[1]}")
        return
    if not (isinstance(tag, tuple) and len(tag) == 2
            and all(isinstance(o, tuple) and len(o) == 2 for o in tag)):
        raise ValueError(f"invalid operator tag {tag!r}")
    (k1, i1), (k2, i2) = tag
    if k1 not in FIRST_ORDER_KINDS or k2 not in FIRST_ORDER_KINDS:
        raise ValueError(f"invalid operator tag {tag!r}")
    conical = [o for o in tag if o[0] in ("r", "th")]
    if len(conical) == 2 and conical[0][1] == conical[1][1]:
        raise ValueError("N_j N_k requires distinct factors j != k; "
                         "same-factor second order is exposed as ('lap', j)")


def apply_T(u: GridFunction, tag, angles: ConeAngles | None = None) -> GridFunction:
    """Apply a second-order operator from the family
    {Delta_j, N_j N_k (j != k), N_j D', D' D'}.

    Tags: ("lap", j), or a pair of first-order ops such as
    (("r", 0), ("s", 1)) for d^2/(dr_1 ds_2).
    """
    grid = u.grid
    validate_T_tag(tag, grid.angles)
    if tag[0] == "lap":
        vals = factor_laplacian(grid, tag[1]) @ u.values.ravel()
        return GridFunction(grid, vals.reshape(grid.shape))
    op1, op2 = tag
    if op1[0] == "s" and op2[0] == "s" and op1[1] == op2[1]:
        ax_i = grid.axis_index(TANGENTIAL, op1[1])
        mat = _axis_operator(grid, derivative_matrix(grid.tangential(op1[1]), 2), ax_i)
        return GridFunction(grid, (mat @ u.values.ravel()).reshape(grid.shape))
    inner = apply_first(u, op2)
    vals = (first_order_matrix(grid, op1) @ inner.values.ravel()).reshape(grid.shape)
    return GridFunction(grid, _fix_apex_rows(grid, vals, [op1]))


def T_family(angles: ConeAngles):
    """Every tag of the T-family for the given dimensions, grouped."""
    p, m = angles.p, angles.tangential_dim
    tags = {"lap": [("lap", j) for j in range(p)], "NN": [], "ND": [], "DD": []}
    for j in range(p):
        for k in range(p):
            if j < k:
                for a in ("r", "th"):
                    for b in ("r", "th"):
                        tags["NN"].append(((a, j), (b, k)))
        for a in ("r", "th"):
            for k in range(m):
                tags["ND"].append(((a, j), ("s", k)))
    for k1 in range(m):
        for k2 in range(k1, m):
            tags["DD"].append((("s", k1), ("s", k2)))
    return tags


def gradient_norm(u: GridFunction) -> np.ndarray:
    """|grad u|_{g_beta} on the nodes: sqrt(sum N_j u^2 + sum D'u^2)."""
    grid = u.grid
    acc = np.zeros(grid.shape)
    for j in range(grid.angles.p):
        acc += apply_first(u, ("r", j)).values ** 2
        acc += apply_first(u, ("th", j)).values ** 2
    for k in range(grid.angles.tangential_dim):
        acc += apply_first(u, ("s", k)).values ** 2
    return np.sqrt(acc)


# ---------------------------------------------------------------------------
# Non-flat conical metrics in the epsilon_j frame
# ---------------------------------------------------------------------------


@dataclass
class MetricField:
    """Conical Kahler metric coefficients in the non-holomorphic frame
    {eps_j = dr_j + i beta_j r_j dtheta_j, dz_k}.

    g_eps[j, k]   : Hermitian block over the conical factors,
    g_cross[j, t] : couplings between eps_j and tangential dz_t,
    g_tan[t, t']  : Hermitian tangential block.

    All coefficient arrays broadcast against the grid shape.  The flat cone
    metric is the identity in this frame.  Validation enforces Hermitian
    positive-definiteness with eigenvalues inside [1/C, C] and projects
    cross terms to zero on the stratum slices (they must vanish there).
    """

    grid: Grid
    g_eps: np.ndarray
    g_cross: np.ndarray
    g_tan: np.ndarray
    equivalence: float = 4.0

    def __post_init__(self):
        p = self.grid.angles.p
        q = self.grid.angles.n - p
        self.g_eps = self._expand(self.g_eps, (p, p))
        self.g_cross = self._expand(self.g_cross, (p, q))
        self.g_tan = self._expand(self.g_tan, (q, q))
        self._project_cross_at_strata()
        self._validate()

    def _expand(self, arr, head):
        arr = np.asarray(arr, dtype=complex)
        target = head + self.grid.shape
        if arr.shape == head:
            arr = arr.reshape(head + (1,) * len(self.grid.shape))
        return np.ascontiguousarray(np.broadcast_to(arr, target)).copy()

    def _project_cross_at_strata(self, tol: float = 1e-10):
        for j in range(self.grid.angles.p):
            if not self.grid.radial(j).pole:
                continue
            sl = [slice(None)] * len(self.grid.shape)
            sl[2 * j] = 0
            for k in range(self.grid.angles.p):
                if k != j:
                    block = self.g_eps[(j, k) + tuple(sl)]
                    block[np.abs(block) < tol] = 0.0
                    self.g_eps[(j, k) + tuple(sl)] = block
                    self.g_eps[(k, j) + tuple(sl)] = np.conj(block)
            for t in range(self.g_cross.shape[1]):
                block = self.g_cross[(j, t) + tuple(sl)]
                block[np.abs(block) < tol] = 0.0
                self.g_cross[(j, t) + tuple(sl)] = block

    def hermitian_matrix(self) -> np.ndarray:
        """Node-wise full Hermitian matrix, shape (*grid, n, n)."""
        p = self.grid.angles.p
        q = self.grid.angles.n - p
        n = p + q
        shp = self.grid.shape
        H = np.zeros(shp + (n, n), dtype=complex)
        H[..., :p, :p] = np.moveaxis(self.g_eps, (0, 1), (-2, -1))
        if q:
            H[..., :p, p:] = np.moveaxis(self.g_cross, (0, 1), (-2, -1))
            H[..., p:, :p] = np.conj(np.swapaxes(H[..., :p, p:], -1, -2))
            H[..., p:, p:] = np.moveaxis(self.g_tan, (0, 1), (-2, -1))
        return H

    def _validate(self):
        H = self.hermitian_matrix()
        herm_gap = np.max(np.abs(H - np.conj(np.swapaxes(H, -1, -2))))
        if herm_gap > 1e-12:
            raise ValueError(f"metric coefficients not Hermitian (gap {herm_gap:.2e})")
        ev = np.linalg.eigvalsh(H)
        lo, hi = float(ev.min()), float(ev.max())
        if lo <= 0.0:
            raise ValueError(f"metric not positive definite (min eigenvalue {lo:.3e})")
        C = self.equivalence
        if lo < 1.0 / C - 1e-12 or hi > C + 1e-12:
            raise ValueError(
                f"metric eigenvalues [{lo:.3e}, {hi:.3e}] escape the band "
                f"[1/{C}, {C}]")
        self.eigen_range = (lo, hi)

    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.hermitian_matrix())


def flat_metric(grid: Grid) -> MetricField:
    p = grid.angles.p
    q = grid.angles.n - p
    return MetricField(grid, np.eye(p), np.zeros((p, max(q, 1)))[:, :q], np.eye(q))


@dataclass
class AssembledOperator:
    """Sparse realization of the (possibly non-flat) conical Laplacian with
    Dirichlet rows at the grid boundary."""

    grid: Grid
    matrix: sp.csr_matrix
    boundary: np.ndarray       # boolean mask, grid shape
    diag_dominance_margin: float

    @property
    def interior(self) -> np.ndarray:
        return ~self.boundary


def _diag_dominance_margin(mat: sp.csr_matrix, interior_flat: np.ndarray) -> float:
    m = mat.tocsr()
    diag = np.abs(m.diagonal())
    absrow = np.asarray(np.abs(m).sum(axis=1)).ravel()
    off = absrow - diag
    margin = (diag - off)[interior_flat]
    return float(margin.min()) if len(margin) else 0.0


def assemble_laplacian_matrix(grid: Grid, metric: MetricField | None = None) -> AssembledOperator:
    """Sparse operator matching apply_conical_laplacian on interior nodes
    (flat) or the metric Laplacian 4 * g^{AB} h_AB in the eps-frame, with
    identity rows at Dirichlet boundary nodes."""
    if metric is None:
        mat = flat_laplacian(grid)
    else:
        if metric.grid is not grid and metric.grid.shape != grid.shape:
            raise ValueError("metric lives on a different grid")
        mat = _metric_operator(grid, metric)
    boundary = grid.boundary_mask()
    bidx = np.flatnonzero(boundary.ravel())
    mat = mat.tolil()
    for i in bidx:
        mat.rows[i] = [i]
        mat.data[i] = [1.0]
    mat = mat.tocsr()
    margin = _diag_dominance_margin(mat, np.flatnonzero(~boundary.ravel()))
    return AssembledOperator(grid, mat, boundary, margin)


def _stratum_zero(grid: Grid, coef: np.ndarray, factors) -> np.ndarray:
    """Zero a coefficient field on the stratum slices of the given factors."""
    out = np.array(np.broadcast_to(coef, grid.shape), dtype=float)
    for j in factors:
        if grid.radial(j).pole:
            sl = [slice(None)] * len(grid.shape)
            sl[2 * j] = 0
            out[tuple(sl)] = 0.0
    return out


def _metric_operator(grid: Grid, metric: MetricField) -> sp.csr_matrix:
    """4 sum_{A,B} g^{A Bbar} h_{A Bbar}(u) in the eps-frame.

    h_{j jbar} = L_j u / 4 per conical factor and the identity-metric case
    reduces exactly to the flat Laplacian.  Cross terms are combinations of
    the T-family; their coefficients vanish on the strata, so the angular
    first-order factors never need apex values.
    """
    p = grid.angles.p
    q = grid.angles.n - p
    ginv = metric.inverse()          # (*grid, n, n)
    out = None

    def add(term):
        nonlocal out
        out = term if out is None else out + term

    def D(op):
        return first_order_matrix(grid, op)

    # conical diagonal: Re ginv_jj * L_j
    for j in range(p):
        add(_coef_diag(grid, ginv[..., j, j].real) @ factor_laplacian(grid, j))
    # conical cross terms, j < k
    for j in range(p):
        for k in range(j + 1, p):
            a = _stratum_zero(grid, ginv[..., j, k].real, (j, k))
            b = _stratum_zero(grid, ginv[..., j, k].imag, (j, k))
            P = D(("r", j)) @ D(("r", k)) + D(("th", j)) @ D(("th", k))
            Q = D(("r", j)) @ D(("th", k)) - D(("th", j)) @ D(("r", k))
            add(_coef_diag(grid, 2.0 * a) @ P + _coef_diag(grid, -2.0 * b) @ Q)
    # conical-tangential couplings; tangential pair t has real coords (2t, 2t+1)
    for j in range(p):
        for t in range(q):
            a = _stratum_zero(grid, ginv[..., j, p + t].real, (j,))
            b = _stratum_zero(grid, ginv[..., j, p + t].imag, (j,))
            sa, sb = ("s", 2 * t), ("s", 2 * t + 1)
            P = D(("r", j)) @ D(sa) + D(("th", j)) @ D(sb)
            Q = D(("r", j)) @ D(sb) - D(("th", j)) @ D(sa)
            add(_coef_diag(grid, 2.0 * a) @ P + _coef_diag(grid, -2.0 * b) @ Q)
    # tangential block
    for t in range(q):
        sa, sb = 2 * t, 2 * t + 1
        lap_t = (_axis_operator(grid, derivative_matrix(grid.tangential(sa), 2),
                                grid.axis_index(TANGENTIAL, sa))
                 + _axis_operator(grid, derivative_matrix(grid.tangential(sb), 2),
                                  grid.axis_index(TANGENTIAL, sb)))
        add(_coef_diag(grid, ginv[..., p + t, p + t].real) @ lap_t)
        for t2 in range(t + 1, q):
            a = np.broadcast_to(ginv[..., p + t, p + t2].real, grid.shape)
            b = np.broadcast_to(ginv[..., p + t, p + t2].imag, grid.shape)
            ta, tb = ("s", 2 * t), ("s", 2 * t + 1)
            ua, ub = ("s", 2 * t2), ("s", 2 * t2 + 1)
            P = D(ta) @ D(ua) + D(tb) @ D(ub)
            Q = D(ta) @ D(ub) - D(tb) @ D(ua)
            add(_coef_diag(grid, 2.0 * a) @ P + _coef_diag(grid, -2.0 * b) @ Q)
    return out.tocsr()
