"""Cartesian-grid realization of the smoothly regularized cone Laplacian.

The regularized operator replaces the degenerate factor weight |z_j|^(2-2b_j)
by the smooth (|z_j|^2 + eps)^(1-b_j), so ordinary 5-point stencils apply:

    L_eps u = sum_j (|z_j|^2 + eps)^(1-b_j) * (1/4) (u_xx + u_yy)_j
              + sum_k u_{s_k s_k}.

This is the trace-form convention of the conical Laplacian written in the
complex coordinates (the 1/4 converts the real 2D Laplacian to d^2/dz dzbar).
As eps -> 0 the factor term converges to (b_j^2/4) L_j in the cone-polar
convention of `operators`; cross-checks multiply factor terms by 4/b_j^2
(`rescale_to_cone=True`) so the two solvers discretize the same operator.

Domains are products of per-factor disks {|z_j| < R_j} with a tangential
box; the circular boundary is handled with Shortley-Weller stencils on the
uniform grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import TWO_PI, ConeAngles


@dataclass(frozen=True)
class CartesianGrid:
    """Uniform tensor grid in (x_j, y_j) per factor plus tangential axes."""

    angles: ConeAngles
    factor_axes: tuple        # ((x_nodes, y_nodes), ...) per conical factor
    tangential_axes: tuple    # 1D arrays
    tangential_periodic: tuple = ()

    def __post_init__(self):
        if len(self.factor_axes) != self.angles.p:
            raise ValueError("need one (x, y) axis pair per conical factor")
        if len(self.tangential_axes) != self.angles.tangential_dim:
            raise ValueError("tangential axis count mismatch")
        if not self.tangential_periodic:
            object.__setattr__(self, "tangential_periodic",
                               (False,) * len(self.tangential_axes))

    @property
    def axes(self) -> tuple:
        out = []
        for x, y in self.factor_axes:
            out.extend((x, y))
        out.extend(self.tangential_axes)
        return tuple(out)

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def coords(self):
        return np.meshgrid(*self.axes, indexing="ij", sparse=True)


def cartesian_box_grid(angles: ConeAngles, halfwidth, n_xy, tangential_halfwidth=1.0,
                       n_tangential=9) -> CartesianGrid:
    """Uniform box [-a, a]^2 per factor times a tangential box."""
    halfwidth = [halfwidth] * angles.p if np.isscalar(halfwidth) else list(halfwidth)
    n_xy = [n_xy] * angles.p if np.isscalar(n_xy) else list(n_xy)
    fax = tuple((np.linspace(-a, a, n), np.linspace(-a, a, n))
                for a, n in zip(halfwidth, n_xy))
    tax = tuple(np.linspace(-tangential_halfwidth, tangential_halfwidth, n_tangential)
                for _ in range(angles.tangential_dim))
    return CartesianGrid(angles, fax, tax)


class CartCoords:
    """Broadcast coordinate accessors mirroring grids.GridCoords."""

    def __init__(self, grid: CartesianGrid):
        self.grid = grid
        self._c = grid.coords()

    def x(self, j):
        return self._c[2 * j]

    def y(self, j):
        return self._c[2 * j + 1]

    def s(self, k):
        return self._c[2 * self.grid.angles.p + k]

    def rho(self, j):
        return np.sqrt(self.x(j) ** 2 + self.y(j) ** 2)

    def r(self, j):
        return self.rho(j) ** self.grid.angles.betas[j]

    def theta(self, j):
        return np.mod(np.arctan2(self.y(j), self.x(j)), TWO_PI)


def evaluate_on_cartesian(grid: CartesianGrid, fn) -> np.ndarray:
    return np.broadcast_to(np.asarray(fn(CartCoords(grid)), dtype=float), grid.shape).copy()


def _d2_uniform(nodes, periodic=False) -> sp.csr_matrix:
    k = len(nodes)
    h = nodes[1] - nodes[0]
    main = np.full(k, -2.0) / h**2
    off = np.full(k - 1, 1.0) / h**2
    mat = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    if periodic:
        mat[0, -1] = 1.0 / h**2
        mat[-1, 0] = 1.0 / h**2
    else:
        # one-sided second-order rows at the ends
        mat[0, 0:4] = 0.0
        mat[-1, -4:] = 0.0
        c = np.array([2.0, -5.0, 4.0, -1.0]) / h**2
        mat[0, 0:4] = c
        mat[-1, -4:] = c[::-1]
    return mat.tocsr()


def _axis_op(grid: CartesianGrid, mat, axis_idx) -> sp.csr_matrix:
    shape = grid.shape
    before = int(np.prod(shape[:axis_idx], dtype=int))
    after = int(np.prod(shape[axis_idx + 1:], dtype=int))
    return sp.kron(sp.identity(before, format="csr"),
                   sp.kron(mat, sp.identity(after, format="csr"), format="csr"),
                   format="csr")


def regularized_coefficients(grid: CartesianGrid, eps: float,
                             rescale_to_cone: bool = False):
    """Per-factor smooth weights (|z_j|^2 + eps)^(1-b_j) [* 4/b_j^2].

    Nodes sitting on the stratum |z_j| < h/2 carry the finite-volume cell
    average of the weight instead of its point value: the point value
    eps^(1-b) vanishes as eps -> 0 at fixed spacing and would decouple the
    stratum rows from the bulk (the eps -> 0 and h -> 0 limits do not
    commute otherwise).  The average keeps the fixed-grid limit consistent
    with the cone operator's pole closure.
    """
    if eps <= 0.0:
        raise ValueError("regularization parameter eps must be positive")
    c = CartCoords(grid)
    out = []
    for j, b in enumerate(grid.angles.betas):
        x, y = c.x(j), c.y(j)
        rho2 = x**2 + y**2
        w = (rho2 + eps) ** (1.0 - b)
        h = grid.axes[2 * j][1] - grid.axes[2 * j][0]
        # cell average over an equal-area disk of radius h/sqrt(pi)
        R2 = h**2 / math.pi
        avg = (math.pi / (h**2 * (2.0 - b))) * ((R2 + eps) ** (2.0 - b)
                                                - eps ** (2.0 - b))
        w = np.where(rho2 < (0.5 * h) ** 2, avg, w)
        if rescale_to_cone:
            w = w * (4.0 / b**2)
        out.append(np.broadcast_to(w, grid.shape))
    return out


def apply_regularized_laplacian(values: np.ndarray, eps: float, grid: CartesianGrid,
                                rescale_to_cone: bool = False) -> np.ndarray:
    """Smooth approximating Laplacian on the full Cartesian box.

    Returns sum_j (|z_j|^2+eps)^(1-b_j) (1/4)(u_xx + u_yy) plus tangential
    second derivatives; with rescale_to_cone the factor terms carry the
    4/b_j^2 convention factor so the eps -> 0 limit matches
    apply_conical_laplacian.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ValueError("value shape does not match the grid")
    coefs = regularized_coefficients(grid, eps, rescale_to_cone)
    flat = values.ravel()
    out = np.zeros_like(flat)
    for j in range(grid.angles.p):
        d2x = _axis_op(grid, _d2_uniform(grid.axes[2 * j]), 2 * j)
        d2y = _axis_op(grid, _d2_uniform(grid.axes[2 * j + 1]), 2 * j + 1)
        out += coefs[j].ravel() * (0.25 * (d2x @ flat + d2y @ flat))
    p = grid.angles.p
    for k in range(grid.angles.tangential_dim):
        d2s = _axis_op(grid, _d2_uniform(grid.axes[2 * p + k],
                                         grid.tangential_periodic[k]), 2 * p + k)
        out += d2s @ flat
    return out.reshape(grid.shape)


# ---------------------------------------------------------------------------
# Dirichlet assembly on the product-of-disks domain (Shortley-Weller)
# ---------------------------------------------------------------------------


@dataclass
class RegularizedSystem:
    """Assembled eps-regularized Dirichlet problem on {|z_j| < R_j} x box."""

    grid: CartesianGrid
    eps: float
    radii: tuple
    matrix: sp.csr_matrix
    interior: np.ndarray                   # boolean mask over grid nodes
    boundary_terms: list = field(default_factory=list)
    # boundary_terms entries: (flat_row, weight, point_coords) where the
    # Shortley-Weller stencil reaches a circle intercept with known value.

    def rhs(self, f_fn=None, phi_fn=None) -> np.ndarray:
        """Right-hand side for  matrix @ u = rhs  given f and boundary phi."""
        vals = np.zeros(self.grid.shape)
        if f_fn is not None:
            vals = evaluate_on_cartesian(self.grid, f_fn)
        rhs = np.where(self.interior, vals, 0.0).ravel()
        # Dirichlet rows: clamp non-interior nodes to phi at their radial
        # projection onto the closest violated circle.
        out_idx = np.flatnonzero(~self.interior.ravel())
        if phi_fn is not None and len(out_idx):
            pts = self._node_points(out_idx, project=True)
            rhs[out_idx] = phi_fn(pts)
        for row, weight, point in self.boundary_terms:
            if phi_fn is not None:
                rhs[row] -= weight * phi_fn(point[None, :])[0]
        return rhs

    def _node_points(self, flat_idx, project=False) -> np.ndarray:
        axes = self.grid.axes
        unr = np.unravel_index(flat_idx, self.grid.shape)
        cols = [axes[i][unr[i]] for i in range(len(axes))]
        pts = np.stack(cols, axis=1)
        if project:
            for j, R in enumerate(self.radii):
                x, y = pts[:, 2 * j], pts[:, 2 * j + 1]
                rho = np.hypot(x, y)
                scale = np.where(rho > R, R / np.maximum(rho, 1e-300), 1.0)
                pts[:, 2 * j] = x * scale
                pts[:, 2 * j + 1] = y * scale
        return pts


def assemble_regularized(grid: CartesianGrid, eps: float, radii,
                         rescale_to_cone: bool = True) -> RegularizedSystem:
    """Assemble L_eps with Dirichlet data on the product-of-disks boundary.

    Interior nodes adjacent to a circle get Shortley-Weller stencils whose
    intercept contributions are returned for the right-hand side builder.
    """
    radii = tuple([radii] * grid.angles.p if np.isscalar(radii) else radii)
    p = grid.angles.p
    axes = grid.axes
    shape = grid.shape
    coefs = regularized_coefficients(grid, eps, rescale_to_cone)

    inside = np.ones(shape, dtype=bool)
    cc = CartCoords(grid)
    for j, R in enumerate(radii):
        inside &= np.broadcast_to(cc.rho(j) < R, shape)
    for k in range(grid.angles.tangential_dim):
        ax = axes[2 * p + k]
        if not grid.tangential_periodic[k]:
            sl = [slice(None)] * len(shape)
            sel = np.zeros(shape, dtype=bool)
            sl[2 * p + k] = [0, len(ax) - 1]
            sel[tuple(sl)] = True
            inside &= ~sel

    for j, R in enumerate(radii):
        for ax in (axes[2 * j], axes[2 * j + 1]):
            if not (ax[0] <= -R and ax[-1] >= R):
                raise ValueError("factor box must cover the disk of radius R")

    rows, cols, data = [], [], []
    boundary_terms = []
    flat_inside = inside.ravel()
    strides = [int(np.prod(shape[i + 1:], dtype=int)) for i in range(len(shape))]
    idx_inside = np.flatnonzero(flat_inside)
    unr = np.unravel_index(idx_inside, shape)
    node_coord = np.stack([axes[i][unr[i]] for i in range(len(shape))], axis=1)
    coef_flat = [c.ravel() for c in coefs]

    for row_pos in range(len(idx_inside)):
        flat = int(idx_inside[row_pos])
        diag_acc = 0.0
        for axis_i in range(len(shape)):
            ax = axes[axis_i]
            h = ax[1] - ax[0]
            i_here = int(unr[axis_i][row_pos])
            if axis_i < 2 * p:
                j_fac = axis_i // 2
                scale = 0.25 * coef_flat[j_fac][flat]
                R = radii[j_fac]
                xv = node_coord[row_pos, 2 * j_fac]
                yv = node_coord[row_pos, 2 * j_fac + 1]
                is_x = (axis_i % 2 == 0)
            else:
                periodic = grid.tangential_periodic[axis_i - 2 * p]
                scale = 1.0
            h_side, nbr = [], []
            for direction in (-1, +1):
                ii = i_here + direction
                if axis_i < 2 * p:
                    nx = ax[ii] if is_x else xv
                    ny = yv if is_x else ax[ii]
                    if math.hypot(nx, ny) >= R:
                        # Shortley-Weller intercept on the circle
                        other = yv if is_x else xv
                        cur = xv if is_x else yv
                        root = math.sqrt(max(R * R - other * other, 0.0))
                        inter = root if direction > 0 else -root
                        point = node_coord[row_pos].copy()
                        point[axis_i] = inter
                        h_side.append(max(abs(inter - cur), 1e-3 * h))
                        nbr.append(("bnd", point))
                        continue
                elif periodic:
                    ii %= shape[axis_i]
                h_side.append(h)
                nbr.append(("node", flat + (ii - i_here) * strides[axis_i]))
            hm, hp = h_side
            diag_acc += -2.0 / (hm * hp) * scale
            for w, (kind, target) in ((2.0 / (hm * (hm + hp)) * scale, nbr[0]),
                                      (2.0 / (hp * (hm + hp)) * scale, nbr[1])):
                if kind == "node":
                    rows.append(flat)
                    cols.append(int(target))
                    data.append(w)
                else:
                    boundary_terms.append((flat, float(w), target))
        rows.append(flat)
        cols.append(flat)
        data.append(diag_acc)

    n = int(np.prod(shape))
    mat = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tolil()
    for i in np.flatnonzero(~flat_inside):
        mat.rows[i] = [int(i)]
        mat.data[i] = [1.0]
    return RegularizedSystem(grid, eps, radii, mat.tocsr(), inside, boundary_terms)
