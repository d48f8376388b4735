"""Tensor-product grids in cone-polar plus tangential coordinates.

Axis order is canonical: (r_1, theta_1, ..., r_p, theta_p, s_1, ..., s_m)
with m = 2(n-p).  Radial axes may start at the apex r = 0 (pole closure) or
at a positive inner radius (Dirichlet face); angular axes are either the full
periodic circle or a Dirichlet window; tangential axes are uniform intervals,
Dirichlet or periodic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .geometry import TWO_PI, ConeAngles, ConePoint, PointCloud, factor_distance

RADIAL, ANGULAR, TANGENTIAL = "radial", "angular", "tangential"


@dataclass(frozen=True)
class Axis:
    kind: str
    nodes: np.ndarray
    periodic: bool = False
    pole: bool = False          # radial axes only: nodes[0] == 0
    factor: int = -1            # owning conical factor; -1 for tangential
    period: float = 0.0         # periodic axes only

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or len(nodes) < 3:
            raise ValueError("axis needs at least 3 nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("axis nodes must be strictly increasing")
        if self.kind == RADIAL:
            if self.pole and nodes[0] != 0.0:
                raise ValueError("pole axis must start at r = 0")
            if not self.pole and nodes[0] <= 0.0:
                raise ValueError("non-pole radial axis must start at r > 0")
        if self.kind == ANGULAR:
            if self.periodic and (len(nodes) < 8 or len(nodes) % 2):
                raise ValueError("full angular circles need >= 8 nodes, even count")

    @property
    def size(self) -> int:
        return len(self.nodes)

    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)


def radial_axis(radius: float, count: int, beta: float, grading: float | None = None,
                inner: float = 0.0) -> Axis:
    """Graded radial axis r_i = R (i/N)^gamma, gamma = max(1, 1/beta) by default.

    With inner > 0 the axis is the uniform window [inner, radius] instead
    (used by off-apex subdomain solves).
    """
    if inner > 0.0:
        return Axis(RADIAL, np.linspace(inner, radius, count), pole=False)
    gamma = max(1.0, 1.0 / beta) if grading is None else float(grading)
    i = np.arange(count + 1, dtype=float)
    return Axis(RADIAL, radius * (i / count) ** gamma, pole=True)


def angular_axis(count: int, window: tuple | None = None) -> Axis:
    """Full periodic circle, or a Dirichlet window (theta_lo, theta_hi)."""
    if window is None:
        return Axis(ANGULAR, np.arange(count) * TWO_PI / count, periodic=True, period=TWO_PI)
    lo, hi = window
    return Axis(ANGULAR, np.linspace(lo, hi, count), periodic=False)


def tangential_axis(lo: float, hi: float, count: int, periodic: bool = False) -> Axis:
    if periodic:
        return Axis(TANGENTIAL, np.linspace(lo, hi, count, endpoint=False),
                    periodic=True, period=hi - lo)
    return Axis(TANGENTIAL, np.linspace(lo, hi, count), periodic=False)


@dataclass(frozen=True)
class Grid:
    """Tensor grid; axes follow the canonical (r_j, theta_j)*, s_k ordering."""

    angles: ConeAngles
    axes: tuple

    def __post_init__(self):
        p, m = self.angles.p, self.angles.tangential_dim
        kinds = [ax.kind for ax in self.axes]
        expected = [k for j in range(p) for k in (RADIAL, ANGULAR)] + [TANGENTIAL] * m
        if kinds != expected:
            raise ValueError(f"axis kinds {kinds} do not match angles (p={p}, m={m})")
        # record owning factors
        fixed = []
        for i, ax in enumerate(self.axes):
            fac = i // 2 if ax.kind in (RADIAL, ANGULAR) else -1
            if ax.factor != fac:
                ax = Axis(ax.kind, ax.nodes, ax.periodic, ax.pole, fac, ax.period)
            fixed.append(ax)
        object.__setattr__(self, "axes", tuple(fixed))

    @property
    def shape(self) -> tuple:
        return tuple(ax.size for ax in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def radial(self, j: int) -> Axis:
        return self.axes[2 * j]

    def theta(self, j: int) -> Axis:
        return self.axes[2 * j + 1]

    def tangential(self, k: int) -> Axis:
        return self.axes[2 * self.angles.p + k]

    def axis_index(self, kind: str, which: int) -> int:
        if kind == RADIAL:
            return 2 * which
        if kind == ANGULAR:
            return 2 * which + 1
        return 2 * self.angles.p + which

    def coords(self):
        """Broadcast coordinate arrays, one per axis, in axis order."""
        return np.meshgrid(*(ax.nodes for ax in self.axes), indexing="ij", sparse=True)

    def boundary_mask(self) -> np.ndarray:
        """Dirichlet nodes: non-periodic axis endpoints (inner radial end only
        when the axis does not carry the pole closure)."""
        mask = np.zeros(self.shape, dtype=bool)
        for i, ax in enumerate(self.axes):
            if ax.periodic:
                continue
            sl = [slice(None)] * len(self.axes)
            sl[i] = -1
            mask[tuple(sl)] = True
            if not (ax.kind == RADIAL and ax.pole):
                sl[i] = 0
                mask[tuple(sl)] = True
        return mask

    def node_cloud(self) -> PointCloud:
        """All grid nodes as a point cloud (row-major order)."""
        coords = np.meshgrid(*(ax.nodes for ax in self.axes), indexing="ij")
        flat = [c.ravel() for c in coords]
        p = self.angles.p
        r = np.stack(flat[0:2 * p:2], axis=1) if p else np.empty((len(flat[0]), 0))
        t = np.stack(flat[1:2 * p:2], axis=1) if p else np.empty((len(flat[0]), 0))
        s = (np.stack(flat[2 * p:], axis=1)
             if self.angles.tangential_dim else np.empty((r.shape[0], 0)))
        return PointCloud(r, t, s, self.angles)

    def distance_from(self, center: ConePoint) -> np.ndarray:
        """d_beta(center, node) for every node, shape = grid shape."""
        d2 = np.zeros(self.shape)
        for j, beta in enumerate(self.angles.betas):
            rj = self.radial(j).nodes
            tj = self.theta(j).nodes
            tab = np.empty((len(rj), len(tj)))
            for a, rv in enumerate(rj):
                for b, tv in enumerate(tj):
                    tab[a, b] = factor_distance(center.r(j), center.theta(j), rv, tv, beta)
            shp = [1] * len(self.axes)
            shp[2 * j] = len(rj)
            shp[2 * j + 1] = len(tj)
            d2 = d2 + (tab**2).reshape(shp)
        for k in range(self.angles.tangential_dim):
            ax = self.tangential(k)
            shp = [1] * len(self.axes)
            shp[self.axis_index(TANGENTIAL, k)] = ax.size
            d2 = d2 + ((ax.nodes - center.tangential[k]) ** 2).reshape(shp)
        return np.sqrt(d2)


def polydisk_grid(angles: ConeAngles, radii, n_radial, n_theta=8,
                  tangential_halfwidth=1.0, n_tangential=9,
                  tangential_periodic=False, grading=None) -> Grid:
    """Product-domain grid {r_j < R_j} x tangential box, apex included.

    n_radial / n_theta / n_tangential may be scalars or per-axis sequences.
    """
    m = angles.tangential_dim
    radii = [radii] * angles.p if np.isscalar(radii) else list(radii)
    n_radial = [n_radial] * angles.p if np.isscalar(n_radial) else list(n_radial)
    n_theta = [n_theta] * angles.p if np.isscalar(n_theta) else list(n_theta)
    n_tangential = [n_tangential] * m if np.isscalar(n_tangential) else list(n_tangential)
    axes = []
    for j, beta in enumerate(angles.betas):
        axes.append(radial_axis(radii[j], n_radial[j], beta, grading))
        axes.append(angular_axis(n_theta[j]))
    L = tangential_halfwidth
    for k in range(m):
        axes.append(tangential_axis(-L, L, n_tangential[k], periodic=tangential_periodic))
    return Grid(angles, tuple(axes))


class GridCoords:
    """Convenience accessors for broadcast node coordinates of a grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self._c = grid.coords()

    def r(self, j: int) -> np.ndarray:
        return self._c[2 * j]

    def theta(self, j: int) -> np.ndarray:
        return self._c[2 * j + 1]

    def s(self, k: int) -> np.ndarray:
        return self._c[2 * self.grid.angles.p + k]

    def rho(self, j: int) -> np.ndarray:
        """Euclidean modulus |z_j| = r_j^(1/beta_j)."""
        return self.r(j) ** (1.0 / self.grid.angles.betas[j])

    def re_z(self, j: int, k: int = 1) -> np.ndarray:
        """Re z_j^k = rho^k cos(k theta) = r^(k/beta) cos(k theta)."""
        return self.rho(j) ** k * np.cos(k * self.theta(j))

    def im_z(self, j: int, k: int = 1) -> np.ndarray:
        return self.rho(j) ** k * np.sin(k * self.theta(j))


class CloudCoords:
    """The GridCoords accessor interface backed by a PointCloud, so one
    field definition evaluates on tensor grids and on scattered points."""

    def __init__(self, cloud: PointCloud):
        self.cloud = cloud
        self.angles = cloud.angles

    def r(self, j: int) -> np.ndarray:
        return self.cloud.r[:, j]

    def theta(self, j: int) -> np.ndarray:
        return self.cloud.theta[:, j]

    def s(self, k: int) -> np.ndarray:
        return self.cloud.s[:, k]

    def rho(self, j: int) -> np.ndarray:
        return self.r(j) ** (1.0 / self.angles.betas[j])

    def re_z(self, j: int, k: int = 1) -> np.ndarray:
        return self.rho(j) ** k * np.cos(k * self.theta(j))

    def im_z(self, j: int, k: int = 1) -> np.ndarray:
        return self.rho(j) ** k * np.sin(k * self.theta(j))


def eval_on_cloud(fn, cloud: PointCloud) -> np.ndarray:
    """Evaluate a coords-style field on a point cloud."""
    vals = np.asarray(fn(CloudCoords(cloud)), dtype=float)
    return np.broadcast_to(vals, (len(cloud),)).copy()


@dataclass
class GridFunction:
    """Scalar field on a grid; values finite, shape matching the grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"value shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function carries non-finite values")

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "GridFunction":
        c = GridCoords(grid)
        vals = np.broadcast_to(np.asarray(fn(c), dtype=float), grid.shape).copy()
        return cls(grid, vals)

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.shape))

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())

    def interpolator(self):
        """Linear interpolator over the grid; periodic axes are wrapped."""
        axes_nodes, values = [], self.values
        for i, ax in enumerate(self.grid.axes):
            nodes = ax.nodes
            if ax.periodic:
                nodes = np.concatenate([nodes, [nodes[0] + ax.period]])
                values = np.concatenate([values, np.take(values, [0], axis=i)], axis=i)
            axes_nodes.append(nodes)
        interp = RegularGridInterpolator(axes_nodes, values, method="linear",
                                         bounds_error=False, fill_value=None)
        grid = self.grid

        def evaluate(cloud: PointCloud) -> np.ndarray:
            cols = []
            for i, ax in enumerate(grid.axes):
                if ax.kind == RADIAL:
                    col = cloud.r[:, ax.factor]
                elif ax.kind == ANGULAR:
                    col = cloud.theta[:, ax.factor]
                else:
                    col = cloud.s[:, i - 2 * grid.angles.p]
                if ax.periodic:
                    col = ax.nodes[0] + np.mod(col - ax.nodes[0], ax.period)
                else:
                    col = np.clip(col, axes_nodes[i][0], axes_nodes[i][-1])
                cols.append(col)
            return interp(np.stack(cols, axis=1))

        return evaluate
