"""Domains for boundary-value problems and norm evaluation.

Two shapes cover the artifact: tensor-product polydisks {r_j < R_j} x box
(trivial boundary, used for all quantitative work) and the exact metric ball
B_beta(0, R) (used by maximum-principle and barrier diagnostics through a
cut-cell mask).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import TWO_PI, ConeAngles, ConePoint, PointCloud, cone_distance


@dataclass(frozen=True)
class PolydiskDomain:
    """{r_j < R_j for all j} x {|s_k| < L}."""

    angles: ConeAngles
    radii: tuple
    tangential_halfwidth: float = 1.0
    tangential_periodic: bool = False

    def __post_init__(self):
        radii = self.radii
        if np.isscalar(radii):
            radii = (float(radii),) * self.angles.p
        object.__setattr__(self, "radii", tuple(float(R) for R in radii))
        if len(self.radii) != self.angles.p:
            raise ValueError("one radius per conical factor required")

    def contains(self, cloud: PointCloud) -> np.ndarray:
        ok = np.ones(len(cloud), dtype=bool)
        for j, R in enumerate(self.radii):
            ok &= cloud.r[:, j] < R
        if not self.tangential_periodic:
            for k in range(self.angles.tangential_dim):
                ok &= np.abs(cloud.s[:, k]) < self.tangential_halfwidth
        return ok

    def boundary_distance(self, cloud: PointCloud) -> np.ndarray:
        """Cone distance to the boundary of the product domain."""
        d = np.full(len(cloud), np.inf)
        for j, R in enumerate(self.radii):
            d = np.minimum(d, R - cloud.r[:, j])
        if not self.tangential_periodic:
            for k in range(self.angles.tangential_dim):
                d = np.minimum(d, self.tangential_halfwidth - np.abs(cloud.s[:, k]))
        return d

    def sample(self, n: int, rng: np.random.Generator) -> PointCloud:
        """Area-uniform per factor (r ~ R sqrt(U)), uniform tangentially."""
        p, m = self.angles.p, self.angles.tangential_dim
        r = np.stack([R * np.sqrt(rng.uniform(0, 1, n)) for R in self.radii], axis=1)
        t = rng.uniform(0, TWO_PI, (n, p))
        s = rng.uniform(-self.tangential_halfwidth, self.tangential_halfwidth, (n, m))
        return PointCloud(r, t, s, self.angles)


@dataclass(frozen=True)
class ConeBallDomain:
    """Metric ball B_beta(0, R): sum_j r_j^2 + |s|^2 < R^2."""

    angles: ConeAngles
    radius: float = 1.0

    def contains(self, cloud: PointCloud) -> np.ndarray:
        d2 = np.sum(cloud.r**2, axis=1) + np.sum(cloud.s**2, axis=1)
        return d2 < self.radius**2

    def boundary_distance(self, cloud: PointCloud) -> np.ndarray:
        d0 = np.sqrt(np.sum(cloud.r**2, axis=1) + np.sum(cloud.s**2, axis=1))
        return self.radius - d0

    def project_to_boundary(self, cloud: PointCloud) -> PointCloud:
        """Radial rescaling onto the sphere d_beta(0, .) = R."""
        d0 = np.sqrt(np.sum(cloud.r**2, axis=1) + np.sum(cloud.s**2, axis=1))
        scale = self.radius / np.maximum(d0, 1e-300)
        return PointCloud(cloud.r * scale[:, None], cloud.theta,
                          cloud.s * scale[:, None], self.angles)

    def sample(self, n: int, rng: np.random.Generator) -> PointCloud:
        box = PolydiskDomain(self.angles, (self.radius,) * self.angles.p,
                             self.radius)
        out = None
        while out is None or len(out) < n:
            cand = box.sample(2 * n + 16, rng)
            keep = cand.take(self.contains(cand))
            out = keep if out is None else PointCloud(
                np.vstack([out.r, keep.r]), np.vstack([out.theta, keep.theta]),
                np.vstack([out.s, keep.s]), self.angles)
        return out.take(slice(0, n))

    def boundary_sample(self, n: int, rng: np.random.Generator) -> PointCloud:
        return self.project_to_boundary(self.sample(n, rng))


# ---------------------------------------------------------------------------
# Pair samplers for sup-type norms.  Sups over infinite pair sets are
# replaced by stratified dyadic-shell sampling plus deterministic inclusion
# of the known-adversarial families (radial-axis pairs near the strata, and
# pure-time pairs in the parabolic case).
# ---------------------------------------------------------------------------


@dataclass
class PairSet:
    x: PointCloud
    y: PointCloud
    dist: np.ndarray
    seed: int | None = None

    def __len__(self):
        return len(self.dist)

    def concat(self, other: "PairSet") -> "PairSet":
        return PairSet(
            PointCloud(np.vstack([self.x.r, other.x.r]),
                       np.vstack([self.x.theta, other.x.theta]),
                       np.vstack([self.x.s, other.x.s]), self.x.angles),
            PointCloud(np.vstack([self.y.r, other.y.r]),
                       np.vstack([self.y.theta, other.y.theta]),
                       np.vstack([self.y.s, other.y.s]), self.y.angles),
            np.concatenate([self.dist, other.dist]), self.seed)


def _perturb(cloud: PointCloud, scale: np.ndarray, rng) -> PointCloud:
    """Random move of size ~ scale in one random coordinate direction each."""
    n = len(cloud)
    angles = cloud.angles
    p, m = angles.p, angles.tangential_dim
    n_dirs = 2 * p + m
    which = rng.integers(0, n_dirs, n)
    sign = rng.choice([-1.0, 1.0], n)
    r = cloud.r.copy()
    t = cloud.theta.copy()
    s = cloud.s.copy()
    for j in range(p):
        sel = which == 2 * j
        r[sel, j] = np.abs(r[sel, j] + sign[sel] * scale[sel])
        sel = which == 2 * j + 1
        safe = r[:, j] > 1e-12
        ang_step = scale / np.maximum(angles.betas[j] * r[:, j], 1e-12)
        t[sel & safe, j] += (sign * np.minimum(ang_step, math.pi))[sel & safe]
        # pure angular moves degenerate at the stratum: fall back to radial
        t = np.mod(t, TWO_PI)
        r[sel & ~safe, j] = scale[sel & ~safe]
    for k in range(m):
        sel = which == 2 * p + k
        s[sel, k] += sign[sel] * scale[sel]
    return PointCloud(r, t, s, angles)


def stratified_pairs(domain, n_pairs: int, rng: np.random.Generator,
                     k_range=(0, 12)) -> PairSet:
    """Pairs with distances stratified over dyadic shells 2^-k, clipped to
    the domain; small-distance shells are as populated as large ones."""
    from .geometry import pairwise_cone_distance
    angles = domain.angles
    base = domain.sample(n_pairs, rng)
    ks = rng.integers(k_range[0], k_range[1] + 1, n_pairs)
    scale = 0.75 * 2.0 ** (-ks.astype(float))
    other = _perturb(base, scale, rng)
    keep = domain.contains(other) & domain.contains(base)
    x, y = base.take(keep), other.take(keep)
    d = pairwise_cone_distance(x, y)
    good = d > 0
    return PairSet(x.take(good), y.take(good), d[good])


def radial_axis_pairs(angles: ConeAngles, factor: int, n_levels: int = 30,
                      r_max: float = 0.5, theta: float = 0.0, base=None,
                      r_min: float = 1e-7) -> PairSet:
    """Deterministic radial ladder toward the stratum S_factor.

    Pairs (x_k, y_k) sit on the same radial ray with r in a geometric ladder
    accumulating at 0; these attain the singular Holder quotients r^(1/b-1).
    """
    from .geometry import pairwise_cone_distance
    p, m = angles.p, angles.tangential_dim
    if base is None:
        base_r = np.full(p, 0.4)
        base_s = np.zeros(m)
    else:
        base_r = np.array([base.r(j) for j in range(p)])
        base_s = np.array(base.tangential)
    lad = np.geomspace(r_min, r_max, n_levels)
    xs, ys = [], []
    for i, a in enumerate(lad):
        for b in lad[i + 1:]:
            xs.append(a)
            ys.append(b)
    n = len(xs)
    rx = np.tile(base_r, (n, 1))
    ry = rx.copy()
    rx[:, factor] = xs
    ry[:, factor] = ys
    th = np.full((n, p), theta)
    s = np.tile(base_s, (n, 1))
    x = PointCloud(rx, th, s, angles)
    y = PointCloud(ry, th, s, angles)
    return PairSet(x, y, pairwise_cone_distance(x, y))


def grid_node_pairs(grid, n_pairs: int, rng: np.random.Generator,
                    mask: np.ndarray | None = None) -> tuple:
    """Random node index pairs of a grid (plus each factor's radial lines).

    Returns (idx_x, idx_y, dist) with flat node indices, so field values can
    be read off exactly instead of interpolated.
    """
    from .geometry import pairwise_cone_distance
    cloud = grid.node_cloud()
    nodes = np.arange(grid.size)
    if mask is not None:
        nodes = nodes[mask.ravel()]
    ii = rng.choice(nodes, n_pairs)
    jj = rng.choice(nodes, n_pairs)
    # radial-line pairs per factor: consecutive and nested node pairs
    extra_i, extra_j = [], []
    shape = grid.shape
    for j in range(grid.angles.p):
        kr = shape[2 * j]
        multi = [0] * len(shape)
        line = []
        for ir in range(kr):
            multi[2 * j] = ir
            flat = int(np.ravel_multi_index(multi, shape))
            if mask is None or mask.ravel()[flat]:
                line.append(flat)
        for a in range(len(line)):
            for b in range(a + 1, len(line)):
                extra_i.append(line[a])
                extra_j.append(line[b])
    ii = np.concatenate([ii, np.array(extra_i, dtype=int)])
    jj = np.concatenate([jj, np.array(extra_j, dtype=int)])
    sel = ii != jj
    ii, jj = ii[sel], jj[sel]
    d = pairwise_cone_distance(cloud.take(ii), cloud.take(jj))
    good = d > 0
    return ii[good], jj[good], d[good]
