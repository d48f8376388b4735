"""Exact geometry of the flat cone metric: coordinates, distances, moduli.

The background space is C^p x C^(n-p) carrying the product cone metric with
cone angle 2*pi*beta_j along each hyperplane {z_j = 0}.  Every factor is the
two-dimensional metric cone dr^2 + beta^2 r^2 dtheta^2 in the weighted polar
coordinates r = |z|^beta, theta = arg z; the remaining 2(n-p) real tangential
coordinates are Euclidean.

The pairwise distance below is the artifact's single source of truth: on each
conical factor it is the law of cosines in the developed sector spanned by
the angular gap, with the through-apex path r_x + r_y taken once the
developed angle beta*dtheta exceeds pi.  The angular gap is the absolute
difference of the canonical angles in [0, 2*pi); it is deliberately not
folded to [0, pi], so gaps wider than pi/beta are routed through the apex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ConeAngles:
    """Cone angle vector beta in (0,1)^p plus the ambient complex dimension n."""

    betas: tuple
    n: int

    def __post_init__(self):
        betas = tuple(float(b) for b in self.betas)
        object.__setattr__(self, "betas", betas)
        if len(betas) < 1:
            raise ValueError("need at least one conical factor")
        if any(not (0.0 < b < 1.0) for b in betas):
            raise ValueError(f"every cone angle must lie strictly in (0,1): {betas}")
        if self.n < len(betas):
            raise ValueError(f"ambient dimension n={self.n} smaller than p={len(betas)}")

    @property
    def p(self) -> int:
        return len(self.betas)

    @property
    def beta_max(self) -> float:
        return max(self.betas)

    @property
    def tangential_dim(self) -> int:
        """Number of real tangential coordinates, 2(n - p)."""
        return 2 * (self.n - self.p)

    @property
    def exponent_cap(self) -> float:
        """Admissible Holder exponent cap min(1/beta_max - 1, 1)."""
        return min(1.0 / self.beta_max - 1.0, 1.0)


def _canonical_angle(theta: float, r: float) -> float:
    if r == 0.0:
        return 0.0
    t = math.fmod(theta, TWO_PI)
    if t < 0.0:
        t += TWO_PI
    # fmod may return 2*pi - ulp; snap it back into [0, 2*pi)
    if t >= TWO_PI:
        t -= TWO_PI
    return t


@dataclass(frozen=True)
class ConePoint:
    """A point in weighted polar coordinates (r_j, theta_j) plus tangential s.

    Angles are normalized to [0, 2*pi); whenever r_j = 0 the angle is
    canonicalized to 0 so point equality is well defined at the strata.
    """

    polar: tuple  # ((r_1, theta_1), ..., (r_p, theta_p))
    tangential: tuple = ()

    def __post_init__(self):
        polar = []
        for r, t in self.polar:
            r = float(r)
            if r < 0.0:
                raise ValueError(f"radial coordinate must be nonnegative: {r}")
            polar.append((r, _canonical_angle(float(t), r)))
        object.__setattr__(self, "polar", tuple(polar))
        object.__setattr__(self, "tangential", tuple(float(s) for s in self.tangential))

    @classmethod
    def origin(cls, angles: ConeAngles) -> "ConePoint":
        return cls(((0.0, 0.0),) * angles.p, (0.0,) * angles.tangential_dim)

    def r(self, j: int) -> float:
        return self.polar[j][0]

    def theta(self, j: int) -> float:
        return self.polar[j][1]

    def with_factor(self, j: int, r: float, theta: float) -> "ConePoint":
        polar = list(self.polar)
        polar[j] = (r, theta)
        return ConePoint(tuple(polar), self.tangential)

    def stratum_distance(self, angles: ConeAngles) -> float:
        """Cone distance to the singular set S = union of {r_j = 0}."""
        return min(r for r, _ in self.polar)


@dataclass(frozen=True)
class ParabolicPoint:
    """Space-time point Q = (p, t) with t >= 0."""

    space: ConePoint
    time: float

    def __post_init__(self):
        t = float(self.time)
        if not math.isfinite(t) or t < 0.0:
            raise ValueError(f"time must be finite and nonnegative: {t}")
        object.__setattr__(self, "time", t)


def to_weighted_polar(z, angles: ConeAngles) -> ConePoint:
    """Map complex coordinates z in C^n to weighted polar coordinates.

    r_j = |z_j|^beta_j and theta_j = arg z_j for the conical factors; the
    trailing n-p complex entries split into real/imaginary tangential pairs.
    """
    z = [complex(w) for w in z]
    if len(z) != angles.n:
        raise ValueError(f"expected {angles.n} complex entries, got {len(z)}")
    polar = []
    for j, b in enumerate(angles.betas):
        rho = abs(z[j])
        r = rho**b if rho > 0.0 else 0.0
        theta = math.atan2(z[j].imag, z[j].real) if rho > 0.0 else 0.0
        polar.append((r, theta))
    tang = []
    for w in z[angles.p:]:
        tang.extend((w.real, w.imag))
    return ConePoint(tuple(polar), tuple(tang))


def factor_distance(r_x: float, t_x: float, r_y: float, t_y: float, beta: float) -> float:
    """Geodesic length on one 2D cone factor under the raw angular gap rule."""
    dtheta = abs(_canonical_angle(t_x, r_x) - _canonical_angle(t_y, r_y))
    if beta * dtheta <= math.pi:
        c = r_x * r_x + r_y * r_y - 2.0 * r_x * r_y * math.cos(beta * dtheta)
        return math.sqrt(max(c, 0.0))
    return r_x + r_y


def cone_distance(x: ConePoint, y: ConePoint, angles: ConeAngles) -> float:
    """Product-metric geodesic distance d_beta(x, y)."""
    if len(x.polar) != angles.p or len(y.polar) != angles.p:
        raise ValueError("conical factor count does not match the angle vector")
    if len(x.tangential) != len(y.tangential):
        raise ValueError("tangential dimensions do not match")
    d2 = 0.0
    for j, b in enumerate(angles.betas):
        d = factor_distance(x.r(j), x.theta(j), y.r(j), y.theta(j), b)
        d2 += d * d
    for sx, sy in zip(x.tangential, y.tangential):
        d2 += (sx - sy) ** 2
    return math.sqrt(d2)


def parabolic_distance(q1: ParabolicPoint, q2: ParabolicPoint, angles: ConeAngles) -> float:
    """Parabolic distance max(sqrt|t1 - t2|, d_beta(p1, p2))."""
    return max(math.sqrt(abs(q1.time - q2.time)), cone_distance(q1.space, q2.space, angles))


def ball_contains(center: ConePoint, radius: float, point: ConePoint, angles: ConeAngles) -> bool:
    """Open-ball membership test under d_beta."""
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    return cone_distance(center, point, angles) < radius


# ---------------------------------------------------------------------------
# Vectorized point clouds.  Heavy consumers (norm estimation, moduli of
# continuity) work on arrays rather than scalar ConePoints.
# ---------------------------------------------------------------------------


@dataclass
class PointCloud:
    """Columnar storage of cone points: r, theta with shape (N, p), s (N, m)."""

    r: np.ndarray
    theta: np.ndarray
    s: np.ndarray
    angles: ConeAngles = field(repr=False)

    def __post_init__(self):
        self.r = np.atleast_2d(np.asarray(self.r, dtype=float))
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        self.s = np.asarray(self.s, dtype=float)
        if self.s.ndim == 1:
            self.s = self.s.reshape(len(self.r), -1)
        if self.r.shape != self.theta.shape or self.r.shape[1] != self.angles.p:
            raise ValueError("inconsistent polar shapes")
        if self.s.shape[0] != self.r.shape[0] or self.s.shape[1] != self.angles.tangential_dim:
            raise ValueError("inconsistent tangential shape")
        self.theta = np.mod(self.theta, TWO_PI)
        self.theta[self.r == 0.0] = 0.0

    def __len__(self) -> int:
        return self.r.shape[0]

    def point(self, i: int) -> ConePoint:
        return ConePoint(tuple(zip(self.r[i], self.theta[i])), tuple(self.s[i]))

    @classmethod
    def from_points(cls, points, angles: ConeAngles) -> "PointCloud":
        r = np.array([[p.r(j) for j in range(angles.p)] for p in points])
        t = np.array([[p.theta(j) for j in range(angles.p)] for p in points])
        s = np.array([list(p.tangential) for p in points]).reshape(len(points), -1)
        return cls(r, t, s, angles)

    def take(self, idx) -> "PointCloud":
        return PointCloud(self.r[idx], self.theta[idx], self.s[idx], self.angles)


def pairwise_cone_distance(a: PointCloud, b: PointCloud) -> np.ndarray:
    """Cone distances between matched rows of two clouds (vectorized)."""
    angles = a.angles
    dth = np.abs(a.theta - b.theta)
    d2 = np.zeros(len(a.r))
    for j, beta in enumerate(angles.betas):
        rx, ry = a.r[:, j], b.r[:, j]
        chord = np.sqrt(
            np.maximum(rx**2 + ry**2 - 2.0 * rx * ry * np.cos(beta * dth[:, j]), 0.0)
        )
        d = np.where(beta * dth[:, j] <= math.pi, chord, rx + ry)
        d2 += d * d
    if a.s.shape[1]:
        d2 += np.sum((a.s - b.s) ** 2, axis=1)
    return np.sqrt(d2)


def all_pairs_distance(cloud: PointCloud):
    """Index pairs (i, j), i < j, and their cone distances for a whole cloud."""
    n = len(cloud)
    ii, jj = np.triu_indices(n, k=1)
    return ii, jj, pairwise_cone_distance(cloud.take(ii), cloud.take(jj))


def oscillation_modulus(values, cloud: PointCloud, radius_grid) -> np.ndarray:
    """Sampled oscillation modulus omega(r) = sup_{d(x,y) < r} |f(x) - f(y)|.

    Returns one value per entry of the increasing radius grid; the result is
    monotone non-decreasing by construction.
    """
    values = np.asarray(values, dtype=float)
    if len(cloud) == 0:
        raise ValueError("empty point cloud")
    if len(values) != len(cloud):
        raise ValueError("value count does not match the cloud")
    radius_grid = np.asarray(radius_grid, dtype=float)
    if np.any(np.diff(radius_grid) <= 0):
        raise ValueError("radius grid must be strictly increasing")
    ii, jj, dist = all_pairs_distance(cloud)
    osc = np.abs(values[ii] - values[jj])
    out = np.empty(len(radius_grid))
    for k, rad in enumerate(radius_grid):
        sel = dist < rad
        out[k] = float(osc[sel].max()) if np.any(sel) else 0.0
    return np.maximum.accumulate(out)
