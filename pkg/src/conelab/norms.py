"""Numerical evaluation of the conical Holder norms and seminorms.

All sups over pairs are taken on sampled pair sets (see `domains`); reports
carry the attaining pair and the sample size so runs are reproducible.  The
dyadic scale tau = 1/2 is used for exponent fitting throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ConeAngles, PointCloud
from .grids import GridFunction
from .operators import T_family, apply_T, apply_first
from .domains import PairSet, grid_node_pairs, radial_axis_pairs

TAU = 0.5
FLAT_TOL = 1e-13


@dataclass
class HolderReport:
    """Measured Holder seminorm [u]_{C^0,alpha} over a sampled pair set."""

    alpha: float
    seminorm: float
    argmax_pair: tuple | None = None
    pair_count: int = 0
    fitted_exponent: float | None = None
    fit_residual: float | None = None
    flat: bool = False
    seed: int | None = None

    def __post_init__(self):
        if self.seminorm < 0:
            raise ValueError("seminorm must be nonnegative")
        if self.fitted_exponent is not None and not (-1.0 <= self.fitted_exponent <= 2.0):
            raise ValueError(f"fitted exponent {self.fitted_exponent} outside the "
                             "diagnostic range [-1, 2]")

    def to_json(self) -> str:
        d = dict(alpha=self.alpha, seminorm=self.seminorm, pair_count=self.pair_count,
                 fitted_exponent=self.fitted_exponent, fit_residual=self.fit_residual,
                 flat=self.flat, seed=self.seed,
                 argmax_pair=self.argmax_pair)
        return json.dumps(d, sort_keys=True)


def holder_quotients(values_x, values_y, dist, alpha: float):
    if np.any(dist <= 0):
        raise ValueError("pair distances must be positive")
    return np.abs(np.asarray(values_x) - np.asarray(values_y)) / dist**alpha


def holder_seminorm(evaluate, pairs: PairSet, alpha: float) -> HolderReport:
    """sup over sampled pairs of |u(x) - u(y)| / d_beta(x, y)^alpha.

    `evaluate` maps a PointCloud to values.  Monotone under pair refinement:
    adding pairs can only increase the reported sup.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    if len(pairs) == 0:
        raise ValueError("no pairs sampled")
    q = holder_quotients(evaluate(pairs.x), evaluate(pairs.y), pairs.dist, alpha)
    i = int(np.argmax(q))
    return HolderReport(alpha, float(q[i]),
                        argmax_pair=(_point_tuple(pairs.x, i), _point_tuple(pairs.y, i)),
                        pair_count=len(pairs), seed=pairs.seed)


def _point_tuple(cloud: PointCloud, i: int):
    return (tuple(cloud.r[i]), tuple(cloud.theta[i]), tuple(cloud.s[i]))


# ---------------------------------------------------------------------------
# Exponent fitting over dyadic distance shells
# ---------------------------------------------------------------------------


@dataclass
class ExponentFit:
    alpha_hat: float | None
    residual: float | None
    shells: list = field(default_factory=list)  # (distance, sup oscillation)
    flat: bool = False

    def table(self):
        return [(d, o) for d, o in self.shells]


def fit_exponent_from_pairs(osc: np.ndarray, dist: np.ndarray,
                            min_shells: int = 3) -> ExponentFit:
    """Least-squares slope of log sup-oscillation vs log distance on dyadic
    shells [tau^(k+1), tau^k); constant fields report the flat sentinel."""
    osc = np.asarray(osc, dtype=float)
    dist = np.asarray(dist, dtype=float)
    if np.all(osc < FLAT_TOL):
        return ExponentFit(None, None, [], flat=True)
    kmin = int(np.floor(np.log(dist.min()) / np.log(TAU)))
    kmax = int(np.ceil(np.log(dist.max()) / np.log(TAU)))
    shells = []
    for k in range(kmax, kmin + 1):
        lo, hi = TAU ** (k + 1), TAU**k
        sel = (dist > lo) & (dist <= hi)
        if np.any(sel) and osc[sel].max() > FLAT_TOL:
            # the abscissa is the attaining pair's distance, not the shell
            # center: pure power profiles then fit exactly
            i = int(np.argmax(np.where(sel, osc, -np.inf)))
            shells.append((float(dist[i]), float(osc[i])))
    if len(shells) < min_shells:
        raise ValueError(f"degenerate exponent regression: only {len(shells)} "
                         f"populated shells (need {min_shells})")
    x = np.log([s[0] for s in shells])
    y = np.log([s[1] for s in shells])
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return ExponentFit(float(coef[0]), resid, shells)


def fit_exponent(evaluate, pairs: PairSet, min_decades: float = 3.0) -> ExponentFit:
    """Fit the Holder exponent of a field over a sampled pair set.

    The pair distances must span at least `min_decades` decades.
    """
    span = np.log10(pairs.dist.max() / pairs.dist.min())
    if span < min_decades:
        raise ValueError(f"pair distances span only {span:.2f} decades")
    osc = np.abs(evaluate(pairs.x) - evaluate(pairs.y))
    return fit_exponent_from_pairs(osc, pairs.dist)


# ---------------------------------------------------------------------------
# Full C^{2,alpha}_beta norm of a grid function
# ---------------------------------------------------------------------------


def c2alpha_norm(u: GridFunction, alpha: float, n_pairs: int = 4000,
                 seed: int = 0, mask=None) -> dict:
    """C^0, gradient sup, and Holder seminorms of every T-operator output.

    Pairs are grid-node pairs (field values exact at nodes) including all
    radial-line pairs per factor.  Returns the breakdown and the combined
    norm per the definition: ||u||_C0 + ||grad u||_C0 + sum_T [Tu]_alpha.
    """
    grid = u.grid
    rng = np.random.default_rng(seed)
    ii, jj, dist = grid_node_pairs(grid, n_pairs, rng, mask=mask)
    fam = T_family(grid.angles)
    out = {"C0": float(np.abs(u.values).max())}
    grad = np.zeros(grid.shape)
    for j in range(grid.angles.p):
        grad += apply_first(u, ("r", j)).values ** 2
        grad += apply_first(u, ("th", j)).values ** 2
    for k in range(grid.angles.tangential_dim):
        grad += apply_first(u, ("s", k)).values ** 2
    sel = mask.ravel() if mask is not None else slice(None)
    out["grad_C0"] = float(np.sqrt(grad).ravel()[sel].max())
    semis = {}
    for group, tags in fam.items():
        for tag in tags:
            tv = apply_T(u, tag).values.ravel()
            q = holder_quotients(tv[ii], tv[jj], dist, alpha)
            semis[str(tag)] = float(q.max())
    out["T_seminorms"] = semis
    out["norm"] = out["C0"] + out["grad_C0"] + sum(semis.values())
    out["alpha"] = alpha
    out["pair_count"] = int(len(dist))
    return out


# ---------------------------------------------------------------------------
# Weighted interior norms (the sigma family)
# ---------------------------------------------------------------------------


def weighted_norm(evaluate, sigma: float, alpha: float, domain, points: PointCloud,
                  pairs: PairSet | None = None, order: int = 0) -> dict:
    """Interior norms weighted by powers of the boundary distance d_x.

    order 0: sup d_x^sigma |u|  and pair seminorm with min(d_x,d_y)^(sigma+alpha);
    order 2: the second-order weights sigma+2 and sigma+2+alpha (applied to a
    field already holding Tu values).  sigma = 0 reproduces the starred norms.
    """
    dx = domain.boundary_distance(points)
    if np.any(dx < 0):
        raise ValueError("sample point outside the domain")
    if np.any(dx == 0) and sigma + order <= 0:
        raise ValueError("boundary samples not allowed for nonpositive weight power")
    vals = np.asarray(evaluate(points), dtype=float)
    c0 = float(np.max(dx ** (sigma + order) * np.abs(vals)))
    out = {"C0_weighted": c0, "sigma": sigma, "order": order}
    if pairs is not None and len(pairs):
        dxp = domain.boundary_distance(pairs.x)
        dyp = domain.boundary_distance(pairs.y)
        power = sigma + order + alpha
        if (np.any(dxp == 0) or np.any(dyp == 0)) and power <= 0:
            raise ValueError("boundary pairs not allowed for nonpositive weight power")
        w = np.minimum(dxp, dyp) ** power
        q = w * np.abs(evaluate(pairs.x) - evaluate(pairs.y)) / pairs.dist**alpha
        out["seminorm_weighted"] = float(q.max())
    return out


# ---------------------------------------------------------------------------
# Parabolic norms
# ---------------------------------------------------------------------------


@dataclass
class SpaceTimePairSet:
    """Pairs of space-time points with their parabolic distances."""

    x: PointCloud
    tx: np.ndarray
    y: PointCloud
    ty: np.ndarray
    dist: np.ndarray

    def __len__(self):
        return len(self.dist)


def parabolic_pairs(space_pairs: PairSet, times_x, times_y) -> SpaceTimePairSet:
    tx = np.asarray(times_x, dtype=float)
    ty = np.asarray(times_y, dtype=float)
    d = np.maximum(np.sqrt(np.abs(tx - ty)), space_pairs.dist)
    return SpaceTimePairSet(space_pairs.x, tx, space_pairs.y, ty, d)


def parabolic_holder(evaluate_st, pairs: SpaceTimePairSet, alpha: float) -> HolderReport:
    """Holder seminorm under the parabolic distance max(sqrt|dt|, d_beta).

    evaluate_st(cloud, times) -> values.  For time-independent fields this
    reduces to the elliptic seminorm on matched samples.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    if len(pairs) == 0:
        raise ValueError("no pairs sampled")
    vx = np.asarray(evaluate_st(pairs.x, pairs.tx), dtype=float)
    vy = np.asarray(evaluate_st(pairs.y, pairs.ty), dtype=float)
    good = pairs.dist > 0
    q = np.abs(vx - vy)[good] / pairs.dist[good] ** alpha
    i = int(np.argmax(q))
    idx = np.flatnonzero(good)[i]
    return HolderReport(alpha, float(q[i]),
                        argmax_pair=(_point_tuple(pairs.x, idx) + (float(pairs.tx[idx]),),
                                     _point_tuple(pairs.y, idx) + (float(pairs.ty[idx]),)),
                        pair_count=int(good.sum()))


def shell_table_csv(fit: ExponentFit) -> str:
    """CSV emission of the (distance, sup oscillation) shell table."""
    lines = ["distance,sup_oscillation"]
    for d, o in fit.shells:
        lines.append(f"{d:.12g},{o:.12g}")
    return "\n".join(lines) + "\n"
