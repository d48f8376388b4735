"""conelab: a numerical laboratory for elliptic and parabolic equations
whose background metric is a flat Kahler cone metric with simple-normal-
crossing singularities.

The package discretizes the model degenerate Laplacian in weighted polar
coordinates, solves Dirichlet and heat problems directly and through the
smooth eps-regularization path, evaluates the conical Holder norm family,
and measures the sharp exponent phenomena (caps at min(1/beta_max - 1, 1))
on solved fields and closed-form witnesses.  A toy Monge-Ampere flow in
rotationally invariant reduction exercises the short-time-existence
machinery.
"""

__version__ = "0.1.0"

from .geometry import (ConeAngles, ConePoint, ParabolicPoint, ball_contains,
                       cone_distance, oscillation_modulus, parabolic_distance,
                       to_weighted_polar)

__all__ = [
    "ConeAngles", "ConePoint", "ParabolicPoint", "ball_contains",
    "cone_distance", "oscillation_modulus", "parabolic_distance",
    "to_weighted_polar", "__version__",
]
