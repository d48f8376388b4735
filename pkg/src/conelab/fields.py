"""Named scalar fields used as right-hand sides, boundary data and witnesses.

A field is a callable taking a coords accessor (GridCoords, CloudCoords or
CartCoords) and returning a broadcastable array; the same definition then
evaluates on tensor grids, scattered point clouds and Cartesian grids.
Specs are strings like "re_z:0", "r_pow:0.3:0", "sin_tangential:0:1".
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def const(c: float):
    return lambda x: np.asarray(float(c))


def re_z(j: int = 0, k: int = 1):
    return lambda x: x.re_z(j, k)


def im_z(j: int = 0, k: int = 1):
    return lambda x: x.im_z(j, k)


def abs_z(j: int = 0):
    return lambda x: x.rho(j)


def r_pow(a: float, j: int = 0):
    return lambda x: x.r(j) ** a


def r_sq(j: int = 0):
    return r_pow(2.0, j)


def s_coord(k: int = 0):
    return lambda x: x.s(k)


def s_sq():
    def f(x):
        total = 0.0
        for k in range(x_dim(x)):
            total = total + x.s(k) ** 2
        return total
    return f


def x_dim(x) -> int:
    angles = getattr(x, "angles", None) or x.grid.angles
    return angles.tangential_dim


def sin_tangential(k: int = 0, freq: int = 1):
    return lambda x: np.sin(TWO_PI * freq * x.s(k))


def tangential_bump(width: float = 0.5):
    """Smooth compactly supported bump in the tangential variables."""
    def f(x):
        out = 1.0
        for k in range(x_dim(x)):
            t = np.clip(np.abs(x.s(k)) / width, 0.0, 1.0)
            out = out * np.where(t < 1.0, np.exp(1.0 - 1.0 / np.maximum(1e-300, 1.0 - t**2)), 0.0)
        return out
    return f


def witness_tangential(j: int = 0, k: int = 0):
    """Re z_j * s_k: harmonic with N_j D' exponent exactly 1/beta_j - 1."""
    return lambda x: x.re_z(j) * x.s(k)


def witness_mixed(j: int = 0, k: int = 1):
    """Re z_j * Re z_k: harmonic with N_j N_k exponent 1/max(beta) - 1."""
    return lambda x: x.re_z(j) * x.re_z(k)


def polynomial_smooth():
    """A smooth polynomial in the ambient coordinates (Re z_j, Im z_j, s)."""
    def f(x):
        out = 1.0 + 0.5 * x.re_z(0) + 0.25 * x.re_z(0) * x.im_z(0)
        for k in range(x_dim(x)):
            out = out + 0.3 * x.s(k) + 0.1 * x.s(k) ** 2
        return out
    return f


def random_fourier(seed: int = 0, terms: int = 4, amplitude: float = 1.0):
    """Random smooth field: cosine waves in the ambient real coordinates.

    Smooth in z (hence continuous across the strata); used for randomized
    maximum-principle and positivity trials.
    """
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(0.5, 2.5, (terms,))
    phases = rng.uniform(0, TWO_PI, (terms,))
    amps = amplitude * rng.uniform(0.3, 1.0, (terms,)) / terms

    def f(x):
        angles = getattr(x, "angles", None) or x.grid.angles
        coords = []
        for j in range(angles.p):
            coords.append(x.re_z(j))
            coords.append(x.im_z(j))
        for k in range(angles.tangential_dim):
            coords.append(x.s(k))
        rngd = np.random.default_rng(seed + 1)
        out = 0.0
        for i in range(terms):
            w = rngd.uniform(-1, 1, len(coords))
            phase_arg = 0.0
            for c, wi in zip(coords, w):
                phase_arg = phase_arg + wi * c
            out = out + amps[i] * np.cos(freqs[i] * phase_arg + phases[i])
        return out

    return f


REGISTRY = {
    "zero": lambda: const(0.0),
    "one": lambda: const(1.0),
    "const": const,
    "re_z": re_z,
    "im_z": im_z,
    "abs_z": abs_z,
    "r_pow": r_pow,
    "r_sq": r_sq,
    "s_coord": s_coord,
    "s_sq": s_sq,
    "sin_tangential": sin_tangential,
    "tangential_bump": tangential_bump,
    "witness_tangential": witness_tangential,
    "witness_mixed": witness_mixed,
    "polynomial_smooth": polynomial_smooth,
    "random_fourier": random_fourier,
}


def make_field(spec):
    """Resolve a field spec: callables pass through, strings hit the registry.

    String form: "name" or "name:arg1:arg2" with numeric args.
    """
    if callable(spec):
        return spec
    if not isinstance(spec, str):
        raise ValueError(f"cannot interpret field spec {spec!r}")
    parts = spec.split(":")
    name, args = parts[0], parts[1:]
    if name not in REGISTRY:
        raise KeyError(f"unknown field builder {name!r}; known: {sorted(REGISTRY)}")
    conv = []
    for a in args:
        conv.append(int(a) if a.lstrip("+-").isdigit() else float(a))
    return REGISTRY[name](*conv)
