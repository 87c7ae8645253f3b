"""Marchenko-Pastur and companion-law closed forms.

For aspect ratio gamma = p/n, the noise eigenvalue distribution F_gamma has
continuous density

    f(x) = sqrt((b - x)(x - a)) / (2 pi gamma x)   on  [a, b],

with edges a = (1 - sqrt(gamma))^2, b = (1 + sqrt(gamma))^2, plus a point
mass of 1 - 1/gamma at zero when gamma > 1.  The companion law (the limit
of the n x n Gram spectrum) reweights it: atom max(0, 1 - gamma) at zero
and continuous density gamma * f(x).

Everything downstream routes through the companion Stieltjes transform
m(z), the root of

    z m^2 + (z + 1 - gamma) m + 1 = 0

lying in (-1/(1 + sqrt(gamma)), 0) for real z above the bulk edge.  Only
real z > b is supported; that is the resolvent region the spike theory
needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# Minimum clearance above the bulk edge before a resolvent evaluation is
# considered well conditioned.
EDGE_GUARD = 1e-9


@dataclass(frozen=True)
class MpParams:
    """Aspect-ratio parameter of the Marchenko-Pastur family."""

    gamma: float

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise DomainError(f"gamma must be a positive finite real, got {self.gamma}")

    @property
    def a_gamma(self) -> float:
        return (1.0 - math.sqrt(self.gamma)) ** 2

    @property
    def b_gamma(self) -> float:
        return (1.0 + math.sqrt(self.gamma)) ** 2


def mp_support(params: MpParams) -> tuple[float, float]:
    """Support interval [a, b] of the continuous part of F_gamma."""
    return params.a_gamma, params.b_gamma


def mp_density(x, params: MpParams):
    """Density of the continuous part of F_gamma, zero off (a, b).

    The atom at zero (gamma > 1) is reported by :func:`mp_atom`, never
    folded in here.  Accepts scalars or arrays.
    """
    a, b = mp_support(params)
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.zeros_like(arr)
    inside = (arr > a) & (arr < b)
    xi = arr[inside]
    out[inside] = np.sqrt((b - xi) * (xi - a)) / (2.0 * np.pi * params.gamma * xi)
    return float(out[0]) if scalar else out


def mp_atom(params: MpParams) -> tuple[float, float]:
    """(location, mass) of the F_gamma point mass; mass 0 when gamma <= 1."""
    return 0.0, max(0.0, 1.0 - 1.0 / params.gamma)


def companion_atom(params: MpParams) -> tuple[float, float]:
    """(location, mass) of the companion-law point mass; mass 0 when gamma >= 1."""
    return 0.0, max(0.0, 1.0 - params.gamma)


def _check_above_bulk(z: float, params: MpParams) -> None:
    if not (z - params.b_gamma > EDGE_GUARD):
        raise DomainError(
            f"z = {z} must exceed the bulk edge b = {params.b_gamma} by more than {EDGE_GUARD}"
        )


def companion_stieltjes(z: float, params: MpParams) -> float:
    """Companion Stieltjes transform m(z) = int (x - z)^-1 dcompanion, z > b.

    Root selection is closed form: the +sqrt(disc) branch of the defining
    quadratic, which is the one tending to 0- as z -> infinity.
    """
    _check_above_bulk(z, params)
    g = params.gamma
    lin = z + 1.0 - g
    disc = lin * lin - 4.0 * z
    m = (-lin + math.sqrt(disc)) / (2.0 * z)
    lo = -1.0 / (1.0 + math.sqrt(g))
    assert lo - 1e-12 < m < 0.0, f"branch selection failed: m={m} not in ({lo}, 0)"
    return m


def companion_stieltjes_deriv(z: float, params: MpParams) -> float:
    """m'(z) = int (z - x)^-2 dcompanion, by implicit differentiation."""
    m = companion_stieltjes(z, params)
    g = params.gamma
    return -(m * m + m) / (2.0 * z * m + z + 1.0 - g)


def resolvent_moment(z: float, k: int, weight: str, params: MpParams) -> float:
    """Weighted companion resolvent integral int w(x) (z - x)^-k dcompanion.

    weight "none" means w(x) = 1, weight "x" means w(x) = x; k in {1, 2}.
    The x-weighted forms use x (z - x)^-2 = z (z - x)^-2 - (z - x)^-1 and
    its k = 1 analogue, so everything is assembled from m and m'.
    """
    if weight not in ("none", "x"):
        raise DomainError(f"unsupported weight {weight!r}; expected 'none' or 'x'")
    if k not in (1, 2):
        raise DomainError(f"unsupported resolvent power k={k}; expected 1 or 2")
    m = companion_stieltjes(z, params)
    if weight == "none":
        if k == 1:
            return -m
        return companion_stieltjes_deriv(z, params)
    if k == 1:
        return -z * m - 1.0
    return z * companion_stieltjes_deriv(z, params) + m
