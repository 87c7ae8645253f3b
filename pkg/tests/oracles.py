"""Independent brute-force references for the closed forms under test.

These deliberately avoid the library's Stieltjes/eigen code paths:
integrals are adaptive quadrature against the density after a
singularity-removing substitution, and the 2x2 eigenproblem is solved by
the explicit rotation-angle formula.
"""

import math

import numpy as np
from scipy import integrate


def mp_edges(gamma: float) -> tuple[float, float]:
    return (1.0 - math.sqrt(gamma)) ** 2, (1.0 + math.sqrt(gamma)) ** 2


def mp_continuous_integral(g, gamma: float) -> float:
    """integral g(x) * sqrt((b-x)(x-a)) / (2 pi gamma x) dx over [a, b].

    Substituting x = a + (b-a) sin^2(t) removes both edge singularities
    (including the 1/sqrt(x) blowup at a = 0 when gamma = 1).
    """
    a, b = mp_edges(gamma)

    def integrand(t):
        s, c = math.sin(t), math.cos(t)
        x = a + (b - a) * s * s
        dens = math.sqrt(max((b - x) * (x - a), 0.0)) / (2.0 * math.pi * gamma * x)
        return g(x) * dens * (b - a) * 2.0 * s * c

    val, _ = integrate.quad(integrand, 0.0, math.pi / 2.0, limit=400)
    return val


def mp_expectation(g, gamma: float) -> float:
    """integral of g against the full MP law, atom at zero included."""
    atom = max(0.0, 1.0 - 1.0 / gamma)
    return atom * g(0.0) + mp_continuous_integral(g, gamma)


def companion_expectation(g, gamma: float) -> float:
    """integral of g against the companion law: atom max(0, 1-gamma) at
    zero plus gamma times the MP continuous part (the MP atom, when
    present, exactly cancels against the negative zero weight)."""
    atom = max(0.0, 1.0 - gamma)
    return atom * g(0.0) + gamma * mp_continuous_integral(g, gamma)


def exact_sym2_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form eigendecomposition of a symmetric 2x2 matrix.

    Returns (values descending, column eigenvectors), with the rotation
    angle from tan(2 phi) = 2 a01 / (a00 - a11).
    """
    a00, a01, a11 = a[0, 0], a[0, 1], a[1, 1]
    if a00 - a11 == 0.0:
        phi = math.pi / 4.0 if a01 != 0 else 0.0
    else:
        phi = 0.5 * math.atan2(2.0 * a01, a00 - a11)
    c, s = math.cos(phi), math.sin(phi)
    v1 = np.array([c, s])
    v2 = np.array([-s, c])
    l1 = v1 @ a @ v1
    l2 = v2 @ a @ v2
    if l1 >= l2:
        return np.array([l1, l2]), np.column_stack([v1, v2])
    return np.array([l2, l1]), np.column_stack([v2, v1])
