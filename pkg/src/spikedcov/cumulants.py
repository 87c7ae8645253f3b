"""Fourth-order cumulant tensors and their contractions.

For a mean-zero signal with covariance S = (s_jk), the tensor is

    kappa_jklm = E[x_j x_k x_l x_m] - s_jk s_lm - s_jl s_km - s_jm s_kl,

fully symmetric in its four indices and identically zero for Gaussians.
Tensors are stored dense; every experiment here has m small enough that
m^4 entries are negligible.

The bilinear-form machinery at the bottom packages the covariance blocks
and mixed fourth moments of a pair (x, y) in R^L x R^L into the matrices

    J = Gxx o Gyy + Gxy o Gyx          (o = entrywise product)
    K_ll' = E(x_l y_l x_l' y_l') - E(x_l y_l) E(x_l' y_l')
            - E(x_l y_l') E(x_l' y_l) - E(x_l x_l') E(y_l y_l'),

which combine as theta*J + omega*K into the limit covariance of centered
quadratic forms n^(-1/2)[X^T B_n Y - rho tr B_n].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import SignalDistribution
from .errors import DomainError, InvalidCumulantError

__all__ = [
    "CumulantTensor",
    "exact_tensor",
    "empirical_tensor",
    "contract",
    "knu_matrix",
    "contraction_matrix",
    "BilinearMoments",
    "symmetric_pairs",
    "bilinear_jk_from_moments",
    "bilinear_jk_from_samples",
    "bilinear_jk_from_signal",
]


@dataclass(frozen=True)
class CumulantTensor:
    """Dense fourth-order cumulant array, symmetric under index permutation."""

    kappa: np.ndarray = field(repr=False)

    def __post_init__(self):
        k = np.asarray(self.kappa, dtype=float)
        if k.ndim != 4 or len(set(k.shape)) != 1:
            raise InvalidCumulantError(f"kappa must be m^4 shaped, got {k.shape}")
        object.__setattr__(self, "kappa", k)

    @property
    def m(self) -> int:
        return self.kappa.shape[0]


def _sigma_products(sigma: np.ndarray) -> np.ndarray:
    """s_jk s_lm + s_jl s_km + s_jm s_kl as an m^4 array."""
    return (
        np.einsum("jk,lm->jklm", sigma, sigma)
        + np.einsum("jl,km->jklm", sigma, sigma)
        + np.einsum("jm,kl->jklm", sigma, sigma)
    )


def exact_tensor(dist: SignalDistribution, basis: np.ndarray, ells) -> CumulantTensor:
    """Cumulant tensor of a signal built as basis @ diag(sqrt(ells)) @ factors.

    gaussian -> zero tensor; iid_factors -> kappa4 * sum_a ells_a^2 on the
    rank-one fourth powers of the basis columns; scale_mixture ->
    (E w^4 - 1) times the Gaussian fourth-moment combination of the
    covariance.
    """
    basis = np.asarray(basis, dtype=float)
    ells = np.asarray(ells, dtype=float)
    m = basis.shape[0]
    if dist.kind == "gaussian":
        return CumulantTensor(np.zeros((m, m, m, m)))
    if dist.kind == "iid_factors":
        weights = dist.kappa4 * ells**2
        kappa = np.einsum("a,ja,ka,la,ma->jklm", weights, basis, basis, basis, basis)
        return CumulantTensor(kappa)
    if dist.kind == "scale_mixture":
        sigma = (basis * ells) @ basis.T
        return CumulantTensor((dist.ew4 - 1.0) * _sigma_products(sigma))
    raise InvalidCumulantError(f"unknown signal distribution kind {dist.kind!r}")


def empirical_tensor(samples: np.ndarray) -> CumulantTensor:
    """Plug-in moment estimator of the cumulant tensor from N x m data.

    Columns are centered by their sample means; no k-statistics bias
    correction (the estimator is only used at N where bias is far below
    the Monte Carlo tolerances).
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[0] < 4:
        raise DomainError(f"need an N x m sample with N >= 4, got shape {x.shape}")
    n, m = x.shape
    xc = x - x.mean(axis=0)
    sigma = xc.T @ xc / n

    # Fourth moments via products of coordinate pairs: E[x_i x_j x_k x_l]
    # depends only on the index multiset, so one L x L Gram of pair
    # products covers all m^4 entries without an N x m^4 intermediate.
    pairs = symmetric_pairs(m)
    pidx = {pq: t for t, pq in enumerate(pairs)}
    prods = np.empty((len(pairs), n))
    for t, (i, j) in enumerate(pairs):
        prods[t] = xc[:, i] * xc[:, j]
    gram = prods @ prods.T / n

    m4 = np.empty((m, m, m, m))
    for i in range(m):
        for j in range(m):
            for k in range(m):
                for l in range(m):
                    a, b, c, d = sorted((i, j, k, l))
                    m4[i, j, k, l] = gram[pidx[(a, b)], pidx[(c, d)]]
    return CumulantTensor(m4 - _sigma_products(sigma))


def contract(
    tensor: CumulantTensor, basis: np.ndarray, mu: int, mu_p: int, nu: int, nu_p: int
) -> float:
    """Contraction of the tensor onto four basis columns (0-based indices)."""
    m = tensor.m
    for idx in (mu, mu_p, nu, nu_p):
        if not 0 <= idx < m:
            raise DomainError(f"index {idx} out of range for m={m}")
    basis = np.asarray(basis, dtype=float)
    return float(
        np.einsum(
            "ijkl,i,j,k,l->",
            tensor.kappa,
            basis[:, mu],
            basis[:, mu_p],
            basis[:, nu],
            basis[:, nu_p],
        )
    )


def knu_matrix(tensor: CumulantTensor, basis: np.ndarray, nu: int) -> np.ndarray:
    """Partial contraction K^nu_{jj'} = sum_{kk'} p_k p_k' kappa_{jj'kk'}."""
    if not 0 <= nu < tensor.m:
        raise DomainError(f"index {nu} out of range for m={tensor.m}")
    p = np.asarray(basis, dtype=float)[:, nu]
    return np.einsum("abkl,k,l->ab", tensor.kappa, p, p)


def contraction_matrix(tensor: CumulantTensor, basis: np.ndarray, nu: int) -> np.ndarray:
    """Matrix of contractions onto (p_mu, p_mu', p_nu, p_nu) over all mu, mu'."""
    if not 0 <= nu < tensor.m:
        raise DomainError(f"index {nu} out of range for m={tensor.m}")
    basis = np.asarray(basis, dtype=float)
    p = basis[:, nu]
    out = np.einsum("ijkl,ia,jb,k,l->ab", tensor.kappa, basis, basis, p, p)
    return 0.5 * (out + out.T)


def symmetric_pairs(m: int) -> list[tuple[int, int]]:
    """Row-major upper-triangle index pairs (j, k), j <= k."""
    return [(j, k) for j in range(m) for k in range(j, m)]


@dataclass(frozen=True)
class BilinearMoments:
    """Second- and fourth-moment summary of a pair (x, y) in R^L x R^L."""

    gamma_xx: np.ndarray = field(repr=False)
    gamma_xy: np.ndarray = field(repr=False)
    gamma_yx: np.ndarray = field(repr=False)
    gamma_yy: np.ndarray = field(repr=False)
    J: np.ndarray = field(repr=False)
    K: np.ndarray = field(repr=False)

    @property
    def L(self) -> int:
        return self.J.shape[0]

    def d_matrix(self, theta: float, omega: float) -> np.ndarray:
        """Limit covariance theta*J + omega*K of the quadratic-form CLT."""
        return theta * self.J + omega * self.K


def bilinear_jk_from_moments(
    gamma_xx, gamma_xy, gamma_yx, gamma_yy, cross4
) -> BilinearMoments:
    """Assemble J and K from covariance blocks and E(x_l y_l x_l' y_l')."""
    gxx = np.asarray(gamma_xx, dtype=float)
    gxy = np.asarray(gamma_xy, dtype=float)
    gyx = np.asarray(gamma_yx, dtype=float)
    gyy = np.asarray(gamma_yy, dtype=float)
    cross4 = np.asarray(cross4, dtype=float)
    shapes = {a.shape for a in (gxx, gxy, gyx, gyy, cross4)}
    if len(shapes) != 1 or gxx.ndim != 2 or gxx.shape[0] != gxx.shape[1]:
        raise DomainError(f"moment blocks must share one square shape, got {shapes}")
    j_mat = gxx * gyy + gxy * gyx
    rho = np.diag(gxy)
    k_mat = cross4 - np.outer(rho, rho) - j_mat
    return BilinearMoments(gxx, gxy, gyx, gyy, j_mat, 0.5 * (k_mat + k_mat.T))


def bilinear_jk_from_samples(x_samples, y_samples) -> BilinearMoments:
    """Plug-in J and K from N x L samples of (x, y), centered columnwise."""
    x = np.asarray(x_samples, dtype=float)
    y = np.asarray(y_samples, dtype=float)
    if x.shape != y.shape or x.ndim != 2:
        raise DomainError(f"x and y samples must share an N x L shape, got {x.shape} vs {y.shape}")
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    gxx = xc.T @ xc / n
    gxy = xc.T @ yc / n
    gyy = yc.T @ yc / n
    prods = xc * yc
    cross4 = prods.T @ prods / n
    return bilinear_jk_from_moments(gxx, gxy, gxy.T, gyy, cross4)


def bilinear_jk_from_signal(
    dist: SignalDistribution, basis: np.ndarray, ells
) -> tuple[BilinearMoments, list[tuple[int, int]]]:
    """Exact J and K for the pair built from a signal's coordinate pairs.

    Index l runs over pairs (j, k), j <= k, with x_l = xi_j and y_l = xi_k;
    this is the vectorization that turns the matrix quadratic-form CLT into
    the bilinear one.  Returns the moments together with the pair order.
    """
    basis = np.asarray(basis, dtype=float)
    ells = np.asarray(ells, dtype=float)
    sigma = (basis * ells) @ basis.T
    kappa = exact_tensor(dist, basis, ells).kappa
    pairs = symmetric_pairs(basis.shape[0])
    L = len(pairs)
    gxx = np.empty((L, L))
    gxy = np.empty((L, L))
    gyx = np.empty((L, L))
    gyy = np.empty((L, L))
    k_mat = np.empty((L, L))
    for a, (j, k) in enumerate(pairs):
        for b, (jp, kp) in enumerate(pairs):
            gxx[a, b] = sigma[j, jp]
            gxy[a, b] = sigma[j, kp]
            gyx[a, b] = sigma[k, jp]
            gyy[a, b] = sigma[k, kp]
            k_mat[a, b] = kappa[j, k, jp, kp]
    j_mat = gxx * gyy + gxy * gyx
    return BilinearMoments(gxx, gxy, gyx, gyy, j_mat, k_mat), pairs
