"""Sample eigenstructure of one dataset.

The sample covariance S = n^-1 X X^T is partitioned into signal/noise
blocks; each top eigenvector splits as (u_nu; v_nu).  Two exact algebraic
identities hold on every replicate whenever t is above the noise
spectrum and serve as solver diagnostics:

    det(K(t) - t I) = 0          at t = hat_ell_nu,
    a^T (I + Q(t)) a = |u|^-2    at t = hat_ell_nu, a = u/|u|,

with the Schur complement K(t) = S11 + S12 (t I - S22)^-1 S21 and
Q(t) = S12 (t I - S22)^-2 S21.  K(t) also equals the quadratic form
n^-1 X1 B_n(t) X1^T with B_n(t) = t (t I_n - n^-1 X2^T X2)^-1; both
evaluation routes are implemented and must agree (Woodbury).

Top eigenpairs come from the smaller of the (m+p) x (m+p) covariance and
the n x n Gram, whose nonzero spectra coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh

from .errors import EigensolverError, ResolventDomainError
from .model_gen import Dataset, population_axes

# Relative clearance required between an evaluation point and the top of
# the noise spectrum; mirrors the high-probability event the asymptotic
# statements are conditioned on.
RESOLVENT_GUARD = 1e-8

# Residual tolerance for accepting an eigenpair, relative to ||S||.
EIG_RESIDUAL_RTOL = 1e-8


@dataclass(frozen=True)
class SampleSpectrum:
    """Top-m sample eigenpairs and the diagnostics derived from them.

    Row nu of u_vecs / a_vecs holds the signal-block subvector of the
    nu-th unit eigenvector (raw and normalized, sign fixed so that the
    population inner product is nonnegative).
    """

    ell_hats: np.ndarray = field(repr=False)
    u_vecs: np.ndarray = field(repr=False)
    v_norm2s: np.ndarray = field(repr=False)
    a_vecs: np.ndarray = field(repr=False)
    cosines2: np.ndarray = field(repr=False)
    mu1: float
    gamma_n: float

    @property
    def m(self) -> int:
        return len(self.ell_hats)

    def u_norm2(self, nu: int) -> float:
        return float(self.u_vecs[nu] @ self.u_vecs[nu])


def noise_top_eigenvalue(x2: np.ndarray, n: int) -> float:
    """Largest eigenvalue of S22 = n^-1 X2 X2^T via the smaller Gram matrix."""
    p = x2.shape[0]
    if p == 0:
        return 0.0
    if p <= n:
        g = x2 @ x2.T / n
    else:
        g = x2.T @ x2 / n
    dim = g.shape[0]
    return float(eigh(g, eigvals_only=True, subset_by_index=(dim - 1, dim - 1))[0])


def _top_eigpairs(x: np.ndarray, n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-m eigenpairs of n^-1 X X^T, descending.

    Uses the n x n Gram when n < dim and recovers eigenvectors through X;
    the two matrices share their nonzero spectrum.
    """
    dim = x.shape[0]
    if n < dim:
        gram = x.T @ x / n
        vals, vecs = eigh(gram, subset_by_index=(n - m, n - 1))
        vals, vecs = vals[::-1], vecs[:, ::-1]
        if np.any(vals <= 0):
            raise EigensolverError(f"nonpositive Gram eigenvalue {vals.min()}")
        full = x @ vecs / np.sqrt(n * vals)
    else:
        s = x @ x.T / n
        vals, full = eigh(s, subset_by_index=(dim - m, dim - 1))
        vals, full = vals[::-1], full[:, ::-1]
    return vals, full


def decompose(data: Dataset, axes: tuple[np.ndarray, np.ndarray]) -> SampleSpectrum:
    """Top-m eigenstructure of the sample covariance of one dataset.

    axes is the population (P, Lambda) used for sign fixing and cosines.
    """
    basis, _ = axes
    spec = data.spec
    m, p, n = spec.m, spec.p, spec.n
    x = np.vstack([data.x1, data.x2]) if p > 0 else data.x1
    ell_hats, vecs = _top_eigpairs(x, n, m)

    # Residual check against the implicit S, normalized by ||S|| = ell_hat_1.
    resid = x @ (x.T @ vecs) / n - vecs * ell_hats
    worst = np.linalg.norm(resid, axis=0).max()
    if worst > EIG_RESIDUAL_RTOL * ell_hats[0]:
        raise EigensolverError(
            f"eigenpair residual {worst:.3e} exceeds {EIG_RESIDUAL_RTOL} * ||S||",
            replicate=data.replicate,
        )

    u = vecs[:m, :].T.copy()
    signs = np.where(np.einsum("ij,ji->i", u, basis) >= 0.0, 1.0, -1.0)
    u *= signs[:, None]
    u_norm2 = np.einsum("ij,ij->i", u, u)
    v_norm2 = 1.0 - u_norm2
    with np.errstate(invalid="ignore"):
        a = u / np.sqrt(u_norm2)[:, None]
    cos2 = np.einsum("ij,ji->i", u, basis) ** 2

    mu1 = noise_top_eigenvalue(data.x2, n) if p > 0 else 0.0
    return SampleSpectrum(
        ell_hats=ell_hats,
        u_vecs=u,
        v_norm2s=v_norm2,
        a_vecs=a,
        cosines2=cos2,
        mu1=mu1,
        gamma_n=spec.gamma_n,
    )


def check_resolvent_point(t: float, mu1: float) -> None:
    """Reject evaluation points inside or hugging the noise spectrum."""
    if not (t - mu1 > RESOLVENT_GUARD * t):
        raise ResolventDomainError(
            f"t = {t} is within guard distance of the noise spectrum top mu1 = {mu1}"
        )


def _blocks(data: Dataset):
    n = data.spec.n
    s11 = data.x1 @ data.x1.T / n
    s21 = data.x2 @ data.x1.T / n
    s22 = data.x2 @ data.x2.T / n
    return s11, s21, s22


class SchurEvaluator:
    """Evaluates (K(t), Q(t)) for several t over one dataset.

    The covariance blocks are formed once; each evaluation point gets one
    symmetric factorization of (t I - S22), reused across the m right-hand
    sides and shared between K and Q.
    """

    def __init__(self, data: Dataset, mu1: float | None = None):
        self.spec = data.spec
        if self.spec.p > 0:
            self.s11, self.s21, self.s22 = _blocks(data)
        else:
            self.s11 = data.x1 @ data.x1.T / self.spec.n
            self.s21 = self.s22 = None
        self.mu1 = noise_top_eigenvalue(data.x2, self.spec.n) if mu1 is None else mu1

    def pair(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        m, p = self.spec.m, self.spec.p
        if p == 0:
            return self.s11.copy(), np.zeros((m, m))
        check_resolvent_point(t, self.mu1)
        factor = cho_factor(t * np.eye(p) - self.s22)
        y = cho_solve(factor, self.s21)
        k = self.s11 + self.s21.T @ y
        q = y.T @ y
        return 0.5 * (k + k.T), 0.5 * (q + q.T)


def schur_pair(
    data: Dataset, t: float, mu1: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """(K(t), Q(t)) sharing one factorization of (t I - S22)."""
    return SchurEvaluator(data, mu1=mu1).pair(t)


def schur_K(
    data: Dataset, t: float, mu1: float | None = None, route: str = "auto"
) -> np.ndarray:
    """Schur complement K(t) = S11 + S12 (t I - S22)^-1 S21.

    route "pp" factors the p x p noise resolvent; route "nn" evaluates the
    equivalent n x n quadratic form t n^-1 X1 (t I - n^-1 X2^T X2)^-1 X1^T;
    "auto" picks the smaller system.  Routes agree up to rounding.
    """
    spec = data.spec
    if spec.p == 0:
        return data.x1 @ data.x1.T / spec.n
    if mu1 is None:
        mu1 = noise_top_eigenvalue(data.x2, spec.n)
    check_resolvent_point(t, mu1)
    if route == "auto":
        route = "pp" if spec.p <= spec.n else "nn"
    if route == "pp":
        s11, s21, s22 = _blocks(data)
        factor = cho_factor(t * np.eye(spec.p) - s22)
        k = s11 + s21.T @ cho_solve(factor, s21)
    elif route == "nn":
        gram = data.x2.T @ data.x2 / spec.n
        factor = cho_factor(t * np.eye(spec.n) - gram)
        k = t / spec.n * (data.x1 @ cho_solve(factor, data.x1.T))
    else:
        raise ValueError(f"unknown route {route!r}; expected 'pp', 'nn' or 'auto'")
    return 0.5 * (k + k.T)


def q_matrix(data: Dataset, t: float, mu1: float | None = None) -> np.ndarray:
    """Q(t) = S12 (t I - S22)^-2 S21."""
    return schur_pair(data, t, mu1=mu1)[1]


def quadform_residual(data: Dataset, b_spec) -> np.ndarray:
    """Concentration residual n^-1 X1 B_n X1^T - n^-1 tr(B_n) Sigma.

    b_spec is "identity", ("resolvent", t) for B_n(t) = t (tI - n^-1 X2^T
    X2)^-1, or an explicit symmetric n x n array.  The residual is O(n^-1/2)
    whenever ||B_n|| stays bounded.
    """
    spec = data.spec
    n = spec.n
    basis, lam = population_axes(spec)
    sigma = (basis * lam) @ basis.T
    if isinstance(b_spec, str) and b_spec == "identity":
        return data.x1 @ data.x1.T / n - sigma
    if isinstance(b_spec, tuple) and len(b_spec) == 2 and b_spec[0] == "resolvent":
        t = float(b_spec[1])
        if spec.p == 0:
            # B_n(t) = I_n when there is no noise block.
            return data.x1 @ data.x1.T / n - sigma
        r = min(spec.p, n)
        if spec.p <= n:
            noise_eigs = eigh(data.x2 @ data.x2.T / n, eigvals_only=True)
        else:
            noise_eigs = eigh(data.x2.T @ data.x2 / n, eigvals_only=True)
        check_resolvent_point(t, float(noise_eigs[-1]))
        trace_bn = (n - r) + float(np.sum(t / (t - noise_eigs)))
        k = schur_K(data, t, mu1=float(noise_eigs[-1]))
        return k - trace_bn / n * sigma
    b = np.asarray(b_spec, dtype=float)
    if b.shape != (n, n):
        raise ValueError(f"custom B must be {n}x{n} symmetric, got shape {b.shape}")
    return data.x1 @ b @ data.x1.T / n - np.trace(b) / n * sigma
