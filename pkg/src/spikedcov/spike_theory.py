"""Closed-form asymptotics for supercritical covariance spikes.

A population spike ell above the phase transition 1 + sqrt(gamma) produces
an outlier sample eigenvalue near

    rho(ell, gamma) = ell + gamma * ell / (ell - 1),

with derivative rho_dot = 1 - gamma / (ell - 1)^2.  The second-order
constants

    theta   = (ell - 1 + gamma)^2 / ((ell - 1)^2 - gamma)
    omega   = (ell - 1 + gamma)^2 / (ell - 1)^2
    c_rho   = gamma / ((ell - 1)^2 - gamma)
    slutsky = 1 + c_rho * ell = (1 + gamma/(ell-1)) / (1 - gamma/(ell-1)^2)

drive the fluctuation formulas: the outlier eigenvalue is asymptotically
normal with variance

    sigma^2 = 2 ell^2 rho_dot + rho_dot^2 * q,

where q is the quartic contraction of the signal's fourth-cumulant tensor
onto the spike eigenvector (zero for Gaussian signals), and the squared
sample/population eigenvector cosine converges to ell * rho_dot / rho.

The normalized signal-block eigenvector fluctuates around the population
eigenvector with covariance D S D, where D is the inverse-eigengap
diagonal and S combines a diagonal Gaussian term rho_dot^-1 ell_nu ell_mu
with cross contractions of the cumulant tensor.

All functions are pure; spike indices are 0-based positions in the
descending spike list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import cumulants
from .errors import (
    DegenerateSpectrumError,
    DomainError,
    InvalidCumulantError,
    SubcriticalSpikeError,
)
from .mp_law import EDGE_GUARD, MpParams


def _require_supercritical(ell: float, gamma: float) -> None:
    if not (gamma > 0 and math.isfinite(gamma)):
        raise DomainError(f"gamma must be positive, got {gamma}")
    if not (ell > 1.0 + math.sqrt(gamma)):
        raise SubcriticalSpikeError(
            f"ell = {ell} is not above the phase transition 1 + sqrt(gamma) = "
            f"{1.0 + math.sqrt(gamma)}"
        )


def spike_forward(ell: float, gamma: float) -> float:
    """Outlier location rho(ell, gamma) = ell + gamma*ell/(ell-1)."""
    _require_supercritical(ell, gamma)
    return ell + gamma * ell / (ell - 1.0)


def spike_derivative(ell: float, gamma: float) -> float:
    """d rho / d ell = 1 - gamma/(ell-1)^2, in (0, 1] above the transition."""
    _require_supercritical(ell, gamma)
    return 1.0 - gamma / (ell - 1.0) ** 2


def spike_backward(rho: float, gamma: float) -> float:
    """Invert the spike map: the root of ell^2 - (rho+1-gamma) ell + rho = 0
    exceeding 1 + sqrt(gamma).  Round-trips with :func:`spike_forward`."""
    b_gamma = MpParams(gamma).b_gamma
    if not (rho - b_gamma > EDGE_GUARD):
        raise DomainError(f"rho = {rho} must exceed the bulk edge b = {b_gamma}")
    lin = rho + 1.0 - gamma
    disc = lin * lin - 4.0 * rho
    ell = 0.5 * (lin + math.sqrt(disc))
    assert ell > 1.0 + math.sqrt(gamma)
    return ell


def theta_omega_c(ell: float, gamma: float) -> tuple[float, float, float, float]:
    """(theta, omega, c_rho, slutsky) for a supercritical spike.

    Consistency: omega = theta * rho_dot = (rho/ell)^2 and
    slutsky * ell * rho_dot = rho.
    """
    _require_supercritical(ell, gamma)
    e1 = ell - 1.0
    denom = e1 * e1 - gamma
    theta = (e1 + gamma) ** 2 / denom
    omega = (e1 + gamma) ** 2 / (e1 * e1)
    c_rho = gamma / denom
    slutsky = 1.0 + c_rho * ell
    return theta, omega, c_rho, slutsky


def eigenvalue_sigma2(ell: float, gamma: float, quartic_contraction: float) -> float:
    """CLT variance 2 ell^2 rho_dot + rho_dot^2 * quartic_contraction.

    quartic_contraction is the cumulant tensor contracted four times onto
    the spike's population eigenvector (see cumulants.contract); it is 0
    for Gaussian signals.
    """
    rho_dot = spike_derivative(ell, gamma)
    sigma2 = 2.0 * ell * ell * rho_dot + rho_dot * rho_dot * quartic_contraction
    if sigma2 <= 0.0:
        raise InvalidCumulantError(
            f"sigma^2 = {sigma2} <= 0: quartic contraction {quartic_contraction} "
            "is inconsistent with a valid fourth-cumulant tensor"
        )
    return sigma2


def cosine_limit(ell: float, gamma: float) -> float:
    """Limit of the squared sample/population eigenvector inner product.

    (1 - gamma/(ell-1)^2) / (1 + gamma/(ell-1)) above the transition,
    0 at or below it (eigenvector inconsistency).
    """
    if not (ell > 0 and gamma > 0):
        raise DomainError(f"need ell > 0 and gamma > 0, got ell={ell}, gamma={gamma}")
    if ell <= 1.0 + math.sqrt(gamma):
        return 0.0
    e1 = ell - 1.0
    return (1.0 - gamma / (e1 * e1)) / (1.0 + gamma / e1)


@dataclass(frozen=True)
class SpikeSpectrum:
    """Population spikes ell_1 > ... > ell_m with aspect ratio gamma."""

    ells: tuple[float, ...]
    gamma: float

    def __post_init__(self):
        ells = tuple(float(v) for v in self.ells)
        object.__setattr__(self, "ells", ells)
        if not ells:
            raise DomainError("at least one spike is required")
        if any(v <= 0 for v in ells):
            raise DomainError(f"spikes must be positive, got {ells}")
        if any(a == b for a, b in zip(ells, ells[1:])):
            raise DegenerateSpectrumError(f"repeated spikes are not supported: {ells}")
        if any(a < b for a, b in zip(ells, ells[1:])):
            raise DomainError(f"spikes must be strictly decreasing, got {ells}")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise DomainError(f"gamma must be positive, got {self.gamma}")

    @property
    def m(self) -> int:
        return len(self.ells)

    @property
    def m0(self) -> int:
        """Number of supercritical spikes."""
        crit = 1.0 + math.sqrt(self.gamma)
        return sum(1 for v in self.ells if v > crit)

    def require_supercritical(self, nu: int) -> float:
        if not 0 <= nu < self.m:
            raise DomainError(f"spike index {nu} out of range for m={self.m}")
        if nu >= self.m0:
            raise SubcriticalSpikeError(
                f"spike {nu} (ell={self.ells[nu]}) is not supercritical at gamma={self.gamma}"
            )
        return self.ells[nu]


def eigenvector_covariance(
    spectrum: SpikeSpectrum, nu: int, kurtosis_contractions: np.ndarray
) -> np.ndarray:
    """Asymptotic covariance D S D of sqrt(n) (P^T a_nu - e_nu).

    kurtosis_contractions[mu, mu'] must hold the tensor contraction onto
    (p_mu, p_mu', p_nu, p_nu); only rows/columns mu, mu' != nu are read
    because D zeroes the nu-th slot.  The result is symmetric PSD with a
    zero nu-th row and column.
    """
    ell_nu = spectrum.require_supercritical(nu)
    m = spectrum.m
    contr = np.asarray(kurtosis_contractions, dtype=float)
    if contr.shape != (m, m):
        raise InvalidCumulantError(
            f"contraction matrix must be {m}x{m}, got {contr.shape}"
        )
    if not np.allclose(contr, contr.T, atol=1e-10):
        raise InvalidCumulantError("contraction matrix must be symmetric")
    rho_dot = spike_derivative(ell_nu, spectrum.gamma)
    ells = np.asarray(spectrum.ells)
    sig = np.diag(ell_nu * ells / rho_dot) + contr
    d = np.zeros(m)
    mask = np.arange(m) != nu
    d[mask] = 1.0 / (ell_nu - ells[mask])
    cov = d[:, None] * sig * d[None, :]
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class TheoryPrediction:
    """All closed-form asymptotics for one spike at one aspect ratio."""

    nu: int
    ell: float
    gamma: float
    rho: float
    rho_dot: float
    sigma2: float
    cos2_limit: float
    theta: float
    omega: float
    c_rho: float
    slutsky: float
    evec_cov: np.ndarray = field(repr=False)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


def predict(
    spectrum: SpikeSpectrum,
    nu: int,
    gamma_used: float,
    tensor: cumulants.CumulantTensor,
    basis: np.ndarray,
) -> TheoryPrediction:
    """Bundle all predictions for spike nu, evaluated at gamma_used.

    gamma_used is normally the finite-sample ratio p/n: centering there
    removes an order n^(-1/2) mean shift that centering at the limit ratio
    would leave behind.  tensor and basis (population eigenvectors as
    columns) supply the cumulant contractions.
    """
    spec_n = replace(spectrum, gamma=gamma_used)
    ell = spec_n.require_supercritical(nu)
    q = cumulants.contract(tensor, basis, nu, nu, nu, nu)
    contr = cumulants.contraction_matrix(tensor, basis, nu)
    theta, omega, c_rho, slutsky = theta_omega_c(ell, gamma_used)
    return TheoryPrediction(
        nu=nu,
        ell=ell,
        gamma=gamma_used,
        rho=spike_forward(ell, gamma_used),
        rho_dot=spike_derivative(ell, gamma_used),
        sigma2=eigenvalue_sigma2(ell, gamma_used, q),
        cos2_limit=cosine_limit(ell, gamma_used),
        theta=theta,
        omega=omega,
        c_rho=c_rho,
        slutsky=slutsky,
        evec_cov=eigenvector_covariance(spec_n, nu, contr),
    )
