"""Seedable generation of spiked-model datasets.

A dataset is X = [X1; X2] with n iid columns: the m signal rows carry
covariance Sigma = P diag(ells) P^T and the p noise rows are iid
standardized entries, independent of the signal.  Per-replicate RNG
streams are derived by feeding (seed, replicate, block tag) into a seed
sequence, so replicates can run under any scheduler and still reproduce
bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import NOISE_LAWS, SignalDistribution, sample_law
from .errors import ConfigError
from .spike_theory import SpikeSpectrum

_SIGNAL_TAG = 1
_NOISE_TAG = 2


@dataclass(frozen=True)
class RotationSpec:
    """Population eigenbasis: exact identity or a seeded Haar rotation."""

    kind: str = "identity"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("identity", "random_orthogonal"):
            raise ConfigError(f"unknown rotation kind {self.kind!r}")

    @classmethod
    def from_config(cls, obj) -> "RotationSpec":
        if isinstance(obj, str):
            if obj == "identity":
                return cls("identity")
            raise ConfigError(f"rotation {obj!r} needs a seed; pass an object with 'kind'")
        if isinstance(obj, dict) and obj.get("kind") in ("identity", "random_orthogonal"):
            return cls(obj["kind"], int(obj.get("seed", 0)))
        raise ConfigError(f"cannot parse rotation from {obj!r}")

    def to_config(self):
        if self.kind == "identity":
            return "identity"
        return {"kind": "random_orthogonal", "seed": self.seed}


@dataclass(frozen=True)
class SpikedModelSpec:
    """Full description of one simulated model instance."""

    m: int
    p: int
    n: int
    ells: tuple[float, ...]
    rotation: RotationSpec
    signal_dist: SignalDistribution
    noise_dist: str
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "ells", tuple(float(v) for v in self.ells))
        if self.m != len(self.ells) or self.m < 1:
            raise ConfigError(f"m={self.m} must match len(ells)={len(self.ells)} >= 1")
        if self.p < 0 or self.n < 1:
            raise ConfigError(f"need p >= 0 and n >= 1, got p={self.p}, n={self.n}")
        if self.noise_dist not in NOISE_LAWS:
            raise ConfigError(f"unknown noise law {self.noise_dist!r}")
        if not 0 <= int(self.seed) < 2**63:
            raise ConfigError(f"seed must be a nonnegative 63-bit integer, got {self.seed}")
        if any(v <= 0 for v in self.ells):
            raise ConfigError(f"spikes must be positive, got {self.ells}")
        if any(a <= b for a, b in zip(self.ells, self.ells[1:])):
            raise ConfigError(f"spikes must be strictly decreasing, got {self.ells}")

    @property
    def gamma_n(self) -> float:
        return self.p / self.n

    def spectrum(self, gamma: float | None = None) -> SpikeSpectrum:
        return SpikeSpectrum(self.ells, self.gamma_n if gamma is None else gamma)

    @classmethod
    def from_config(cls, obj: dict) -> "SpikedModelSpec":
        if not isinstance(obj, dict):
            raise ConfigError(f"model config must be an object, got {type(obj).__name__}")
        required = {"m", "p", "n", "ells", "rotation", "signal_dist", "noise_dist", "seed"}
        missing = required - set(obj)
        if missing:
            raise ConfigError(f"model config missing fields: {sorted(missing)}")
        unknown = set(obj) - required
        if unknown:
            raise ConfigError(f"model config has unknown fields: {sorted(unknown)}")
        return cls(
            m=int(obj["m"]),
            p=int(obj["p"]),
            n=int(obj["n"]),
            ells=tuple(float(v) for v in obj["ells"]),
            rotation=RotationSpec.from_config(obj["rotation"]),
            signal_dist=SignalDistribution.from_config(obj["signal_dist"]),
            noise_dist=obj["noise_dist"],
            seed=int(obj["seed"]),
        )

    def to_config(self) -> dict:
        return {
            "m": self.m,
            "p": self.p,
            "n": self.n,
            "ells": list(self.ells),
            "rotation": self.rotation.to_config(),
            "signal_dist": self.signal_dist.to_config(),
            "noise_dist": self.noise_dist,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Dataset:
    """One replicate: signal rows X1 (m x n) and noise rows X2 (p x n)."""

    x1: np.ndarray = field(repr=False)
    x2: np.ndarray = field(repr=False)
    spec: SpikedModelSpec
    replicate: int


def _stream(seed: int, replicate: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=(seed, replicate, tag)))


def _haar_orthogonal(m: int, seed: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix: QR of iid Gaussians with the R
    diagonal sign fixed, deterministic given the seed."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return q * d


def population_axes(spec: SpikedModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """(P, Lambda) with Sigma = P diag(Lambda) P^T, exactly as used by generate."""
    lam = np.asarray(spec.ells, dtype=float)
    if spec.rotation.kind == "identity":
        return np.eye(spec.m), lam
    return _haar_orthogonal(spec.m, spec.rotation.seed), lam


def generate(spec: SpikedModelSpec, replicate: int) -> Dataset:
    """Draw one dataset; (spec.seed, replicate) fully determines the output."""
    basis, lam = population_axes(spec)
    scale = basis * np.sqrt(lam)

    rng_sig = _stream(spec.seed, replicate, _SIGNAL_TAG)
    dist = spec.signal_dist
    if dist.kind == "gaussian":
        x1 = scale @ rng_sig.standard_normal((spec.m, spec.n))
    elif dist.kind == "iid_factors":
        x1 = scale @ sample_law(dist.factor_law, rng_sig, (spec.m, spec.n))
    else:
        z = rng_sig.standard_normal((spec.m, spec.n))
        w2 = rng_sig.choice(np.asarray(dist.w2_values), size=spec.n, p=dist.w2_probs)
        x1 = (scale @ z) * np.sqrt(w2)[None, :]

    rng_noise = _stream(spec.seed, replicate, _NOISE_TAG)
    x2 = sample_law(spec.noise_dist, rng_noise, (spec.p, spec.n))
    return Dataset(x1=x1, x2=x2, spec=spec, replicate=replicate)
