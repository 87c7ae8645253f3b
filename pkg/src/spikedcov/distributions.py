"""Signal and noise distribution descriptions shared by the generator and
the cumulant constructions.

Every supported law has mean 0, variance 1 per component and finite
moments of all orders.  The three signal families are chosen to span the
kurtosis behaviors that matter for the fluctuation theory:

- "gaussian": vanishing fourth cumulants.
- "iid_factors": independent standardized factors behind the rotation;
  the cumulant tensor is diagonal in the factor basis.
- "scale_mixture": a Gaussian vector scaled by an independent random w
  with E w^2 = 1; produces cross cumulants that neither Gaussian nor
  independent-component signals can, which is exactly what the
  eigenvector-covariance kurtosis term needs to be exercised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

NOISE_LAWS = ("gaussian", "rademacher", "uniform_pm_sqrt3")

# E eta^4 for each unit-variance noise law.
NOISE_FOURTH_MOMENT = {
    "gaussian": 3.0,
    "rademacher": 1.0,
    "uniform_pm_sqrt3": 9.0 / 5.0,
}

# Fourth cumulant E z^4 - 3 of each unit-variance factor law.
FACTOR_KAPPA4 = {
    "gaussian": 0.0,
    "rademacher": -2.0,
    "uniform_pm_sqrt3": -6.0 / 5.0,
}

_SQRT3 = math.sqrt(3.0)


def sample_law(law: str, rng: np.random.Generator, shape) -> np.ndarray:
    """Draw iid mean-0 variance-1 entries from a named law."""
    if law == "gaussian":
        return rng.standard_normal(shape)
    if law == "rademacher":
        return rng.integers(0, 2, size=shape).astype(float) * 2.0 - 1.0
    if law == "uniform_pm_sqrt3":
        return rng.uniform(-_SQRT3, _SQRT3, size=shape)
    raise ConfigError(f"unknown law {law!r}; expected one of {NOISE_LAWS}")


@dataclass(frozen=True)
class SignalDistribution:
    """Construction recipe for the signal vector.

    kind "gaussian" ignores the other fields.  kind "iid_factors" draws
    standardized factors from factor_law.  kind "scale_mixture" multiplies
    a Gaussian vector by w with w^2 drawn from (w2_values, w2_probs).
    """

    kind: str
    factor_law: str = "gaussian"
    w2_values: tuple[float, ...] = ()
    w2_probs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("gaussian", "iid_factors", "scale_mixture"):
            raise ConfigError(f"unknown signal distribution kind {self.kind!r}")
        if self.kind == "iid_factors" and self.factor_law not in FACTOR_KAPPA4:
            raise ConfigError(f"unknown factor law {self.factor_law!r}")
        if self.kind == "scale_mixture":
            vals = tuple(float(v) for v in self.w2_values)
            probs = tuple(float(p) for p in self.w2_probs)
            object.__setattr__(self, "w2_values", vals)
            object.__setattr__(self, "w2_probs", probs)
            if len(vals) != len(probs) or not vals:
                raise ConfigError("scale_mixture needs matching w2_values/w2_probs")
            if any(v <= 0 for v in vals) or any(p < 0 for p in probs):
                raise ConfigError("w^2 values must be positive, probabilities nonnegative")
            if abs(sum(probs) - 1.0) > 1e-12:
                raise ConfigError(f"w^2 probabilities must sum to 1, got {sum(probs)}")
            ew2 = sum(p * v for p, v in zip(probs, vals))
            if abs(ew2 - 1.0) > 1e-12:
                raise ConfigError(f"scale mixture must have E w^2 = 1, got {ew2}")

    @property
    def kappa4(self) -> float:
        """Per-factor fourth cumulant (gaussian and iid_factors kinds)."""
        if self.kind == "gaussian":
            return 0.0
        if self.kind == "iid_factors":
            return FACTOR_KAPPA4[self.factor_law]
        raise ConfigError("kappa4 is undefined for scale_mixture signals")

    @property
    def ew4(self) -> float:
        """E w^4 of the scale factor (1 unless scale_mixture)."""
        if self.kind != "scale_mixture":
            return 1.0
        return sum(p * v * v for p, v in zip(self.w2_probs, self.w2_values))

    @classmethod
    def from_config(cls, obj) -> "SignalDistribution":
        if isinstance(obj, str):
            if obj == "gaussian":
                return cls("gaussian")
            raise ConfigError(
                f"signal_dist {obj!r} needs parameters; pass an object with 'kind'"
            )
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ConfigError(f"cannot parse signal_dist from {obj!r}")
        kind = obj["kind"]
        if kind == "gaussian":
            return cls("gaussian")
        if kind == "iid_factors":
            return cls("iid_factors", factor_law=obj.get("factor_law", "gaussian"))
        if kind == "scale_mixture":
            return cls(
                "scale_mixture",
                w2_values=tuple(obj.get("w2_values", ())),
                w2_probs=tuple(obj.get("w2_probs", ())),
            )
        raise ConfigError(f"unknown signal distribution kind {kind!r}")

    def to_config(self):
        if self.kind == "gaussian":
            return "gaussian"
        if self.kind == "iid_factors":
            return {"kind": "iid_factors", "factor_law": self.factor_law}
        return {
            "kind": "scale_mixture",
            "w2_values": list(self.w2_values),
            "w2_probs": list(self.w2_probs),
        }


GAUSSIAN_SIGNAL = SignalDistribution("gaussian")
