"""Field envelopes, Hermite-Gauss modes and their overlaps with a split line pair.

Conventions: times in seconds, angular frequencies in rad/s, ``sigma`` is the
temporal mode spread (the Gaussian amplitude is ``exp(-sigma**2 t**2)``).
The separation ``epsilon`` is dimensionless; the two lines sit at
``omega_c -/+ sigma * epsilon / 2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class SourceKind(str, enum.Enum):
    THERMAL = "thermal"
    COHERENT = "coherent"  # phase-averaged coherent pair


@dataclass(frozen=True)
class SourceParams:
    epsilon: float
    sigma: float = 1.0
    t_c: float = 0.0
    omega_c: float = 0.0
    n_bar: float = 1.0
    kind: SourceKind = SourceKind.THERMAL

    def __post_init__(self):
        object.__setattr__(self, "kind", SourceKind(self.kind))
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not self.n_bar >= 0:
            raise ValueError(f"n_bar must be >= 0, got {self.n_bar}")
        for name in ("epsilon", "sigma", "t_c", "omega_c", "n_bar"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "sigma": self.sigma,
            "t_c": self.t_c,
            "omega_c": self.omega_c,
            "n_bar": self.n_bar,
            "kind": self.kind.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SourceParams":
        return cls(**d)


@dataclass(frozen=True)
class SourceRealization:
    """Complex amplitudes of the two lines for one shot (before photon scaling).

    ``a1`` multiplies the lower line ``exp(-i sigma eps t / 2)`` and ``a2`` the
    upper one. For a coherent pair ``a1 = exp(i phi0)/sqrt(2)`` and
    ``a2 = exp(-i phi0)/sqrt(2)``.
    """

    a1: complex
    a2: complex

    @classmethod
    def coherent(cls, phi0: float, amplitude: float = 1.0) -> "SourceRealization":
        r = amplitude / math.sqrt(2.0)
        return cls(r * np.exp(1j * phi0), r * np.exp(-1j * phi0))


# ---------------------------------------------------------------------------
# Hermite-Gauss modes
# ---------------------------------------------------------------------------

def hg0(t, sigma: float = 1.0, t_r: float = 0.0):
    """Fundamental Gaussian mode ``(2 sigma^2/pi)^(1/4) exp(-sigma^2 (t - t_r)^2)``."""
    x = np.asarray(t, dtype=float) - t_r
    return (2.0 * sigma**2 / np.pi) ** 0.25 * np.exp(-(sigma**2) * x**2)


def hg1(t, sigma: float = 1.0, t_r: float = 0.0):
    """First antisymmetric mode ``2 sigma (t - t_r) hg0(t)``."""
    x = np.asarray(t, dtype=float) - t_r
    return 2.0 * sigma * x * hg0(t, sigma, t_r)


def hg_mode(k: int, t, sigma: float = 1.0, t_r: float = 0.0):
    if k == 0:
        return hg0(t, sigma, t_r)
    if k == 1:
        return hg1(t, sigma, t_r)
    raise ValueError(f"only modes k=0 and k=1 are supported, got k={k}")


def line_profiles(params: SourceParams, t):
    """Unit-amplitude time profiles of the lower and upper line.

    Returns ``(b1, b2)`` such that the envelope of a realization is
    ``a1 * b1 + a2 * b2``.
    """
    x = np.asarray(t, dtype=float) - params.t_c
    base = hg0(x, params.sigma) * np.exp(1j * params.omega_c * x)
    half = 0.5 * params.sigma * params.epsilon * x
    return base * np.exp(-1j * half), base * np.exp(1j * half)


def envelope(params: SourceParams, realization: SourceRealization, t):
    """Complex field envelope of one realization sampled at ``t``."""
    b1, b2 = line_profiles(params, t)
    return realization.a1 * b1 + realization.a2 * b2


def coherent_envelope(params: SourceParams, phi0: float, t, amplitude: float = 1.0):
    """Closed form ``A0 sqrt(2) exp(i w_c x) G(x) cos(sigma eps x / 2 - phi0)``, x = t - t_c."""
    x = np.asarray(t, dtype=float) - params.t_c
    return (
        amplitude
        * math.sqrt(2.0)
        * np.exp(1j * params.omega_c * x)
        * hg0(x, params.sigma)
        * np.cos(0.5 * params.sigma * params.epsilon * x - phi0)
    )


def overlap_coefficient(k: int, epsilon):
    """Amplitude overlap ``exp(-eps^2/32) (eps/4)^k / sqrt(k!)`` of one line with mode ``k``."""
    if k not in (0, 1):
        raise ValueError(f"only modes k=0 and k=1 are supported, got k={k}")
    eps = np.asarray(epsilon, dtype=float)
    if np.any(eps < 0):
        raise ValueError("epsilon must be >= 0")
    out = np.exp(-(eps**2) / 32.0) * (eps / 4.0) ** k
    return float(out) if out.ndim == 0 else out
