"""Outcome densities of the mode-1 heterodyne record and per-photon Fisher information.

Both heterodyne densities depend on the complex outcome only through ``|z|``,
so Fisher information integrals are one-dimensional:

    F = 2 pi int_0^R (d p / d eps)^2 / p  r dr

and the per-photon value is ``F / n_bar``.
"""

from __future__ import annotations

import csv
import enum
import functools
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import QuadratureError
from .model import overlap_coefficient


class Scheme(str, enum.Enum):
    HETERODYNE_THERMAL = "heterodyne_thermal"
    HETERODYNE_COHERENT = "heterodyne_coherent"
    DIRECT_SENSING = "direct_sensing"


@dataclass(frozen=True, eq=False)
class FisherCurve:
    epsilons: np.ndarray
    values: np.ndarray
    scheme: Scheme
    n_bar: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        eps = np.asarray(self.epsilons, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if eps.shape != vals.shape:
            raise ValueError("epsilons and values must have the same length")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("Fisher information values must be finite and non-negative")
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "values", vals)

    def rows(self):
        n_bar = "" if self.n_bar is None else self.n_bar
        for e, v in zip(self.epsilons, self.values):
            yield {"epsilon": repr(float(e)), "value": repr(float(v)),
                   "scheme": self.scheme.value, "n_bar": n_bar if n_bar == "" else repr(float(n_bar))}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["epsilon", "value", "scheme", "n_bar"])
            writer.writeheader()
            writer.writerows(self.rows())


def mode_amplitude(epsilon, n_bar):
    """``|alpha| = sqrt(n_bar / 2) c_1(eps)``, the mean amplitude in mode 1."""
    return math.sqrt(n_bar / 2.0) * overlap_coefficient(1, epsilon)


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------

def p_thermal(z, epsilon, n_bar):
    """Circular Gaussian with complex variance ``2|alpha|^2 + 1``."""
    v = 2.0 * mode_amplitude(epsilon, n_bar) ** 2 + 1.0
    r2 = np.abs(z) ** 2
    return np.exp(-r2 / v) / (np.pi * v)


def _coherent_kernel(r, rho):
    # exp(-r^2 - rho^2) I0(2 r rho), written to stay finite for large r*rho
    return np.exp(-((r - rho) ** 2)) * special.i0e(2.0 * r * rho)


def p_coherent(z, epsilon, n_bar, nodes: int | None = None):
    """Phase-averaged coherent density, global phase integrated in closed form.

    The remaining integral over the relative phase psi runs over
    ``rho(psi) = 2|alpha| sin(psi/2)``. By default it is done adaptively
    (relative tolerance 1e-9). With ``nodes`` set, a fixed periodic trapezoid
    rule with that many nodes on [0, 2 pi) is used instead; the integrand is
    even in rho, hence smooth and periodic in psi, and the rule converges
    exponentially. A fixed rule keeps the result a smooth function of
    ``epsilon``, which finite differences need.
    """
    r = np.abs(np.asarray(z, dtype=complex)).astype(float)
    a = mode_amplitude(epsilon, n_bar)
    if a == 0.0:
        return np.exp(-(r**2)) / np.pi
    if nodes is not None:
        psi = (np.arange(nodes) + 0.5) * (2.0 * np.pi / nodes)
        rho = 2.0 * a * np.sin(0.5 * psi)
        return _coherent_kernel(r[..., None], rho).mean(axis=-1) / np.pi

    flat = r.ravel()
    res, err, info = integrate.quad_vec(
        lambda psi: _coherent_kernel(flat, 2.0 * a * np.sin(0.5 * psi)),
        0.0, np.pi, epsrel=1e-9, epsabs=1e-300, norm="max", full_output=True, limit=2000)
    if not info.success:
        raise QuadratureError(f"phase integral did not converge (error estimate {err:.2e})")
    return (res / np.pi**2).reshape(r.shape)


def coherent_nodes(alpha: float, r_max: float) -> int:
    """Trapezoid node count resolving the phase integrand up to radius ``r_max``."""
    return 128 + 32 * int(math.ceil(alpha * (alpha + r_max)))


# ---------------------------------------------------------------------------
# Fisher information
# ---------------------------------------------------------------------------

def _radial_cutoff(alpha: float) -> float:
    return max(6.0 + 4.0 * alpha, math.sqrt(60.0 * (2.0 * alpha**2 + 1.0)))


def fisher_numeric(density: Callable, epsilon: float, n_bar: float, d_eps: float | None = None,
                   r_max: float | None = None) -> float:
    """Per-photon Fisher information of an isotropic density family.

    ``density(r, eps, n_bar)`` is differentiated in ``eps`` by central
    differences at steps ``h`` and ``h/2`` and Richardson-extrapolated; the
    two unextrapolated integrals must agree to 1e-5 relative or a
    ``RuntimeWarning`` is issued.
    """
    if d_eps is None:
        d_eps = 1e-4 * max(epsilon, 1.0)
    if not epsilon > d_eps > 0:
        raise ValueError(f"need epsilon > d_eps > 0, got epsilon={epsilon}, d_eps={d_eps}")
    if n_bar <= 0:
        return 0.0
    if r_max is None:
        r_max = _radial_cutoff(mode_amplitude(epsilon + d_eps, n_bar))

    probe = density(np.linspace(0.0, r_max, 201), epsilon, n_bar)
    if np.mean(probe <= 0) > 0.5:
        raise QuadratureError("density underflows over most of the radial support")

    h, h2 = d_eps, 0.5 * d_eps

    def integrand(r):
        r = np.atleast_1d(r)
        p = density(r, epsilon, n_bar)
        d1 = (density(r, epsilon + h, n_bar) - density(r, epsilon - h, n_bar)) / (2 * h)
        d2 = (density(r, epsilon + h2, n_bar) - density(r, epsilon - h2, n_bar)) / (2 * h2)
        d = (4.0 * d2 - d1) / 3.0
        safe = np.where(p > 0, p, 1.0)
        w = np.where(p > 0, 2.0 * np.pi * r / safe, 0.0)
        return np.array([np.sum(w * d * d), np.sum(w * d1 * d1), np.sum(w * d2 * d2)])

    # absolute floor of 1e-14 per photon: below it finite-difference roundoff dominates
    res, err, info = integrate.quad_vec(integrand, 0.0, r_max, epsrel=1e-11, epsabs=1e-14 * n_bar,
                                        norm="max", full_output=True, limit=2000)
    if not info.success:
        raise QuadratureError(f"radial Fisher integral did not converge (error estimate {err:.2e})")
    f, f_h, f_h2 = res
    if abs(f_h - f_h2) > 1e-5 * abs(f) + 1e-14:
        warnings.warn(f"finite-difference steps disagree at eps={epsilon}: {f_h:.6g} vs {f_h2:.6g}",
                      RuntimeWarning, stacklevel=2)
    return float(f / n_bar)


def fisher_thermal_analytic(epsilon, n_bar):
    """Closed-form per-photon Fisher information of the thermal mode-1 record."""
    x = (np.asarray(epsilon, dtype=float) / 4.0) ** 2
    out = n_bar * x * (x - 1.0) ** 2 / (4.0 * (np.exp(x) + n_bar * x) ** 2)
    return float(out) if out.ndim == 0 else out


def fisher_coherent(epsilon: float, n_bar: float, d_eps: float | None = None) -> float:
    """Per-photon Fisher information of the phase-averaged coherent record."""
    if epsilon == 0 or n_bar <= 0:
        return 0.0
    d_eps = 1e-4 * max(epsilon, 1.0) if d_eps is None else d_eps
    alpha = mode_amplitude(epsilon + d_eps, n_bar)
    r_max = _radial_cutoff(alpha)
    density = functools.partial(p_coherent, nodes=coherent_nodes(alpha, r_max))
    return fisher_numeric(density, epsilon, n_bar, d_eps=d_eps, r_max=r_max)


def fisher_direct_sensing(epsilon: float) -> float:
    """Per-photon Fisher information of the power spectrum of two incoherent lines.

    In units of sigma each line has spectral density N(+-eps/2, 1), since
    ``|FT[exp(-sigma^2 t^2)]|^2`` is proportional to ``exp(-omega^2 / (2 sigma^2))``.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if epsilon == 0:
        return 0.0
    m = 0.5 * epsilon

    def integrand(w):
        lo, hi = np.exp(-0.5 * (w - m) ** 2), np.exp(-0.5 * (w + m) ** 2)
        p = 0.5 * (lo + hi) / math.sqrt(2 * math.pi)
        dp = 0.25 * ((w - m) * lo - (w + m) * hi) / math.sqrt(2 * math.pi)
        return dp * dp / p if p > 0 else 0.0

    # integrand is even in w
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(integrand, 0.0, m + 14.0, points=[m], epsabs=0.0,
                                    epsrel=1e-11, limit=400)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"direct-sensing integral did not converge: {exc}") from exc
    return 2.0 * val


def fisher_value(scheme, epsilon: float, n_bar: float | None = None) -> float:
    scheme = Scheme(scheme)
    if scheme is Scheme.DIRECT_SENSING:
        return fisher_direct_sensing(epsilon)
    if n_bar is None:
        raise ValueError(f"{scheme.value} needs n_bar")
    if scheme is Scheme.HETERODYNE_THERMAL:
        return fisher_thermal_analytic(epsilon, n_bar)
    return fisher_coherent(epsilon, n_bar)


def fisher_curve(scheme, epsilons, n_bar: float | None = None) -> FisherCurve:
    scheme = Scheme(scheme)
    eps = np.asarray(epsilons, dtype=float)
    values = np.array([fisher_value(scheme, float(e), n_bar) for e in eps])
    return FisherCurve(eps, values, scheme, None if scheme is Scheme.DIRECT_SENSING else n_bar)
