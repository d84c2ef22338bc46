"""Separation, centroid and SNR estimation from projections onto HG modes.

For a trial displacement ``(t_r, omega_r)`` every trace is projected onto

    f_k(t_i) = u_k(t_i - t_r) exp(i omega_r t_i) dt,    z_k = sum_i conj(Z(t_i)) f_k(t_i)

and the separation estimate comes from the noise-subtracted variance ratio
``V_eps = (V1 - V1_noise) / (V0 - V0_noise)`` minimized over the displacement,
``eps_hat = 4 sqrt(max(V_eps, 0))``.

The search needs V_eps at thousands of displacements. All candidate mode
vectors inside the search box span a low-dimensional subspace (a few dozen
dimensions for the default box), so each trace is reduced once to its
coefficients in an orthonormal basis of that subspace. Variances at any
candidate then follow from K x K second-moment matrices.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import ConvergenceError, DegenerateSignalError
from .model import hg_mode
from .traces import GridSpec, TraceBatch


@dataclass(frozen=True)
class SearchConfig:
    """Displacement search region and refinement settings.

    Centers default to the batch's nominal centroid. Half-widths are in units
    of 1/sigma (time) and sigma (frequency); ``xatol`` is in the same
    dimensionless units.
    """

    t_center: float | None = None
    omega_center: float | None = None
    t_halfwidth: float = 2.0
    omega_halfwidth: float = 2.0
    coarse_points: int = 41
    xatol: float = 1e-4
    max_iter: int = 200

    def __post_init__(self):
        if self.t_halfwidth <= 0 or self.omega_halfwidth <= 0:
            raise ValueError("search half-widths must be positive")
        if self.coarse_points < 3:
            raise ValueError("coarse_points must be >= 3")
        if self.max_iter < 1 or self.xatol <= 0:
            raise ValueError("max_iter must be >= 1 and xatol > 0")

    def box(self, batch: TraceBatch) -> tuple[tuple[float, float], tuple[float, float]]:
        """Search bounds in dimensionless ``(sigma t_r, omega_r / sigma)``."""
        p = batch.params
        tc = p.t_c if self.t_center is None else self.t_center
        wc = p.omega_c if self.omega_center is None else self.omega_center
        x0, y0 = p.sigma * tc, wc / p.sigma
        return ((x0 - self.t_halfwidth, x0 + self.t_halfwidth),
                (y0 - self.omega_halfwidth, y0 + self.omega_halfwidth))


@dataclass(frozen=True, eq=False)
class ProjectionSet:
    z0: np.ndarray
    z1: np.ndarray
    z0_noise: np.ndarray
    z1_noise: np.ndarray
    t_r: float
    omega_r: float

    def __post_init__(self):
        if len(self.z0) == 0 or len(self.z0_noise) == 0:
            raise ValueError("projection arrays must be non-empty")
        if len(self.z0) != len(self.z1) or len(self.z0_noise) != len(self.z1_noise):
            raise ValueError("mode 0 and mode 1 projections must have equal lengths")

    def variances(self) -> tuple[float, float, float, float]:
        return (complex_variance(self.z0), complex_variance(self.z1),
                complex_variance(self.z0_noise), complex_variance(self.z1_noise))


@dataclass(frozen=True)
class EstimateReport:
    epsilon_hat: float
    t_r_hat: float
    omega_r_hat: float
    v_eps: float
    snr: float
    v0: float
    v1: float
    v0_noise: float
    v1_noise: float
    n_signal: int
    n_noise: int
    valid: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = None
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def complex_variance(z) -> float:
    """Unbiased ``E|z - <z>|^2``, the sum of both quadrature variances."""
    z = np.asarray(z)
    if z.size < 2:
        return 0.0
    return float(np.sum(np.abs(z - z.mean()) ** 2) / (z.size - 1))


def variance_ratio(v0: float, v1: float, v0_noise: float, v1_noise: float) -> float:
    den = v0 - v0_noise
    if not den > 0:
        raise DegenerateSignalError(f"V0 - V0_noise = {den:.3g} <= 0: no detectable signal")
    return (v1 - v1_noise) / den


def separation_from_ratio(v_eps):
    return 4.0 * np.sqrt(np.maximum(v_eps, 0.0))


def snr_from_variances(v0: float, v0_noise: float) -> float:
    if v0_noise <= 0:
        return math.inf if v0 > 0 else math.nan
    return (v0 - v0_noise) / v0_noise


# ---------------------------------------------------------------------------
# Direct projections
# ---------------------------------------------------------------------------

def mode_vector(k: int, batch: TraceBatch, t_r: float, omega_r: float) -> np.ndarray:
    t = batch.times
    return hg_mode(k, t, batch.params.sigma, t_r) * np.exp(1j * omega_r * t) * batch.dt


def _project_chunks(chunks, f):
    fc = np.conj(f)
    return np.concatenate([np.conj(c @ fc) for c in chunks])


def project(batch: TraceBatch, k: int, t_r: float, omega_r: float, noise: bool = False) -> np.ndarray:
    """Projections ``z_k`` of every signal (or noise) trace at the displacement."""
    if not (math.isfinite(t_r) and math.isfinite(omega_r)):
        raise ValueError("displacement must be finite")
    f = mode_vector(k, batch, t_r, omega_r)
    return _project_chunks(batch.noise_chunks() if noise else batch.signal_chunks(), f)


def projection_set(batch: TraceBatch, t_r: float, omega_r: float) -> ProjectionSet:
    f = np.stack([mode_vector(k, batch, t_r, omega_r) for k in (0, 1)], axis=1)
    zs = _project_chunks(batch.signal_chunks(), f)
    zn = _project_chunks(batch.noise_chunks(), f)
    return ProjectionSet(zs[:, 0], zs[:, 1], zn[:, 0], zn[:, 1], t_r, omega_r)


def normalized_variance(batch: TraceBatch, t_r: float, omega_r: float):
    """``(V_eps candidate, (V0, V1, V0_noise, V1_noise))`` at one displacement."""
    v = projection_set(batch, t_r, omega_r).variances()
    return variance_ratio(*v), v


# ---------------------------------------------------------------------------
# Compressed statistics for the displacement search
# ---------------------------------------------------------------------------

_BASIS_MARGIN = 0.25
_BASIS_RTOL = 1e-13


def _dimensionless_modes(tau, x, y):
    """Unit-sigma mode vectors (n x 2C) for displacement arrays ``x``, ``y``."""
    shift = tau[:, None] - x[None, :]
    phase = np.exp(1j * tau[:, None] * y[None, :])
    return np.concatenate([hg_mode(0, shift) * phase, hg_mode(1, shift) * phase], axis=1)


@functools.lru_cache(maxsize=8)
def _mode_basis(grid: GridSpec, box: tuple) -> np.ndarray:
    (x_lo, x_hi), (y_lo, y_hi) = box
    tau = grid.tau()
    nx = int(math.ceil((x_hi - x_lo + 2 * _BASIS_MARGIN) * 10)) + 1
    ny = int(math.ceil((y_hi - y_lo + 2 * _BASIS_MARGIN) * 10)) + 1
    xs, ys = np.meshgrid(np.linspace(x_lo - _BASIS_MARGIN, x_hi + _BASIS_MARGIN, nx),
                         np.linspace(y_lo - _BASIS_MARGIN, y_hi + _BASIS_MARGIN, ny))
    cand = _dimensionless_modes(tau, xs.ravel(), ys.ravel())
    u, s, _ = np.linalg.svd(cand, full_matrices=False)
    q = u[:, s > _BASIS_RTOL * s[0]]

    rng = np.random.default_rng(0)
    probe = _dimensionless_modes(tau, rng.uniform(x_lo, x_hi, 16), rng.uniform(y_lo, y_hi, 16))
    resid = probe - q @ (q.conj().T @ probe)
    err = np.max(np.linalg.norm(resid, axis=0) / np.linalg.norm(probe, axis=0))
    if err > 1e-10:
        raise RuntimeError(f"mode basis misses in-box modes (relative residual {err:.2e})")
    return q


class ModeStatistics:
    """Per-trace basis coefficients of a batch and their second moments."""

    def __init__(self, batch: TraceBatch, box):
        self.batch = batch
        self.box = box
        self.basis = _mode_basis(batch.grid, box)
        self.sigma = batch.params.sigma
        # physical mode vector = scale * dimensionless mode vector
        self._scale = batch.grid.dtau / math.sqrt(self.sigma)
        qc = self.basis.conj()
        self.coef = np.concatenate([np.conj(c @ qc) for c in batch.signal_chunks()])
        self.coef_noise = np.concatenate([np.conj(c @ qc) for c in batch.noise_chunks()])
        self._moments = [self._second_moments(y) for y in (self.coef, self.coef_noise)]

    @staticmethod
    def _second_moments(y):
        return y.conj().T @ y, y.mean(axis=0), y.shape[0]

    def _coefficients(self, x, y):
        modes = _dimensionless_modes(self.batch.grid.tau(), np.atleast_1d(x), np.atleast_1d(y))
        a = self.basis.conj().T @ modes * self._scale
        c = a.shape[1] // 2
        return a[:, :c], a[:, c:]

    @staticmethod
    def _variance(moments, a):
        s, mean, n = moments
        if n < 2:
            return np.zeros(a.shape[1])
        quad = np.einsum("ic,ij,jc->c", a.conj(), s, a).real
        return (quad - n * np.abs(mean @ a) ** 2) / (n - 1)

    def variances(self, x, y):
        """Arrays ``(V0, V1, V0_noise, V1_noise)`` at dimensionless displacements."""
        a0, a1 = self._coefficients(x, y)
        sig, noise = self._moments
        return (self._variance(sig, a0), self._variance(sig, a1),
                self._variance(noise, a0), self._variance(noise, a1))

    def objective(self, x, y):
        v0, v1, v0n, v1n = self.variances(x, y)
        den = v0 - v0n
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(den > 0, (v1 - v1n) / den, np.inf)

    def projections(self, x: float, y: float) -> ProjectionSet:
        a0, a1 = self._coefficients(x, y)
        a = np.concatenate([a0, a1], axis=1)
        zs, zn = self.coef @ a, self.coef_noise @ a
        return ProjectionSet(zs[:, 0], zs[:, 1], zn[:, 0], zn[:, 1], x / self.sigma, y * self.sigma)


def _search(stats: ModeStatistics, search: SearchConfig):
    (x_lo, x_hi), (y_lo, y_hi) = stats.box
    m = search.coarse_points
    gx, gy = np.meshgrid(np.linspace(x_lo, x_hi, m), np.linspace(y_lo, y_hi, m), indexing="ij")
    values = stats.objective(gx.ravel(), gy.ravel())
    if not np.any(np.isfinite(values)):
        raise DegenerateSignalError("no displacement in the search box has a detectable signal")
    i = int(np.argmin(values))
    start = np.array([gx.ravel()[i], gy.ravel()[i]])

    hx, hy = (x_hi - x_lo) / (m - 1), (y_hi - y_lo) / (m - 1)
    simplex = np.array([start, start + [hx, 0.0], start + [0.0, hy]])
    simplex[:, 0] = np.clip(simplex[:, 0], x_lo, x_hi)
    simplex[:, 1] = np.clip(simplex[:, 1], y_lo, y_hi)
    if simplex[1, 0] == start[0]:
        simplex[1, 0] = start[0] - hx
    if simplex[2, 1] == start[1]:
        simplex[2, 1] = start[1] - hy

    res = minimize(lambda p: float(stats.objective(p[0], p[1])[0]), start, method="Nelder-Mead",
                   bounds=[(x_lo, x_hi), (y_lo, y_hi)],
                   options={"xatol": search.xatol, "fatol": 1e-12, "maxiter": search.max_iter,
                            "initial_simplex": simplex})
    if res.status == 2 or (not res.success and res.nit >= search.max_iter):
        raise ConvergenceError(f"displacement refinement did not converge in {search.max_iter} iterations")
    x, y = float(res.x[0]), float(res.x[1])
    if not float(res.fun) <= float(values[i]):
        x, y = float(start[0]), float(start[1])
    return x, y


def minimize_displacement(batch: TraceBatch, search: SearchConfig | None = None):
    """``(t_r*, omega_r*, V_eps)`` minimizing the normalized variance."""
    search = search or SearchConfig()
    stats = ModeStatistics(batch, search.box(batch))
    x, y = _search(stats, search)
    proj = stats.projections(x, y)
    return proj.t_r, proj.omega_r, variance_ratio(*proj.variances())


def estimate(batch: TraceBatch, search: SearchConfig | None = None, full_output: bool = False):
    """Estimate separation, centroids and SNR from one batch.

    With ``full_output=True`` returns ``(report, projections)`` where the
    projections are taken at the optimal displacement (``None`` if the batch
    has no detectable signal).
    """
    search = search or SearchConfig()
    stats = ModeStatistics(batch, search.box(batch))
    try:
        x, y = _search(stats, search)
    except DegenerateSignalError:
        (x_lo, x_hi), (y_lo, y_hi) = stats.box
        proj = stats.projections(0.5 * (x_lo + x_hi), 0.5 * (y_lo + y_hi))
        v0, v1, v0n, v1n = proj.variances()
        report = EstimateReport(0.0, proj.t_r, proj.omega_r, math.nan, snr_from_variances(v0, v0n),
                                v0, v1, v0n, v1n, batch.n_signal, batch.n_noise, valid=False)
        return (report, None) if full_output else report

    proj = stats.projections(x, y)
    report = report_from_projections(proj)
    return (report, proj) if full_output else report


def report_from_projections(proj: ProjectionSet) -> EstimateReport:
    v0, v1, v0n, v1n = proj.variances()
    try:
        v_eps = variance_ratio(v0, v1, v0n, v1n)
        valid = True
    except DegenerateSignalError:
        v_eps, valid = math.nan, False
    eps_hat = float(separation_from_ratio(v_eps)) if valid else 0.0
    return EstimateReport(eps_hat, proj.t_r, proj.omega_r, v_eps, snr_from_variances(v0, v0n),
                          v0, v1, v0n, v1n, len(proj.z0), len(proj.z0_noise), valid)
