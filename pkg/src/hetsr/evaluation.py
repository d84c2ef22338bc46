"""Bootstrap precision of the separation estimator and parameter sweeps."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .estimator import ProjectionSet, SearchConfig, estimate, separation_from_ratio
from .fisher import FisherCurve, Scheme, fisher_direct_sensing, fisher_value
from .model import SourceKind, SourceParams
from .traces import GridSpec, synthesize_batch

DEFAULT_BOOTSTRAPS = 1000
BOOT_STREAM = 2
MIN_SHOTS = 100


@dataclass(frozen=True)
class SweepPoint:
    epsilon_true: float
    n_bar_nominal: float
    n_signal: int = 100_000
    n_noise: int | None = None
    seed: int = 0
    kind: SourceKind = SourceKind.THERMAL

    def __post_init__(self):
        object.__setattr__(self, "kind", SourceKind(self.kind))
        if self.n_noise is None:
            object.__setattr__(self, "n_noise", self.n_signal)
        if self.n_signal < MIN_SHOTS or self.n_noise < MIN_SHOTS:
            raise ValueError(f"N and M must be >= {MIN_SHOTS} for meaningful variances")


@dataclass(frozen=True)
class PrecisionRecord:
    epsilon_true: float
    epsilon_hat_mean: float
    bias: float
    variance_of_estimator: float
    precision: float
    precision_err: float
    snr_hat: float
    bootstrap_count: int
    epsilon_hat: float = math.nan
    degenerate_count: int = 0
    n_bar_nominal: float = math.nan
    n_signal: int = 0
    n_noise: int = 0
    kind: str = SourceKind.THERMAL.value
    seed: int | None = None
    t_r_hat: float = math.nan
    omega_r_hat: float = math.nan
    fi_het: float = math.nan
    fi_ds: float = math.nan
    valid: bool = True
    status: str = "ok"


RECORD_FIELDS = [f.name for f in fields(PrecisionRecord)]


# ---------------------------------------------------------------------------
# Bootstrap
# ---------------------------------------------------------------------------

def _canonical(a, b):
    order = np.lexsort((b.imag, b.real, a.imag, a.real))
    return a[order], b[order]


def _weighted_variances(counts, z, z_abs2):
    n = counts.sum()
    s1 = counts @ z
    s2 = counts @ z_abs2
    return (s2 - np.abs(s1) ** 2 / n) / (n - 1)


def resample_variances(proj: ProjectionSet, n_boot: int = DEFAULT_BOOTSTRAPS, seed: int = 0,
                       ensemble_size: int | None = None, noise_ensemble_size: int | None = None):
    """``(B, 4)`` array of ``(V0, V1, V0_noise, V1_noise)`` over bootstrap resamples.

    Signal pairs ``(z0, z1)`` and noise pairs are resampled with replacement,
    independently. Pairs are first put in a canonical order, so the result
    depends only on the set of pairs and not on how they are labeled.
    """
    if n_boot < 2:
        raise ValueError("need at least 2 bootstrap resamples")
    z0, z1 = _canonical(np.asarray(proj.z0), np.asarray(proj.z1))
    n0, n1 = _canonical(np.asarray(proj.z0_noise), np.asarray(proj.z1_noise))
    sig = np.stack([z0, z1], axis=1)
    noise = np.stack([n0, n1], axis=1)
    sig_abs2, noise_abs2 = np.abs(sig) ** 2, np.abs(noise) ** 2
    n, m = len(z0), len(n0)
    size = n if ensemble_size is None else ensemble_size
    nsize = m if noise_ensemble_size is None else noise_ensemble_size

    out = np.empty((n_boot, 4))
    for b in range(n_boot):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(BOOT_STREAM, b)))
        cs = np.bincount(rng.integers(0, n, size), minlength=n).astype(float)
        cn = np.bincount(rng.integers(0, m, nsize), minlength=m).astype(float)
        out[b, :2] = _weighted_variances(cs, sig, sig_abs2)
        out[b, 2:] = _weighted_variances(cn, noise, noise_abs2)
    return out


def _separations(v):
    den = v[:, 0] - v[:, 2]
    degenerate = ~(den > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(degenerate, 0.0, (v[:, 1] - v[:, 3]) / den)
    return separation_from_ratio(ratio), degenerate


def bootstrap(proj: ProjectionSet, n_boot: int = DEFAULT_BOOTSTRAPS, seed: int = 0,
              ensemble_size: int | None = None) -> np.ndarray:
    """Separation estimates over ``n_boot`` resamples at a fixed displacement.

    Resamples without a detectable signal count as ``eps_hat = 0``.
    """
    values, _ = _separations(resample_variances(proj, n_boot, seed, ensemble_size))
    return values


def bootstrap_snr(proj: ProjectionSet, n_boot: int = DEFAULT_BOOTSTRAPS, seed: int = 0) -> np.ndarray:
    v = resample_variances(proj, n_boot, seed)
    return (v[:, 0] - v[:, 2]) / v[:, 2]


def _variance_std_err(x) -> float:
    """Standard error of the sample variance (no normality assumption)."""
    b = len(x)
    d = x - x.mean()
    s2 = d @ d / (b - 1)
    m4 = np.mean(d**4)
    return math.sqrt(max(m4 - (b - 3) / (b - 1) * s2**2, 0.0) / b)


def precision_record(values, snr_hat: float, n_signal: int, epsilon_true: float = math.nan,
                     **extra) -> PrecisionRecord:
    """Precision ``1 / (Var(eps_hat) * S * N)``, comparable to per-photon Fisher information."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("need at least 2 bootstrap values")
    mean = float(values.mean())
    var = 0.0 if np.ptp(values) == 0 else float(values.var(ddof=1))
    valid = var > 0 and snr_hat > 0 and math.isfinite(snr_hat)
    if valid:
        precision = 1.0 / (var * snr_hat * n_signal)
        err = 2.0 * precision * _variance_std_err(values) / var
    else:
        precision = math.inf if var == 0 else math.nan
        err = math.nan
    return PrecisionRecord(
        epsilon_true=epsilon_true, epsilon_hat_mean=mean, bias=mean - epsilon_true,
        variance_of_estimator=var, precision=precision, precision_err=err,
        snr_hat=snr_hat, bootstrap_count=int(values.size), n_signal=n_signal,
        valid=valid and extra.pop("valid", True), **extra)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def heterodyne_scheme(kind) -> Scheme:
    if SourceKind(kind) is SourceKind.THERMAL:
        return Scheme.HETERODYNE_THERMAL
    return Scheme.HETERODYNE_COHERENT


def evaluate_point(point: SweepPoint, grid: GridSpec | None = None, search: SearchConfig | None = None,
                   n_boot: int = DEFAULT_BOOTSTRAPS) -> PrecisionRecord:
    """Synthesize, estimate, bootstrap and benchmark one sweep point."""
    grid = grid or GridSpec()
    context = dict(n_bar_nominal=point.n_bar_nominal, n_noise=point.n_noise,
                   kind=point.kind.value, seed=point.seed)
    try:
        params = SourceParams(point.epsilon_true, n_bar=point.n_bar_nominal, kind=point.kind)
        batch = synthesize_batch(params, grid, point.n_signal, point.n_noise, point.seed)
        report, proj = estimate(batch, search, full_output=True)
        if proj is None:
            raise ArithmeticError("no detectable signal at any displacement")
        v = resample_variances(proj, n_boot, point.seed)
        values, degenerate = _separations(v)
        snr = report.snr
        fi_het = fisher_value(heterodyne_scheme(point.kind), point.epsilon_true, snr) if snr > 0 else math.nan
        return precision_record(
            values, snr, point.n_signal, point.epsilon_true,
            epsilon_hat=report.epsilon_hat, degenerate_count=int(degenerate.sum()),
            t_r_hat=report.t_r_hat, omega_r_hat=report.omega_r_hat,
            fi_het=fi_het, fi_ds=fisher_direct_sensing(point.epsilon_true), **context)
    except Exception as exc:  # per-point failures are recorded, the sweep continues
        return PrecisionRecord(
            epsilon_true=point.epsilon_true, epsilon_hat_mean=math.nan, bias=math.nan,
            variance_of_estimator=math.nan, precision=math.nan, precision_err=math.nan,
            snr_hat=math.nan, bootstrap_count=0, n_signal=point.n_signal, valid=False,
            status=f"{type(exc).__name__}: {exc}", **context)


def _evaluate_star(args):
    return evaluate_point(*args)


def run_sweep(points, grid: GridSpec | None = None, search: SearchConfig | None = None,
              n_boot: int = DEFAULT_BOOTSTRAPS, workers: int = 1) -> list[PrecisionRecord]:
    """Evaluate every point; results are independent of ``workers``."""
    jobs = [(p, grid, search, n_boot) for p in points]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_evaluate_star, jobs))
    return [_evaluate_star(j) for j in jobs]


def sweep_points(epsilons, n_bars, n_signal: int = 100_000, n_noise: int | None = None,
                 seed: int = 0, kind=SourceKind.THERMAL) -> list[SweepPoint]:
    """Lattice of points ordered by ``n_bar`` then ``epsilon``, each with its own seed."""
    points = []
    for n_bar in n_bars:
        for eps in epsilons:
            i = len(points)
            point_seed = int(np.random.SeedSequence(seed, spawn_key=(i,)).generate_state(1)[0])
            points.append(SweepPoint(float(eps), float(n_bar), n_signal, n_noise, point_seed, kind))
    return points


def sweep_curves(records) -> dict[float, tuple[FisherCurve, FisherCurve]]:
    """Per-panel heterodyne and direct-sensing curves paired with the records.

    Panels are keyed by nominal ``n_bar``; the heterodyne curve's ``n_bar``
    is the panel's mean estimated SNR.
    """
    panels: dict[float, list[PrecisionRecord]] = {}
    for r in records:
        panels.setdefault(r.n_bar_nominal, []).append(r)
    out = {}
    for key, recs in sorted(panels.items()):
        eps = [r.epsilon_true for r in recs]
        snrs = [r.snr_hat for r in recs if math.isfinite(r.snr_hat)]
        het = FisherCurve(eps, [r.fi_het if math.isfinite(r.fi_het) else 0.0 for r in recs],
                          heterodyne_scheme(recs[0].kind), float(np.mean(snrs)) if snrs else None)
        ds = FisherCurve(eps, [fisher_direct_sensing(e) for e in eps], Scheme.DIRECT_SENSING)
        out[key] = (het, ds)
    return out


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def write_records_csv(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        for r in records:
            d = asdict(r)
            writer.writerow([_fmt(d[k]) for k in RECORD_FIELDS])
