import copy
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hetsr.errors import ConvergenceError, DegenerateSignalError
from hetsr.estimator import (
    ModeStatistics, SearchConfig, _search, complex_variance, estimate, minimize_displacement,
    normalized_variance, project, projection_set, separation_from_ratio,
)
from hetsr.evaluation import bootstrap
from hetsr.model import SourceParams, hg0, hg1, overlap_coefficient
from hetsr.traces import GridSpec, TraceBatch, synthesize_batch

from oracles import quad_overlap

GRID = GridSpec()


def _single(params, trace):
    return TraceBatch.from_arrays(params, GRID, trace[None, :], np.zeros((1, GRID.n_samples)))


def test_project_examples():
    p = SourceParams(0.0)
    t = GRID.times(1.0)
    b = _single(p, hg0(t).astype(complex))
    assert project(b, 0, 0.0, 0.0)[0] == pytest.approx(1.0, abs=1e-6)
    assert abs(project(b, 1, 0.0, 0.0)[0]) < 1e-6
    delta = 0.3
    b = _single(p, hg0(t - delta).astype(complex))
    oracle = quad_overlap(lambda s: hg0(s - delta), lambda s: hg1(s))
    assert abs(project(b, 1, 0.0, 0.0)[0]) == pytest.approx(abs(oracle), abs=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 1))
def test_displacement_covariance(delta, t_r, omega_r, k):
    p = SourceParams(0.3, n_bar=5.0)
    b = synthesize_batch(p, GRID, 20, seed=1)
    t = b.times
    shifted = TraceBatch.from_arrays(p, GRID, b.traces * np.exp(1j * delta * t), b.noise_traces)
    np.testing.assert_allclose(np.abs(project(shifted, k, t_r, omega_r)),
                               np.abs(project(b, k, t_r, omega_r - delta)), rtol=0, atol=1e-9)


def test_compressed_projections_match_direct():
    p = SourceParams(0.4, sigma=2.0, t_c=0.2, omega_c=-0.6, n_bar=10.0)
    b = synthesize_batch(p, GridSpec.around(p), 500, seed=2)
    stats = ModeStatistics(b, SearchConfig().box(b))
    x, y = 0.9, -1.7  # dimensionless, inside the box
    fast = stats.projections(x, y)
    slow = projection_set(b, x / p.sigma, y * p.sigma)
    for a, c in zip((fast.z0, fast.z1, fast.z0_noise, fast.z1_noise),
                    (slow.z0, slow.z1, slow.z0_noise, slow.z1_noise)):
        np.testing.assert_allclose(a, c, atol=1e-10 * np.max(np.abs(c)))


@pytest.mark.parametrize("kind", ["thermal", "coherent"])
@pytest.mark.parametrize("eps", [0.0, 0.3, 0.8])
def test_noiseless_ratio_at_true_centroid(kind, eps):
    b = synthesize_batch(SourceParams(eps, n_bar=20.0, kind=kind), GRID, 20_000, seed=3, shot_noise=False)
    z0, z1 = project(b, 0, 0, 0), project(b, 1, 0, 0)
    r = complex_variance(z1) / complex_variance(z0)
    if eps == 0:
        assert r < 1e-20
        return
    # delta-method standard error of a variance ratio
    w = np.abs(z1 - z1.mean()) ** 2 / complex_variance(z1) - np.abs(z0 - z0.mean()) ** 2 / complex_variance(z0)
    se = r * w.std() / math.sqrt(w.size)
    assert abs(r - (eps / 4) ** 2) < 5 * se + 1e-12


def test_zero_signal_is_degenerate():
    b = synthesize_batch(SourceParams(0.5, n_bar=0.0), GRID, 300, seed=4, shot_noise=False)
    with pytest.raises(DegenerateSignalError):
        normalized_variance(b, 0.0, 0.0)
    report = estimate(b)
    assert not report.valid and report.epsilon_hat == 0.0
    json.loads(report.to_json())  # non-finite values serialize as null


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_clamp_monotone(a, b):
    lo, hi = sorted([a, b])
    assert separation_from_ratio(lo) <= separation_from_ratio(hi)
    if lo <= 0:
        assert separation_from_ratio(lo) == 0.0


def test_clamp_example():
    assert separation_from_ratio(-0.001) == 0.0
    assert separation_from_ratio(0.25**2 / 16 * 16) == pytest.approx(1.0)


def test_minimum_at_true_centroid():
    b = synthesize_batch(SourceParams(0.3, n_bar=50.0), GRID, 20_000, seed=5)
    v_center = normalized_variance(b, 0.0, 0.0)[0]
    assert v_center <= normalized_variance(b, 1.0, 0.0)[0]
    assert v_center <= normalized_variance(b, -1.0, 0.0)[0]


def _resampled(stats, rng):
    s = copy.copy(stats)
    s.coef = stats.coef[rng.integers(0, len(stats.coef), len(stats.coef))]
    s.coef_noise = stats.coef_noise[rng.integers(0, len(stats.coef_noise), len(stats.coef_noise))]
    s._moments = [s._second_moments(y) for y in (s.coef, s.coef_noise)]
    return s


def test_centroid_recovery():
    p = SourceParams(0.2, t_c=0.5, omega_c=0.3, n_bar=100.0)
    b = synthesize_batch(p, GridSpec.around(p), 100_000, seed=6)
    search = SearchConfig()
    stats = ModeStatistics(b, search.box(b))
    x, y = _search(stats, search)
    rng = np.random.default_rng(7)
    boot = np.array([_search(_resampled(stats, rng), search) for _ in range(40)])
    se = boot.std(axis=0, ddof=1)
    assert abs(x - 0.5) < 3 * se[0]
    assert abs(y - 0.3) < 3 * se[1]


def test_frequency_shift_moves_centroid():
    base = SourceParams(0.5, n_bar=50.0)
    moved = SourceParams(0.5, omega_c=0.4, n_bar=50.0)
    # noiseless: the optimum tracks the shift to refinement tolerance
    w0 = minimize_displacement(synthesize_batch(base, GRID, 3000, seed=8, shot_noise=False))[1]
    w1 = minimize_displacement(synthesize_batch(moved, GRID, 3000, seed=8, shot_noise=False),
                               SearchConfig(omega_center=0.0))[1]
    assert w1 - w0 == pytest.approx(0.4, abs=2e-3)


def test_iteration_cap_raises():
    b = synthesize_batch(SourceParams(0.5, n_bar=50.0), GRID, 2000, seed=9)
    with pytest.raises(ConvergenceError):
        minimize_displacement(b, SearchConfig(max_iter=2))


def test_search_is_deterministic():
    b = synthesize_batch(SourceParams(0.5, n_bar=20.0), GRID, 5000, seed=10)
    assert estimate(b) == estimate(b)


def _check_end_to_end(n, seed):
    b = synthesize_batch(SourceParams(0.5, n_bar=50.0), GRID, n, seed=seed)
    report, proj = estimate(b, full_output=True)
    assert report.valid and report.epsilon_hat >= 0 and report.snr > -1
    assert report.v0_noise > 0 and report.v1_noise > 0
    # the fundamental mode holds n_bar * c0^2 photons, slightly under n_bar at eps > 0
    snr_true = 50.0 * overlap_coefficient(0, 0.5) ** 2
    assert abs(report.snr - snr_true) < 3 * (snr_true + 1) * math.sqrt(1 / b.n_signal + 1 / b.n_noise)
    boot = bootstrap(proj, 200, seed)
    assert abs(report.epsilon_hat - 0.5) < 3 * boot.std(ddof=1)
    return report


def test_end_to_end_report():
    report = _check_end_to_end(100_000, 11)
    d = report.to_dict()
    assert d["n_signal"] == 100_000 and set(d) >= {"epsilon_hat", "t_r_hat", "omega_r_hat", "v_eps", "snr"}


def test_bias_at_zero_separation_shrinks_with_n():
    def mean_eps(n, seeds):
        return np.mean([estimate(synthesize_batch(SourceParams(0.0, n_bar=50.0), GRID, n, seed=s)).epsilon_hat
                        for s in seeds])
    small = mean_eps(1000, range(100, 110))
    large = mean_eps(16_000, range(200, 210))
    assert small > 0 and large > 0
    assert large < small


@pytest.mark.slow
def test_end_to_end_full_scale():
    _check_end_to_end(1_000_000, 12)
