import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from hetsr.model import (
    SourceKind, SourceParams, SourceRealization, coherent_envelope, envelope, hg0, hg1, hg_mode,
    line_profiles, overlap_coefficient,
)
from hetsr.traces import GridSpec

from oracles import quad_overlap


def test_hg0_values():
    assert hg0(0.0) == pytest.approx((2 / np.pi) ** 0.25, rel=1e-15)
    assert hg0(1.0) == pytest.approx((2 / np.pi) ** 0.25 * math.exp(-1), rel=1e-14)
    assert hg0(1.0) == pytest.approx(0.3286, abs=1e-4)


def test_hg1_zero_at_center_and_antisymmetric():
    assert hg1(0.7, sigma=2.0, t_r=0.7) == 0.0
    t = np.linspace(0.1, 3, 7)
    np.testing.assert_allclose(hg1(0.5 + t, 1.3, 0.5), -hg1(0.5 - t, 1.3, 0.5), rtol=1e-13)


@pytest.mark.parametrize("sigma", [0.3, 1.0, 4.0])
def test_mode_normalization_by_quadrature(sigma):
    for j in (0, 1):
        for k in (0, 1):
            val = integrate.quad(lambda t: hg_mode(j, t, sigma) * hg_mode(k, t, sigma), -np.inf, np.inf,
                                 epsabs=1e-13)[0]
            assert val == pytest.approx(float(j == k), abs=1e-10)


def test_orthonormal_on_default_grid():
    grid = GridSpec()
    t, dt = grid.times(1.0), grid.dt(1.0)
    u = np.stack([hg0(t), hg1(t)])
    np.testing.assert_allclose(u @ u.T * dt, np.eye(2), atol=1e-10)


def test_hg_mode_rejects_higher_modes():
    with pytest.raises(ValueError):
        hg_mode(2, 0.0)
    with pytest.raises(ValueError):
        overlap_coefficient(2, 1.0)


def test_source_params_validation():
    for bad in (dict(epsilon=-0.1), dict(epsilon=1, sigma=0), dict(epsilon=1, n_bar=-1),
                dict(epsilon=math.nan)):
        with pytest.raises(ValueError):
            SourceParams(**bad)
    p = SourceParams(0.5, kind="coherent")
    assert p.kind is SourceKind.COHERENT
    assert SourceParams.from_dict(p.to_dict()) == p


def test_envelope_examples():
    p0 = SourceParams(0.0)
    t = np.linspace(-3, 3, 11)
    np.testing.assert_allclose(envelope(p0, SourceRealization(0.5, 0.5), t), hg0(t), rtol=1e-14)
    pc = SourceParams(1.0, kind="coherent")
    assert abs(coherent_envelope(pc, np.pi / 2, 0.0)) < 1e-16
    val = envelope(SourceParams(1.0), SourceRealization(0.5, 0.5), 2.0)
    assert val.real == pytest.approx(0.8933 * math.exp(-4) * math.cos(1), rel=1e-3)
    assert val.real == pytest.approx(hg0(2.0) * math.cos(1.0), rel=1e-13)


def test_overlap_examples():
    assert overlap_coefficient(0, 0.0) == 1.0
    assert overlap_coefficient(1, 0.0) == 0.0
    assert overlap_coefficient(1, 4.0) == pytest.approx(math.exp(-0.5), rel=1e-15)


@given(st.floats(1e-6, 50.0))
def test_overlap_ratio_identity(eps):
    assert overlap_coefficient(1, eps) / overlap_coefficient(0, eps) == pytest.approx(eps / 4, rel=1e-15)


@pytest.mark.parametrize("eps", [0.0, 0.3, 1.0, 2.5, 4.0, 6.0])
def test_overlap_matches_integral(eps):
    """One line at +eps/2 (upper) against each mode, by adaptive quadrature."""
    p = SourceParams(eps)
    line = lambda t: line_profiles(p, t)[1]
    for k in (0, 1):
        val = quad_overlap(line, lambda t: hg_mode(k, t))
        assert abs(val) == pytest.approx(overlap_coefficient(k, eps), abs=1e-8)


@settings(max_examples=50)
@given(phi0=st.floats(0, 2 * np.pi), eps=st.floats(0, 10), t=st.floats(-6, 6),
       tc=st.floats(-2, 2), wc=st.floats(-3, 3), sigma=st.floats(0.2, 5))
def test_coherent_envelope_consistency(phi0, eps, t, tc, wc, sigma):
    p = SourceParams(eps, sigma=sigma, t_c=tc, omega_c=wc, kind="coherent")
    a = envelope(p, SourceRealization.coherent(phi0), t)
    b = coherent_envelope(p, phi0, t)
    assert abs(a - b) < 1e-12
