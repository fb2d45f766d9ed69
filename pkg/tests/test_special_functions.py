import math
import warnings

import mpmath
import numpy as np
import pytest
from scipy.special import kolmogorov as ks_survival

from bridge_exit.errors import DomainError
from bridge_exit.quadrature import QuadConfig, integrate_1d, laplace_numeric
from bridge_exit.special_functions import (
    SeriesControl,
    bessel3_density,
    bridge_survival,
    delta,
    exit_flux_density,
    gauss_density,
    killed_bm_density,
    kolmogorov_cdf,
    last_passage_density,
    resolvent_g0,
    tanh_series_check,
)


def mp_delta(z, h, t, terms=400):
    """High-precision image sum, independent of the package."""
    with mpmath.workdps(400):
        z, h, t = mpmath.mpf(z), mpmath.mpf(h), mpmath.mpf(t)
        s = mpmath.fsum((-1) ** j * mpmath.exp(-(z + 2 * j * h) ** 2 / (2 * t))
                        for j in range(-terms, terms + 1))
        return float(s / mpmath.sqrt(2 * mpmath.pi * t))


def bm_survival(h, t, terms=50):
    n = np.arange(terms)
    return float(4.0 / np.pi * np.sum((-1.0) ** n / (2 * n + 1)
                                      * np.exp(-(2 * n + 1) ** 2 * np.pi ** 2 * t / (8 * h * h))))


def test_kolmogorov_matches_scipy():
    xs = np.linspace(0.3, 3.0, 50)
    np.testing.assert_allclose(kolmogorov_cdf(xs), 1.0 - ks_survival(xs), atol=1e-14)


def test_kolmogorov_two_series_agree():
    xs = np.linspace(0.3, 3.0, 100)
    diff = kolmogorov_cdf(xs, method="alternating") - kolmogorov_cdf(xs, method="theta")
    assert np.max(np.abs(diff)) <= 1e-12


def test_kolmogorov_frozen_values():
    # 1 - scipy.special.kolmogorov at the same points
    assert kolmogorov_cdf(1.0) == pytest.approx(0.7300003283226455, abs=1e-14)
    assert kolmogorov_cdf(0.5) == pytest.approx(0.03605475633512489, abs=1e-14)


def test_kolmogorov_domain():
    with pytest.raises(DomainError):
        kolmogorov_cdf(0.0)
    with pytest.raises(ValueError):
        kolmogorov_cdf(1.0, method="bogus")


def test_kolmogorov_full_output_reports_bound():
    res = kolmogorov_cdf(1.2, full_output=True)
    assert res.converged and res.tail_bound <= 1e-14 and res.n_terms >= 1


@pytest.mark.parametrize("z,h,t", [(0.0, 0.5, 0.1), (0.3, 0.5, 0.05), (-0.2, 1.0, 2.0),
                                   (0.05, 0.1, 3.0)])
def test_delta_against_mpmath(z, h, t):
    assert delta(z, h, t) == pytest.approx(mp_delta(z, h, t), rel=1e-11, abs=1e-300)


def test_delta_image_and_eigen_agree():
    z = np.linspace(-0.45, 0.45, 7)
    for t in (0.1, 0.25, 0.6):
        a = delta(z, 0.5, t, method="images")
        b = delta(z, 0.5, t, method="eigen")
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-15)


def test_delta_scaling_identity():
    u, s, h = 0.3, 0.7, 0.2
    assert delta(h * u, h, h * h * s) * h == pytest.approx(delta(u, 1.0, s), rel=1e-12)


def test_delta_integrates_to_bm_survival():
    h, t = 0.5, 0.3
    cfg = QuadConfig(abs_tol=1e-13, rel_tol=1e-12)
    mass = integrate_1d(lambda z: delta(z, h, t), -h, h, cfg).value
    assert mass == pytest.approx(bm_survival(h, t), abs=1e-11)


def test_delta_domain():
    with pytest.raises(DomainError):
        delta(0.5, 0.5, 1.0)
    with pytest.raises(DomainError):
        delta(0.0, 0.5, 0.0)


def test_bridge_survival_at_zero_is_kolmogorov():
    for h, t in [(0.5, 1.0), (1.0, 1.0), (0.3, 0.05)]:
        assert bridge_survival(0.0, t, h) == pytest.approx(kolmogorov_cdf(h / math.sqrt(t)),
                                                           abs=1e-13)


def test_bridge_survival_outside_band_is_zero():
    assert bridge_survival(0.6, 1.0, 0.5) == 0.0


def test_bridge_survival_is_killed_over_free():
    x, t, h = 0.2, 0.4, 0.5
    ratio = killed_bm_density(t, 0.0, x, h) / gauss_density(t, 0.0, x)
    assert bridge_survival(x, t, h) == pytest.approx(ratio, rel=1e-12)


def test_killed_density_symmetric_and_methods_agree():
    x, y, h = 0.1, -0.3, 0.5
    for t in (0.05, 0.25, 1.0):
        a = killed_bm_density(t, x, y, h, method="images")
        b = killed_bm_density(t, x, y, h, method="eigen")
        assert a == pytest.approx(b, rel=1e-11)
        assert killed_bm_density(t, y, x, h) == pytest.approx(killed_bm_density(t, x, y, h),
                                                              rel=1e-13)


def test_killed_density_time_integral_is_green_kernel():
    x, y, h = 0.1, -0.2, 0.5
    cfg = QuadConfig(abs_tol=1e-12, rel_tol=1e-11, endpoint_substitution="sqrt_left")
    val = integrate_1d(lambda t: killed_bm_density(t, x, y, h), 0.0, 1.0, cfg).value
    tail = integrate_1d(lambda s: killed_bm_density(1.0 / s, x, y, h) / (s * s), 1e-12, 1.0,
                        QuadConfig(abs_tol=1e-12, rel_tol=1e-11)).value
    assert val + tail == pytest.approx(resolvent_g0(x, y, h), rel=1e-8)


def test_bessel3_density_normalizes():
    cfg = QuadConfig(abs_tol=1e-12, rel_tol=1e-12)
    mass = integrate_1d(lambda y: bessel3_density(0.7, 1.0, y), 1e-12, 12.0, cfg).value
    assert mass == pytest.approx(1.0, abs=1e-10)


def test_bessel3_domain():
    with pytest.raises(DomainError):
        bessel3_density(1.0, 0.0, 1.0)


def test_resolvent_g0_values():
    assert resolvent_g0(0.0, 0.0, 1.0) == pytest.approx(1.0)
    assert resolvent_g0(0.5, -0.5, 1.0) == pytest.approx(0.25)
    assert resolvent_g0(1.0, 0.0, 1.0) == 0.0


@pytest.mark.parametrize("gamma,h", [(1.0, 1.0), (2.0, 0.5), (0.5, 2.0)])
def test_last_passage_laplace(gamma, h):
    cfg = QuadConfig(abs_tol=1e-12, rel_tol=1e-12, endpoint_substitution="sqrt_left")
    got = laplace_numeric(lambda t: last_passage_density(t, h), gamma, cfg).value
    r = h * math.sqrt(2.0 * gamma)
    assert got == pytest.approx(math.tanh(r) / r, abs=1e-9)


def test_last_passage_laplace_value_at_one():
    # tanh(sqrt 2)/sqrt 2, evaluated independently
    cfg = QuadConfig(abs_tol=1e-12, rel_tol=1e-12, endpoint_substitution="sqrt_left")
    got = laplace_numeric(lambda t: last_passage_density(t, 1.0), 1.0, cfg).value
    assert got == pytest.approx(0.6281834549, abs=1e-9)


def test_exit_flux_methods_and_mass():
    h, x = 0.5, 0.2
    t = np.array([0.2, 0.25, 0.3])
    # the switch at h^2 is seamless
    small = exit_flux_density(t[:2], x, h)
    lhs = exit_flux_density(np.nextafter(0.25, 0.0), x, h)
    assert lhs == pytest.approx(small[1], rel=1e-10)
    cfg = QuadConfig(abs_tol=1e-12, rel_tol=1e-11)
    up = integrate_1d(lambda s: exit_flux_density(s, x, h), 1e-12, 20.0, cfg).value
    assert up == pytest.approx((x + h) / (2 * h), abs=1e-9)


def test_tanh_series():
    lhs, rhs = tanh_series_check(1.0)
    assert lhs == pytest.approx(0.9171523357, abs=1e-10)
    assert rhs == pytest.approx(lhs, abs=1e-12)
    assert tanh_series_check(0.0) == (0.0, 0.0)


def test_series_control_validation():
    with pytest.raises(DomainError):
        SeriesControl(abs_tol=0.0)
    with pytest.raises(DomainError):
        SeriesControl(max_terms=0)


def test_truncation_warning_when_budget_tiny():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        delta(0.0, 0.5, 0.2, ctrl=SeriesControl(max_terms=1), method="images")
    assert any("Truncation" in w.category.__name__ for w in caught)
