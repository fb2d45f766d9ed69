import math

import numpy as np
import pytest
from scipy import integrate

from bridge_exit.errors import DomainError, NonConvergenceWarning
from bridge_exit.quadrature import (
    IntegralResult,
    QuadConfig,
    integrate_1d,
    integrate_semi_infinite,
    laplace_numeric,
)
from bridge_exit.special_functions import gauss_density, last_passage_density


def test_inverse_sqrt_with_substitution():
    res = integrate_1d(lambda t: 1.0 / np.sqrt(t), 0.0, 1.0,
                       QuadConfig(endpoint_substitution="sqrt_left"))
    assert res.converged
    assert res.value == pytest.approx(2.0, abs=1e-10)


def test_right_and_both_substitutions():
    f = lambda t: 1.0 / np.sqrt(1.0 - t)  # noqa: E731
    assert integrate_1d(f, 0.0, 1.0, QuadConfig(endpoint_substitution="sqrt_right")).value \
        == pytest.approx(2.0, abs=1e-10)
    g = lambda t: 1.0 / np.sqrt(t * (1.0 - t))  # noqa: E731
    assert integrate_1d(g, 0.0, 1.0, QuadConfig(endpoint_substitution="sqrt_both")).value \
        == pytest.approx(math.pi, abs=1e-10)


def test_polynomial_is_exact():
    assert integrate_1d(lambda t: t, 0.0, 1.0).value == pytest.approx(0.5, abs=1e-12)


def test_matches_scipy_quad_on_oscillatory_integrand():
    f = lambda t: np.sin(20.0 * t) * np.exp(-t)  # noqa: E731
    ours = integrate_1d(f, 0.0, 3.0, QuadConfig(abs_tol=1e-13, rel_tol=1e-12)).value
    ref, _ = integrate.quad(f, 0.0, 3.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    assert ours == pytest.approx(ref, abs=1e-12)


def test_semi_infinite():
    assert integrate_semi_infinite(lambda t: np.exp(-t)).value == pytest.approx(1.0, abs=1e-10)
    assert integrate_semi_infinite(lambda t: t * np.exp(-t)).value \
        == pytest.approx(1.0, abs=1e-10)


def test_last_passage_density_normalized():
    cfg = QuadConfig(abs_tol=1e-12, rel_tol=1e-12, endpoint_substitution="sqrt_left")
    res = integrate_semi_infinite(lambda t: last_passage_density(t, 1.0), cfg)
    assert res.value == pytest.approx(1.0, abs=1e-8)


def test_laplace_of_constant():
    assert laplace_numeric(lambda t: np.ones_like(t), 2.0).value == pytest.approx(0.5, abs=1e-10)


def test_laplace_of_gaussian_kernel():
    # 1/sqrt(2 gamma) exp(-sqrt(2 gamma) |y|) at gamma = 1, y = 1
    cfg = QuadConfig(abs_tol=1e-13, rel_tol=1e-12, endpoint_substitution="sqrt_left")
    got = laplace_numeric(lambda t: gauss_density(t, 0.0, 1.0), 1.0, cfg).value
    assert got == pytest.approx(0.1719094915383617, abs=1e-12)
    assert got == pytest.approx(math.exp(-math.sqrt(2.0)) / math.sqrt(2.0), rel=1e-10)


def test_nonconvergence_is_reported():
    cfg = QuadConfig(abs_tol=1e-15, rel_tol=1e-15, max_subdivisions=2)
    with pytest.warns(NonConvergenceWarning):
        res = integrate_1d(lambda t: np.sin(1.0 / (t + 1e-3)), 0.0, 1.0, cfg)
    assert not res.converged
    assert np.isfinite(res.value)


def test_result_addition():
    r = IntegralResult(1.0, 0.1, True, 21) + IntegralResult(2.0, 0.2, False, 21)
    assert r.value == 3.0 and r.error_estimate == pytest.approx(0.3)
    assert not r.converged and r.evaluations == 42


@pytest.mark.parametrize("kwargs", [dict(abs_tol=0.0), dict(max_subdivisions=0),
                                    dict(endpoint_substitution="log")])
def test_config_validation(kwargs):
    with pytest.raises(DomainError):
        QuadConfig(**kwargs)


def test_bad_interval_and_gamma():
    with pytest.raises(DomainError):
        integrate_1d(lambda t: t, 1.0, 0.0)
    with pytest.raises(DomainError):
        laplace_numeric(lambda t: t, 0.0)
