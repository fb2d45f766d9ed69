import math

import numpy as np
import pytest

from bridge_exit.errors import DomainError
from bridge_exit.monte_carlo import McConfig
from bridge_exit.walsh import (
    GridGeometry,
    PayoffSpec,
    corollary_integral,
    eq38_term,
    exit_position_mean,
    lemma_bounds_check,
    q_formula,
    tree_vs_gaussian,
)


def test_grid_distances():
    g = GridGeometry(0.25)
    xs = np.linspace(0.01, 2.0, 57)
    off = ~g.on_grid(xs)
    np.testing.assert_allclose(g.dist_odd(xs)[off] + g.dist_even(xs)[off], 0.25, atol=1e-15)
    # Lipschitz-1
    d = np.abs(np.diff(g.dist_odd(xs))) / np.diff(xs)
    assert np.all(d <= 1 + 1e-12)
    assert g.dist_odd(0.33) == pytest.approx(0.08)
    assert g.even_midpoint(0.6) == pytest.approx(0.5)
    assert g.band(0.6) == pytest.approx((0.25, 0.75))
    assert g.exit_band(0.33) == pytest.approx((0.25 - 0.33, 0.5 - 0.33))
    with pytest.raises(DomainError):
        GridGeometry(0.0)


def test_payoffs():
    assert PayoffSpec("call", strike=1.0)(np.array([0.5, 2.0])).tolist() == [0.0, 1.0]
    assert PayoffSpec("kinked", knot=0.3).kink == 0.3
    assert PayoffSpec("linear").kink is None
    with pytest.raises(DomainError):
        PayoffSpec("digital")


def test_q_on_grid_is_left_limit():
    q = q_formula(0.5, 1.0, 0.25)
    assert q.on_grid and q.value == pytest.approx(1.0) and q.se == 0.0


def test_q_formula_frozen_and_walsh_limit():
    q = q_formula(0.33, 1.0, 0.25, method="quadrature")
    assert q.dist_term == pytest.approx(0.32)
    assert q.value == pytest.approx(0.3003240790714444, abs=1e-9)
    assert 0.0 <= q.value <= 1.0 and not q.clamped


def test_q_mc_route_agrees_with_quadrature():
    cfg = McConfig(n_paths=4000, n_steps=512, seed=21)
    mc = q_formula(0.33, 1.0, 0.25, method="mc", cfg=cfg)
    ref = q_formula(0.33, 1.0, 0.25, method="quadrature")
    assert abs(mc.value - ref.value) < 4 * mc.se


def test_exit_position_symmetry():
    # reflecting x -> -x mirrors the exit band and the bridge
    a = exit_position_mean(0.1, 1.0, 0.25).value
    b = exit_position_mean(-0.1, 1.0, 0.25).value
    assert a == pytest.approx(-b, rel=1e-9)


def test_corollary_integral_bounded():
    r1 = corollary_integral(1.0, 0.2)
    r2 = corollary_integral(1.0, 0.1)
    assert r1.scaled == pytest.approx(0.133609, abs=2e-6)
    assert max(r1.scaled, r2.scaled) / min(r1.scaled, r2.scaled) <= 4
    assert r1.tail_bound < 1e-6 and r1.n_nodes > 0


def test_eq38_term_vanishes():
    r = eq38_term(1.0, 0.2, x_max_sd=8.0)
    assert abs(r.value) <= 1e-14 + r.tail_bound


@pytest.mark.parametrize("n", [1, 7, 100, 401])
def test_tree_matches_low_moments(n):
    assert abs(tree_vs_gaussian(PayoffSpec("linear"), 1.0, n).error) <= 1e-12
    assert abs(tree_vs_gaussian(PayoffSpec("quadratic"), 1.3, n).error) <= 1e-12


def test_tree_call_error_decreases():
    errs = [abs(tree_vs_gaussian(PayoffSpec("call"), 1.0, n).error) for n in (100, 400, 1600)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[0] == pytest.approx(0.000996093465539194, rel=1e-8)
    g = tree_vs_gaussian(PayoffSpec("call"), 1.0, 100).gaussian_value
    assert g == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), abs=1e-13)


def test_tree_domain():
    with pytest.raises(DomainError):
        tree_vs_gaussian(PayoffSpec("call"), 1.0, 0)


def test_lemma_bounds():
    rep = lemma_bounds_check(1.0, -1.0, -0.1, 0.1)
    assert rep.ok and rep.time_bound == pytest.approx(0.24)
    assert rep.time_slack > 0 and rep.position_slack > 0
    bad = lemma_bounds_check(1.0, 1.0, -0.1, 0.1, mean_time=0.5, mean_position=0.0)
    assert not bad.time_ok
    with pytest.raises(DomainError):
        lemma_bounds_check(1.0, 0.0, -0.1, 0.1)
