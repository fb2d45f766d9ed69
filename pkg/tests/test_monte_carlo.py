import math
import os

import numpy as np
import pytest
from scipy import integrate

from bridge_exit.errors import DiscretizationWarning, DomainError
from bridge_exit.exit_mean import BridgeSpec, DiffusionModel, bessel_exit_mean_kolmogorov
from bridge_exit.exit_mean import bridge_exit_law, survival_probability_bridge
from bridge_exit.monte_carlo import (
    Estimate,
    McConfig,
    _hit_time,
    mc_bessel_exit,
    mc_bm_exit,
    mc_diffusion_exit,
    mc_exit,
    mc_last_passage,
    mc_walk_embedding,
    sample_bessel3_bridge,
    sample_brownian_bridge,
    worker_count,
)

SMALL = McConfig(n_paths=20_000, n_steps=256, seed=11)


def test_config_validation():
    for bad in (dict(n_paths=0), dict(n_steps=1), dict(seed=-1), dict(exit_time_rule="x"),
                dict(bridge_sampler="x"), dict(block_size=0)):
        with pytest.raises(DomainError):
            McConfig(**bad)
    assert SMALL.with_(seed=3).seed == 3


def test_estimate_z_score():
    assert Estimate(1.1, 0.05).z_score(1.0) == pytest.approx(2.0)
    assert Estimate(1.0, 0.0).z_score(1.0) == 0.0


def test_bridge_sampler_endpoints_and_marginal():
    spec = BridgeSpec(0.0, 1.0, 1.0)
    cfg = McConfig(n_paths=40_000, n_steps=16, seed=5)
    grid, paths = sample_brownian_bridge(spec, cfg)
    assert np.all(paths[:, 0] == 0.0) and np.all(paths[:, -1] == 1.0)
    mid = paths[:, 8]
    # bridge marginal at T/2: N(y/2, 1/4)
    assert abs(mid.mean() - 0.5) < 4 * 0.5 / math.sqrt(mid.size)
    assert mid.var() == pytest.approx(0.25, rel=0.03)


def test_time_change_sampler_has_same_marginal():
    spec = BridgeSpec(0.0, -0.5, 2.0)
    cfg = McConfig(n_paths=40_000, n_steps=8, seed=6, bridge_sampler="time_change")
    _, paths = sample_brownian_bridge(spec, cfg)
    q = paths[:, 2]  # t = 0.5: mean -0.125, var 0.5 * 1.5 / 2
    assert abs(q.mean() + 0.125) < 4 * math.sqrt(0.375 / q.size)
    assert q.var() == pytest.approx(0.375, rel=0.03)
    assert np.all(paths[:, -1] == -0.5)


def bridge_first_passage_mean(a, b):
    """Mean hitting time of 0 for the unit-time bridge a -> -b, by scipy quad."""
    def dens(s):
        fp = a / math.sqrt(2 * math.pi * s ** 3) * math.exp(-a * a / (2 * s))
        tail = math.exp(-b * b / (2 * (1 - s))) / math.sqrt(2 * math.pi * (1 - s))
        return fp * tail
    norm = math.exp(-(a + b) ** 2 / 2) / math.sqrt(2 * math.pi)
    return integrate.quad(lambda s: s * dens(s), 0, 1)[0] / norm


@pytest.mark.parametrize("a,b", [(1.0, 1.0), (0.3, 2.0)])
def test_hit_time_law(a, b):
    rng = np.random.default_rng(0)
    t = _hit_time(rng, np.full(200_000, a), np.full(200_000, b), 1.0)
    assert np.all((t > 0) & (t < 1))
    target = bridge_first_passage_mean(a, b)
    assert t.mean() == pytest.approx(target, abs=4 * t.std() / math.sqrt(t.size))


def test_hit_time_zero_distance():
    rng = np.random.default_rng(0)
    assert np.all(_hit_time(rng, np.zeros(3), np.ones(3), 1.0) == 0.0)


def test_determinism_and_thread_invariance(monkeypatch):
    spec = BridgeSpec(0.0, 1.0, 1.0)
    cfg = McConfig(n_paths=5000, n_steps=128, seed=3, block_size=1000)
    monkeypatch.setenv("BRIDGE_EXIT_THREADS", "1")
    a = mc_exit(spec, (-0.1, 0.1), cfg)
    monkeypatch.setattr(os, "cpu_count", lambda: 4)
    monkeypatch.setenv("BRIDGE_EXIT_THREADS", "4")
    assert worker_count() == 4
    b = mc_exit(spec, (-0.1, 0.1), cfg)
    assert a == b


def test_bad_thread_env(monkeypatch):
    monkeypatch.setenv("BRIDGE_EXIT_THREADS", "zero")
    with pytest.raises(DomainError):
        worker_count()


def test_bridge_exit_matches_quadrature():
    law = bridge_exit_law(1.0, 1.0, -0.1, 0.1)
    with pytest.warns(DiscretizationWarning):
        s = mc_exit(BridgeSpec(0.0, 1.0, 1.0), (-0.1, 0.1), SMALL)
    assert s.n_upper + s.n_lower + s.n_no_exit == s.n_paths
    assert s.n_no_exit == 0
    assert abs(s.time_estimate().z_score(law.mean_time)) < 4
    assert abs(s.position_estimate().z_score(law.mean_position)) < 4


def test_survival_matches_kolmogorov():
    s = mc_exit(BridgeSpec(0.0, 0.0, 1.0), (-1.0, 1.0), SMALL)
    target = survival_probability_bridge(BridgeSpec(0.0, 0.0, 1.0), 1.0)
    assert abs(s.no_exit_estimate().z_score(target)) < 4


def test_grid_only_monitoring_is_biased_upward():
    cfg = SMALL.with_(n_paths=10_000, crossing_correction=False)
    s = mc_exit(BridgeSpec(0.0, 0.0, 1.0), (-1.0, 1.0), cfg)
    assert s.prob_no_exit > 0.73 + 3 * s.se_prob_no_exit


def test_bm_exit_mean():
    s = mc_bm_exit(0.0, -1.0, 1.0, McConfig(n_paths=5000, n_steps=128, seed=2))
    assert abs(s.time_estimate().z_score(1.0)) < 4
    with pytest.raises(DomainError):
        mc_bm_exit(2.0, -1.0, 1.0, SMALL)


def test_diffusion_exit_scaled():
    model = DiffusionModel(drift=lambda u: 0.0 * u, diffusion=lambda u: 2.0 + 0.0 * u)
    s = mc_diffusion_exit(model, 0.0, 0.1, McConfig(n_paths=5000, n_steps=64, seed=4))
    assert abs(s.time_estimate().z_score(0.0025)) < 4


def test_walk_embedding_free_and_records():
    r = mc_walk_embedding(None, 1.0, 0.25, McConfig(n_paths=4000, n_steps=256, seed=9),
                          record=3)
    assert abs(r.p_up_step.z_score(0.5)) < 4
    assert len(r.paths) == 3
    for emb in r.paths:
        assert emb.levels[0] == 0 and emb.tau_times[0] == 0.0
        assert all(abs(b - a) == 1 for a, b in zip(emb.levels, emb.levels[1:]))
        assert all(b > a for a, b in zip(emb.tau_times, emb.tau_times[1:]))
        assert emb.tau_times[-1] <= 1.0


def test_last_passage_before_exit():
    r = mc_last_passage(1.0, 30.0, McConfig(n_paths=3000, n_steps=4096, seed=1))
    assert r.n_censored == 0
    assert np.all(r.samples < r.exit_times)
    assert abs(r.mean().z_score(2.0 / 3.0)) < 4


def test_bessel_bridge_sampler():
    grid, paths = sample_bessel3_bridge(1.0, 2.0, 1.0, McConfig(n_paths=2000, n_steps=32,
                                                                seed=8))
    assert np.all(paths >= 0.0)
    np.testing.assert_allclose(paths[:, -1], 2.0)
    with pytest.raises(DomainError):
        sample_bessel3_bridge(1.0, 2.0, 1.0, SMALL, method="exact")


@pytest.mark.parametrize("method", ["euler", "radial"])
def test_bessel_exit_matches_quadrature(method):
    ref = bessel_exit_mean_kolmogorov(1.0, 2.0, 1.0, 0.2)
    s = mc_bessel_exit(1.0, 2.0, 1.0, 0.2, McConfig(n_paths=10_000, n_steps=256, seed=12),
                       method=method)
    assert abs(s.time_estimate().z_score(ref)) < 4
