"""First-exit-time means by quadrature.

Brownian bridge and Bessel(3) bridge means are available through two
independent routes: the double integral of the killed density ``Delta``
against the bridge's h-transform weight, and the single time integral of
the Kolmogorov function ``F(h/sqrt(t))``.  General scalar diffusions go
through the scale function and speed measure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, InfiniteMeanError
from .quadrature import QuadConfig, integrate_1d
from .special_functions import (
    delta,
    exit_flux_density,
    gauss_density,
    killed_bm_density,
    kolmogorov_cdf,
)

__all__ = [
    "BridgeSpec",
    "DiffusionModel",
    "LimitScanRow",
    "EXIT_QUAD",
    "bm_exit_mean",
    "bridge_exit_mean_delta",
    "bridge_exit_mean_kolmogorov",
    "bridge_exit_mean_interval",
    "ExitLaw",
    "bridge_exit_law",
    "bessel_exit_mean_delta",
    "bessel_exit_mean_kolmogorov",
    "general_diffusion_exit_mean",
    "limit_scan",
    "default_h_list",
    "survival_probability_bridge",
    "bessel_survival_probability",
    "tau_upper_bound",
    "exit_position_bound",
]

# tight enough that two routes agree to ~1e-10 relative at h = 0.025
EXIT_QUAD = QuadConfig(abs_tol=1e-14, rel_tol=1e-11, max_subdivisions=4000,
                       endpoint_substitution="sqrt_both")
_INNER_QUAD = QuadConfig(abs_tol=1e-15, rel_tol=1e-12, max_subdivisions=2000)


@dataclass(frozen=True)
class BridgeSpec:
    """A path pinned at ``x`` at time 0 and at ``y`` at time ``T``."""

    x: float
    y: float
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError(f"bridge horizon must be positive, got T={self.T}")


@dataclass(frozen=True)
class DiffusionModel:
    """``dX = drift(X) dt + diffusion(X) dW`` on the open interval ``domain``.

    ``drift`` and ``diffusion`` must accept numpy arrays; scalar returns are
    broadcast.
    """

    drift: Callable
    diffusion: Callable
    domain: tuple = (-math.inf, math.inf)
    reference: float | None = None
    name: str = field(default="diffusion", compare=False)


@dataclass(frozen=True)
class LimitScanRow:
    h: float
    mean: float
    ratio: float


def bm_exit_mean(x, a, b):
    """Mean exit time of standard BM from ``(a, b)`` started at ``x``."""
    if not a < x < b:
        raise DomainError(f"bm_exit_mean requires a < x < b, got a={a}, x={x}, b={b}")
    return (b - x) * (x - a)


def _check_bridge(spec, h):
    if not h > 0:
        raise DomainError(f"half width must be positive, got h={h}")
    y = spec.y - spec.x
    if abs(y) < h:
        raise InfiniteMeanError(
            f"|y - x| = {abs(y)} < h = {h}: the bridge survives with positive "
            "probability and the mean exit time is infinite",
            survival_probability=survival_probability_bridge(spec, h))
    return y


def _inner_integral(integrand, lo, hi, t):
    """``int_lo^hi`` of a density concentrated within ``O(sqrt(t))`` of 0.

    Breakpoints at 0 and ``+-10 sqrt(t)`` keep the panel nodes from
    stepping over the spike when ``t`` is tiny.
    """
    s = 10.0 * math.sqrt(t)
    cuts = sorted({lo, hi, 0.0, *(c for c in (-s, s) if lo < c < hi)})
    return sum(integrate_1d(integrand, u, v, _INNER_QUAD).value
               for u, v in zip(cuts, cuts[1:]))


def bridge_exit_mean_delta(spec, h, cfg=None):
    """Mean exit time of the Brownian bridge from ``(x - h, x + h)``.

    Double integral of ``p_{T-t}(z, y) Delta(z, h, t) / p_T(0, y)``; inner
    over ``z``, outer over ``t``.
    """
    cfg = cfg or EXIT_QUAD
    y = _check_bridge(spec, h)
    T = spec.T

    def inner(t):
        tau = T - t

        def integrand(z):
            return _bridge_weight(z, tau, T, y) * delta(z, h, t)

        return _inner_integral(integrand, -h, h, t)

    return integrate_1d(np.vectorize(inner), 0.0, T, cfg).value


def _bridge_weight(z, tau, T, y):
    """``p_tau(z, y) / p_T(0, y)``."""
    return np.sqrt(T / tau) * np.exp(-(y - z) ** 2 / (2.0 * tau) + y * y / (2.0 * T))


def bridge_exit_mean_kolmogorov(spec, h, cfg=None):
    """Mean exit time of the Brownian bridge via the Kolmogorov function.

    ``h int_0^T p_{T-t}(0, y) / p_T(0, y) F(h / sqrt(t)) / sqrt(2 pi t) dt``.
    """
    cfg = cfg or EXIT_QUAD
    y = _check_bridge(spec, h)
    T = spec.T

    def integrand(t):
        return h * _bridge_weight(0.0, T - t, T, y) * kolmogorov_cdf(h / np.sqrt(t)) \
            / np.sqrt(2.0 * np.pi * t)

    return integrate_1d(integrand, 0.0, T, cfg).value


def bridge_exit_mean_interval(T, y, a, b, cfg=None):
    """Mean exit time from ``(a, b)``, ``a < 0 < b``, of the bridge 0 -> y.

    Uses the killed density of the band recentred at ``(a + b) / 2``.  For
    a symmetric band this is the Delta route.
    """
    cfg = cfg or EXIT_QUAD
    if not a < 0 < b:
        raise DomainError(f"need a < 0 < b, got ({a}, {b})")
    if a < y < b:
        raise InfiniteMeanError(f"y = {y} inside ({a}, {b}): mean exit time is infinite")
    c = 0.5 * (a + b)
    w = 0.5 * (b - a)

    def inner(t):
        tau = T - t

        def integrand(z):
            return _bridge_weight(z, tau, T, y) * killed_bm_density(t, -c, z - c, w)

        return _inner_integral(integrand, a, b, t)

    return integrate_1d(np.vectorize(inner), 0.0, T, cfg).value


@dataclass(frozen=True)
class ExitLaw:
    """Where and when the bridge ``0 -> y`` leaves ``(a, b)``."""

    p_lower: float
    p_upper: float
    mean_position: float
    mean_time: float


def bridge_exit_law(T, y, a, b, cfg=None, with_time=True):
    """Exit side probabilities, mean exit position and mean exit time.

    Integrates the first-passage flux of killed BM through each barrier
    against ``p_{T-t}(barrier, y) / p_T(0, y)``.  Needs ``y`` outside
    ``(a, b)`` so that the bridge exits almost surely; ``p_lower + p_upper``
    is then 1 up to quadrature error.  ``with_time=False`` skips the two
    time integrals and reports ``mean_time`` as nan.
    """
    cfg = cfg or EXIT_QUAD
    if not a < 0 < b:
        raise DomainError(f"need a < 0 < b, got ({a}, {b})")
    if a < y < b:
        raise InfiniteMeanError(f"y = {y} inside ({a}, {b}): the bridge may never exit")
    c = 0.5 * (a + b)
    w = 0.5 * (b - a)
    log_pT = -y * y / (2.0 * T) - 0.5 * math.log(T)

    def weight(t, barrier):
        tau = T - t
        return np.exp(-(y - barrier) ** 2 / (2.0 * tau) - 0.5 * np.log(tau) - log_pT)

    def upper(t):
        return exit_flux_density(t, -c, w) * weight(t, b)

    def lower(t):
        return exit_flux_density(t, c, w) * weight(t, a)

    p_up = integrate_1d(upper, 0.0, T, cfg).value
    p_low = integrate_1d(lower, 0.0, T, cfg).value
    mean_time = math.nan
    if with_time:
        mean_time = (integrate_1d(lambda t: t * upper(t), 0.0, T, cfg).value
                     + integrate_1d(lambda t: t * lower(t), 0.0, T, cfg).value)
    return ExitLaw(p_lower=p_low, p_upper=p_up, mean_position=a * p_low + b * p_up,
                   mean_time=mean_time)


def _check_bessel(x, y, T, h):
    if not h > 0 or not T > 0:
        raise DomainError("need h > 0 and T > 0")
    if not x > h:
        raise DomainError(f"Bessel bridge band needs x > h, got x={x}, h={h}")
    if not y > 0:
        raise DomainError(f"Bessel bridge endpoint must be positive, got y={y}")
    if x - h < y < x + h:
        raise InfiniteMeanError(
            f"y = {y} inside ({x - h}, {x + h}): mean exit time is infinite",
            survival_probability=bessel_survival_probability(x, y, T, h))


def _bessel_weight(z, tau, x, y, T):
    """``(z / x) r_tau(z, y) / r_T(x, y)``."""
    num = np.exp(-(y - z) ** 2 / (2.0 * tau)) * -np.expm1(-2.0 * z * y / tau) / np.sqrt(tau)
    den = math.exp(-(y - x) ** 2 / (2.0 * T)) * -math.expm1(-2.0 * x * y / T) / math.sqrt(T)
    return num / den


def bessel_exit_mean_delta(x, y, T, h, cfg=None):
    """Mean exit time of the Bessel(3) bridge ``x -> y`` from ``(x - h, x + h)``."""
    cfg = cfg or EXIT_QUAD
    _check_bessel(x, y, T, h)

    def inner(t):
        tau = T - t

        def integrand(alpha):
            return _bessel_weight(alpha + x, tau, x, y, T) * delta(alpha, h, t)

        return _inner_integral(integrand, -h, h, t)

    return integrate_1d(np.vectorize(inner), 0.0, T, cfg).value


def bessel_exit_mean_kolmogorov(x, y, T, h, cfg=None):
    """Bessel(3) bridge mean exit time via the Kolmogorov function."""
    cfg = cfg or EXIT_QUAD
    _check_bessel(x, y, T, h)

    def integrand(t):
        return h * _bessel_weight(x, T - t, x, y, T) * kolmogorov_cdf(h / np.sqrt(t)) \
            / np.sqrt(2.0 * np.pi * t)

    return integrate_1d(integrand, 0.0, T, cfg).value


def survival_probability_bridge(spec, h):
    """``P(bridge never leaves (x - h, x + h))``; zero when ``|y - x| >= h``."""
    y = spec.y - spec.x
    if abs(y) >= h:
        return 0.0
    return killed_bm_density(spec.T, 0.0, y, h) / gauss_density(spec.T, 0.0, y)


def bessel_survival_probability(x, y, T, h):
    """Survival probability of the Bessel(3) bridge in ``(x - h, x + h)``."""
    if not (x - h < y < x + h):
        return 0.0
    killed = delta(y - x, h, T)
    free = gauss_density(T, x, y) * -math.expm1(-2.0 * x * y / T)
    return float(killed / free)


def _scale_speed(model, x0, h, cfg):
    ref = x0 if model.reference is None else model.reference
    quad = cfg.with_(endpoint_substitution="none")

    def two_b_over_a2(u):
        a = np.asarray(model.diffusion(u), dtype=float)
        return 2.0 * np.asarray(model.drift(u), dtype=float) / (a * a)

    def B_scalar(x):
        if x == ref:
            return 0.0
        lo, hi = (ref, x) if ref < x else (x, ref)
        val = integrate_1d(two_b_over_a2, lo, hi, quad).value
        return val if ref < x else -val

    B = np.vectorize(B_scalar, otypes=[float])

    def scale_density(u):
        return np.exp(-B(u))

    def speed_density(u):
        a = np.asarray(model.diffusion(u), dtype=float)
        return 2.0 * np.exp(B(u)) / (a * a)

    def scale_between(lo, hi):
        if lo == hi:
            return 0.0
        return integrate_1d(scale_density, lo, hi, quad).value

    return scale_between, speed_density, quad


def general_diffusion_exit_mean(model, x0, h, cfg=None):
    """Mean exit time of a scalar diffusion from ``(x0 - h, x0 + h)``.

    Integrates the Green kernel of the killed diffusion against the speed
    measure; scale and speed are built from ``B(x) = int 2 b / a^2`` with
    ``B(reference) = 0``.
    """
    cfg = cfg or QuadConfig(abs_tol=1e-15, rel_tol=1e-12)
    lo_dom, hi_dom = model.domain
    if not h > 0:
        raise DomainError(f"half width must be positive, got h={h}")
    if not (lo_dom < x0 - h and x0 + h < hi_dom):
        raise DomainError(f"band ({x0 - h}, {x0 + h}) is not inside {model.domain}")
    scale_between, speed, quad = _scale_speed(model, x0, h, cfg)
    left, right = x0 - h, x0 + h
    s_left = scale_between(left, x0)
    s_right = scale_between(x0, right)
    total = s_left + s_right

    def lower_part(ys):
        return np.array([scale_between(left, y) for y in ys]) * speed(ys)

    def upper_part(ys):
        return np.array([scale_between(y, right) for y in ys]) * speed(ys)

    low = integrate_1d(lower_part, left, x0, quad).value
    up = integrate_1d(upper_part, x0, right, quad).value
    return (s_right * low + s_left * up) / total


def limit_scan(evaluator, h_list, **params):
    """Evaluate ``evaluator(h=h, **params)`` along a decreasing ``h_list``."""
    h_list = [float(h) for h in h_list]
    if any(not h > 0 for h in h_list):
        raise DomainError("h_list entries must be positive")
    if any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise DomainError("h_list must be strictly decreasing")
    rows = []
    for h in h_list:
        mean = float(evaluator(h=h, **params))
        rows.append(LimitScanRow(h=h, mean=mean, ratio=mean / (h * h)))
    return rows


def default_h_list(y, h_max=0.4, n=5):
    """Geometric halving from ``min(h_max, |y|) / 2`` so ``|y| >= h`` holds."""
    start = min(h_max, abs(y)) / 2.0 if y else h_max
    return [start / 2 ** j for j in range(n)]


def tau_upper_bound(a, b, y, T):
    """Upper bound on the bridge mean exit time from ``(a, b)``, ``y`` outside.

    ``4 b (|a| + y/2) ^ T`` for ``y >= b`` and ``4 |a| (b + |y|/2) ^ T`` for
    ``y <= a``.
    """
    if not a < 0 < b:
        raise DomainError(f"need a < 0 < b, got ({a}, {b})")
    if y >= b:
        return min(4.0 * b * (abs(a) + y / 2.0), T)
    if y <= a:
        return min(4.0 * abs(a) * (b + abs(y) / 2.0), T)
    raise DomainError(f"y = {y} must lie outside ({a}, {b})")


def exit_position_bound(mean_exit_time, a, b, y, T):
    """Bound on ``|E[B at exit]|`` given the mean exit time."""
    return mean_exit_time / T * (2.0 * max(abs(a), b) + abs(y) + 3.0 * math.sqrt(2.0 * T))
