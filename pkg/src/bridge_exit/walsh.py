"""Parity function of the embedded random walk and the binomial-tree error.

A symmetric ``+-h`` walk is read off a Brownian path at the successive
times it has moved by ``h``.  Given ``W_T = x``, the walk's position at ``T``
is an even multiple of ``h`` with probability

    q(x) = dist(x, odd grid) / h  +-  E[B^{0,T,-x} at exit from T(x)] / h,

where ``T(x)`` is the exit time from ``(kh - x, (k+1)h - x)`` for
``x`` in ``(kh, (k+1)h)``.  The exit-position mean comes either from Monte
Carlo or from the first-passage quadrature in :mod:`exit_mean`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.stats import binom

from .errors import DomainError
from .exit_mean import BridgeSpec, bridge_exit_law, exit_position_bound, tau_upper_bound
from .monte_carlo import Estimate, McConfig, mc_exit_position
from .quadrature import QuadConfig, integrate_1d, integrate_semi_infinite

__all__ = [
    "GridGeometry",
    "PayoffSpec",
    "QValue",
    "WalshIntegral",
    "TreeResult",
    "LemmaReport",
    "exit_position_mean",
    "q_formula",
    "corollary_integral",
    "eq38_term",
    "tree_vs_gaussian",
    "lemma_bounds_check",
]

METHODS = ("mc", "quadrature")


@dataclass(frozen=True)
class GridGeometry:
    """The lattices ``N_e = {2kh}`` and ``N_o = {(2k+1)h}``."""

    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise DomainError(f"grid spacing must be positive, got h={self.h}")

    def _dist(self, x, offset):
        r = np.mod(np.asarray(x, dtype=float) / self.h - offset, 2.0)
        return self.h * np.minimum(r, 2.0 - r)

    def dist_odd(self, x):
        return self._dist(x, 1.0)

    def dist_even(self, x):
        return self._dist(x, 0.0)

    def even_midpoint(self, x):
        """``h_e``: the even grid point of the cell ``(h_lower, h_upper)`` holding ``x``."""
        return 2.0 * self.h * np.round(np.asarray(x, dtype=float) / (2.0 * self.h))

    def band(self, x):
        """``(h_lower, h_upper) = (h_e - h, h_e + h)``."""
        he = self.even_midpoint(x)
        return he - self.h, he + self.h

    def on_grid(self, x, tol=1e-12):
        r = np.asarray(x, dtype=float) / self.h
        return np.abs(r - np.round(r)) <= tol * np.maximum(1.0, np.abs(r))

    def exit_band(self, x):
        """``(kh - x, (k+1)h - x)`` for ``x`` in ``(kh, (k+1)h)``."""
        k = math.floor(x / self.h)
        return k * self.h - x, (k + 1) * self.h - x


@dataclass(frozen=True)
class PayoffSpec:
    """``linear``: x; ``quadratic``: x^2; ``call``: max(x - strike, 0);
    ``kinked``: |x - knot|."""

    kind: str
    strike: float = 0.0
    knot: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "quadratic", "call", "kinked"):
            raise DomainError(f"unknown payoff kind {self.kind!r}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            return x
        if self.kind == "quadratic":
            return x * x
        if self.kind == "call":
            return np.maximum(x - self.strike, 0.0)
        return np.abs(x - self.knot)

    @property
    def kink(self):
        if self.kind == "call":
            return self.strike
        if self.kind == "kinked":
            return self.knot
        return None


@dataclass(frozen=True)
class QValue:
    value: float
    se: float
    dist_term: float
    correction: float
    on_grid: bool = False
    clamped: bool = False


@dataclass(frozen=True)
class WalshIntegral:
    value: float
    scaled: float
    se: float
    tail_bound: float
    n_nodes: int


@dataclass(frozen=True)
class TreeResult:
    tree_value: float
    gaussian_value: float
    error: float
    h: float
    n: int


@dataclass(frozen=True)
class LemmaReport:
    mean_time: float
    time_bound: float
    mean_position: float
    position_bound: float

    @property
    def time_ok(self):
        return self.mean_time <= self.time_bound

    @property
    def position_ok(self):
        return abs(self.mean_position) <= self.position_bound

    @property
    def ok(self):
        return self.time_ok and self.position_ok

    @property
    def time_slack(self):
        return self.time_bound - self.mean_time

    @property
    def position_slack(self):
        return self.position_bound - abs(self.mean_position)


def _check_method(method):
    if method not in METHODS:
        raise DomainError(f"method must be one of {METHODS}, got {method!r}")


def exit_position_mean(x, T, h, method="quadrature", cfg=None):
    """``E[B^{0,T,-x}]`` at its exit from ``T(x)``, as an :class:`Estimate`."""
    _check_method(method)
    a, b = GridGeometry(h).exit_band(x)
    if method == "quadrature":
        return Estimate(bridge_exit_law(T, -x, a, b, with_time=False).mean_position, 0.0)
    return mc_exit_position(BridgeSpec(0.0, -x, T), (a, b), cfg or McConfig())


def q_formula(x, T, h, method="mc", cfg=None):
    """``q(x) = P(k_* even | W_T = x)`` through the exit-position formula.

    At grid multiples of ``h`` the exit band degenerates and the left limit
    ``dist(x, N_o) / h`` is returned with ``on_grid=True``.  Noisy values
    outside ``[0, 1]`` are clamped and flagged.
    """
    if not (h > 0 and T > 0):
        raise DomainError("need h > 0 and T > 0")
    grid = GridGeometry(h)
    dist = float(grid.dist_odd(x)) / h
    if grid.on_grid(x):
        return QValue(dist, 0.0, dist, 0.0, on_grid=True)
    est = exit_position_mean(x, T, h, method, cfg)
    lower_half = x < float(grid.even_midpoint(x))
    sign = 1.0 if lower_half else -1.0
    corr = sign * est.value / h
    q = dist + corr
    clamped = not 0.0 <= q <= 1.0
    return QValue(min(max(q, 0.0), 1.0), est.se / h, dist, corr, clamped=clamped)


def _cell_nodes(h, x_max, n_nodes):
    """Gauss-Legendre nodes on each cell ``(kh, (k+1)h)`` within ``(0, x_max)``.

    Returns ``(x, w, k)``; cells are where ``T(x)`` and the sign of the
    correction stay fixed, so the integrands are smooth on each.
    """
    u, wu = leggauss(n_nodes)
    n_cells = int(math.ceil(x_max / h - 1e-12))
    xs, ws, ks = [], [], []
    for k in range(n_cells):
        lo, hi = k * h, min((k + 1) * h, x_max)
        xs.append(0.5 * (lo + hi) + 0.5 * (hi - lo) * u)
        ws.append(0.5 * (hi - lo) * wu)
        ks.append(np.full(n_nodes, k))
    return np.concatenate(xs), np.concatenate(ws), np.concatenate(ks)


def _gauss(T, x):
    return np.exp(-x * x / (2.0 * T)) / math.sqrt(2.0 * math.pi * T)


def _position_means(xs, T, h, method, cfg):
    vals, ses = np.empty(xs.size), np.empty(xs.size)
    for i, x in enumerate(xs):
        node_cfg = None
        if method == "mc":
            base = cfg or McConfig(n_paths=4000)
            node_cfg = base.with_(seed=(base.seed + 7919 * (i + 1)) % 2 ** 64)
        est = exit_position_mean(float(x), T, h, method, node_cfg)
        vals[i], ses[i] = est.value, est.se
    return vals, ses


def _tail_bound(T, h, x_max):
    """``2 int_{x_max}^inf (2h + x + 3 sqrt(2T)) p_T(0, x) dx``.

    Dominates the truncated part of either integral since ``|E[B exit]|``
    obeys the exit-position bound with ``E[tau] <= T``.
    """
    s = math.sqrt(T)
    z = x_max / s
    upper_tail = 0.5 * math.erfc(z / math.sqrt(2.0))
    return 2.0 * ((2.0 * h + 3.0 * math.sqrt(2.0 * T)) * upper_tail
                  + s * math.exp(-z * z / 2.0) / math.sqrt(2.0 * math.pi))


def corollary_integral(T, h, method="quadrature", cfg=None, nodes_per_cell=8, x_max_sd=6.0):
    """``int |E[B^{0,T,-x} at exit from T(x)]| p_T(0, x) dx`` and its ratio to ``h^2``.

    The integrand is even in ``x``; the half line is cut at ``x_max_sd
    sqrt(T)`` (the dropped part is bounded by ``tail_bound``) and each cell
    ``(kh, (k+1)h)`` gets its own Gauss-Legendre rule.
    """
    if not (h > 0 and T > 0):
        raise DomainError("need h > 0 and T > 0")
    _check_method(method)
    x_max = x_max_sd * math.sqrt(T)
    xs, ws, _ = _cell_nodes(h, x_max, nodes_per_cell)
    vals, ses = _position_means(xs, T, h, method, cfg)
    weight = 2.0 * ws * _gauss(T, xs)
    value = math.fsum(weight * np.abs(vals))
    se = float(np.sqrt(np.sum((weight * ses) ** 2)))
    return WalshIntegral(value, value / h ** 2, se, _tail_bound(T, h, x_max), xs.size)


def eq38_term(T, h, method="quadrature", cfg=None, nodes_per_cell=8, x_max_sd=6.0):
    """``int (2h^2 - dist^2(x, N_e)) (q(x) - dist(x, N_o)/h) p_T(0, x) dx``, with ratio to ``h^3``.

    ``q - dist/h`` is ``+E/h`` on cells ``(kh, (k+1)h)`` with ``k`` odd
    (below an even point) and ``-E/h`` with ``k`` even.
    """
    if not (h > 0 and T > 0):
        raise DomainError("need h > 0 and T > 0")
    _check_method(method)
    x_max = x_max_sd * math.sqrt(T)
    xs, ws, ks = _cell_nodes(h, x_max, nodes_per_cell)
    vals, ses = _position_means(xs, T, h, method, cfg)
    sign = np.where(ks % 2 == 1, 1.0, -1.0)
    geom = GridGeometry(h)
    factor = 2.0 * ws * (2.0 * h * h - geom.dist_even(xs) ** 2) * _gauss(T, xs) / h
    value = math.fsum(factor * sign * vals)
    se = float(np.sqrt(np.sum((factor * ses) ** 2)))
    tail = 2.0 * h * _tail_bound(T, h, x_max)
    return WalshIntegral(value, value / h ** 3, se, tail, xs.size)


_GAUSS_QUAD = QuadConfig(abs_tol=1e-14, rel_tol=1e-13)


def tree_vs_gaussian(payoff, T, n):
    """``E[g(walk after n steps of +-sqrt(T/n))] - E[g(W_T)]``.

    Atoms ``(2j - n) h`` with binomial weights; mirrored atoms are summed in
    pairs so odd payoffs cancel exactly.  The Gaussian side is quadrature
    split at the payoff's kink, also in mirrored pairs.
    """
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    if not T > 0:
        raise DomainError("need T > 0")
    n = int(n)
    h = math.sqrt(T / n)
    j = np.arange(n // 2 + 1)
    w = binom.pmf(j, n, 0.5)
    x = (2 * j - n) * h
    pair = payoff(x) + payoff(-x)
    if n % 2 == 0:
        pair[-1] = payoff(np.array([0.0]))[0]
    tree = math.fsum(w * pair)

    def sym(u):
        return (payoff(u) + payoff(-u)) * _gauss(T, u)

    kink = payoff.kink
    if kink is None or kink == 0.0:
        gaussian = integrate_semi_infinite(sym, _GAUSS_QUAD).value
    else:
        c = abs(kink)
        gaussian = integrate_1d(sym, 0.0, c, _GAUSS_QUAD).value \
            + integrate_semi_infinite(lambda u: sym(c + u), _GAUSS_QUAD).value
    return TreeResult(tree, gaussian, tree - gaussian, h, n)


def lemma_bounds_check(T, y, a, b, mean_time=None, mean_position=None):
    """Compare exit means of the bridge ``0 -> y`` from ``(a, b)`` with the two bounds.

    Missing means are computed by quadrature.  The position bound uses the
    supplied (or computed) mean exit time.
    """
    if not a < 0 < b:
        raise DomainError(f"need a < 0 < b, got ({a}, {b})")
    if a < y < b:
        raise DomainError(f"y = {y} must lie outside ({a}, {b})")
    if mean_time is None or mean_position is None:
        law = bridge_exit_law(T, y, a, b)
        mean_time = law.mean_time if mean_time is None else mean_time
        mean_position = law.mean_position if mean_position is None else mean_position
    return LemmaReport(mean_time, tau_upper_bound(a, b, y, T), mean_position,
                       exit_position_bound(mean_time, a, b, y, T))
