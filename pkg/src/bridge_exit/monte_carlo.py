"""Monte Carlo oracle for exit statistics of bridges and diffusions.

Paths are simulated on a uniform grid and every step is treated as a
Brownian bridge between its two grid values.  That gives, per barrier, the
crossing probability ``exp(-2 d1 d2 / (sigma^2 dt))`` for endpoints at
distances ``d1, d2`` from the barrier, and an exact draw of the hitting time
inside the step: with ``U ~ InverseGaussian(d1 dt / d2, d1^2)`` the time is
``dt U / (dt + U)``.  The joint correction for hitting both barriers in one
step is neglected; a warning is raised when steps are coarse enough for it
to matter.

Randomness is drawn in fixed-size path blocks, each with its own Philox
stream keyed by ``(seed, block index)``.  Blocks may run on several threads
(``BRIDGE_EXIT_THREADS`` caps the count) and are reassembled in block order,
so results do not depend on the worker count.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DiscretizationWarning, DomainError
from .exit_mean import BridgeSpec

__all__ = [
    "McConfig",
    "Estimate",
    "ExitStats",
    "WalkEmbedding",
    "WalkResult",
    "LastPassageResult",
    "worker_count",
    "sample_brownian_bridge",
    "mc_exit",
    "mc_bm_exit",
    "mc_exit_position",
    "mc_walk_embedding",
    "mc_last_passage",
    "sample_bessel3_bridge",
    "mc_bessel_exit",
    "mc_diffusion_exit",
]

EXIT_TIME_RULES = ("bridge", "midpoint")
BRIDGE_SAMPLERS = ("conditional", "time_change")
_TINY = 1e-300


@dataclass(frozen=True)
class McConfig:
    """Reproducible description of a simulation run.

    ``exit_time_rule='bridge'`` draws the hitting time inside the step from
    its exact conditional law; ``'midpoint'`` stamps the step midpoint.
    Without crossing correction, exits are only seen at grid points and are
    stamped there.
    """

    n_paths: int = 100_000
    n_steps: int = 512
    seed: int = 0
    crossing_correction: bool = True
    exit_time_rule: str = "bridge"
    bridge_sampler: str = "conditional"
    block_size: int = 8192

    def __post_init__(self):
        if self.n_paths < 1:
            raise DomainError(f"n_paths must be >= 1, got {self.n_paths}")
        if self.n_steps < 2:
            raise DomainError(f"n_steps must be >= 2, got {self.n_steps}")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.exit_time_rule not in EXIT_TIME_RULES:
            raise DomainError(f"exit_time_rule must be one of {EXIT_TIME_RULES}")
        if self.bridge_sampler not in BRIDGE_SAMPLERS:
            raise DomainError(f"bridge_sampler must be one of {BRIDGE_SAMPLERS}")
        if self.block_size < 1:
            raise DomainError("block_size must be >= 1")

    def with_(self, **changes):
        fields = dict(self.__dict__)
        fields.update(changes)
        return McConfig(**fields)


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float

    def z_score(self, target):
        return (self.value - target) / self.se if self.se > 0 else math.copysign(
            math.inf, self.value - target) if self.value != target else 0.0


@dataclass(frozen=True)
class ExitStats:
    """Exit estimators with standard errors.

    Paths that never leave the band contribute ``T`` to the exit time (the
    time estimate is of ``E[tau ^ T]``) and their final value to the exit
    position.
    """

    mean_exit_time: float
    se_exit_time: float
    mean_exit_position: float
    se_exit_position: float
    prob_upper_exit: float
    se_prob_upper: float
    prob_lower_exit: float
    se_prob_lower: float
    prob_no_exit: float
    se_prob_no_exit: float
    n_paths: int
    n_upper: int
    n_lower: int
    n_no_exit: int

    @classmethod
    def from_samples(cls, times, positions, side):
        n = times.size
        n_up = int(np.count_nonzero(side > 0))
        n_low = int(np.count_nonzero(side < 0))
        n_no = n - n_up - n_low
        mt, st = _mean_se(times)
        mp, sp = _mean_se(positions)
        pu, su = _prop(n_up, n)
        pl, sl = _prop(n_low, n)
        pn, sn = _prop(n_no, n)
        return cls(mt, st, mp, sp, pu, su, pl, sl, pn, sn, n, n_up, n_low, n_no)

    def time_estimate(self):
        return Estimate(self.mean_exit_time, self.se_exit_time)

    def position_estimate(self):
        return Estimate(self.mean_exit_position, self.se_exit_position)

    def no_exit_estimate(self):
        return Estimate(self.prob_no_exit, self.se_prob_no_exit)


@dataclass(frozen=True)
class WalkEmbedding:
    """The ``+-h`` walk read off one path: ``W(tau_k) = levels[k] * h``."""

    tau_times: tuple
    levels: tuple
    k_star: int


@dataclass(frozen=True)
class WalkResult:
    q_hat: Estimate
    p_up_step: Estimate
    mean_k_star: float
    parity_even: np.ndarray = field(repr=False)
    paths: tuple = ()


@dataclass(frozen=True)
class LastPassageResult:
    samples: np.ndarray = field(repr=False)
    exit_times: np.ndarray = field(repr=False)
    n_censored: int = 0

    def mean(self):
        return Estimate(*_mean_se(self.samples))

    def cdf(self, s):
        """Empirical ``P(lambda_0 <= s)`` with its binomial standard error."""
        return Estimate(*_prop(int(np.count_nonzero(self.samples <= s)), self.samples.size))


def _mean_se(values):
    n = values.size
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def _prop(count, n):
    p = count / n
    return p, math.sqrt(p * (1.0 - p) / n)


def worker_count():
    """Thread count for block-parallel runs; ``BRIDGE_EXIT_THREADS`` caps it."""
    n = os.cpu_count() or 1
    env = os.environ.get("BRIDGE_EXIT_THREADS")
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise DomainError(f"BRIDGE_EXIT_THREADS must be an integer, got {env!r}") from None
        if cap < 1:
            raise DomainError("BRIDGE_EXIT_THREADS must be >= 1")
        n = min(n, cap)
    return n


def _block_rng(seed, block):
    return np.random.Generator(np.random.Philox(key=seed + (block << 64)))


def _run_blocks(cfg, simulate):
    """Call ``simulate(rng, m, block)`` per block; concatenate outputs in block order."""
    B = cfg.block_size
    sizes = [min(B, cfg.n_paths - i * B) for i in range(-(-cfg.n_paths // B))]

    def job(i):
        return simulate(_block_rng(cfg.seed, i), sizes[i], i)

    workers = min(worker_count(), len(sizes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(i) for i in range(len(sizes))]
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


def _hit_time(rng, d1, d2, dt):
    """Hitting time of a level inside a step, given that it is hit.

    ``d1`` is the distance from the start to the level, ``d2`` from the level
    to the end (either side).  Distances are in units of the step's standard
    deviation scale, i.e. already divided by sigma.
    """
    d1 = np.asarray(d1, dtype=float)
    out = np.zeros(d1.shape)
    pos = d1 > 0
    if np.any(pos):
        a = d1[pos]
        b = np.maximum(np.asarray(d2, dtype=float)[pos], _TINY)
        span = np.broadcast_to(dt, d1.shape)[pos]
        mean = np.minimum(a * span / b, 1e12 * span)
        U = rng.wald(mean, a * a)
        out[pos] = span * U / (span + U)
    return out


def _detect(rng, v1, v2, dt, lo, hi, cfg, sigma=1.0):
    """First exit from ``(lo, hi)`` within one step.

    Returns ``side`` (-1, 0, +1) and the time offset of the exit inside the
    step.  ``dt`` and ``sigma`` may be arrays.
    """
    m = v1.shape[0]
    crossed_lo = v2 <= lo
    crossed_hi = v2 >= hi
    if cfg.crossing_correction:
        s2dt = np.maximum(sigma * sigma * dt, _TINY)
        with np.errstate(over="ignore", under="ignore"):
            p_lo = np.where(crossed_lo, 1.0, np.exp(-2.0 * (v1 - lo) * (v2 - lo) / s2dt))
            p_hi = np.where(crossed_hi, 1.0, np.exp(-2.0 * (hi - v1) * (hi - v2) / s2dt))
        u = rng.random((2, m))
        hit_lo = u[0] < p_lo
        hit_hi = u[1] < p_hi
    else:
        hit_lo, hit_hi = crossed_lo, crossed_hi
    side = np.zeros(m, dtype=np.int8)
    offset = np.broadcast_to(np.asarray(dt, dtype=float), (m,)).copy()
    if not (hit_lo.any() or hit_hi.any()):
        return side, offset
    if not cfg.crossing_correction:
        # grid monitoring sees one barrier; stamp at the grid point
        side[hit_lo] = -1
        side[hit_hi] = 1
        return side, offset
    if cfg.exit_time_rule == "midpoint":
        both = hit_lo & hit_hi
        side[hit_lo] = -1
        side[hit_hi] = 1
        # a double hit is settled by the barrier the step ends beyond, else at random
        tie = np.where(crossed_lo, -1, np.where(crossed_hi, 1, np.where(u[0] < 0.5 * p_lo, -1, 1)))
        side[both] = tie[both]
        offset[side != 0] *= 0.5
        return side, offset
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), (m,))
    span = np.broadcast_to(np.asarray(dt, dtype=float), (m,))
    t_lo = np.full(m, np.inf)
    t_hi = np.full(m, np.inf)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (m,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (m,))
    if hit_lo.any():
        i = hit_lo
        t_lo[i] = _hit_time(rng, (v1[i] - lo[i]) / sig[i], np.abs(v2[i] - lo[i]) / sig[i],
                            span[i])
    if hit_hi.any():
        i = hit_hi
        t_hi[i] = _hit_time(rng, (hi[i] - v1[i]) / sig[i], np.abs(hi[i] - v2[i]) / sig[i],
                            span[i])
    first_lo = t_lo < t_hi
    side[hit_lo | hit_hi] = 1
    side[first_lo] = -1
    offset = np.where(side != 0, np.minimum(t_lo, t_hi), offset)
    return side, offset


def _check_resolution(step_sd, width, what):
    if step_sd > width / 8.0:
        warnings.warn(
            f"{what}: step standard deviation {step_sd:.3g} exceeds 1/8 of the band "
            f"half-width {width:.3g}; increase n_steps", DiscretizationWarning, stacklevel=3)


class _BridgeStepper:
    """Sequential sampler of a Brownian bridge on a uniform grid."""

    def __init__(self, spec, n_steps, sampler):
        self.spec = spec
        self.n = n_steps
        self.grid = np.linspace(0.0, spec.T, n_steps + 1)
        self.sampler = sampler
        if sampler == "time_change":
            T = spec.T
            g = self.grid[:-1]
            self.clock = T * g / (T - g)

    def start(self, m):
        self.v = np.full(m, float(self.spec.x))
        self.w = np.zeros(m)
        return self.v

    def step(self, rng, i):
        x, y, T = self.spec.x, self.spec.y, self.spec.T
        z = rng.standard_normal(self.v.shape[0])
        if i == self.n - 1:
            nxt = np.full(self.v.shape, float(y))
        elif self.sampler == "conditional":
            t0, t1 = self.grid[i], self.grid[i + 1]
            rem = T - t0
            mean = self.v + (y - self.v) * (t1 - t0) / rem
            sd = math.sqrt((t1 - t0) * (T - t1) / rem)
            nxt = mean + sd * z
        else:
            # (1 - t/T) W(T t / (T - t)) + x + (y - x) t / T
            self.w = self.w + math.sqrt(self.clock[i + 1] - self.clock[i]) * z
            t1 = self.grid[i + 1]
            nxt = (1.0 - t1 / T) * self.w + x + (y - x) * t1 / T
        self.v = nxt
        return nxt


def sample_brownian_bridge(spec, cfg):
    """Grid values of ``cfg.n_paths`` bridges, shape ``(n_paths, n_steps + 1)``.

    Uses exact sequential conditioning (or the time-change representation
    when ``cfg.bridge_sampler == 'time_change'``); every path ends at
    ``spec.y`` exactly.  Returns ``(grid, paths)``.
    """
    def simulate(rng, m, block):
        stepper = _BridgeStepper(spec, cfg.n_steps, cfg.bridge_sampler)
        out = np.empty((m, cfg.n_steps + 1))
        out[:, 0] = stepper.start(m)
        for i in range(cfg.n_steps):
            out[:, i + 1] = stepper.step(rng, i)
        return {"paths": out}

    grid = np.linspace(0.0, spec.T, cfg.n_steps + 1)
    return grid, _run_blocks(cfg, simulate)["paths"]


def _check_band(x, a, b):
    if not a < x < b:
        raise DomainError(f"start {x} must lie inside ({a}, {b})")


def mc_exit(spec, interval, cfg):
    """Exit statistics of the bridge ``spec`` from ``interval = (a, b)``."""
    a, b = (float(v) for v in interval)
    _check_band(spec.x, a, b)
    T, n = float(spec.T), cfg.n_steps
    _check_resolution(math.sqrt(T / n), 0.5 * (b - a), "mc_exit")
    grid = np.linspace(0.0, T, n + 1)

    def simulate(rng, m, block):
        stepper = _BridgeStepper(spec, n, cfg.bridge_sampler)
        v = stepper.start(m)
        tau = np.full(m, T)
        pos = np.full(m, float(spec.y))
        side = np.zeros(m, dtype=np.int8)
        alive = np.ones(m, dtype=bool)
        for i in range(n):
            v2 = stepper.step(rng, i)
            idx = np.flatnonzero(alive)
            s, off = _detect(rng, v[idx], v2[idx], grid[i + 1] - grid[i], a, b, cfg)
            out = s != 0
            if out.any():
                j = idx[out]
                side[j] = s[out]
                tau[j] = grid[i] + off[out]
                pos[j] = np.where(s[out] > 0, b, a)
                alive[j] = False
                if not alive.any():
                    break
            v = v2
        return {"tau": tau, "pos": pos, "side": side}

    r = _run_blocks(cfg, simulate)
    return ExitStats.from_samples(r["tau"], r["pos"], r["side"])


def mc_exit_position(spec, interval, cfg):
    """``E[B at exit from interval]`` with its standard error."""
    return mc_exit(spec, interval, cfg).position_estimate()


def mc_bm_exit(x, a, b, cfg, horizon=None):
    """Exit statistics of unpinned BM from ``(a, b)``.

    The step is ``(b - a)^2 / (4 n_steps)``, so a typical path needs about
    ``n_steps`` steps; paths alive at ``horizon`` (default ``25 (b - a)^2``)
    count as non-exits.
    """
    _check_band(x, a, b)
    dt = (b - a) ** 2 / (4.0 * cfg.n_steps)
    horizon = 25.0 * (b - a) ** 2 if horizon is None else float(horizon)
    n_max = int(math.ceil(horizon / dt))
    return _free_exit(cfg, x, a, b, n_max, dt, lambda v: 0.0, lambda v: 1.0)


def mc_diffusion_exit(model, x0, h, cfg, horizon=None):
    """Euler scheme for ``model`` from ``x0`` until it leaves ``(x0 - h, x0 + h)``.

    Each step is corrected for crossings with the local variance
    ``a(X)^2 dt``.  The step is ``h^2 / (n_steps a(x0)^2)``.
    """
    lo_dom, hi_dom = model.domain
    if not (h > 0 and lo_dom < x0 - h and x0 + h < hi_dom):
        raise DomainError(f"band ({x0 - h}, {x0 + h}) is not inside {model.domain}")
    a0 = float(np.asarray(model.diffusion(np.array([x0], dtype=float))).reshape(-1)[0])
    dt = h * h / (cfg.n_steps * a0 * a0)
    horizon = 100.0 * h * h / (a0 * a0) if horizon is None else float(horizon)
    n_max = int(math.ceil(horizon / dt))
    return _free_exit(cfg, x0, x0 - h, x0 + h, n_max, dt, model.drift, model.diffusion)


def _free_exit(cfg, x, a, b, n_max, dt, drift, diffusion):
    sdt = math.sqrt(dt)

    def simulate(rng, m, block):
        v = np.full(m, float(x))
        tau = np.full(m, n_max * dt)
        side = np.zeros(m, dtype=np.int8)
        alive = np.ones(m, dtype=bool)
        pos = v.copy()
        for i in range(n_max):
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            z = rng.standard_normal(idx.size)
            u = v[idx]
            sig = np.broadcast_to(np.asarray(diffusion(u), dtype=float), u.shape)
            mu = np.broadcast_to(np.asarray(drift(u), dtype=float), u.shape)
            u2 = u + mu * dt + sig * sdt * z
            s, off = _detect(rng, u, u2, dt, a, b, cfg, sigma=sig)
            out = s != 0
            j = idx[out]
            side[j] = s[out]
            tau[j] = i * dt + off[out]
            pos[j] = np.where(s[out] > 0, b, a)
            alive[j] = False
            v[idx] = u2
        pos[alive] = v[alive]
        return {"tau": tau, "pos": pos, "side": side}

    r = _run_blocks(cfg, simulate)
    return ExitStats.from_samples(r["tau"], r["pos"], r["side"])


def mc_walk_embedding(x, T, h, cfg, record=0):
    """Parity of the embedded ``+-h`` walk at time ``T``.

    ``tau_k`` are the successive times at which the path has moved ``h``
    from its position at ``tau_{k-1}``.  With ``x`` given the path is the
    bridge ``0 -> x`` on ``[0, T]`` (the conditioning ``W_T = x``); with
    ``x=None`` it is free BM.  ``q_hat`` estimates ``P(k_* even)``; the
    first ``record`` paths are returned as :class:`WalkEmbedding` records.
    """
    if not h > 0 or not T > 0:
        raise DomainError("need h > 0 and T > 0")
    n = cfg.n_steps
    grid = np.linspace(0.0, T, n + 1)
    dt = T / n
    _check_resolution(math.sqrt(dt), h, "mc_walk_embedding")
    spec = BridgeSpec(0.0, 0.0 if x is None else float(x), T)
    record = min(int(record), cfg.n_paths)

    def simulate(rng, m, block):
        stepper = _BridgeStepper(spec, n, cfg.bridge_sampler) if x is not None else None
        v = stepper.start(m) if stepper else np.zeros(m)
        level = np.zeros(m, dtype=np.int64)
        steps = np.zeros(m, dtype=np.int64)
        ups = np.zeros(m, dtype=np.int64)
        n_rec = min(record, m) if block == 0 else 0
        logs = [[(0.0, 0)] for _ in range(n_rec)]
        for i in range(n):
            if stepper:
                v2 = stepper.step(rng, i)
            else:
                v2 = v + math.sqrt(dt) * rng.standard_normal(m)
            start = v.copy()
            clock = np.full(m, grid[i])
            rem = np.full(m, dt)
            active = np.arange(m)
            while active.size:
                c = level[active] * h
                s, off = _detect(rng, start[active], v2[active], rem[active], c - h, c + h, cfg)
                moved = s != 0
                if not moved.any():
                    break
                j = active[moved]
                level[j] += s[moved]
                steps[j] += 1
                ups[j] += s[moved] > 0
                clock[j] += off[moved]
                rem[j] = np.maximum(rem[j] - off[moved], 0.0)
                start[j] = level[j] * h
                for p in j[j < n_rec]:
                    logs[p].append((float(clock[p]), int(level[p])))
                active = j
            v = v2
        packed = np.empty(m, dtype=object)
        for p in range(n_rec):
            packed[p] = tuple(logs[p])
        return {"level": level, "steps": steps, "ups": ups, "logs": packed}

    r = _run_blocks(cfg, simulate)
    even = (r["level"] % 2) == 0
    q = Estimate(*_prop(int(np.count_nonzero(even)), even.size))
    total = int(r["steps"].sum())
    p_up = Estimate(*_prop(int(r["ups"].sum()), total)) if total else Estimate(math.nan, math.nan)
    # only block 0 records, and its paths lead the concatenation
    paths = tuple(
        WalkEmbedding(tuple(t for t, _ in log), tuple(k for _, k in log), len(log) - 1)
        for log in r["logs"][:min(record, cfg.block_size)])
    return WalkResult(q_hat=q, p_up_step=p_up, mean_k_star=float(np.mean(r["steps"])),
                      parity_even=even, paths=paths)


def mc_last_passage(h, T_sim, cfg):
    """Samples of the last zero of BM before it leaves ``(-h, h)``.

    BM runs from 0 on steps of ``T_sim / n_steps`` until it exits.  A zero
    inside a step is seen from a sign change or, with crossing correction,
    from a Bernoulli draw with probability ``exp(-2 v1 v2 / dt)``.  The last
    zero inside the last such step is drawn exactly: reversed in time the
    step is a bridge from ``v2`` to ``v1`` and the last zero is its first
    hitting time of 0.  Paths alive at ``T_sim`` are censored and keep
    their last zero so far.
    """
    if not (h > 0 and T_sim > 0):
        raise DomainError("need h > 0 and T_sim > 0")
    n = cfg.n_steps
    dt = T_sim / n
    sdt = math.sqrt(dt)
    _check_resolution(sdt, h, "mc_last_passage")

    def simulate(rng, m, block):
        v = np.zeros(m)
        tau = np.full(m, T_sim)
        alive = np.ones(m, dtype=bool)
        z_step = np.zeros(m)
        z_v1 = np.zeros(m)
        z_v2 = np.zeros(m)
        for i in range(n):
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            u = v[idx]
            u2 = u + sdt * rng.standard_normal(idx.size)
            change = u * u2 <= 0.0
            if cfg.crossing_correction:
                with np.errstate(under="ignore"):
                    p0 = np.where(change, 1.0, np.exp(-2.0 * u * u2 / dt))
                zero = rng.random(idx.size) < p0
            else:
                zero = change
            j = idx[zero]
            z_step[j] = i
            z_v1[j] = u[zero]
            z_v2[j] = u2[zero]
            s, off = _detect(rng, u, u2, dt, -h, h, cfg)
            out = s != 0
            tau[idx[out]] = i * dt + off[out]
            alive[idx[out]] = False
            v[idx] = u2
        back = _hit_time(rng, np.abs(z_v2), np.abs(z_v1), dt)
        lam = (z_step + 1.0) * dt - back
        # a zero and an exit in the same step: keep the zero before the exit
        lam = np.minimum(lam, np.nextafter(tau, 0.0))
        return {"lam": lam, "tau": tau, "censored": alive.astype(np.int8)}

    r = _run_blocks(cfg, simulate)
    return LastPassageResult(samples=r["lam"], exit_times=r["tau"],
                             n_censored=int(r["censored"].sum()))


def _vmf_directions(rng, m, kappa):
    """Unit vectors on S^2 with density proportional to ``exp(kappa * e1 . u)``."""
    u = rng.random(m)
    if kappa < 1e-12:
        w = 2.0 * u - 1.0
    else:
        w = 1.0 + np.log(u + (1.0 - u) * math.exp(-2.0 * kappa)) / kappa
    phi = 2.0 * math.pi * rng.random(m)
    r = np.sqrt(np.maximum(1.0 - w * w, 0.0))
    return np.stack([w, r * np.cos(phi), r * np.sin(phi)], axis=1)


class _BesselStepper:
    """Bessel(3) bridge ``x -> y`` on a uniform grid.

    ``'euler'``: step mean ``X + drift dt`` with the closed-form bridge
    drift ``[(y - X) + (y + X) rho] / (tau (1 - rho))``, ``rho =
    exp(-2 X y / tau)``, the Brownian-bridge step variance
    ``dt (tau - dt) / tau``, and reflection at 0.  From ``x = 0`` the first
    step is drawn from the entrance law ``sqrt(dt) chi_3``.

    ``'radial'``: the norm of a 3-d Brownian bridge from ``(x, 0, 0)`` to
    ``y u``, with ``u`` drawn from the endpoint direction law given
    ``|W_T| = y`` (von Mises-Fisher, ``kappa = x y / T``).  This is exact at
    the grid points.
    """

    def __init__(self, x, y, T, n, method):
        self.x, self.y, self.T, self.n = float(x), float(y), float(T), n
        self.grid = np.linspace(0.0, T, n + 1)
        self.method = method

    def start(self, rng, m):
        if self.method == "radial":
            self.w = np.zeros((m, 3))
            self.w[:, 0] = self.x
            self.end = self.y * _vmf_directions(rng, m, self.x * self.y / self.T)
        self.v = np.full(m, self.x)
        return self.v

    def step(self, rng, i):
        m = self.v.shape[0]
        t0, t1 = self.grid[i], self.grid[i + 1]
        dt = t1 - t0
        tau = self.T - t0
        if i == self.n - 1:
            self.v = np.full(m, self.y)
            return self.v
        if self.method == "radial":
            z = rng.standard_normal((m, 3))
            mean = self.w + (self.end - self.w) * dt / tau
            self.w = mean + math.sqrt(dt * (tau - dt) / tau) * z
            self.v = np.sqrt(np.sum(self.w * self.w, axis=1))
            return self.v
        z = rng.standard_normal(m)
        if i == 0 and self.x == 0.0:
            extra = rng.standard_normal((m, 2))
            self.v = math.sqrt(dt) * np.sqrt(z * z + np.sum(extra * extra, axis=1))
            return self.v
        v = self.v
        one_minus_rho = -np.expm1(-2.0 * v * self.y / tau)
        rho = 1.0 - one_minus_rho
        drift = ((self.y - v) + (self.y + v) * rho) / (tau * np.maximum(one_minus_rho, _TINY))
        nxt = v + drift * dt + math.sqrt(dt * (tau - dt) / tau) * z
        self.v = np.abs(nxt)
        return self.v


def sample_bessel3_bridge(x, y, T, cfg, method="euler"):
    """Grid values of Bessel(3) bridges ``x -> y``; returns ``(grid, paths)``."""
    _check_bessel_args(x, y, T, method)
    n = cfg.n_steps

    def simulate(rng, m, block):
        st = _BesselStepper(x, y, T, n, method)
        out = np.empty((m, n + 1))
        out[:, 0] = st.start(rng, m)
        for i in range(n):
            out[:, i + 1] = st.step(rng, i)
        return {"paths": out}

    return np.linspace(0.0, T, n + 1), _run_blocks(cfg, simulate)["paths"]


def _check_bessel_args(x, y, T, method):
    if not (x >= 0 and y > 0 and T > 0):
        raise DomainError("Bessel bridge needs x >= 0, y > 0, T > 0")
    if method not in ("euler", "radial"):
        raise DomainError(f"method must be 'euler' or 'radial', got {method!r}")


def mc_bessel_exit(x, y, T, h, cfg, method="euler"):
    """Exit statistics of the Bessel(3) bridge ``x -> y`` from ``(x - h, x + h)``.

    For ``x < h`` the lower barrier is never reached and only ``x + h``
    matters; from ``x = 0`` this is the hitting time of ``h``.
    """
    _check_bessel_args(x, y, T, method)
    if not h > 0:
        raise DomainError("need h > 0")
    n = cfg.n_steps
    grid = np.linspace(0.0, T, n + 1)
    a, b = x - h, x + h
    _check_resolution(math.sqrt(T / n), h, "mc_bessel_exit")

    def simulate(rng, m, block):
        st = _BesselStepper(x, y, T, n, method)
        v = st.start(rng, m)
        tau = np.full(m, float(T))
        pos = np.full(m, float(y))
        side = np.zeros(m, dtype=np.int8)
        alive = np.ones(m, dtype=bool)
        for i in range(n):
            v2 = st.step(rng, i)
            idx = np.flatnonzero(alive)
            s, off = _detect(rng, v[idx], v2[idx], grid[i + 1] - grid[i], a, b, cfg)
            out = s != 0
            if out.any():
                j = idx[out]
                side[j] = s[out]
                tau[j] = grid[i] + off[out]
                pos[j] = np.where(s[out] > 0, b, a)
                alive[j] = False
                if not alive.any():
                    break
            v = v2
        return {"tau": tau, "pos": pos, "side": side}

    r = _run_blocks(cfg, simulate)
    return ExitStats.from_samples(r["tau"], r["pos"], r["side"])
