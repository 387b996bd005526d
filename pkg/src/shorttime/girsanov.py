"""Girsanov exponential: Ito-sum simulation, deterministic approximations,
and Monte Carlo measurement of the L^p gap against the horizon length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_CHUNK = 2048  # paths per RNG chunk; fixes seeding independent of workers


def chunk_rng(base_seed, chunk_index):
    """Deterministic per-chunk generator; independent of scheduling."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=base_seed, spawn_key=(chunk_index,))
    )


@dataclass(frozen=True)
class BrownianPath:
    """A discretized Brownian trajectory on [0, horizon]."""

    horizon: float
    n_steps: int
    increments: np.ndarray
    seed: int

    @classmethod
    def generate(cls, horizon, n_steps, seed):
        if horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if n_steps < 1:
            raise ValueError("need at least one step")
        rng = np.random.default_rng(seed)
        dt = horizon / n_steps
        inc = rng.standard_normal(n_steps) * math.sqrt(dt)
        return cls(horizon=float(horizon), n_steps=int(n_steps),
                   increments=inc, seed=int(seed))

    @property
    def dt(self):
        return self.horizon / self.n_steps

    def cumulative(self):
        """B at the grid times, including B_0 = 0."""
        return np.concatenate([[0.0], np.cumsum(self.increments)])


@dataclass(frozen=True)
class MCConfig:
    n_paths: int
    n_steps: int
    base_seed: int
    p: float = 2.0

    def __post_init__(self):
        if self.n_paths < 2:
            raise ValueError("need at least 2 paths")
        if self.n_steps < 1:
            raise ValueError("need at least 1 step")
        if self.p < 1.0:
            raise ValueError("p must be >= 1")


@dataclass(frozen=True)
class ErrorEstimate:
    mean: float        # L^p point estimate, (E|.|^p)^(1/p)
    std_error: float   # delta-method standard error of the point estimate
    n: int


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    points: list = field(default_factory=list)  # (log T, log error)


def simulate_exponential(m, path):
    """Girsanov exponential from left-point (Ito) sums on the path grid."""
    b = path.cumulative()
    left = b[:-1]
    f = np.asarray(m.drift_at(left), dtype=float)
    f = np.broadcast_to(f, left.shape)
    ito = float(f @ path.increments)
    quad = float(np.sum(f * f)) * path.dt
    return math.exp(ito - 0.5 * quad)


def u_eval(m, t, x, T):
    """Solution of the drift-transport problem with source x/T, at (t, x).

    u(t, x) = (F(y)/F(x)) * exp(-(y^2 - x^2)/(2T)) with y the backward flow
    of x over time t; u(0, x) = 1.
    """
    if T <= 0.0:
        raise ValueError("T must be positive")
    if not 0.0 <= t <= T:
        raise ValueError("need 0 <= t <= T")
    x = np.asarray(x, dtype=float)
    y = m.flow(x, -t)
    if m.is_constant:
        ratio = 1.0
    else:
        ratio = np.asarray(m.drift_at(y)) / np.asarray(m.drift_at(x))
    out = ratio * np.exp(-((np.square(y) - np.square(x)) / (2.0 * T)))
    return float(out) if np.ndim(out) == 0 else out


def approx_exponential(m, b_T, T):
    """Deterministic stand-in for the Girsanov exponential: u(T, B_T)."""
    return u_eval(m, T, b_T, T)


def approx_exponential_euler(m, b_T, T):
    """Alternative closed form using the drift frozen at the start point.

    exp{-(1/2T)[(B_T - F(0) T)^2 - B_T^2]} = exp{F(0) B_T - F(0)^2 T / 2};
    coincides with approx_exponential for constant drift.
    """
    if T <= 0.0:
        raise ValueError("T must be positive")
    b = np.asarray(b_T, dtype=float)
    c = float(np.asarray(m.drift_at(0.0)))
    out = np.exp(-((np.square(b - c * T) - np.square(b)) / (2.0 * T)))
    return float(out) if np.ndim(out) == 0 else out


def lp_error(m, T, cfg):
    """(E|M_T - approx|^p)^(1/p) by common-random-path Monte Carlo.

    Each path feeds both sides: the full path for the Ito sums, its endpoint
    for the deterministic approximation.  Pairing is required, not cosmetic:
    the target is a pathwise L^p distance.
    """
    p = cfg.p
    dt = T / cfg.n_steps
    sqrt_dt = math.sqrt(dt)
    total = 0.0
    total_sq = 0.0
    n_done = 0
    chunk_index = 0
    while n_done < cfg.n_paths:
        k = min(_CHUNK, cfg.n_paths - n_done)
        rng = chunk_rng(cfg.base_seed, chunk_index)
        inc = rng.standard_normal((k, cfg.n_steps)) * sqrt_dt
        b = np.cumsum(inc, axis=1)
        left = np.concatenate([np.zeros((k, 1)), b[:, :-1]], axis=1)
        f = np.asarray(m.drift_at(left), dtype=float)
        f = np.broadcast_to(f, left.shape)
        ito = np.sum(f * inc, axis=1)
        quad = np.sum(f * f, axis=1) * dt
        m_true = np.exp(ito - 0.5 * quad)
        m_approx = approx_exponential(m, b[:, -1], T)
        d = np.abs(m_true - m_approx) ** p
        total += float(np.sum(d))
        total_sq += float(np.sum(d * d))
        n_done += k
        chunk_index += 1
    n = cfg.n_paths
    moment = total / n
    var = max(total_sq / n - moment * moment, 0.0) * n / (n - 1)
    se_moment = math.sqrt(var / n)
    if moment > 0.0:
        point = moment ** (1.0 / p)
        se = se_moment * point / (p * moment)
    else:
        point, se = 0.0, 0.0
    return ErrorEstimate(mean=point, std_error=se, n=n)


def rate_fit(errors):
    """Least-squares line through (log T, log error); slope = observed order."""
    if len(errors) < 3:
        raise ValueError("need at least 3 (T, error) points")
    ts = np.array([t for t, _ in errors], dtype=float)
    means = np.array([e.mean for _, e in errors], dtype=float)
    if len(np.unique(ts)) < 3:
        raise ValueError("need at least 3 distinct T values")
    if np.any(means <= 0.0):
        raise ValueError("all error means must be positive to take logs")
    lx = np.log(ts)
    ly = np.log(means)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(min(max(r2, 0.0), 1.0)),
        points=list(zip(lx.tolist(), ly.tolist())),
    )
