"""Bandit boosted gradient ascent: value-only feedback, one-point smoothed
gradient estimates on a shrunken copy of the feasible set, and an
explore/exploit coin per round.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .boosting import (NONMONOTONE_COEFFICIENT, monotone_coefficient, sample_z_tilde, sample_z_up)
from .geometry import ConstraintSet, MinkowskiSet, as_point, ball_sample, sphere_sample
from .objectives import Objective
from .offline import SolverConfigError

log = logging.getLogger(__name__)

LAMBDA_CAP = 0.5


@dataclass
class BanditConfig:
    """Explore rate, smoothing radius and step size; None selects the guarantee value.

    The guarantee values are lam = delta = d^{1/3} T^{-1/5} and eta = d^{-1/3} T^{-4/5}.
    With ``diam_scaled`` they are multiplied by diam^{2/3}, diam^{2/3} and
    diam^{4/3} respectively.
    """

    T: int
    lam: Optional[float] = None
    delta: Optional[float] = None
    eta: Optional[float] = None
    option: str = "I"
    seed: int = 0
    gamma: float = 1.0
    inner_ball: Optional[tuple] = None
    diam_scaled: bool = False
    M: Optional[float] = None

    def resolve(self, C: ConstraintSet) -> "ResolvedBandit":
        if self.T < 1:
            raise SolverConfigError("T must be >= 1")
        if self.option not in ("I", "II"):
            raise SolverConfigError(f"option must be 'I' or 'II', got {self.option!r}")
        ball = self.inner_ball if self.inner_ball is not None else C.inner_ball
        if ball is None:
            raise SolverConfigError("bandit solver needs an inner ball (y, R) inside the constraint")
        y, R = as_point(ball[0], C.dim), float(ball[1])
        d = C.dim
        base = d ** (1.0 / 3.0) * self.T ** (-0.2)
        diam = C.diameter if self.diam_scaled else 1.0
        lam = base * diam ** (2.0 / 3.0) if self.lam is None else float(self.lam)
        delta = base * diam ** (2.0 / 3.0) if self.delta is None else float(self.delta)
        eta = (d ** (-1.0 / 3.0) * self.T ** (-0.8) * diam ** (4.0 / 3.0)
               if self.eta is None else float(self.eta))
        if self.lam is None and lam > LAMBDA_CAP:
            log.warning("guarantee exploration rate %.3f clamped to %.2f", lam, LAMBDA_CAP)
            lam = LAMBDA_CAP
        if self.delta is None and delta > R / 2:
            log.warning("guarantee smoothing radius %.3f clamped to R/2 = %.3f", delta, R / 2)
            delta = R / 2
        if not 0.0 < lam <= 1.0:
            raise SolverConfigError("exploration rate must lie in (0, 1]")
        if not 0.0 < delta < R:
            raise SolverConfigError(f"smoothing radius must satisfy 0 < delta < R = {R}")
        if eta <= 0:
            raise SolverConfigError("learning rate must be positive")
        return ResolvedBandit(lam, delta, eta, y, R, delta / (R - delta))


@dataclass(frozen=True)
class ResolvedBandit:
    lam: float
    delta: float
    eta: float
    pole: np.ndarray
    R: float
    shrink: float


@dataclass
class BanditTrace:
    played: np.ndarray
    rewards: np.ndarray
    explore: np.ndarray
    z: np.ndarray
    feasible: np.ndarray
    margins: np.ndarray
    y_final: np.ndarray
    params: ResolvedBandit
    wall_clock: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.rewards.shape[0]

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "mode", "reward", "z", "feasible"])
            for t in range(self.T):
                z = "" if np.isnan(self.z[t]) else repr(float(self.z[t]))
                w.writerow([t + 1, "explore" if self.explore[t] else "exploit",
                            repr(float(self.rewards[t])), z, int(bool(self.feasible[t]))])


def bbga_run(objectives: Sequence[Objective], C: ConstraintSet, cfg: BanditConfig,
             feas_tol: float = 1e-9) -> BanditTrace:
    """Bandit boosted gradient ascent; only f_t(x_t) is ever evaluated."""
    T = cfg.T
    if len(objectives) < T:
        raise SolverConfigError("fewer objectives than rounds")
    p = cfg.resolve(C)
    d = C.dim
    lower = C.min_inf_norm_point()
    if cfg.option == "I":
        if not C.contains(np.zeros(d)):
            raise SolverConfigError("Option I needs the origin in the constraint")
        coef = monotone_coefficient(cfg.gamma)
    else:
        coef = NONMONOTONE_COEFFICIENT
    shrunk = MinkowskiSet(C, p.pole, p.shrink)
    zero_s = shrunk.project(np.zeros(d))
    lower_s = shrunk.project(lower)
    zero_s.setflags(write=False)
    lower_s.setflags(write=False)
    rng = np.random.default_rng(cfg.seed)
    y = (zero_s if cfg.option == "I" else lower_s).copy()

    played = np.empty((T, d))
    rewards = np.empty(T)
    explore = np.zeros(T, dtype=bool)
    zs = np.full(T, np.nan)
    feas = np.empty(T, dtype=bool)
    margins = np.empty(T)
    scale = coef * d / (p.lam * p.delta)
    t0 = time.perf_counter()
    for t in range(T):
        f = objectives[t]
        if rng.random() < p.lam:
            v = sphere_sample(d, rng)
            if cfg.option == "I":
                z = sample_z_up(cfg.gamma, rng.random())
                x = z * y + (1.0 - z) * zero_s + p.delta * v
            else:
                z = sample_z_tilde(rng.random())
                x = 0.5 * z * (y - lower_s) + lower_s + p.delta * v
            r = f.value(x)
            est = scale * r * v
            explore[t] = True
            zs[t] = z
        else:
            x = y.copy() if cfg.option == "I" else 0.5 * (y + lower)
            r = f.value(x)
            est = None
        played[t] = x
        rewards[t] = r
        feas[t] = C.contains(x, feas_tol)
        margins[t] = _violation(C, x)
        if est is not None:
            y = shrunk.project(y + p.eta * est)
    trace = BanditTrace(played, rewards, explore, zs, feas, margins, y, p, time.perf_counter() - t0)
    trace.extra.update(option=cfg.option, zero_shrunk=zero_s, lower_shrunk=lower_s)
    return trace


def _violation(C: ConstraintSet, x: np.ndarray) -> float:
    """Distance to the constraint, via its projection."""
    return float(np.linalg.norm(C.project(x) - x))


def estimate_value_bound(objectives: Sequence[Objective], C: ConstraintSet, rng: np.random.Generator,
                         probes: int = 200) -> float:
    best = 0.0
    for i in range(probes):
        f = objectives[i % len(objectives)]
        best = max(best, abs(f.value(C.sample(rng))))
    return best


# --- smoothing oracles (test infrastructure) -----------------------------------------------


def smoothed_value_oracle(f: Objective, x, delta: float, mc: int, rng: np.random.Generator):
    """Monte Carlo mean of f(x + delta u), u uniform in the unit ball; returns (mean, standard error)."""
    x = as_point(x, f.dim)
    vals = np.array([f.value(x + delta * ball_sample(f.dim, rng)) for _ in range(mc)])
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(mc)) if mc > 1 else 0.0


def disk_smoothed_gradient(value_fn, x, delta: float, radial: int = 64, angular: int = 128,
                           h: float = 1e-4) -> np.ndarray:
    """Gradient of the disk average of a 2-d function by polar quadrature and central differences."""
    x = as_point(x, 2)
    t, w = np.polynomial.legendre.leggauss(radial)
    rho = 0.5 * (t + 1.0)  # radial nodes on [0, 1]
    wr = 0.5 * w * rho  # polar Jacobian
    phi = 2.0 * np.pi * np.arange(angular) / angular
    pts = np.stack([np.outer(rho, np.cos(phi)), np.outer(rho, np.sin(phi))], axis=-1).reshape(-1, 2)
    wts = (wr[:, None] * np.full(angular, 2.0 * np.pi / angular)[None, :]).reshape(-1) / np.pi

    def smoothed(c):
        return float(sum(wi * value_fn(c + delta * pi) for wi, pi in zip(wts, pts)))

    g = np.empty(2)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        g[i] = (smoothed(x + e) - smoothed(x - e)) / (2 * h)
    return g


@dataclass
class EstimatorReport:
    mean: np.ndarray
    se: np.ndarray
    reference: np.ndarray

    @property
    def z_scores(self) -> np.ndarray:
        return np.abs(self.mean - self.reference) / np.maximum(self.se, 1e-300)


def fkm_estimator_check(f: Objective, x, delta: float, samples: int,
                        rng: np.random.Generator) -> EstimatorReport:
    """Compare the one-point estimator (d/delta) f(x + delta v) v with the disk-quadrature gradient."""
    if f.dim != 2:
        raise SolverConfigError("the disk quadrature reference is two-dimensional")
    x = as_point(x, 2)
    v = rng.standard_normal((samples, 2))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    vals = np.array([f.value(x + delta * vi) for vi in v])
    est = (2.0 / delta) * vals[:, None] * v
    ref = disk_smoothed_gradient(f.value, x, delta)
    return EstimatorReport(est.mean(axis=0), est.std(axis=0, ddof=1) / math.sqrt(samples), ref)


def bandit_regret(trace: BanditTrace, comparator: np.ndarray, alpha: float) -> np.ndarray:
    """Per-round alpha-regret alpha f_t(x*) - f_t(x_t)."""
    return alpha * np.asarray(comparator, dtype=float) - trace.rewards
