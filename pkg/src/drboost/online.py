"""Online boosted gradient ascent with delayed feedback, the OGA baseline,
delay schedules and alpha-regret bookkeeping.

Round t's gradient information is delivered at the end of round
t + d_t - 1, so d_t = 1 means "no delay". Feedback scheduled past the horizon
is dropped from the updates; the total delay D = sum_t d_t still counts it.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

from .boosting import BoostSpec, boosted_grad
from .geometry import FEAS_TOL, ConstraintSet, as_point
from .objectives import Objective, average_objective
from .offline import SolverConfigError, continuous_greedy_fw, measured_fw

ONE_MINUS_INV_E = 1.0 - math.exp(-1.0)


@dataclass
class OnlineEnv:
    objectives: Sequence[Objective]
    delays: np.ndarray

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=int)
        if len(self.objectives) != self.delays.shape[0]:
            raise SolverConfigError("delay schedule length differs from the number of rounds")
        if np.any(self.delays < 1):
            raise SolverConfigError("delays must be >= 1")

    @classmethod
    def no_delay(cls, objectives: Sequence[Objective]) -> "OnlineEnv":
        return cls(objectives, np.ones(len(objectives), dtype=int))

    @property
    def T(self) -> int:
        return len(self.objectives)

    @property
    def D(self) -> int:
        return int(self.delays.sum())

    @property
    def monotone(self) -> bool:
        return all(f.monotone for f in self.objectives)

    def arrival_round(self, s: int) -> int:
        """1-based round at whose end the feedback of round s arrives."""
        return s + int(self.delays[s - 1]) - 1

    def feedback_sets(self) -> List[List[int]]:
        """F_t for t = 1..T (list index t-1), plus rounds dropped past T at index T."""
        sets: List[List[int]] = [[] for _ in range(self.T + 1)]
        for s in range(1, self.T + 1):
            sets[min(self.arrival_round(s), self.T + 1) - 1].append(s)
        return sets

    def truncated(self, T: int) -> "OnlineEnv":
        return OnlineEnv(list(self.objectives[:T]), self.delays[:T].copy())


def delay_uniform(T: int, lo: int, hi: int, seed: Union[int, np.random.Generator]) -> np.ndarray:
    if not 1 <= lo <= hi:
        raise SolverConfigError("need 1 <= lo <= hi")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.integers(lo, hi + 1, size=T)


def delay_constant(T: int, d: int) -> np.ndarray:
    if d < 1:
        raise SolverConfigError("delay must be >= 1")
    return np.full(T, int(d))


@dataclass
class OnlineTrace:
    played: np.ndarray
    queried: np.ndarray
    rewards: np.ndarray
    feasible: np.ndarray
    z: np.ndarray
    eta: float
    D: int
    delivered: int
    dropped: int
    wall_clock: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.rewards.shape[0]


def estimate_gradient_bound(env: OnlineEnv, C: ConstraintSet, coefficient: float,
                            rng: np.random.Generator, probes: int = 100) -> float:
    """Max norm over random noisy-gradient probes across the sequence, times the coefficient."""
    best = 0.0
    for _ in range(probes):
        f = env.objectives[int(rng.integers(env.T))]
        best = max(best, float(np.linalg.norm(f.noisy_grad(C.sample(rng), rng))))
    return coefficient * best


def guarantee_step(env: OnlineEnv, C: ConstraintSet, coefficient: float, seed: int = 0) -> float:
    """diam(C) / (G sqrt(D)) with G from `estimate_gradient_bound`."""
    G = estimate_gradient_bound(env, C, coefficient, np.random.default_rng(seed))
    if G <= 0:
        return 1.0
    return C.diameter / (G * math.sqrt(env.D))


def _resolve_eta(eta, env, C, coefficient, seed) -> float:
    if isinstance(eta, str):
        if eta != "guarantee":
            raise SolverConfigError(f"unknown step rule {eta!r}")
        return guarantee_step(env, C, coefficient, seed)
    eta = float(eta)
    if eta <= 0:
        raise SolverConfigError("step size must be positive")
    return eta


def _delayed_loop(env: OnlineEnv, C: ConstraintSet, eta: float, seed: int, play, sample,
                  start=None) -> OnlineTrace:
    rng = np.random.default_rng(seed)
    T, n = env.T, C.dim
    x = C.min_inf_norm_point() if start is None else as_point(start, n)
    if not C.contains(x):
        raise SolverConfigError("start point is infeasible")
    arrive_at = np.array([env.arrival_round(s) for s in range(1, T + 1)])
    pending: dict = {}
    played = np.empty((T, n))
    queried = np.empty((T, n))
    rewards = np.empty(T)
    feas = np.empty(T, dtype=bool)
    zs = np.full(T, np.nan)
    delivered = 0
    t0 = time.perf_counter()
    for t in range(1, T + 1):
        f = env.objectives[t - 1]
        p = play(x)
        played[t - 1] = p
        rewards[t - 1] = f.value(p)
        feas[t - 1] = C.contains(p, FEAS_TOL)
        est, q, z = sample(f, x, rng)
        queried[t - 1] = q
        zs[t - 1] = z
        a = arrive_at[t - 1]
        if a <= T:
            pending.setdefault(a, []).append(est)
        arrived = pending.pop(t, [])
        delivered += len(arrived)
        if arrived:
            x = C.project(x + eta * np.sum(arrived, axis=0))
    return OnlineTrace(played, queried, rewards, feas, zs, eta, env.D, delivered, T - delivered,
                       time.perf_counter() - t0)


def obga_run(env: OnlineEnv, C: ConstraintSet, option: str = "I", eta="guarantee", seed: int = 0,
             lower=None, start=None) -> OnlineTrace:
    """Online boosting delayed gradient ascent.

    Option I plays x_t and queries the monotone surrogate; Option II plays
    (x_t + lower) / 2 and queries the non-monotone surrogate anchored at lower.
    """
    if option == "I":
        if not env.monotone:
            raise SolverConfigError("Option I requires monotone objectives")
        spec = BoostSpec.monotone(min(f.gamma for f in env.objectives))
        play = lambda x: x
    elif option == "II":
        lo = C.min_inf_norm_point() if lower is None else as_point(lower, C.dim)
        spec = BoostSpec.nonmonotone(lo)
        play = lambda x: 0.5 * (x + lo)
    else:
        raise SolverConfigError(f"option must be 'I' or 'II', got {option!r}")
    step = _resolve_eta(eta, env, C, spec.coefficient, seed)

    def sample(f, x, rng):
        s = boosted_grad(spec, f, x, rng)
        return s.estimate, s.probe, s.z

    trace = _delayed_loop(env, C, step, seed, play, sample, start)
    trace.extra["option"] = option
    return trace


def oga_baseline(env: OnlineEnv, C: ConstraintSet, eta="guarantee", seed: int = 0,
                 start=None) -> OnlineTrace:
    """Delayed online gradient ascent on raw noisy gradients at the played point."""
    step = _resolve_eta(eta, env, C, 1.0, seed)

    def sample(f, x, rng):
        return f.noisy_grad(x, rng), x, np.nan

    return _delayed_loop(env, C, step, seed, lambda x: x, sample, start)


# --- regret ----------------------------------------------------------------------------


def comparator_point(env: OnlineEnv, C: ConstraintSet, K: int = 500) -> np.ndarray:
    """Surrogate best fixed point: continuous greedy (monotone) or measured FW on the average."""
    avg = average_objective(list(env.objectives))
    if env.monotone:
        return continuous_greedy_fw(avg, C, K)
    return measured_fw(avg, C, K)


def comparator_values(env: OnlineEnv, x_star) -> np.ndarray:
    return np.array([f.value(x_star) for f in env.objectives])


@dataclass
class RegretSeries:
    t: np.ndarray
    reward: np.ndarray
    cumulative_reward: np.ndarray
    regret: np.ndarray
    ratio: np.ndarray

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "reward", "cumulative_reward", "regret", "ratio"])
            for row in zip(self.t, self.reward, self.cumulative_reward, self.regret, self.ratio):
                w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])


def regret_series(rewards, comparator, alpha: float = ONE_MINUS_INV_E) -> RegretSeries:
    """alpha-regret after each round; `comparator` holds the per-round values f_t(x*)."""
    rewards = np.asarray(getattr(rewards, "rewards", rewards), dtype=float)
    comparator = np.asarray(comparator, dtype=float)
    if comparator.shape != rewards.shape:
        raise SolverConfigError("comparator and reward series differ in length")
    t = np.arange(1, rewards.shape[0] + 1)
    cum = np.cumsum(rewards)
    regret = alpha * np.cumsum(comparator) - cum
    return RegretSeries(t, rewards, cum, regret, regret / t)
