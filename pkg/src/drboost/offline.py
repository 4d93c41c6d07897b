"""Offline solvers: boosted projected gradient ascent and three baselines.

``boosting_gradient_ascent`` runs T-1 projected steps along one-sample (or
B-averaged) surrogate gradients and returns the whole trajectory together
with the uniformly selected output iterate. The baselines are plain
stochastic gradient ascent, continuous-greedy Frank-Wolfe and measured
Frank-Wolfe.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
from scipy.optimize import linprog

from .boosting import BoostSpec, averaged_boosted_grad, boosting_constants
from .geometry import (FEAS_TOL, BallProduct, BoxConstraint, CardinalityPolytope, ConstraintSet,
                       MinkowskiSet, PackingPolytope, UnsupportedConstraintError, as_point)
from .objectives import Objective

StepRule = Union[str, float, Callable[[int], float]]


class SolverConfigError(ValueError):
    pass


@dataclass
class OfflineConfig:
    T: int = 200
    option: str = "I"
    batch: int = 1
    step: StepRule = "guarantee"
    seed: int = 0
    start: Union[str, np.ndarray] = "origin"

    def __post_init__(self):
        if self.T < 2:
            raise SolverConfigError("T must be >= 2")
        if self.batch < 1:
            raise SolverConfigError("batch must be >= 1")
        if self.option not in ("I", "II"):
            raise SolverConfigError(f"option must be 'I' or 'II', got {self.option!r}")


@dataclass
class RunTrace:
    """Trajectory of a run; rows are indexed t = 1..T."""

    iterates: np.ndarray
    values: np.ndarray
    step_sizes: np.ndarray
    feasible: np.ndarray
    selected_index: int
    output: np.ndarray
    wall_clock: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.iterates.shape[0]

    @property
    def final_value(self) -> float:
        return float(self.values[-1])

    def output_value(self, f: Objective) -> float:
        return f.value(self.output)

    def to_csv(self, path) -> None:
        write_trace_csv(self, path)


def write_trace_csv(trace: RunTrace, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "value", "step_size", "feasible"])
        for t in range(trace.T):
            w.writerow([t + 1, repr(float(trace.values[t])), repr(float(trace.step_sizes[t])),
                        int(bool(trace.feasible[t]))])


def resolve_start(C: ConstraintSet, start) -> np.ndarray:
    if isinstance(start, str):
        if start in ("origin", "lowest"):
            x = C.min_inf_norm_point()
        else:
            raise SolverConfigError(f"unknown start {start!r}")
    else:
        x = as_point(start, C.dim)
    if not C.contains(x):
        raise SolverConfigError("start point is infeasible")
    return np.array(x, dtype=float)


def domain_radius(f: Objective) -> float:
    """r(X) for the unit box domain used by every bundled objective."""
    upper = getattr(f, "upper", None)
    return float(np.linalg.norm(upper)) if upper is not None else math.sqrt(f.dim)


def guarantee_step_schedule(f: Objective, C: ConstraintSet, option: str) -> Callable[[int], float]:
    """Option I: 1 / (sigma_g sqrt(t) / diam + L_g). Option II: 1 / (L sqrt(t))."""
    if option == "I":
        consts = boosting_constants(f.gamma, f.L, f.L1, math.sqrt(f.sigma2), domain_radius(f))
        sig, Lg, diam = math.sqrt(consts.variance), consts.smoothness, C.diameter
        return lambda t: 1.0 / (sig * math.sqrt(t) / diam + Lg)
    L = f.L
    if L <= 0:
        raise SolverConfigError("Option II guarantee step needs L > 0")
    return lambda t: 1.0 / (L * math.sqrt(t))


def sga_step_schedule(f: Objective, C: ConstraintSet) -> Callable[[int], float]:
    sig, L, diam = math.sqrt(f.sigma2), f.L, C.diameter
    if sig == 0 and L == 0:
        return lambda t: 1.0
    return lambda t: 1.0 / (sig * math.sqrt(t) / diam + L)


def _resolve_step(step: StepRule, default: Callable[[], Callable[[int], float]]):
    if callable(step):
        return step
    if isinstance(step, str):
        if step != "guarantee":
            raise SolverConfigError(f"unknown step schedule {step!r}")
        return default()
    eta = float(step)
    if eta <= 0:
        raise SolverConfigError("constant step must be positive")
    return lambda t: eta


def _projected_ascent(f: Objective, C: ConstraintSet, cfg: OfflineConfig,
                      direction: Callable[[np.ndarray, np.random.Generator], np.ndarray],
                      eta: Callable[[int], float], play: Callable[[np.ndarray], np.ndarray]) -> RunTrace:
    rng = np.random.default_rng(cfg.seed)
    x = resolve_start(C, cfg.start)
    T, n = cfg.T, C.dim
    xs = np.empty((T, n))
    vals = np.empty(T)
    steps = np.zeros(T)
    feas = np.empty(T, dtype=bool)
    t0 = time.perf_counter()
    for t in range(1, T + 1):
        xs[t - 1] = x
        vals[t - 1] = f.value(play(x))
        feas[t - 1] = C.contains(x, FEAS_TOL)
        if t == T:
            break
        steps[t - 1] = eta(t)
        x = C.project(x + steps[t - 1] * direction(x, rng))
    # the output index is drawn after the loop from the same stream
    l = int(rng.integers(1, T)) if T > 2 else 1
    out = play(xs[l - 1])
    return RunTrace(xs, vals, steps, feas, l, out, time.perf_counter() - t0)


def boosting_gradient_ascent(f: Objective, C: ConstraintSet, cfg: OfflineConfig,
                             lower: Optional[np.ndarray] = None) -> RunTrace:
    """Projected ascent on the non-oblivious surrogate.

    Option I needs a monotone objective and steps along the monotone surrogate;
    Option II anchors the non-monotone surrogate at the lowest-norm feasible
    point and reports values at (x_t + lower) / 2.
    """
    if cfg.option == "I":
        if not f.monotone:
            raise SolverConfigError("Option I requires a monotone objective")
        spec = BoostSpec.monotone(f.gamma)
        play = lambda x: x
    else:
        lo = C.min_inf_norm_point() if lower is None else as_point(lower, C.dim)
        spec = BoostSpec.nonmonotone(lo)
        play = lambda x: 0.5 * (x + lo)
    eta = _resolve_step(cfg.step, lambda: guarantee_step_schedule(f, C, cfg.option))
    direction = lambda x, rng: averaged_boosted_grad(spec, f, x, rng, cfg.batch)
    trace = _projected_ascent(f, C, cfg, direction, eta, play)
    trace.extra["option"] = cfg.option
    return trace


def sga_baseline(f: Objective, C: ConstraintSet, cfg: OfflineConfig) -> RunTrace:
    """Projected stochastic gradient ascent with B-averaged raw noisy gradients."""
    eta = _resolve_step(cfg.step, lambda: sga_step_schedule(f, C))

    def direction(x, rng):
        acc = np.zeros(C.dim)
        for _ in range(cfg.batch):
            acc += f.noisy_grad(x, rng)
        return acc / cfg.batch

    return _projected_ascent(f, C, cfg, direction, eta, lambda x: x)


# --- linear maximization oracles ------------------------------------------------------


def lmo(C: ConstraintSet, g) -> np.ndarray:
    """argmax_{v in C} <v, g>."""
    g = as_point(g, C.dim)
    if isinstance(C, BoxConstraint):
        return np.where(g > 0, C.upper, C.lower)
    if isinstance(C, CardinalityPolytope):
        return _lmo_cardinality(g, C.upper, C.k)
    if isinstance(C, PackingPolytope):
        return _lmo_packing(g, C)
    if isinstance(C, BallProduct):
        blocks = g.reshape(C.blocks, C.block_dim)
        norms = np.linalg.norm(blocks, axis=1, keepdims=True)
        dirs = np.divide(blocks, norms, out=np.zeros_like(blocks), where=norms > 0)
        return (C.centers + C.r * dirs).reshape(-1)
    if isinstance(C, MinkowskiSet):
        y = C.pole
        return y + C.scale * (lmo(C.base, g) - y)
    raise UnsupportedConstraintError(f"no linear maximization oracle for {type(C).__name__}")


def _lmo_cardinality(g: np.ndarray, upper: np.ndarray, k: float) -> np.ndarray:
    # fractional knapsack with unit costs: fill positive coordinates by decreasing gain
    v = np.zeros_like(g)
    budget = k
    for i in np.argsort(-g, kind="stable"):
        if g[i] <= 0 or budget <= 0:
            break
        v[i] = min(upper[i], budget)
        budget -= v[i]
    return v


def _lmo_packing(g: np.ndarray, P: PackingPolytope) -> np.ndarray:
    if np.all(g <= 0):
        return np.zeros_like(g)
    res = linprog(-g, A_ub=P.A, b_ub=P.b, bounds=list(zip(np.zeros(P.dim), P.upper)), method="highs")
    if not res.success:
        raise UnsupportedConstraintError(f"packing LMO failed: {res.message}")
    return np.clip(res.x, 0.0, P.upper)


def continuous_greedy_fw(f: Objective, C: ConstraintSet, K: int, path: Optional[list] = None) -> np.ndarray:
    """x <- x + v_k / K from the origin, v_k the LMO vertex for the exact gradient.

    If ``path`` is a list, every iterate x^1..x^K is appended to it.
    """
    if K < 1:
        raise SolverConfigError("K must be >= 1")
    x = np.zeros(C.dim)
    for _ in range(K):
        x = x + lmo(C, f.grad(x)) / K
        if path is not None:
            path.append(x)
    return x


def _upper_of(C: ConstraintSet) -> np.ndarray:
    upper = getattr(C, "upper", None)
    if upper is None:
        raise UnsupportedConstraintError(f"{type(C).__name__} has no box cap")
    return upper


def measured_fw(f: Objective, C: ConstraintSet, K: int, path: Optional[list] = None) -> np.ndarray:
    """Measured continuous greedy: x <- x + v (u - x) / (u K), v maximising <v, grad f (u - x)>.

    With the usual cap u = 1 this is x <- x + (1/K) v (1 - x).
    """
    if K < 1:
        raise SolverConfigError("K must be >= 1")
    if not getattr(C, "down_closed", False):
        raise UnsupportedConstraintError("measured Frank-Wolfe needs a downward-closed constraint")
    u = _upper_of(C)
    safe_u = np.where(u > 0, u, 1.0)
    x = np.zeros(C.dim)
    for _ in range(K):
        room = np.where(u > 0, (u - x) / safe_u, 0.0)
        v = lmo(C, f.grad(x) * room)
        x = x + v * room / K
        if path is not None:
            path.append(x)
    return x
