"""Boosted gradient descent ascent for min_x max_S f(x, S), with f convex in
the continuous block x and submodular in the set S.

The set side is relaxed to the multilinear extension over a cardinality
polytope. Both partial gradients are estimated from sampled sets S ~ y.
Greedy, distorted greedy and exhaustive enumeration evaluate the inner
maximum for reporting.
"""

from __future__ import annotations

import csv
import itertools
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .boosting import sample_z_tilde, sample_z_up
from .geometry import FEAS_TOL, BallProduct, CardinalityPolytope, ConstraintSet, as_point
from .objectives import (FacilityLocation, SetFunction, marginal_vector, to_mask)
from .offline import SolverConfigError

ENUMERATE_MAX_GROUND = 16
ONE_MINUS_INV_E = 1.0 - math.exp(-1.0)


class MinimaxError(ValueError):
    pass


class ConvexSubmodularObjective:
    """f(x, S); subclasses supply eval, grad_x and set_function_at."""

    dim: int
    n: int
    monotone: bool = True
    G: float = 1.0

    def eval(self, x, mask) -> float:
        raise NotImplementedError

    def grad_x(self, x, mask) -> np.ndarray:
        raise NotImplementedError

    def set_function_at(self, x) -> SetFunction:
        return _FrozenX(self, as_point(x, self.dim))

    def multilinear_value(self, x, y) -> float:
        """Exact E_{S ~ y} f(x, S) by enumeration (closed form in subclasses where available)."""
        y = as_point(y, self.n)
        total = 0.0
        for bits in itertools.product((False, True), repeat=self.n):
            mask = np.array(bits)
            w = float(np.prod(np.where(mask, y, 1.0 - y)))
            if w:
                total += w * self.eval(x, mask)
        return total

    def sampled_grad_x(self, x, y, batch: int, rng) -> np.ndarray:
        acc = np.zeros(self.dim)
        for _ in range(batch):
            acc += self.grad_x(x, rng.random(self.n) < y)
        return acc / batch

    def sampled_grad_y(self, x, y, batch: int, rng) -> np.ndarray:
        fx = self.set_function_at(x)
        acc = np.zeros(self.n)
        for _ in range(batch):
            acc += marginal_vector(fx, rng.random(self.n) < y)
        return acc / batch


class _FrozenX(SetFunction):
    def __init__(self, obj: ConvexSubmodularObjective, x: np.ndarray):
        self.obj, self.x, self.n = obj, x, obj.n
        self.monotone = obj.monotone

    def eval(self, mask) -> float:
        return self.obj.eval(self.x, np.asarray(mask, dtype=bool))


class ConvexFacility(ConvexSubmodularObjective):
    """sum_i max_{j in S} w_ij <x_i, x_j> + lam / sum_i |x_i|^2, optionally plus k - |S|.

    x stacks n blocks of size m; the ground set indexes the same n blocks.
    """

    def __init__(self, W, m: int, lam: float = 0.1, penalty_k: Optional[float] = None):
        W = np.asarray(W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise MinimaxError("weights must be a square n x n matrix")
        self.W = W
        self.n = W.shape[0]
        self.m = int(m)
        self.dim = self.n * self.m
        self.lam = float(lam)
        self.penalty_k = penalty_k
        self.monotone = penalty_k is None
        self.G = 10.0  # loose; only enters the guarantee step through the probe estimate

    @classmethod
    def random(cls, n: int, m: int, rng: np.random.Generator, lam: float = 0.1,
               penalty_k: Optional[float] = None) -> "ConvexFacility":
        return cls(rng.uniform(0.0, 1.0, size=(n, n)), m, lam, penalty_k)

    def blocks(self, x) -> np.ndarray:
        return as_point(x, self.dim).reshape(self.n, self.m)

    def affinity(self, x) -> np.ndarray:
        X = self.blocks(x)
        return self.W * (X @ X.T)

    def _regularizer(self, X) -> float:
        return self.lam / float(np.sum(X * X))

    def eval(self, x, mask) -> float:
        X = self.blocks(x)
        mask = np.asarray(mask, dtype=bool)
        val = self._regularizer(X)
        if mask.any():
            val += float((self.W * (X @ X.T))[:, mask].max(axis=1).sum())
        if self.penalty_k is not None:
            val += self.penalty_k - int(mask.sum())
        return val

    def grad_x(self, x, mask) -> np.ndarray:
        X = self.blocks(x)
        mask = np.asarray(mask, dtype=bool)
        g = -2.0 * self.lam * X / float(np.sum(X * X)) ** 2
        if mask.any():
            cols = np.flatnonzero(mask)
            A = (self.W * (X @ X.T))[:, cols]
            best = cols[np.argmax(A, axis=1)]
            for i, j in enumerate(best):
                w = self.W[i, j]
                g[i] += w * X[j]
                g[j] += w * X[i]
        return g.reshape(-1)

    def set_function_at(self, x) -> SetFunction:
        X = self.blocks(x)
        return FrozenFacility(self.affinity(x), self._regularizer(X), self.penalty_k)

    def multilinear_value(self, x, y) -> float:
        return self.set_function_at(x).multilinear_value(as_point(y, self.n))


class FrozenFacility(SetFunction):
    """sum_i max_{j in S} a_ij + c, optionally plus k - |S|, for fixed affinities a >= 0."""

    def __init__(self, A, const: float, penalty_k: Optional[float] = None):
        self.fl = FacilityLocation(A, weights=np.ones(A.shape[0]), require_nonnegative=False)
        self.n = A.shape[1]
        self.const = float(const)
        self.penalty_k = penalty_k
        self.monotone = penalty_k is None

    def eval(self, mask) -> float:
        mask = np.asarray(mask, dtype=bool)
        v = self.fl.eval(mask) + self.const
        if self.penalty_k is not None:
            v += self.penalty_k - int(mask.sum())
        return v

    def eval_many(self, masks) -> np.ndarray:
        masks = np.asarray(masks, dtype=bool)
        v = self.fl.eval_many(masks) + self.const
        if self.penalty_k is not None:
            v = v + self.penalty_k - masks.sum(axis=1)
        return v

    def max_value_bound(self) -> float:
        return self.fl.max_value_bound() + self.const + (self.penalty_k or 0.0)

    def multilinear_value(self, y):
        v = self.fl.multilinear_value(y) + self.const
        if self.penalty_k is not None:
            v += self.penalty_k - float(np.sum(y))
        return v

    def multilinear_grad(self, y):
        g = self.fl.multilinear_grad(y)
        return g - 1.0 if self.penalty_k is not None else g

    def decompose(self):
        lin = -np.ones(self.n) if self.penalty_k is not None else np.zeros(self.n)
        offset = self.const + (self.penalty_k or 0.0)
        return self.fl, lin, offset


class SeparableObjective(ConvexSubmodularObjective):
    """f(x, S) = q(x) + h(S); the two sides do not interact."""

    def __init__(self, qx, qgrad, dim: int, setfn: SetFunction):
        self.qx, self.qgrad, self.dim = qx, qgrad, dim
        self.setfn = setfn
        self.n = setfn.n
        self.monotone = setfn.monotone

    def eval(self, x, mask) -> float:
        return float(self.qx(as_point(x, self.dim))) + self.setfn.eval(np.asarray(mask, dtype=bool))

    def grad_x(self, x, mask) -> np.ndarray:
        return np.asarray(self.qgrad(as_point(x, self.dim)), dtype=float)


@dataclass(frozen=True)
class MatroidPolytope:
    """Convex hull of a matroid's independent sets; only the uniform (cardinality) kind is built in."""

    n: int
    k: int
    kind: str = "cardinality"

    def __post_init__(self):
        if self.kind != "cardinality":
            raise MinimaxError(f"unsupported matroid kind {self.kind!r}")
        if not 0 <= self.k <= self.n:
            raise MinimaxError("need 0 <= k <= n")

    def constraint(self) -> CardinalityPolytope:
        return CardinalityPolytope(self.k, np.ones(self.n))

    @property
    def lower(self) -> np.ndarray:
        return np.zeros(self.n)


@dataclass
class MinimaxConfig:
    T: int = 1000
    eta: object = "guarantee"
    option: str = "I"
    seed: int = 0
    batch: int = 1
    x0: Optional[np.ndarray] = None
    y0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.T < 1:
            raise SolverConfigError("T must be >= 1")
        if self.option not in ("I", "II"):
            raise SolverConfigError(f"option must be 'I' or 'II', got {self.option!r}")
        if self.batch < 1:
            raise SolverConfigError("batch must be >= 1")


@dataclass
class MinimaxResult:
    x_sol: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    eta: float
    feasible: np.ndarray
    wall_clock: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_csv(self, path, obj: ConvexSubmodularObjective, M: MatroidPolytope, enumerate_: bool = False,
               every: int = 1) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "eval_greedy"] + (["eval_enumerate"] if enumerate_ else []))
            run = np.cumsum(self.xs, axis=0) / np.arange(1, self.xs.shape[0] + 1)[:, None]
            mode = "greedy" if obj.monotone else "distorted"
            for t in range(0, self.xs.shape[0], every):
                row = [t + 1, repr(minimax_eval(obj, run[t], M, mode))]
                if enumerate_:
                    row.append(repr(minimax_eval(obj, run[t], M, "enumerate")))
                w.writerow(row)


def guarantee_eta(obj: ConvexSubmodularObjective, K: ConstraintSet, C: ConstraintSet, T: int,
                rng: np.random.Generator, probes: int = 100) -> float:
    """sqrt(diam(C)^2 + diam(K)^2) / (G sqrt(T)) with G the largest probed gradient norm."""
    G = 0.0
    for _ in range(probes):
        x, y = K.sample(rng), C.sample(rng)
        gx = obj.sampled_grad_x(x, y, 1, rng)
        gy = obj.sampled_grad_y(x, y, 1, rng)
        G = max(G, math.hypot(float(np.linalg.norm(gx)), float(np.linalg.norm(gy))))
    G = G if G > 0 else 1.0
    return math.sqrt(C.diameter ** 2 + K.diameter ** 2) / (G * math.sqrt(T))


def boosting_gda(obj: ConvexSubmodularObjective, K: ConstraintSet, M: MatroidPolytope,
                 cfg: MinimaxConfig) -> MinimaxResult:
    """Alternating projected descent in x and boosted ascent in y; x_sol is the average of x_1..x_T."""
    if cfg.option == "I" and not obj.monotone:
        raise SolverConfigError("Option I requires an objective monotone in S")
    rng = np.random.default_rng(cfg.seed)
    C = M.constraint()
    y_low = M.lower
    eta = guarantee_eta(obj, K, C, cfg.T, np.random.default_rng(cfg.seed + 7919)) \
        if isinstance(cfg.eta, str) else float(cfg.eta)
    if isinstance(cfg.eta, str) and cfg.eta != "guarantee":
        raise SolverConfigError(f"unknown step rule {cfg.eta!r}")
    x = K.project(K.inner_ball[0]) if cfg.x0 is None and K.inner_ball is not None else \
        K.project(as_point(cfg.x0 if cfg.x0 is not None else np.zeros(K.dim), K.dim))
    y = y_low.copy() if cfg.y0 is None else C.project(cfg.y0)
    xs = np.empty((cfg.T, K.dim))
    ys = np.empty((cfg.T, M.n))
    feas = np.empty(cfg.T, dtype=bool)
    t0 = time.perf_counter()
    for t in range(cfg.T):
        xs[t], ys[t] = x, y
        feas[t] = K.contains(x, FEAS_TOL) and C.contains(y, FEAS_TOL)
        if cfg.option == "I":
            gx = obj.sampled_grad_x(x, y, cfg.batch, rng)
            z = sample_z_up(1.0, rng.random())
            gy = obj.sampled_grad_y(x, z * y, cfg.batch, rng)
            x_new = K.project(x - eta * gx)
            y = C.project(y + eta * ONE_MINUS_INV_E * gy)
        else:
            gx = obj.sampled_grad_x(x, 0.5 * (y + y_low), cfg.batch, rng)
            z = sample_z_tilde(rng.random())
            gy = obj.sampled_grad_y(x, 0.5 * z * y + (1.0 - 0.5 * z) * y_low, cfg.batch, rng)
            x_new = K.project(x - eta * gx)
            y = C.project(y + 3.0 * eta / 8.0 * gy)
        x = x_new
    return MinimaxResult(xs.mean(axis=0), xs, ys, eta, feas, time.perf_counter() - t0)


# --- inner-maximisation oracles -------------------------------------------------------------


def greedy_max_set(f: SetFunction, k: int):
    """k rounds of best marginal gain; ties go to the lowest index."""
    mask = np.zeros(f.n, dtype=bool)
    cur = f.eval(mask)
    for _ in range(min(k, f.n)):
        best_gain, best_i = -np.inf, -1
        for i in np.flatnonzero(~mask):
            mask[i] = True
            gain = f.eval(mask) - cur
            mask[i] = False
            if gain > best_gain:
                best_gain, best_i = gain, i
        if best_i < 0:
            break
        mask[best_i] = True
        cur += best_gain
    return mask, float(f.eval(mask))


def distorted_greedy(f: SetFunction, k: int):
    """Distorted greedy for g = h + c with h monotone submodular and c modular.

    Round i (0-based) adds the element maximising (1 - 1/k)^{k-i-1} h-gain + c_e,
    provided that distorted gain is positive.
    """
    decompose = getattr(f, "decompose", None)
    if decompose is None:
        raise MinimaxError("distorted greedy needs a monotone-submodular plus modular decomposition")
    h, lin, _ = decompose()
    n = f.n
    mask = np.zeros(n, dtype=bool)
    if k <= 0:
        return mask, float(f.eval(mask))
    h_cur = h.eval(mask)
    for i in range(min(k, n)):
        factor = (1.0 - 1.0 / k) ** (k - i - 1)
        best, best_e, best_h = -np.inf, -1, 0.0
        for e in np.flatnonzero(~mask):
            mask[e] = True
            h_new = h.eval(mask)
            mask[e] = False
            score = factor * (h_new - h_cur) + lin[e]
            if score > best:
                best, best_e, best_h = score, e, h_new
        if best_e >= 0 and best > 0:
            mask[best_e] = True
            h_cur = best_h
    return mask, float(f.eval(mask))


def enumerate_max_set(f: SetFunction, k: int):
    if f.n > ENUMERATE_MAX_GROUND:
        raise MinimaxError(f"enumeration limited to {ENUMERATE_MAX_GROUND} elements")
    best_mask = np.zeros(f.n, dtype=bool)
    best = f.eval(best_mask)
    for size in range(1, min(k, f.n) + 1):
        for combo in itertools.combinations(range(f.n), size):
            mask = to_mask(combo, f.n)
            v = f.eval(mask)
            if v > best:
                best, best_mask = v, mask
    return best_mask, float(best)


def minimax_eval(obj: ConvexSubmodularObjective, x, M: MatroidPolytope, mode: str = "greedy") -> float:
    fx = obj.set_function_at(x)
    if mode == "greedy":
        return greedy_max_set(fx, M.k)[1]
    if mode == "distorted":
        return distorted_greedy(fx, M.k)[1]
    if mode == "enumerate":
        return enumerate_max_set(fx, M.k)[1]
    raise MinimaxError(f"unknown evaluation mode {mode!r}")


def shifted_ball_constraint(n: int, m: int, center: float = 0.45, radius: float = 0.35) -> BallProduct:
    """Blocks confined to B(center * 1, radius), keeping every |x_i| between about 0.29 and 0.99."""
    return BallProduct(np.full((n, m), center), radius)


def opt_grid(obj: ConvexSubmodularObjective, K: BallProduct, M: MatroidPolytope, step: float = 0.05):
    """min over the diagonal slice x_1 = ... = x_n = v (v on a grid in one block ball) of the
    enumerated inner maximum. Returns (value, v)."""
    if K.block_dim != 2:
        raise MinimaxError("grid slice is two-dimensional")
    c = K.centers[0]
    if not np.allclose(K.centers, c):
        raise MinimaxError("diagonal slice needs identical block centres")
    r = K.r
    axis = np.arange(-r, r + step / 2, step)
    best, best_v = np.inf, None
    for a in axis:
        for b in axis:
            if a * a + b * b > r * r + 1e-12:
                continue
            v = c + np.array([a, b])
            x = np.tile(v, K.blocks)
            val = minimax_eval(obj, x, M, "enumerate")
            if val < best:
                best, best_v = val, v
    return best, best_v
