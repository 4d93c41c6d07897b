"""DR-submodular objectives, noise models and benchmark instances.

Continuous objectives implement ``value``, ``grad`` and ``noisy_grad`` plus the
constants consumed by step-size rules: ``L`` (smoothness), ``L1``
(Lipschitz), ``gamma`` (weak-DR parameter) and ``monotone``.

Set functions are evaluated on boolean masks over the ground set; their
multilinear extensions are available in exact (enumeration) and sampled
modes.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import DimensionError, as_point

EXACT_MAX_GROUND = 20


class ObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianNoise:
    """Additive isotropic Gaussian gradient noise, scale * N(0, I)."""

    scale: float = 0.0
    seed: Optional[int] = None

    def __post_init__(self):
        if self.scale < 0:
            raise ObjectiveError("noise scale must be nonnegative")

    def sigma2(self, n: int) -> float:
        return self.scale ** 2 * n

    def perturb(self, g: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.scale == 0.0:
            return g
        return g + self.scale * rng.standard_normal(g.shape)


class Objective:
    """Differentiable DR-submodular function on a box domain."""

    dim: int
    L: float = 1.0
    L1: float = 1.0
    gamma: float = 1.0
    monotone: bool = False
    shifted: bool = False
    noise: GaussianNoise = GaussianNoise()

    def value(self, x) -> float:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def noisy_grad(self, x, rng: np.random.Generator) -> np.ndarray:
        return self.noise.perturb(self.grad(x), rng)

    @property
    def sigma2(self) -> float:
        return self.noise.sigma2(self.dim)

    def _check(self, x) -> np.ndarray:
        return as_point(x, self.dim)

    def with_noise(self, scale: float) -> "Objective":
        import copy

        clone = copy.copy(self)
        clone.noise = GaussianNoise(scale)
        return clone


class ZeroObjective(Objective):
    monotone = True

    def __init__(self, n: int):
        self.dim = n
        self.L = self.L1 = 0.0

    def value(self, x) -> float:
        self._check(x)
        return 0.0

    def grad(self, x) -> np.ndarray:
        return np.zeros(self._check(x).shape)


class LinearObjective(Objective):
    """f(x) = a.x + c; DR-submodular (and concave); monotone when a >= 0."""

    def __init__(self, a, c: float = 0.0, noise: float = 0.0):
        self.a = as_point(a)
        self.c = float(c)
        self.dim = self.a.shape[0]
        self.monotone = bool(np.all(self.a >= 0))
        self.L = 0.0
        self.L1 = float(np.linalg.norm(self.a))
        self.noise = GaussianNoise(noise)

    def value(self, x) -> float:
        return float(self.a @ self._check(x) + self.c)

    def grad(self, x) -> np.ndarray:
        self._check(x)
        return self.a.copy()


class QuadraticObjective(Objective):
    """f(x) = 0.5 x'Hx + h'x + c with symmetric H <= 0 entrywise."""

    def __init__(self, H, h, c: float = 0.0, upper=None, monotone: Optional[bool] = None,
                 noise: float = 0.0):
        H = np.asarray(H, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ObjectiveError("H must be square")
        if not np.allclose(H, H.T):
            raise ObjectiveError("H must be symmetric")
        if np.any(H > 0):
            raise ObjectiveError("DR-submodular quadratic needs H <= 0 entrywise")
        self.H = H
        self.dim = H.shape[0]
        self.h = as_point(h, self.dim)
        self.c = float(c)
        self.upper = np.ones(self.dim) if upper is None else as_point(upper, self.dim)
        if monotone is None:
            # the gradient H x + h is smallest over [0, u] at x = u
            monotone = bool(np.all(self.H @ self.upper + self.h >= -1e-12))
        self.monotone = monotone
        fro = float(np.linalg.norm(H))
        self.L = fro
        self.L1 = fro * float(np.linalg.norm(self.upper)) + float(np.linalg.norm(self.h))
        self.noise = GaussianNoise(noise)

    def value(self, x) -> float:
        x = self._check(x)
        return float(0.5 * x @ self.H @ x + self.h @ x + self.c)

    def grad(self, x) -> np.ndarray:
        x = self._check(x)
        return self.H @ x + self.h


def random_nonpositive_symmetric(n: int, rng: np.random.Generator) -> np.ndarray:
    upper = np.triu(rng.uniform(-1.0, 0.0, size=(n, n)))
    return upper + np.triu(upper, 1).T


def make_monotone_quadratic(n: int, rng: np.random.Generator, upper=None,
                            noise: float = 0.0) -> QuadraticObjective:
    """h = -H'u so that the gradient H(x - u) is nonnegative on [0, u] and f(0) = 0."""
    u = np.ones(n) if upper is None else as_point(upper, n)
    H = random_nonpositive_symmetric(n, rng)
    return QuadraticObjective(H, -H.T @ u, 0.0, upper=u, monotone=True, noise=noise)


def make_nonmonotone_quadratic(n: int, rng: np.random.Generator, upper=None,
                               noise: float = 0.0, offset: Optional[float] = None,
                               linear_scale: float = 1.0, box_safe: bool = False) -> QuadraticObjective:
    """h ~ U[0, linear_scale]^n and offset c = n unless given.

    c = n keeps the value nonnegative on packing polytopes with b = 1. With
    ``box_safe`` the offset is raised to -u'Hu / 2 when that is larger, which
    certifies nonnegativity on the whole box since h >= 0 and H <= 0.
    """
    u = np.ones(n) if upper is None else as_point(upper, n)
    H = random_nonpositive_symmetric(n, rng)
    h = linear_scale * rng.uniform(0.0, 1.0, size=n)
    c = float(n) if offset is None else float(offset)
    if box_safe:
        c = max(c, -0.5 * float(u @ H @ u))
    return QuadraticObjective(H, h, c, upper=u, monotone=False, noise=noise)


def _prod_except(v: np.ndarray) -> np.ndarray:
    """prod_{j != i} v_j for every i, without division."""
    n = v.shape[0]
    prefix = np.ones(n)
    suffix = np.ones(n)
    if n > 1:
        prefix[1:] = np.cumprod(v[:-1])
        suffix[:-1] = np.cumprod(v[::-1][:-1])[::-1]
    return prefix * suffix


def fk_value(k: int, x) -> float:
    x = as_point(x, 2 * k + 1)
    a, mid, s = x[:k], x[k:2 * k], x[2 * k]
    return float(k + 1 - (1 - s) * np.prod(1 - a) - (1 - s) * (k - a.sum()) + mid.sum())


def fk_grad(k: int, x) -> np.ndarray:
    x = as_point(x, 2 * k + 1)
    a, s = x[:k], x[2 * k]
    g = np.empty(2 * k + 1)
    g[:k] = (1 - s) * _prod_except(1 - a) + (1 - s)
    g[k:2 * k] = 1.0
    g[2 * k] = np.prod(1 - a) + k - a.sum()
    return g


def gk_value(k: int, x) -> float:
    x = as_point(x, 2 * k + 1)
    a, s = x[:k], x[2 * k]
    return float(k + 1 - (1 - s) * np.prod(1 - a) - (1 - s) * (k - a.sum()) - a.sum() - s)


def gk_grad(k: int, x) -> np.ndarray:
    x = as_point(x, 2 * k + 1)
    a, s = x[:k], x[2 * k]
    g = np.zeros(2 * k + 1)
    g[:k] = (1 - s) * _prod_except(1 - a) + (1 - s) - 1.0
    g[2 * k] = np.prod(1 - a) + (k - a.sum()) - 1.0
    return g


class CoverageMonotone(Objective):
    """The coverage-type f_k with a flat local maximum at (1^k, 0^{k+1})."""

    monotone = True

    def __init__(self, k: int, noise: float = 0.0):
        if k < 1:
            raise ObjectiveError("k must be >= 1")
        self.k = k
        self.dim = 2 * k + 1
        # Hessian entries are bounded by 1 inside the first block and by 2 on the
        # row/column of the last coordinate
        self.L = math.sqrt(k * (k - 1) + 8.0 * k)
        self.L1 = math.sqrt(5.0 * k + (k + 1.0) ** 2)
        self.noise = GaussianNoise(noise)

    def value(self, x) -> float:
        return fk_value(self.k, x)

    def grad(self, x) -> np.ndarray:
        return fk_grad(self.k, x)

    def local_max(self) -> np.ndarray:
        return np.concatenate([np.ones(self.k), np.zeros(self.k + 1)])

    def reference_point(self) -> np.ndarray:
        # value 2k + 1; note it has sum k + 1, one more than a budget of k allows
        return np.concatenate([np.zeros(self.k), np.ones(self.k + 1)])


class CoverageNonMonotone(Objective):
    """g_k: nonnegative, non-monotone, with the stationary point (1^{2k}, 0) of value 1."""

    monotone = False

    def __init__(self, k: int, noise: float = 0.0):
        if k < 1:
            raise ObjectiveError("k must be >= 1")
        self.k = k
        self.dim = 2 * k + 1
        self.L = math.sqrt(k * (k - 1) + 8.0 * k)
        self.L1 = math.sqrt(k + (k + 1.0) ** 2)
        self.noise = GaussianNoise(noise)

    def value(self, x) -> float:
        return gk_value(self.k, x)

    def grad(self, x) -> np.ndarray:
        return gk_grad(self.k, x)

    def stationary_point(self) -> np.ndarray:
        return np.concatenate([np.ones(2 * self.k), np.zeros(1)])

    def optimum(self) -> np.ndarray:
        return np.concatenate([np.zeros(2 * self.k), np.ones(1)])


class ShiftedObjective(Objective):
    """f - f(0) for a monotone f, so that the shifted value vanishes at the origin."""

    def __init__(self, base: Objective):
        if not base.monotone:
            raise ObjectiveError("the zero-shift is only valid for monotone objectives")
        if base.shifted:
            raise ObjectiveError("objective is already shifted")
        self.base = base
        self.dim = base.dim
        self.offset = base.value(np.zeros(base.dim))
        self.L, self.L1, self.gamma = base.L, base.L1, base.gamma
        self.monotone = True
        self.shifted = True
        self.noise = base.noise

    def value(self, x) -> float:
        return self.base.value(x) - self.offset

    def grad(self, x) -> np.ndarray:
        return self.base.grad(x)


def ensure_zero_at_origin(f: Objective, tol: float = 1e-12) -> Objective:
    if f.monotone and abs(f.value(np.zeros(f.dim))) > tol:
        return ShiftedObjective(f)
    return f


class AverageObjective(Objective):
    """(1/T) sum_t f_t, used to compute comparators for online runs."""

    def __init__(self, parts: Sequence[Objective]):
        if not parts:
            raise ObjectiveError("need at least one objective")
        self.parts = list(parts)
        self.dim = parts[0].dim
        self.monotone = all(p.monotone for p in parts)
        self.L = max(p.L for p in parts)
        self.L1 = max(p.L1 for p in parts)
        self.gamma = min(p.gamma for p in parts)

    def value(self, x) -> float:
        return float(np.mean([p.value(x) for p in self.parts]))

    def grad(self, x) -> np.ndarray:
        return np.mean([p.grad(x) for p in self.parts], axis=0)


def average_objective(parts: Sequence[Objective]) -> Objective:
    if all(isinstance(p, QuadraticObjective) for p in parts):
        T = len(parts)
        H = sum(p.H for p in parts) / T
        h = sum(p.h for p in parts) / T
        c = sum(p.c for p in parts) / T
        return QuadraticObjective(H, h, c, upper=parts[0].upper,
                                  monotone=all(p.monotone for p in parts))
    return AverageObjective(parts)


# --- set functions -----------------------------------------------------------


class SetFunction:
    """Oracle over subsets of {0, ..., n-1}, given as boolean masks."""

    n: int
    submodular: bool = True
    monotone: bool = True

    def eval(self, mask) -> float:
        raise NotImplementedError

    def __call__(self, S) -> float:
        return self.eval(to_mask(S, self.n))

    def eval_many(self, masks: np.ndarray) -> np.ndarray:
        return np.array([self.eval(m) for m in masks], dtype=float)

    def max_value_bound(self) -> float:
        return self.eval(np.ones(self.n, dtype=bool))

    # optional closed forms for the multilinear extension; None means "enumerate or sample"
    def multilinear_value(self, x) -> Optional[float]:
        return None

    def multilinear_grad(self, x) -> Optional[np.ndarray]:
        return None


def to_mask(S, n: int) -> np.ndarray:
    arr = np.asarray(S)
    if arr.dtype == bool and arr.shape == (n,):
        return arr
    mask = np.zeros(n, dtype=bool)
    idx = np.asarray(list(S), dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise DimensionError(n, int(idx.max()) + 1)
    mask[idx] = True
    return mask


def all_masks(n: int) -> np.ndarray:
    """All 2^n subsets; row r encodes the binary expansion of r (bit i = element i)."""
    r = np.arange(2 ** n)[:, None]
    return ((r >> np.arange(n)) & 1).astype(bool)


class ModularFunction(SetFunction):
    def __init__(self, weights, offset: float = 0.0):
        self.w = as_point(weights)
        self.n = self.w.shape[0]
        self.offset = float(offset)
        self.monotone = bool(np.all(self.w >= 0))

    def eval(self, mask) -> float:
        return float(self.offset + self.w[np.asarray(mask, dtype=bool)].sum())

    def multilinear_value(self, x):
        return float(self.offset + self.w @ as_point(x, self.n))

    def multilinear_grad(self, x):
        as_point(x, self.n)
        return self.w.copy()


class FacilityLocation(SetFunction):
    """(1/|U|) sum_u max_{m in S} r_{u,m}, with the empty set worth 0."""

    def __init__(self, ratings, weights=None, require_nonnegative: bool = True):
        R = np.atleast_2d(np.asarray(ratings, dtype=float))
        if R.size == 0:
            raise ObjectiveError("empty ratings matrix")
        if require_nonnegative and np.any(R < 0):
            raise ObjectiveError("ratings must be nonnegative")
        self.R = R
        self.n = R.shape[1]
        self.user_weights = (np.full(R.shape[0], 1.0 / R.shape[0]) if weights is None
                             else np.asarray(weights, dtype=float))
        # per-user column order by decreasing rating, for the closed-form extension
        self._order = np.argsort(-R, axis=1, kind="stable")
        self._sorted = np.take_along_axis(R, self._order, axis=1)

    def eval(self, mask) -> float:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            return 0.0
        return float(self.user_weights @ self.R[:, mask].max(axis=1))

    def eval_many(self, masks) -> np.ndarray:
        masks = np.asarray(masks, dtype=bool)
        vals = np.where(masks[:, None, :], self.R[None, :, :], 0.0).max(axis=2)
        return vals @ self.user_weights

    def max_value_bound(self) -> float:
        return float(self.user_weights @ self.R.max(axis=1))

    def multilinear_value(self, x) -> float:
        value, _ = self._multilinear(as_point(x, self.n))
        return value

    def multilinear_grad(self, x) -> np.ndarray:
        _, grad = self._multilinear(as_point(x, self.n))
        return grad

    def _multilinear(self, x):
        # For one user with ratings sorted decreasingly r_1 >= ... >= r_n and the
        # matching probabilities p_i, E[max] = sum_i r_i p_i prod_{j<i}(1 - p_j).
        # dE/dp_i = P_i (r_i - T_{i+1}), where P_i = prod_{j<i}(1-p_j) and
        # T_i = p_i r_i + (1-p_i) T_{i+1} is the tail expectation.
        p = x[self._order]
        r = self._sorted
        U, n = r.shape
        q = 1.0 - p
        P = np.ones((U, n))
        P[:, 1:] = np.cumprod(q[:, :-1], axis=1)
        T = np.zeros((U, n + 1))
        for i in range(n - 1, -1, -1):
            T[:, i] = p[:, i] * r[:, i] + q[:, i] * T[:, i + 1]
        g_sorted = P * (r - T[:, 1:])
        grad = np.zeros(n)
        np.add.at(grad, self._order.reshape(-1), (self.user_weights[:, None] * g_sorted).reshape(-1))
        return float(self.user_weights @ T[:, 0]), grad


class RegularizedSetFunction(SetFunction):
    """base(S) + lam * (k - |S|)."""

    def __init__(self, base: SetFunction, lam: float, k: float):
        if lam < 0:
            raise ObjectiveError("regularization weight must be nonnegative")
        self.base = base
        self.n = base.n
        self.lam = float(lam)
        self.k = float(k)
        self.submodular = base.submodular
        self.monotone = base.monotone and self.lam == 0.0

    def eval(self, mask) -> float:
        mask = np.asarray(mask, dtype=bool)
        return self.base.eval(mask) + self.lam * (self.k - mask.sum())

    def eval_many(self, masks) -> np.ndarray:
        masks = np.asarray(masks, dtype=bool)
        return self.base.eval_many(masks) + self.lam * (self.k - masks.sum(axis=1))

    def max_value_bound(self) -> float:
        return self.base.max_value_bound() + self.lam * self.k

    def multilinear_value(self, x):
        v = self.base.multilinear_value(x)
        return None if v is None else v + self.lam * (self.k - float(np.sum(x)))

    def multilinear_grad(self, x):
        g = self.base.multilinear_grad(x)
        return None if g is None else g - self.lam

    def decompose(self):
        """(monotone submodular part, modular weights) for distorted greedy."""
        return self.base, np.full(self.n, -self.lam), self.lam * self.k


def facility_location_setfn(ratings) -> FacilityLocation:
    return FacilityLocation(ratings)


def regularized_setfn(base: SetFunction, lam: float, k: float) -> RegularizedSetFunction:
    return RegularizedSetFunction(base, lam, k)


class CallableSetFunction(SetFunction):
    def __init__(self, n: int, fn: Callable[[np.ndarray], float], monotone: bool = True,
                 submodular: bool = True):
        self.n = n
        self.fn = fn
        self.monotone = monotone
        self.submodular = submodular

    def eval(self, mask) -> float:
        return float(self.fn(np.asarray(mask, dtype=bool)))


def submodularity_violations(f: SetFunction, rng: np.random.Generator, trials: int = 200,
                             tol: float = 1e-9) -> int:
    """Count random (S, i, j) with f(S+i) - f(S) < f(S+j+i) - f(S+j) - tol."""
    bad = 0
    for _ in range(trials):
        S = rng.random(f.n) < 0.5
        i, j = rng.choice(f.n, size=2, replace=False)
        S[i] = S[j] = False
        Sj = S.copy()
        Sj[j] = True
        Si, Sji = S.copy(), Sj.copy()
        Si[i] = True
        Sji[i] = True
        if f.eval(Si) - f.eval(S) < f.eval(Sji) - f.eval(Sj) - tol:
            bad += 1
    return bad


# --- multilinear extensions ---------------------------------------------------


class MultilinearExtension(Objective):
    """F(x) = E_{S ~ x}[f(S)], with each i in S independently w.p. x_i."""

    def __init__(self, base: SetFunction, mode: str = "exact", batch: int = 1,
                 noise: float = 0.0):
        if mode not in ("exact", "sampled"):
            raise ObjectiveError(f"unknown multilinear mode {mode!r}")
        if mode == "exact" and base.n > EXACT_MAX_GROUND and base.multilinear_grad(np.zeros(base.n)) is None:
            raise ObjectiveError(f"exact mode supports at most {EXACT_MAX_GROUND} elements")
        if batch < 1:
            raise ObjectiveError("batch must be >= 1")
        self.base = base
        self.mode = mode
        self.batch = batch
        self.dim = base.n
        self.monotone = base.monotone
        top = base.max_value_bound()
        self.L1 = abs(top) * math.sqrt(self.dim)
        self.L = 2.0 * abs(top) * self.dim
        self.noise = GaussianNoise(noise)
        # the enumeration table is built on first use, so closed-form bases never pay for it
        self._masks = None
        self._vals = None

    def _weights(self, x: np.ndarray) -> np.ndarray:
        m = self._masks
        return np.prod(np.where(m, x[None, :], 1.0 - x[None, :]), axis=1)

    def value(self, x) -> float:
        x = self._check(x)
        closed = self.base.multilinear_value(x)
        if closed is not None:
            return closed
        return multilinear_value_exact(self, x)

    def grad(self, x) -> np.ndarray:
        x = self._check(x)
        closed = self.base.multilinear_grad(x)
        if closed is not None:
            return closed
        return multilinear_grad_exact(self, x)

    def noisy_grad(self, x, rng) -> np.ndarray:
        if self.mode == "sampled":
            g = multilinear_grad_sampled(self, x, self.batch, rng)
        else:
            g = self.grad(x)
        return self.noise.perturb(g, rng)


def _require_exact(me: MultilinearExtension):
    if me._masks is None:
        if me.base.n > EXACT_MAX_GROUND:
            raise ObjectiveError(f"exact mode supports at most {EXACT_MAX_GROUND} elements")
        me._masks = all_masks(me.base.n)
        me._vals = me.base.eval_many(me._masks)


def multilinear_value_exact(me: MultilinearExtension, x) -> float:
    _require_exact(me)
    x = as_point(x, me.dim)
    return float(me._weights(x) @ me._vals)


def multilinear_grad_exact(me: MultilinearExtension, x) -> np.ndarray:
    _require_exact(me)
    x = as_point(x, me.dim)
    g = np.empty(me.dim)
    for i in range(me.dim):
        hi, lo = x.copy(), x.copy()
        hi[i], lo[i] = 1.0, 0.0
        g[i] = float(me._weights(hi) @ me._vals) - float(me._weights(lo) @ me._vals)
    return g


def marginal_vector(f: SetFunction, mask: np.ndarray) -> np.ndarray:
    """Entry i is f(S + i) - f(S - i)."""
    n = f.n
    plus = np.repeat(mask[None, :], n, axis=0)
    minus = plus.copy()
    idx = np.arange(n)
    plus[idx, idx] = True
    minus[idx, idx] = False
    return f.eval_many(plus) - f.eval_many(minus)


def multilinear_grad_sampled(me: MultilinearExtension, x, batch: int,
                             rng: np.random.Generator) -> np.ndarray:
    if batch < 1:
        raise ObjectiveError("batch must be >= 1")
    x = as_point(x, me.dim)
    acc = np.zeros(me.dim)
    for _ in range(batch):
        acc += marginal_vector(me.base, rng.random(me.dim) < x)
    return acc / batch


# --- ratings data --------------------------------------------------------------


def synthetic_ratings(users: int, movies: int, rng: np.random.Generator,
                      half_stars: bool = False) -> np.ndarray:
    R = rng.uniform(0.0, 5.0, size=(users, movies))
    if half_stars:
        R = np.round(R * 2.0) / 2.0
    return R


def load_ratings_csv(path) -> np.ndarray:
    """Read `user,movie,rating` rows; ids are mapped to dense indices in sorted order."""
    rows = []
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"user", "movie", "rating"} <= set(reader.fieldnames):
            raise ObjectiveError("ratings CSV needs a `user,movie,rating` header")
        for rec in reader:
            r = float(rec["rating"])
            if not 0.0 <= r <= 5.0:
                raise ObjectiveError(f"rating out of [0,5]: {r}")
            rows.append((rec["user"], rec["movie"], r))
    if not rows:
        raise ObjectiveError("empty ratings file")
    users = {u: i for i, u in enumerate(sorted({r[0] for r in rows}, key=_id_key))}
    movies = {m: i for i, m in enumerate(sorted({r[1] for r in rows}, key=_id_key))}
    R = np.zeros((len(users), len(movies)))
    for u, m, r in rows:
        R[users[u], movies[m]] = r
    return R


def _id_key(s: str):
    try:
        return (0, int(s), s)
    except ValueError:
        return (1, 0, s)


def enumerate_max(f: SetFunction, k: int):
    """Best subset with |S| <= k by exhaustive search; returns (mask, value)."""
    best_mask, best = np.zeros(f.n, dtype=bool), f.eval(np.zeros(f.n, dtype=bool))
    for size in range(1, min(k, f.n) + 1):
        for combo in itertools.combinations(range(f.n), size):
            mask = to_mask(combo, f.n)
            v = f.eval(mask)
            if v > best:
                best, best_mask = v, mask
    return best_mask, best
