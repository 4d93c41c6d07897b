"""Convex feasible regions and Euclidean projections.

Every constraint family exposes the same small surface:

    project(x)        Euclidean projection P_C(x)
    contains(x, tol)  membership with an absolute tolerance
    diameter, radius  max ||x - y|| and max ||x|| over the set (exact or upper bounds)
    min_inf_norm_point()
    inner_ball        optional (center, R) with B(center, R) inside the set

Projections onto boxes and capped-simplex style cardinality polytopes are
closed form (the latter up to a scalar root find); general packing polytopes
{0 <= x <= u, Ax <= b} use Dykstra's alternating projections.
"""

from __future__ import annotations

import math
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import brentq, linprog

FEAS_TOL = 1e-7
DYKSTRA_TOL = 1e-9
DYKSTRA_MAX_ITER = 10_000


class GeometryError(ValueError):
    """Base class for malformed geometry inputs."""


class DimensionError(GeometryError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"dimension mismatch: expected {expected}, got {got}")
        self.expected = expected
        self.got = got


class UnsupportedConstraintError(GeometryError):
    pass


class ProjectionError(RuntimeError):
    """Raised when an iterative projection fails to converge."""

    def __init__(self, message: str, residual: float, iterations: int, point: np.ndarray):
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations
        self.point = point


def as_point(x, dim: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float).reshape(-1)
    if dim is not None and arr.shape[0] != dim:
        raise DimensionError(dim, arr.shape[0])
    if not np.all(np.isfinite(arr)):
        raise GeometryError("point has non-finite entries")
    return arr


class ConstraintSet:
    """Abstract convex, compact feasible region in R^n."""

    dim: int
    down_closed: bool = False

    def project(self, x) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    @property
    def radius(self) -> float:
        raise NotImplementedError

    @property
    def inner_ball(self) -> Optional[Tuple[np.ndarray, float]]:
        return None

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """An axis-aligned box containing the set."""
        raise NotImplementedError

    def min_inf_norm_point(self) -> np.ndarray:
        zero = np.zeros(self.dim)
        explicit = getattr(self, "lowest_point", None)
        if explicit is not None:
            return np.array(explicit, dtype=float)
        if self.contains(zero):
            return zero
        raise UnsupportedConstraintError(
            f"{type(self).__name__}: origin infeasible and no explicit minimum-norm point supplied"
        )

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """A random feasible point (projection of a uniform draw over `bounds`; not uniform on C)."""
        lo, hi = self.bounds()
        return self.project(rng.uniform(lo, hi))


class BoxConstraint(ConstraintSet):
    def __init__(self, lower, upper):
        self.lower = as_point(lower)
        self.upper = as_point(upper, self.lower.shape[0])
        if np.any(self.lower > self.upper):
            raise GeometryError("box requires lower <= upper componentwise")
        self.dim = self.lower.shape[0]
        self.down_closed = bool(np.all(self.lower == 0.0))

    @classmethod
    def unit(cls, n: int) -> "BoxConstraint":
        return cls(np.zeros(n), np.ones(n))

    def project(self, x) -> np.ndarray:
        return project_box(x, self)

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        x = as_point(x, self.dim)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(np.maximum(np.abs(self.lower), np.abs(self.upper))))

    @property
    def inner_ball(self):
        center = 0.5 * (self.lower + self.upper)
        return center, float(np.min(0.5 * (self.upper - self.lower)))

    def bounds(self):
        return self.lower.copy(), self.upper.copy()

    def min_inf_norm_point(self) -> np.ndarray:
        # clamping 0 minimises every |x_i| at once, hence the max
        return np.clip(np.zeros(self.dim), self.lower, self.upper)

    def sample(self, rng):
        return rng.uniform(self.lower, self.upper)


def project_box(x, box: BoxConstraint) -> np.ndarray:
    x = as_point(x, box.dim)
    return np.clip(x, box.lower, box.upper)


class CardinalityPolytope(ConstraintSet):
    """{x : 0 <= x <= upper, sum(x) <= k}."""

    down_closed = True

    def __init__(self, k: float, upper=None, dim: Optional[int] = None):
        if k <= 0:
            raise GeometryError("cardinality budget must be positive")
        if upper is None:
            if dim is None:
                raise GeometryError("need `upper` or `dim`")
            upper = np.ones(dim)
        self.upper = as_point(upper, dim)
        if np.any(self.upper < 0):
            raise GeometryError("upper caps must be nonnegative")
        self.k = float(k)
        self.dim = self.upper.shape[0]

    def project(self, x) -> np.ndarray:
        return project_cardinality(x, self)

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        x = as_point(x, self.dim)
        return bool(np.all(x >= -tol) and np.all(x <= self.upper + tol) and x.sum() <= self.k + tol)

    @property
    def diameter(self) -> float:
        umax = float(self.upper.max(initial=0.0))
        return min(float(np.linalg.norm(self.upper)), math.sqrt(2.0 * self.k * umax))

    @property
    def radius(self) -> float:
        umax = float(self.upper.max(initial=0.0))
        return math.sqrt(min(self.k * umax, float(self.upper @ self.upper)))

    @property
    def inner_ball(self):
        # largest ball centred on the diagonal t*1 fitting the box and the budget face
        n, umin = self.dim, float(self.upper.min())
        t = min(umin / 2.0, self.k / (n + math.sqrt(n)))
        radius = min(t, umin - t, (self.k - n * t) / math.sqrt(n))
        return np.full(n, t), float(radius)

    def bounds(self):
        return np.zeros(self.dim), self.upper.copy()

    def as_packing(self) -> "PackingPolytope":
        return PackingPolytope(np.ones((1, self.dim)), np.array([self.k]), self.upper)


def project_cardinality(x, c: CardinalityPolytope) -> np.ndarray:
    """Projection onto {0 <= z <= u, sum z <= k}.

    The minimiser is clamp(x - lam, 0, u) with lam >= 0 the multiplier of the
    budget row; lam = 0 when the clamped point already fits, otherwise it is
    the root of the piecewise-linear, nonincreasing map lam -> sum(clamp) - k.
    """
    x = as_point(x, c.dim)
    z = np.clip(x, 0.0, c.upper)
    if z.sum() <= c.k:
        return z

    def excess(lam: float) -> float:
        return float(np.clip(x - lam, 0.0, c.upper).sum() - c.k)

    hi = float(np.max(x))
    lam = brentq(excess, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return np.clip(x - lam, 0.0, c.upper)


class PackingPolytope(ConstraintSet):
    """{x : 0 <= x <= upper, A x <= b} with A >= 0 and b >= 0."""

    down_closed = True

    def __init__(self, A, b, upper=None, inner_ball: Optional[Tuple[np.ndarray, float]] = None,
                 tol: float = DYKSTRA_TOL, max_iter: int = DYKSTRA_MAX_ITER):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise GeometryError("A and b disagree on the number of rows")
        if np.any(A < 0) or np.any(b < 0):
            raise GeometryError("packing polytope needs A >= 0 and b >= 0")
        self.A, self.b = A, b
        self.dim = A.shape[1]
        self.upper = np.ones(self.dim) if upper is None else as_point(upper, self.dim)
        self.tol = tol
        self.max_iter = max_iter
        self._inner_ball = None
        if inner_ball is not None:
            self._inner_ball = (as_point(inner_ball[0], self.dim), float(inner_ball[1]))
        self._row_norm2 = np.einsum("ij,ij->i", A, A)

    @classmethod
    def random(cls, n: int, m: int, rng: np.random.Generator, b: float = 1.0, u: float = 1.0):
        return cls(rng.uniform(0.0, 1.0, size=(m, n)), np.full(m, b), np.full(n, u))

    def project(self, x) -> np.ndarray:
        try:
            return project_dykstra(x, self, self.tol, self.max_iter)
        except ProjectionError as err:
            # Dykstra can crawl near degenerate vertices; finish with an exact active-set solve
            polished = _active_set_projection(as_point(x, self.dim), self, err.point)
            if polished is None:
                raise
            return polished

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        x = as_point(x, self.dim)
        return bool(np.all(x >= -tol) and np.all(x <= self.upper + tol)
                    and np.all(self.A @ x <= self.b + tol))

    @property
    def diameter(self) -> float:
        # box diameter; an upper bound for the polytope
        return float(np.linalg.norm(self.upper))

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.upper))

    @property
    def inner_ball(self):
        return self._inner_ball

    def bounds(self):
        return np.zeros(self.dim), self.upper.copy()

    def with_chebyshev_ball(self) -> "PackingPolytope":
        """Copy of this polytope carrying its Chebyshev (largest inscribed) ball."""
        center, radius = chebyshev_ball(self)
        return PackingPolytope(self.A, self.b, self.upper, inner_ball=(center, radius),
                               tol=self.tol, max_iter=self.max_iter)


def chebyshev_ball(p: PackingPolytope) -> Tuple[np.ndarray, float]:
    """Largest ball inside the polytope, by the usual LP over (center, R)."""
    n = p.dim
    norms = np.sqrt(p._row_norm2)
    rows = [np.hstack([p.A, norms[:, None]])]
    rhs = [p.b]
    eye = np.eye(n)
    rows.append(np.hstack([-eye, np.ones((n, 1))]))  # R <= x_i
    rhs.append(np.zeros(n))
    rows.append(np.hstack([eye, np.ones((n, 1))]))  # x_i + R <= u_i
    rhs.append(p.upper)
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    res = linprog(cost, A_ub=np.vstack(rows), b_ub=np.concatenate(rhs),
                  bounds=[(None, None)] * n + [(0, None)], method="highs")
    if not res.success:
        raise UnsupportedConstraintError(f"Chebyshev-ball LP failed: {res.message}")
    return res.x[:n], float(res.x[-1])


def project_dykstra(x, p: PackingPolytope, tol: float = DYKSTRA_TOL,
                    max_iter: int = DYKSTRA_MAX_ITER) -> np.ndarray:
    """Dykstra's alternating projections onto the halfspaces a_j.x <= b_j and the box.

    Stops when one full sweep moves both the iterate and the correction
    increments by at most `tol` and every constraint holds within `tol`; the
    iterate alone can sit still for many sweeps while the increments drift.
    The box is projected last, so the result always satisfies the bounds exactly.
    """
    x0 = as_point(x, p.dim)
    A, b, norm2 = p.A, p.b, p._row_norm2
    boxed = np.clip(x0, 0.0, p.upper)
    if np.all(A @ boxed <= b):
        # the box projection already lies in the polytope, so it is the projection
        return boxed
    m = A.shape[0]
    cur = x0.copy()
    incr = np.zeros((m + 1, p.dim))
    active = np.zeros(m, dtype=bool)  # rows with a nonzero Dykstra increment
    residual = np.inf
    for it in range(1, max_iter + 1):
        prev = cur
        prev_incr = incr.copy()
        for j in range(m):
            if active[j]:
                y = cur + incr[j]
            else:
                y = cur
            viol = A[j] @ y - b[j]
            if viol > 0.0 and norm2[j] > 0.0:
                step = (viol / norm2[j]) * A[j]
                incr[j] = step
                active[j] = True
                cur = y - step
            elif active[j]:
                incr[j] = 0.0
                active[j] = False
                cur = y
        y = cur + incr[m]
        new = np.clip(y, 0.0, p.upper)
        incr[m] = y - new
        cur = new
        change = max(float(np.linalg.norm(cur - prev)), float(np.linalg.norm(incr - prev_incr)))
        residual = max(change, float(np.max(A @ cur - b, initial=0.0)))
        if residual <= tol:
            return cur
    raise ProjectionError("Dykstra projection did not converge", residual, max_iter, cur)


def _active_set_projection(x0, p: PackingPolytope, warm, max_iter: Optional[int] = None):
    """Primal active-set method for min |x - x0|^2 / 2 over {A x <= b, 0 <= x <= upper}.

    The warm start is scaled towards the origin until feasible, which is possible because
    the polytope is down-closed. Returns None if the iteration budget runs out.
    """
    n = p.dim
    C = np.vstack([p.A, -np.eye(n), np.eye(n)])
    d = np.concatenate([p.b, np.zeros(n), p.upper])
    x = np.clip(np.asarray(warm, dtype=float), 0.0, p.upper)
    load = p.A @ x
    over = load > p.b
    if np.any(over):
        x = x * float(np.min(p.b[over] / load[over]))
    scale = 1.0 + float(np.max(np.abs(x0)))
    eps = 1e-12 * scale
    work: list = []
    for i in np.flatnonzero(d - C @ x <= eps):
        if np.linalg.matrix_rank(C[work + [i]]) == len(work) + 1:
            work.append(int(i))
    for _ in range(max_iter or 50 * (n + C.shape[0])):
        r = x0 - x
        if work:
            Cw = C[work]
            step = r - Cw.T @ np.linalg.lstsq(Cw @ Cw.T, Cw @ r, rcond=None)[0]
        else:
            step = r
        if np.linalg.norm(step) <= eps:
            if not work:
                return x
            lam = np.linalg.lstsq(C[work].T, r, rcond=None)[0]
            k = int(np.argmin(lam))
            if lam[k] >= -eps:
                return np.clip(x, 0.0, p.upper)
            work.pop(k)
            continue
        rate = C @ step
        alpha, block = 1.0, None
        for i in np.flatnonzero(rate > eps):
            if i in work:
                continue
            a = max(0.0, (d[i] - C[i] @ x) / rate[i])
            if a < alpha:
                alpha, block = a, int(i)
        x = x + alpha * step
        if block is not None:
            work.append(block)
    return None


class BallProduct(ConstraintSet):
    """Cartesian product of Euclidean balls B(c_i, r) on consecutive coordinate blocks."""

    def __init__(self, centers, radius: float):
        self.centers = np.atleast_2d(np.asarray(centers, dtype=float))
        self.blocks, self.block_dim = self.centers.shape
        self.r = float(radius)
        if self.r <= 0:
            raise GeometryError("ball radius must be positive")
        self.dim = self.blocks * self.block_dim

    def project(self, x) -> np.ndarray:
        x = as_point(x, self.dim).reshape(self.blocks, self.block_dim)
        d = x - self.centers
        norms = np.linalg.norm(d, axis=1, keepdims=True)
        scale = np.minimum(1.0, self.r / np.maximum(norms, 1e-300))
        return (self.centers + d * scale).reshape(-1)

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        x = as_point(x, self.dim).reshape(self.blocks, self.block_dim)
        return bool(np.all(np.linalg.norm(x - self.centers, axis=1) <= self.r + tol))

    @property
    def diameter(self) -> float:
        return 2.0 * self.r * math.sqrt(self.blocks)

    @property
    def radius(self) -> float:
        return float(np.sqrt(np.sum((np.linalg.norm(self.centers, axis=1) + self.r) ** 2)))

    @property
    def inner_ball(self):
        return self.centers.reshape(-1).copy(), self.r

    def bounds(self):
        c = self.centers.reshape(-1)
        return c - self.r, c + self.r

    def min_inf_norm_point(self) -> np.ndarray:
        raise UnsupportedConstraintError("BallProduct carries no minimum-norm point")


class MinkowskiSet(ConstraintSet):
    """The copy of `base` shrunk about the pole y by the factor 1/(1 + shrink).

    Equivalently {x in base : pi_y(x) <= 1/(1 + shrink)} for the Minkowski
    gauge pi_y. If B(y, R) lies in base, every member x satisfies
    B(x, R * shrink / (1 + shrink)) inside base.
    """

    def __init__(self, base: ConstraintSet, pole, shrink: float):
        if shrink <= 0:
            raise GeometryError("Minkowski shrink parameter must be positive")
        self.base = base
        self.pole = as_point(pole, base.dim)
        self.shrink = float(shrink)
        self.scale = 1.0 / (1.0 + self.shrink)
        self.dim = base.dim

    def project(self, x) -> np.ndarray:
        return minkowski_project(x, self)

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        x = as_point(x, self.dim)
        return self.base.contains(self.pole + (x - self.pole) / self.scale, tol / self.scale)

    @property
    def diameter(self) -> float:
        return self.scale * self.base.diameter

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.pole)) + self.scale * (self.base.radius + float(np.linalg.norm(self.pole)))

    def bounds(self):
        lo, hi = self.base.bounds()
        return self.pole + self.scale * (lo - self.pole), self.pole + self.scale * (hi - self.pole)

    def interior_radius(self, R: float) -> float:
        return self.shrink / (1.0 + self.shrink) * R


def minkowski_project(x, m: MinkowskiSet) -> np.ndarray:
    # uniform scaling about the pole commutes with Euclidean projection
    x = as_point(x, m.dim)
    y = m.pole
    return y + m.scale * (m.base.project(y + (x - y) / m.scale) - y)


def sphere_sample(d: int, rng: np.random.Generator) -> np.ndarray:
    if d < 1:
        raise GeometryError("sphere dimension must be >= 1")
    while True:
        g = rng.standard_normal(d)
        nrm = np.linalg.norm(g)
        if nrm > 1e-12:
            return g / nrm


def ball_sample(d: int, rng: np.random.Generator) -> np.ndarray:
    return sphere_sample(d, rng) * rng.random() ** (1.0 / d)


def min_inf_norm_point(C: ConstraintSet) -> np.ndarray:
    return C.min_inf_norm_point()
