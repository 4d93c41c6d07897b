"""Non-oblivious boosting: mixing-coefficient samplers, one-sample estimators,
quadrature oracles for the surrogate function and its gradient, and constants.

Two surrogates are supported.

* monotone, with weak-DR parameter ``gamma``: the surrogate gradient is
  ``int_0^1 exp(gamma (z - 1)) grad f(z x) dz``;
* non-monotone, anchored at a feasible point ``lower``: the surrogate gradient
  is ``int_0^1 grad f(z/2 (x - lower) + lower) / (8 (1 - z/2)^3) dz``.

Each weight, normalised to a density on [0, 1], gives the law of the mixing
coefficient ``z``; one gradient sample at the mixed point, times the weight's
total mass, is an unbiased estimate of the surrogate gradient.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .geometry import ConstraintSet, as_point
from .objectives import Objective, SetFunction, all_masks

MONOTONE = "monotone"
NONMONOTONE = "nonmonotone"

QUAD_PANELS = 32
QUAD_NODES = 16
ZERO_LIMIT_EPS = 1e-10


class BoostingConfigError(ValueError):
    pass


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not 0.0 < gamma <= 1.0:
        raise BoostingConfigError(f"gamma must lie in (0, 1], got {gamma}")
    return gamma


def monotone_coefficient(gamma: float) -> float:
    """Mass of exp(gamma (z - 1)) on [0, 1], i.e. (1 - e^{-gamma}) / gamma."""
    gamma = _check_gamma(gamma)
    return -math.expm1(-gamma) / gamma


NONMONOTONE_COEFFICIENT = 3.0 / 8.0


@dataclass(frozen=True)
class BoostSpec:
    mode: str = MONOTONE
    gamma: float = 1.0
    lower: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mode not in (MONOTONE, NONMONOTONE):
            raise BoostingConfigError(f"unknown boosting mode {self.mode!r}")
        if self.mode == MONOTONE:
            _check_gamma(self.gamma)
        elif self.lower is None:
            raise BoostingConfigError("non-monotone boosting needs the anchor point `lower`")

    @classmethod
    def monotone(cls, gamma: float = 1.0) -> "BoostSpec":
        return cls(MONOTONE, gamma)

    @classmethod
    def nonmonotone(cls, lower) -> "BoostSpec":
        return cls(NONMONOTONE, 1.0, as_point(lower))

    @property
    def coefficient(self) -> float:
        if self.mode == MONOTONE:
            return monotone_coefficient(self.gamma)
        return NONMONOTONE_COEFFICIENT

    def anchor(self, n: int) -> np.ndarray:
        return np.zeros(n) if self.mode == MONOTONE else as_point(self.lower, n)

    def probe(self, x: np.ndarray, z: float) -> np.ndarray:
        if self.mode == MONOTONE:
            return z * x
        lo = self.lower
        return 0.5 * z * (x - lo) + lo

    def sample_z(self, rng: np.random.Generator) -> float:
        u = rng.random()
        return sample_z_up(self.gamma, u) if self.mode == MONOTONE else sample_z_tilde(u)

    def weight(self, z):
        """Un-normalised weight of the surrogate gradient integral."""
        z = np.asarray(z, dtype=float)
        if self.mode == MONOTONE:
            return np.exp(self.gamma * (z - 1.0))
        return 1.0 / (8.0 * (1.0 - 0.5 * z) ** 3)


# --- samplers ------------------------------------------------------------------


def sample_z_up(gamma: float, u: float) -> float:
    """Inverse CDF of the density gamma e^{gamma(z-1)} / (1 - e^{-gamma}) on [0, 1]."""
    gamma = _check_gamma(gamma)
    if not 0.0 <= u <= 1.0:
        raise BoostingConfigError("u must lie in [0, 1]")
    return math.log1p(u * math.expm1(gamma)) / gamma


def sample_z_tilde(u: float) -> float:
    """Inverse CDF of the density 1 / (3 (1 - z/2)^3) on [0, 1]."""
    if not 0.0 <= u <= 1.0:
        raise BoostingConfigError("u must lie in [0, 1]")
    return 2.0 * (1.0 - (1.0 + 3.0 * u) ** -0.5)


def cdf_z_up(gamma: float, z):
    gamma = _check_gamma(gamma)
    return np.expm1(gamma * np.asarray(z, dtype=float)) / math.expm1(gamma)


def cdf_z_tilde(z):
    z = np.asarray(z, dtype=float)
    return ((1.0 - 0.5 * z) ** -2 - 1.0) / 3.0


def density_z_up(gamma: float, z):
    gamma = _check_gamma(gamma)
    return gamma * np.exp(gamma * (np.asarray(z, dtype=float) - 1.0)) / -math.expm1(-gamma)


def density_z_tilde(z):
    return 1.0 / (3.0 * (1.0 - 0.5 * np.asarray(z, dtype=float)) ** 3)


def sample_z_up_array(gamma: float, u: np.ndarray) -> np.ndarray:
    gamma = _check_gamma(gamma)
    return np.log1p(u * math.expm1(gamma)) / gamma


def sample_z_tilde_array(u: np.ndarray) -> np.ndarray:
    return 2.0 * (1.0 - (1.0 + 3.0 * u) ** -0.5)


# --- estimators ----------------------------------------------------------------


@dataclass
class BoostedGradientSample:
    z: float
    estimate: np.ndarray
    probe: np.ndarray


def check_spec_for(spec: BoostSpec, f: Objective):
    if spec.mode == MONOTONE and not f.monotone:
        raise BoostingConfigError("monotone boosting requested for a non-monotone objective")


def boosted_grad(spec: BoostSpec, f: Objective, x, rng: np.random.Generator,
                 grad_oracle: Optional[Callable] = None) -> BoostedGradientSample:
    """One-sample estimate coefficient * noisy_grad(probe(x, z)) with z from the mixing law."""
    check_spec_for(spec, f)
    x = as_point(x, f.dim)
    z = spec.sample_z(rng)
    probe = spec.probe(x, z)
    g = f.noisy_grad(probe, rng) if grad_oracle is None else grad_oracle(probe, rng)
    return BoostedGradientSample(z, spec.coefficient * g, probe)


def averaged_boosted_grad(spec: BoostSpec, f: Objective, x, rng, batch: int = 1) -> np.ndarray:
    acc = np.zeros(f.dim)
    for _ in range(batch):
        acc += boosted_grad(spec, f, x, rng).estimate
    return acc / batch


# --- quadrature oracles ----------------------------------------------------------


@lru_cache(maxsize=None)
def composite_gauss_legendre(panels: int = QUAD_PANELS, nodes: int = QUAD_NODES, a: float = 0.0,
                             b: float = 1.0):
    """Nodes and weights of composite Gauss-Legendre with equal panels on [a, b]."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    z = (mids[:, None] + half[:, None] * t[None, :]).reshape(-1)
    wz = (half[:, None] * w[None, :]).reshape(-1)
    z.setflags(write=False)
    wz.setflags(write=False)
    return z, wz


def integrate(fn: Callable[[float], np.ndarray], panels: int = QUAD_PANELS,
              nodes: int = QUAD_NODES, a: float = 0.0, b: float = 1.0):
    z, w = composite_gauss_legendre(panels, nodes, a, b)
    acc = None
    for zi, wi in zip(z, w):
        term = wi * np.asarray(fn(zi), dtype=float)
        acc = term if acc is None else acc + term
    return acc


def nonoblivious_grad_quadrature(spec: BoostSpec, f: Objective, x, panels: int = QUAD_PANELS,
                                 nodes: int = QUAD_NODES) -> np.ndarray:
    x = as_point(x, f.dim)
    return integrate(lambda z: spec.weight(z) * f.grad(spec.probe(x, z)), panels, nodes)


def nonoblivious_value_quadrature(spec: BoostSpec, f: Objective, x, panels: int = QUAD_PANELS,
                                  nodes: int = QUAD_NODES, tol: float = 1e-9) -> float:
    """Surrogate value with the removable 1/z singularity at the origin handled by its limit."""
    x = as_point(x, f.dim)
    if spec.mode == MONOTONE:
        f0 = f.value(np.zeros(f.dim))
        if abs(f0) > tol:
            raise BoostingConfigError(
                f"monotone surrogate value needs f(0) = 0 (got {f0:.3e}); shift the objective first")
        gamma = spec.gamma
        lim = math.exp(-gamma) * float(x @ f.grad(np.zeros(f.dim)))

        def integrand(z):
            if z < ZERO_LIMIT_EPS:
                return lim
            return math.exp(gamma * (z - 1.0)) / z * f.value(z * x)
    else:
        lo = as_point(spec.lower, f.dim)
        f_lo = f.value(lo)
        lim = float((x - lo) @ f.grad(lo)) / 8.0

        def integrand(z):
            if z < ZERO_LIMIT_EPS:
                return lim
            return (f.value(spec.probe(x, z)) - f_lo) / (4.0 * z * (1.0 - 0.5 * z) ** 3)

    return float(integrate(integrand, panels, nodes))


# --- inequality sweeps -----------------------------------------------------------


@dataclass
class InequalityReport:
    trials: int
    violations: int
    worst_margin: float
    margins: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    @property
    def ok(self) -> bool:
        return self.violations == 0


def check_corollary_inequalities(f: Objective, C: ConstraintSet, trials: int,
                                 rng: np.random.Generator, spec: Optional[BoostSpec] = None,
                                 tol: float = 1e-5) -> InequalityReport:
    """Sweep random feasible pairs (x, y) through the surrogate's first-order bound.

    monotone:     <grad F(x), y - x> >= (1 - e^{-gamma}) f(y) - f(x)
    non-monotone: <grad F(x), y - x> >= (1 - |lower|_inf) / 4 * f(y) - f((x + lower) / 2)

    The margin is LHS - RHS; a violation is a margin below -tol.
    """
    if spec is None:
        spec = BoostSpec.monotone(f.gamma) if f.monotone else BoostSpec.nonmonotone(C.min_inf_norm_point())
    margins = np.empty(trials)
    for t in range(trials):
        x, y = C.sample(rng), C.sample(rng)
        lhs = float(nonoblivious_grad_quadrature(spec, f, x) @ (y - x))
        if spec.mode == MONOTONE:
            rhs = -math.expm1(-spec.gamma) * f.value(y) - f.value(x)
        else:
            lo = spec.lower
            rhs = (1.0 - float(np.max(np.abs(lo), initial=0.0))) / 4.0 * f.value(y) - f.value(0.5 * (x + lo))
        margins[t] = lhs - rhs
    return InequalityReport(trials, int(np.sum(margins < -tol)), float(margins.min(initial=np.inf)),
                            margins)


# --- constants ---------------------------------------------------------------------


@dataclass(frozen=True)
class BoostingConstants:
    smoothness: float
    lipschitz: float
    variance: float
    theta: float


def boosting_constants(gamma: float, L: float, L1: float, sigma: float, rX: float,
                       mode: str = MONOTONE) -> BoostingConstants:
    """Smoothness, Lipschitz constant, estimator variance bound and ratio parameter of the surrogate.

    ``rX`` is the domain radius in monotone mode and the domain diameter in
    non-monotone mode (the quantity each variance bound is stated in).
    """
    if mode == MONOTONE:
        gamma = _check_gamma(gamma)
        one_minus = -math.expm1(-gamma)
        L_g = L * (gamma + math.exp(-gamma) - 1.0) / gamma ** 2
        lip = one_minus * L1 / gamma
        var = (2.0 * one_minus ** 2 * sigma ** 2 / gamma ** 2
               + 2.0 * L ** 2 * rX ** 2 * (-math.expm1(-2.0 * gamma)) / (3.0 * gamma))
        return BoostingConstants(L_g, lip, var, 1.0 / one_minus)
    if mode == NONMONOTONE:
        var = 3.0 / 8.0 * sigma ** 2 + (math.log(64.0) - 4.0) / 12.0 * L ** 2 * rX ** 2
        return BoostingConstants(L / 8.0, 3.0 * L1 / 8.0, var, 0.5)
    raise BoostingConfigError(f"unknown boosting mode {mode!r}")


# --- discrete counterpart ------------------------------------------------------------

BOOSTED_SET_MAX_GROUND = 12


@lru_cache(maxsize=None)
def boosted_set_coefficient(a: int, b: int, mode: str = MONOTONE) -> float:
    """m_{a,b} for 0 <= b <= a."""
    if not 0 <= b <= a:
        raise BoostingConfigError(f"need 0 <= b <= a, got a={a}, b={b}")
    if mode == MONOTONE:
        e1 = math.e - 1.0
        return float(integrate(lambda p: math.exp(p) / e1 * p ** b * (1.0 - p) ** (a - b)))
    if mode == NONMONOTONE:
        return float(integrate(lambda p: (0.5 * p) ** b * (1.0 - 0.5 * p) ** (a - b - 3))) / 8.0
    raise BoostingConfigError(f"unknown boosting mode {mode!r}")


class BoostedSetFunction(SetFunction):
    """g(A) = sum_{nonempty B <= A} m_{|A|-1, |B|-1} (f(B) - f(empty))."""

    def __init__(self, base: SetFunction, mode: str = MONOTONE):
        if base.n > BOOSTED_SET_MAX_GROUND:
            raise BoostingConfigError(
                f"boosted set function enumerates subset pairs; ground set limited to {BOOSTED_SET_MAX_GROUND}")
        empty = np.zeros(base.n, dtype=bool)
        f_empty = base.eval(empty)
        if mode == MONOTONE and abs(f_empty) > 1e-12:
            raise BoostingConfigError("monotone boosted set function requires f(empty) = 0")
        self.base = base
        self.mode = mode
        self.n = base.n
        self.monotone = base.monotone
        masks = all_masks(base.n)
        base_vals = base.eval_many(masks) - f_empty
        sizes = masks.sum(axis=1)
        self._table = np.zeros(len(masks))
        codes = masks @ (1 << np.arange(base.n))
        for r, mask in enumerate(masks):
            a = int(sizes[r])
            if a == 0:
                continue
            idx = np.flatnonzero(mask)
            total = 0.0
            for size in range(1, a + 1):
                coef = boosted_set_coefficient(a - 1, size - 1, mode)
                for sub in itertools.combinations(idx, size):
                    total += coef * base_vals[int(np.sum(1 << np.array(sub)))]
            self._table[int(codes[r])] = total

    def eval(self, mask) -> float:
        mask = np.asarray(mask, dtype=bool)
        return float(self._table[int(np.sum(1 << np.flatnonzero(mask)))])


def boosted_set_function(base: SetFunction, mode: str = MONOTONE) -> BoostedSetFunction:
    return BoostedSetFunction(base, mode)


def boosted_set_scale(mode: str) -> float:
    """Factor relating the surrogate of the extension to the extension of the boosted set function."""
    return (math.e - 1.0) / math.e if mode == MONOTONE else 1.0
