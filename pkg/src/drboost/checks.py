"""Named invariant suite run by ``drboost check``.

Every check draws its own generator from the suite seed and returns the number
of cases examined, the number of violations and the worst margin (smallest
slack; negative means violated).
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional

import numpy as np

from .bandit import BanditConfig, bbga_run
from .boosting import (BoostSpec, MONOTONE, NONMONOTONE, boosted_grad, boosted_set_function,
                       boosted_set_scale, cdf_z_tilde, cdf_z_up,
                       check_corollary_inequalities, nonoblivious_grad_quadrature,
                       nonoblivious_value_quadrature, sample_z_tilde_array, sample_z_up_array)
from .geometry import (BallProduct, BoxConstraint, CardinalityPolytope, MinkowskiSet, PackingPolytope,
                       sphere_sample)
from .minimax import ConvexFacility, MatroidPolytope, MinimaxConfig, boosting_gda, shifted_ball_constraint
from .objectives import (CoverageMonotone, CoverageNonMonotone, FacilityLocation,
                         MultilinearExtension, RegularizedSetFunction, make_monotone_quadratic,
                         make_nonmonotone_quadratic, multilinear_grad_exact, multilinear_value_exact,
                         submodularity_violations)
from .offline import OfflineConfig, boosting_gradient_ascent
from .online import OnlineEnv, delay_uniform, obga_run

DEFAULT_CASES = 200


@dataclass
class CheckResult:
    name: str
    tag: str
    checks: int
    violations: int
    worst_margin: float
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.violations == 0


def _tally(name, tag, margins) -> CheckResult:
    m = np.asarray(margins, dtype=float)
    return CheckResult(name, tag, int(m.size), int(np.sum(m < 0)), float(m.min(initial=np.inf)))


# --- geometry ------------------------------------------------------------------------------


def _random_sets(rng, n=6):
    yield BoxConstraint(-rng.random(n), rng.random(n) + 0.1)
    yield CardinalityPolytope(float(rng.uniform(0.5, n / 2)), rng.uniform(0.2, 1.5, n))
    yield PackingPolytope.random(n, 3, rng)
    yield BallProduct(rng.standard_normal((2, n // 2)), float(rng.uniform(0.2, 1.0)))


def check_projection_idempotent(rng, cases, tol=1e-8):
    margins = []
    for _ in range(cases):
        for C in _random_sets(rng):
            p = C.project(3.0 * rng.standard_normal(C.dim))
            margins.append(tol - np.linalg.norm(C.project(p) - p))
    return margins


def check_projection_nonexpansive(rng, cases, tol=1e-8):
    margins = []
    for _ in range(cases):
        for C in _random_sets(rng):
            x, y = 3.0 * rng.standard_normal(C.dim), 3.0 * rng.standard_normal(C.dim)
            margins.append(np.linalg.norm(x - y) + tol - np.linalg.norm(C.project(x) - C.project(y)))
    return margins


def check_projection_obtuse(rng, cases, tol=1e-6):
    """<x - P(x), c - P(x)> <= 0 for every c in C."""
    margins = []
    for _ in range(cases):
        for C in _random_sets(rng):
            x = 3.0 * rng.standard_normal(C.dim)
            p = C.project(x)
            c = C.sample(rng)
            margins.append(tol - float((x - p) @ (c - p)))
    return margins


def check_dykstra_closed_form(rng, cases, tol=1e-6):
    """Dykstra on a one-row packing polytope against the water-filling projection."""
    margins = []
    for _ in range(cases):
        n = int(rng.integers(2, 10))
        card = CardinalityPolytope(float(rng.uniform(0.3, n / 2)), rng.uniform(0.2, 1.5, n))
        pack = card.as_packing()
        x = 2.0 * rng.standard_normal(n)
        margins.append(tol - np.max(np.abs(pack.project(x) - card.project(x))))
        box = BoxConstraint(np.zeros(n), card.upper)
        loose = PackingPolytope(np.ones((1, n)), [float(card.upper.sum()) + 1.0], card.upper)
        margins.append(tol - np.max(np.abs(loose.project(x) - box.project(x))))
    return margins


def check_minkowski_interior(rng, cases, tol=1e-9):
    """Points of the shrunk set keep a ball of radius delta inside the base set."""
    margins = []
    for _ in range(cases):
        n = int(rng.integers(2, 8))
        base = (CardinalityPolytope(float(rng.uniform(1.0, n)), dim=n) if rng.random() < 0.5
                else BoxConstraint.unit(n))
        y, R = base.inner_ball
        delta = float(rng.uniform(0.05, 0.9)) * R
        S = MinkowskiSet(base, y, delta / (R - delta))
        x = S.project(2.0 * rng.standard_normal(n))
        v = sphere_sample(n, rng)
        margins.append(1.0 if base.contains(x + delta * v, tol) else -1.0)
        margins.append(S.interior_radius(R) - delta + tol)
    return margins


# --- samplers and estimators ----------------------------------------------------------------


def check_sampler_ks(rng, cases, threshold=0.01, samples=100_000):
    margins = []
    grid = np.linspace(0.0, 1.0, 2001)
    for sampler, cdf in [((lambda u, g=g: sample_z_up_array(g, u)), (lambda z, g=g: cdf_z_up(g, z)))
                         for g in (0.3, 0.7, 1.0)] + [(sample_z_tilde_array, cdf_z_tilde)]:
        z = np.sort(sampler(rng.random(samples)))
        emp = np.searchsorted(z, grid, side="right") / samples
        margins.append(threshold - float(np.max(np.abs(emp - cdf(grid)))))
    return margins


def _random_qp_family(rng, n=10):
    return [make_monotone_quadratic(n, rng, noise=0.5), make_nonmonotone_quadratic(n, rng, noise=0.5)]


def check_unbiasedness(rng, cases, samples=20_000, zmax=4.0):
    """Monte Carlo mean of boosted samples within zmax standard errors of the quadrature gradient."""
    margins = []
    for f in _random_qp_family(rng):
        x = rng.random(f.dim)
        specs = ([BoostSpec.monotone(0.5), BoostSpec.monotone(1.0)] if f.monotone
                 else [BoostSpec.nonmonotone(np.zeros(f.dim))])
        for spec in specs:
            draws = np.array([boosted_grad(spec, f, x, rng).estimate for _ in range(samples)])
            ref = nonoblivious_grad_quadrature(spec, f, x)
            se = draws.std(axis=0, ddof=1) / math.sqrt(samples)
            margins.extend(zmax - np.abs(draws.mean(axis=0) - ref) / se)
    return margins


def check_corollaries(rng, cases, tol=1e-5):
    margins = []
    for f, C in [(make_monotone_quadratic(8, rng), BoxConstraint.unit(8)),
                 (make_nonmonotone_quadratic(8, rng, box_safe=True), BoxConstraint.unit(8)),
                 (make_monotone_quadratic(8, rng), PackingPolytope.random(8, 2, rng)),
                 (CoverageMonotone(3), CardinalityPolytope(3, dim=7)),
                 (CoverageNonMonotone(3), BoxConstraint.unit(7))]:
        rep = check_corollary_inequalities(f, C, cases, rng, tol=tol)
        margins.extend(rep.margins + tol)
    return margins


def check_boosted_set_equivalence(rng, cases, rel=1e-4):
    """Quadrature surrogate of a multilinear extension against the boosted set function's extension."""
    margins = []
    for n in (3, 4):
        R = rng.integers(0, 6, size=(5, n)).astype(float)
        mono = FacilityLocation(R)
        for base, mode in [(mono, MONOTONE), (RegularizedSetFunction(mono, 0.3, n / 2), NONMONOTONE)]:
            F = MultilinearExtension(base)
            G = MultilinearExtension(boosted_set_function(base, mode))
            spec = BoostSpec.monotone(1.0) if mode == MONOTONE else BoostSpec.nonmonotone(np.zeros(n))
            for _ in range(max(1, cases // 20)):
                x = rng.random(n)
                lhs = nonoblivious_value_quadrature(spec, F, x)
                rhs = boosted_set_scale(mode) * multilinear_value_exact(G, x)
                margins.append(rel * max(1.0, abs(rhs)) - abs(lhs - rhs))
    return margins


# --- objectives ------------------------------------------------------------------------------


def check_gradients(rng, cases, tol=1e-5):
    margins = []
    h = 1e-6
    fams = [CoverageMonotone(4), CoverageNonMonotone(4), make_monotone_quadratic(6, rng),
            make_nonmonotone_quadratic(6, rng), MultilinearExtension(FacilityLocation(rng.random((4, 5))))]
    for f in fams:
        for _ in range(max(1, cases // 20)):
            x = rng.uniform(0.05, 0.95, f.dim)
            fd = np.array([(f.value(x + h * e) - f.value(x - h * e)) / (2 * h) for e in np.eye(f.dim)])
            margins.append(tol * max(1.0, np.abs(fd).max()) - np.max(np.abs(fd - f.grad(x))))
    return margins


def check_dr_submodular(rng, cases, tol=1e-9):
    """Hessian entries of the quadratics are nonpositive; facility location passes the exchange test."""
    margins = []
    for _ in range(max(1, cases // 20)):
        f = make_nonmonotone_quadratic(6, rng)
        margins.append(-float(np.max(f.H)) + tol)
        fl = FacilityLocation(rng.random((6, 7)))
        margins.append(-float(submodularity_violations(fl, rng, 50)))
    return margins


def check_multilinear_closed_form(rng, cases, tol=1e-9):
    margins = []
    for _ in range(max(1, cases // 20)):
        fl = FacilityLocation(rng.integers(0, 6, size=(4, 6)).astype(float))
        F = MultilinearExtension(fl)
        x = rng.random(6)
        margins.append(tol - abs(F.value(x) - multilinear_value_exact(F, x)))
        margins.append(tol - float(np.max(np.abs(F.grad(x) - multilinear_grad_exact(F, x)))))
    return margins


# --- solvers ----------------------------------------------------------------------------------


def check_offline_feasible(rng, cases):
    margins = []
    f = make_monotone_quadratic(8, rng, noise=1.0)
    C = PackingPolytope.random(8, 2, rng)
    for opt, g in (("I", f), ("II", make_nonmonotone_quadratic(8, rng, noise=1.0))):
        tr = boosting_gradient_ascent(g, C, OfflineConfig(T=50, option=opt, seed=int(rng.integers(1 << 30))))
        margins.extend(np.where(tr.feasible, 1.0, -1.0))
    return margins


def check_online_accounting(rng, cases):
    T = 40
    fs = [make_monotone_quadratic(6, rng, noise=0.5) for _ in range(T)]
    env = OnlineEnv(fs, delay_uniform(T, 1, 5, rng))
    C = PackingPolytope.random(6, 2, rng)
    tr = obga_run(env, C, "I", seed=int(rng.integers(1 << 30)))
    margins = list(np.where(tr.feasible, 1.0, -1.0))
    margins.append(0.0 if int(tr.delivered) + int(tr.dropped) == T else -1.0)
    return margins


def check_bandit_feasible(rng, cases):
    margins = []
    T = max(200, cases)
    for opt, mk in (("I", make_monotone_quadratic),
                    ("II", lambda n, r: make_nonmonotone_quadratic(n, r, box_safe=True))):
        fs = [mk(5, rng) for _ in range(T)]
        tr = bbga_run(fs, BoxConstraint.unit(5), BanditConfig(T=T, option=opt, seed=int(rng.integers(1 << 30))))
        margins.extend(np.where(tr.feasible, 1.0, -1.0))
    return margins


def check_minimax_feasible(rng, cases):
    obj = ConvexFacility.random(3, 2, rng)
    K, M = shifted_ball_constraint(3, 2), MatroidPolytope(3, 2)
    res = boosting_gda(obj, K, M, MinimaxConfig(T=100, seed=int(rng.integers(1 << 30))))
    Mc = M.constraint()
    return ([1.0 if K.contains(x) else -1.0 for x in res.xs]
            + [1.0 if Mc.contains(y) else -1.0 for y in res.ys])


SUITE: Dict[str, List[tuple]] = {
    "geometry": [("projection_idempotent", check_projection_idempotent),
                 ("projection_nonexpansive", check_projection_nonexpansive),
                 ("projection_obtuse_angle", check_projection_obtuse),
                 ("dykstra_vs_closed_form", check_dykstra_closed_form),
                 ("minkowski_interior", check_minkowski_interior)],
    "boosting": [("sampler_ks", check_sampler_ks),
                 ("estimator_unbiased", check_unbiasedness),
                 ("corollary_sweeps", check_corollaries),
                 ("boosted_set_equivalence", check_boosted_set_equivalence)],
    "objectives": [("gradient_finite_difference", check_gradients),
                   ("dr_submodularity", check_dr_submodular),
                   ("multilinear_closed_form", check_multilinear_closed_form)],
    "offline": [("iterates_feasible", check_offline_feasible)],
    "online": [("delayed_feedback_accounting", check_online_accounting)],
    "bandit": [("plays_feasible", check_bandit_feasible)],
    "minimax": [("iterates_feasible", check_minimax_feasible)],
}


def run_invariant_suite(filter: Optional[str] = None, seed: int = 0, cases: int = DEFAULT_CASES) -> dict:
    """Run every check whose tag (or tag.name) contains ``filter``; failures are report content."""
    results: List[CheckResult] = []
    for tag, checks in SUITE.items():
        for name, fn in checks:
            if filter and filter not in tag and filter not in f"{tag}.{name}":
                continue
            rng = np.random.default_rng([seed, len(results)])
            t0 = time.perf_counter()
            res = _tally(name, tag, fn(rng, cases))
            res.seconds = time.perf_counter() - t0
            results.append(res)
    return {
        "suite": filter or "all",
        "checks_run": sum(r.checks for r in results),
        "violations": sum(r.violations for r in results),
        "worst_margin": min((r.worst_margin for r in results), default=None),
        "ok": all(r.ok for r in results),
        "results": [asdict(r) for r in results],
    }


def suite_tags() -> List[str]:
    return list(SUITE)
