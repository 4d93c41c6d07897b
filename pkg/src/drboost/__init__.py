"""Boosted gradient methods for continuous DR-submodular maximization."""

from .boosting import BoostSpec, boosted_grad, nonoblivious_grad_quadrature, nonoblivious_value_quadrature
from .geometry import (BallProduct, BoxConstraint, CardinalityPolytope, MinkowskiSet, PackingPolytope)
from .objectives import (CoverageMonotone, CoverageNonMonotone, FacilityLocation, MultilinearExtension,
                         QuadraticObjective)
from .offline import OfflineConfig, boosting_gradient_ascent, continuous_greedy_fw, measured_fw, sga_baseline
from .online import OnlineEnv, obga_run, oga_baseline
from .bandit import BanditConfig, bbga_run
from .minimax import MinimaxConfig, boosting_gda

__all__ = [
    "BallProduct", "BanditConfig", "BoostSpec", "BoxConstraint", "CardinalityPolytope", "CoverageMonotone",
    "CoverageNonMonotone", "FacilityLocation", "MinimaxConfig", "MinkowskiSet", "MultilinearExtension",
    "OfflineConfig", "OnlineEnv", "PackingPolytope", "QuadraticObjective", "bbga_run", "boosted_grad",
    "boosting_gda", "boosting_gradient_ascent", "continuous_greedy_fw", "measured_fw",
    "nonoblivious_grad_quadrature", "nonoblivious_value_quadrature", "obga_run", "oga_baseline", "sga_baseline",
]

__version__ = "0.1.0"
