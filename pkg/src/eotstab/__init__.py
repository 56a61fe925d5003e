"""Discrete entropic optimal transport: Sinkhorn potentials and their stability."""

__version__ = "0.1.0"

from .measures import (
    CostMatrix,
    DiscreteMeasure,
    PerturbationSpec,
    build_cost,
    perturb,
    sample_subgaussian,
)
from .sinkhorn import (
    Coupling,
    Potentials,
    SolveReport,
    coupling_from_potentials,
    half_step_phi,
    half_step_psi,
    iterate_marginals,
    solve,
)
from .diagnostics import (
    ConditionReport,
    NormalizedPotentials,
    condition_report,
    dual_value,
    normalize,
    primal_value,
    schroedinger_residual,
)
from .metrics import (
    INAPPLICABLE,
    bounded_lipschitz,
    ky_fan,
    pushforward_kolmogorov,
    relative_entropy,
    tv_distance,
    tv_distance_couplings,
)
from .oracle import brute_force_solve, potentials_from_coupling


__all__ = [
    "CostMatrix", "DiscreteMeasure", "PerturbationSpec", "build_cost", "perturb", "sample_subgaussian",
    "Coupling", "Potentials", "SolveReport", "coupling_from_potentials", "half_step_phi",
    "half_step_psi", "iterate_marginals", "solve",
    "ConditionReport", "NormalizedPotentials", "condition_report", "dual_value", "normalize",
    "primal_value", "schroedinger_residual",
    "INAPPLICABLE", "bounded_lipschitz", "ky_fan", "pushforward_kolmogorov", "relative_entropy",
    "tv_distance", "tv_distance_couplings",
    "brute_force_solve", "potentials_from_coupling",
]
