"""Risk sharing among law-invariant agents with heterogeneous beliefs on finite spaces."""
from .capital import (
    GlobalMarket,
    GlobalRequirement,
    RiskMeasurementRegime,
    eta_global,
    eta_single,
    verify_assumption,
)
from .comonotone import ComonotoneScheme, improve_allocation, improve_block, is_locally_comonotone, realize
from .diagnostics import compatibility_check, interior_membership, is_admissible, mix_compatible
from .measures import (
    Entropic,
    EssentialSup,
    Expectation,
    ExpectedShortfall,
    MinOf,
    Mixture,
    Shifted,
    SpectralTail,
    StarHull,
    ValueAtRisk,
    acceptance,
    asymptotic_cone_contains,
    conjugate,
    evaluate,
    ray_test,
    star_hull_evaluate,
)
from .order import cx_dominates, icx_dominates
from .scenario import parse_scenario, serialize
from .sharing import (
    SharingProblem,
    SolverOptions,
    brute_force_oracle,
    closed_form_entropic,
    exactness_probe,
    p_based_check,
    precheck,
    solve,
)
from .space import Belief, belief_from_block_density, belief_from_blocks, build_space, reference_belief, uniform_space

__version__ = "0.1.0"
