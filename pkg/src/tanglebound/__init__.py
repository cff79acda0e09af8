"""Certified lower bounds on the three-tangle of three-qubit states from witness data."""

from .bound import (
    BoundProblem,
    BoundResult,
    Certificate,
    Decomposition,
    EquivalenceReport,
    InnerResult,
    Measure,
    OptimizerSettings,
    SearchSpace,
    Status,
    bound_via_convexification,
    certify_decomposition,
    constrained_pure_minimum,
    equivalence_report,
    fidelity_bound,
    fidelity_curve,
    fidelity_problem,
    inner_infimum,
    legendre_bound,
    legendre_sweep,
    noisy_ghz_fidelity,
    noisy_ghz_state,
    restricted_problem,
    skew_problem,
)
from .charcurve import (
    AnalyticBenchmarks,
    GhzwPoint,
    benchmarks,
    restricted_bound_analytic,
    skew_characteristic,
    skew_qmin,
    tau3_closed_form,
    z_state,
)
from .envelope import (
    ConvexEnvelope,
    SampledCurve,
    convexity_diagnostic,
    envelope_eval,
    lower_convex_envelope,
)
from .qstate import (
    GHZ,
    W,
    W_BAR,
    Observable,
    PureState,
    TangleBreakdown,
    apply_local_unitary,
    expectation,
    permutation_symmetrize,
    projector_witness,
    skew_witness,
    three_tangle,
)

__version__ = "0.1.0"
