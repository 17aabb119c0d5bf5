"""Structure-preservation diagnostics and adversarial certificates for planar Hamiltonian integrators."""

from .adversary import (
    Certificate,
    ConstructionParams,
    SweepGrid,
    Thresholds,
    Verdict,
    construct_adversarial_potential,
    evaluate_verdict,
    generate_certificate,
    measure_c,
)
from .diagnostics import (
    StepMap,
    consistency_probe,
    continuity_probe,
    energy_drift,
    jacobian,
    measure_translation_constant,
    polygon_area_ratio,
    sweep,
)
from .flows import bump_flow, exact_flow, time_of_flight
from .integrators import IntegratorConfig, StepResult, iterate, shipped_methods
from .multidof import LiftKind, ReducedIntegrator, reduce_to_planar
from .phase import (
    Bump,
    BumpPotential,
    FreeParticle,
    Harmonic,
    LiftProduct,
    LiftSingle,
    PhasePoint,
    QueryTape,
    SeparableBump,
    eval_derivative,
)

__version__ = "0.1.0"
