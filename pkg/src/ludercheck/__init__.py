"""Projective measurements with reduction rules, and a black-box test for them.

The package models an apparatus that measures a degenerate observable and
reduces states by the Lüders rule, the von Neumann rule, or something in
between, then decides from measurement statistics alone which family an
unknown apparatus belongs to.
"""

from .linalg import (
    ConvergenceError,
    DEFAULT_TOL,
    MAX_DIM,
    adjoint,
    apply_spectral_function,
    hermitian_eig,
    is_hermitian,
    is_projector,
    is_unitary,
    projector_from_vectors,
    tensor,
)
from .quantum import (
    DensityMatrix,
    OutcomeDistribution,
    PureState,
    Refinement,
    SpectralDecomposition,
    TOTAL_SPIN_SQ,
    UnnormalizedDensity,
    born_distribution,
    build_sigma,
    build_sigma_prime,
    build_spin_operator,
    luders_channel,
    luders_update,
    measure_pure,
    sample_outcome,
    spectral_decompose,
)
from .apparatus import (
    MeasurementApparatus,
    MeasurementRecord,
    Stage,
    make_full_von_neumann,
    make_luders,
    make_partial,
)
from .protocol import (
    Classification,
    EmptySelectionError,
    Ensemble,
    Mode,
    ProtocolConfig,
    RepeatabilityError,
    StageKind,
    StageResult,
    Verdict,
    classify_refinement_oracle,
    discriminate,
    prepare_ensemble,
    required_ensemble_size,
    run_stage,
)
from .scenarios import (
    ConsecutiveSpec,
    FullVonNeumannSpec,
    LudersSpec,
    PartialSpec,
    Scenario,
    build_consecutive,
    builtin_scenarios,
    default_initial_state,
    get_builtin,
    instantiate,
    resolve_expression,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DEFAULT_TOL",
    "MAX_DIM",
    "adjoint",
    "apply_spectral_function",
    "hermitian_eig",
    "is_hermitian",
    "is_projector",
    "is_unitary",
    "projector_from_vectors",
    "tensor",
    "DensityMatrix",
    "OutcomeDistribution",
    "PureState",
    "Refinement",
    "SpectralDecomposition",
    "TOTAL_SPIN_SQ",
    "UnnormalizedDensity",
    "born_distribution",
    "build_sigma",
    "build_sigma_prime",
    "build_spin_operator",
    "luders_channel",
    "luders_update",
    "measure_pure",
    "sample_outcome",
    "spectral_decompose",
    "MeasurementApparatus",
    "MeasurementRecord",
    "Stage",
    "make_full_von_neumann",
    "make_luders",
    "make_partial",
    "Classification",
    "EmptySelectionError",
    "Ensemble",
    "Mode",
    "ProtocolConfig",
    "RepeatabilityError",
    "StageKind",
    "StageResult",
    "Verdict",
    "classify_refinement_oracle",
    "discriminate",
    "prepare_ensemble",
    "required_ensemble_size",
    "run_stage",
    "ConsecutiveSpec",
    "FullVonNeumannSpec",
    "LudersSpec",
    "PartialSpec",
    "Scenario",
    "build_consecutive",
    "builtin_scenarios",
    "default_initial_state",
    "get_builtin",
    "instantiate",
    "resolve_expression",
    "__version__",
]
