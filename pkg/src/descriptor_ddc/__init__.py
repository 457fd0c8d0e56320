"""Data-driven analysis and stabilization of discrete-time descriptor systems.

The plant ``E x[k+1] = A x[k] + B u[k]`` is treated as unknown. Designed
experiments turn recorded states into the matrices ``D_E``, ``D_A``, ``D_B``
(equal to ``inv(s0 E - A)`` times ``E``, ``A``, ``B``), from which the system
type, four controllability notions and a stabilizing state feedback follow.
The known-model side (:mod:`descriptor_ddc.model`) plays the plant in
simulation and serves as the reference in tests.
"""
from .analysis import (
    ControllabilityReport,
    TypeVerdict,
    assemble_WD,
    data_report,
    identify_type,
    oracle_report,
    oracle_type,
    select_threshold,
    test_c_controllability,
    test_causality,
    test_r_controllability,
    test_y_controllability,
)
from .errors import (
    AmbiguousSpectrum,
    BadShift,
    DecompositionFailure,
    DegenerateCertificate,
    DegenerateData,
    DescriptorError,
    EigenFailure,
    InsufficientHorizon,
    InvalidMatrix,
    LmiInfeasible,
    NothingToStabilize,
    NotRegular,
)
from .experiments import (
    DataMatrices,
    ExperimentConfig,
    SimulatedPlant,
    assemble_data_matrices,
    collect_data_matrices,
    design_exp1_inputs,
    run_experiment1,
    run_experiment2,
    run_experiment3,
)
from .linalg import (
    AUTO,
    RankDecision,
    core_nilpotent,
    eigenvalues,
    finite_generalized_eigenvalues,
    nullspace_basis,
    range_basis,
    rank_with_tolerance,
)
from .model import (
    DescriptorSystem,
    SlowFastForm,
    Trajectory,
    circuit_system,
    consistent_initial_state,
    is_regular,
    simulate,
    slow_fast_decompose,
)
from .stabilization import (
    StabilizationResult,
    assemble_gain,
    certify_closed_loop,
    check_persistency,
    data_decompose,
    solve_stabilizing_lmi,
    stabilize,
)

__version__ = "0.1.0"
