"""Bell-diagonal state identification with a probe qubit, and its cavity-QED gates."""

from .cavity import (
    CavityParams,
    EffectiveCoefficients,
    FidelityReport,
    TimeSeries,
    benchmark_params,
    coefficients_for_step,
    effective_hamiltonian,
    full_gate_fidelity,
    full_hamiltonian,
    gate_time,
    omega_b_for_step,
    simulate_comparison,
    tune_delta1,
)
from .protocol import (
    BellCoefficients,
    IdentificationResult,
    ProtocolStepReport,
    StepId,
    apply_step,
    bds_density,
    build_step_unitary,
    recover_coefficients,
    run_ideal_identification,
)
from .sampling import BellDiagonalEstimator, EstimateReport, ShotPlan, estimate

__all__ = [
    "BellCoefficients",
    "BellDiagonalEstimator",
    "CavityParams",
    "EffectiveCoefficients",
    "EstimateReport",
    "FidelityReport",
    "IdentificationResult",
    "ProtocolStepReport",
    "ShotPlan",
    "StepId",
    "TimeSeries",
    "apply_step",
    "bds_density",
    "benchmark_params",
    "build_step_unitary",
    "coefficients_for_step",
    "effective_hamiltonian",
    "estimate",
    "full_gate_fidelity",
    "full_hamiltonian",
    "gate_time",
    "omega_b_for_step",
    "recover_coefficients",
    "run_ideal_identification",
    "simulate_comparison",
    "tune_delta1",
]
