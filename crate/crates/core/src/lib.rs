//! Synthesis of control Hamiltonians for measurement-driven quantum feedback,
//! and closed-loop simulation of the resulting stochastic process.
//!
//! Indices are 0-based throughout.

pub mod control;
pub mod error;
pub mod io;
pub mod linalg;
pub mod measurement;
pub mod simulate;
pub mod state;
pub mod synthesis;
pub mod tolerance;

pub use control::{
    curvature_at_eigenstate, exact_min_feedback, expected_v_after, linear_feedback, lyapunov_v,
    lyapunov_v_eps, quadratic_feedback, ControlDecision, Controller, ControllerConfig,
    ControllerKind, TieBreak,
};
pub use error::{Error, Result};
pub use linalg::{commutator, eigh, spectrum, ComplexMatrix, HermitianEigen, RealMatrix, C64};
pub use measurement::{
    apply_outcome, check_distinguishability, expected_update, outcome_probabilities, photon_box,
    sample_outcome, MeasurementOutcome, QndMeasurement,
};
pub use simulate::{
    convergence_statistics, run_deterministic, run_ensemble, run_filtered, run_open_loop,
    run_stochastic, EnsembleResult, LoopConfig, LoopMode, Trajectory, TrajectoryRecord,
};
pub use state::{
    evolve, expectation, fidelity_to_basis, hermitian_expm, validate_density, DensityMatrix,
    DensityTolerance, DiagonalObservable, HermitianOperator, OperatorRole,
};
pub use synthesis::{
    assumption_report, hamiltonian_of_r, project_cone, r_of_hamiltonian, solve_synthesis,
    synthesis_pipeline, verify_lambda, ConnectivityMatrix, PhasePolicy, ResidualNorm,
    SynthesisProblem, SynthesisResult,
};
pub use tolerance::{ToleranceConfig, TOL};
