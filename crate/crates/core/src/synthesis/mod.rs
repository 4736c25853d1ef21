//! Connectivity-cone synthesis of the control Hamiltonian.

pub mod assumptions;
pub mod cone;
pub mod pipeline;
pub mod solver;

pub use assumptions::{assumption_report, Assumption, AssumptionReport, Check, Status};
pub use cone::{
    cone_violations, edge_list, hamiltonian_of_r, project_cone, project_cone_with_trace_bound,
    r_of_hamiltonian, ConnectivityMatrix, PhasePolicy,
};
pub use pipeline::{synthesis_pipeline, SynthesisOutput};
pub use solver::{
    solve_synthesis, verify_lambda, LambdaCheck, LambdaEntry, ResidualNorm, SynthesisProblem,
    SynthesisResult, LAMBDA_MARGIN,
};
