//! Solve, check the sign condition and build H1 in one call.

use crate::error::{Error, Result};
use crate::state::HermitianOperator;
use crate::synthesis::assumptions::{assumption_report, AssumptionReport};
use crate::synthesis::cone::{hamiltonian_of_r, ConnectivityMatrix, PhasePolicy};
use crate::synthesis::solver::{solve_synthesis, SynthesisProblem, SynthesisResult};
use crate::tolerance::TOL;

#[derive(Debug, Clone)]
pub struct SynthesisOutput {
    pub h1: HermitianOperator,
    pub r: ConnectivityMatrix,
    pub result: SynthesisResult,
    pub report: AssumptionReport,
    pub warnings: Vec<String>,
}

/// Refuses to build H1 when the sign condition fails on `R sigma`; the caller
/// is expected to retune gamma/alpha and try again.
pub fn synthesis_pipeline(
    problem: &SynthesisProblem,
    policy: PhasePolicy,
) -> Result<SynthesisOutput> {
    let mut warnings = Vec::new();
    if !problem.p.minimum_is_unique(TOL.nondegenerate) {
        warnings.push(format!(
            "minimum of P is not unique; using n* = {}",
            problem.p.n_star()
        ));
    }
    let result = solve_synthesis(problem)?;
    if !result.feasible {
        return Err(Error::InfeasibleLambda {
            lambda_tilde: result.lambda_tilde,
        });
    }
    let r = result.r.clone();
    let h1 = hamiltonian_of_r(&r, policy)?;
    let report = assumption_report(&problem.p, None, Some(&h1), None);
    Ok(SynthesisOutput {
        h1,
        r,
        result,
        report,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::DiagonalObservable;

    #[test]
    fn two_level_hamiltonian() {
        let p = DiagonalObservable::new(vec![2.0, 1.0]).unwrap();
        let out = synthesis_pipeline(&SynthesisProblem::new(p), PhasePolicy::Positive).unwrap();
        let h = out.h1.matrix();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((h[(0, 1)].re - s).abs() < 1e-6);
        assert!((h[(1, 0)].re - s).abs() < 1e-6);
        assert!(h[(0, 0)].norm() < 1e-12 && h[(1, 1)].norm() < 1e-12);
    }

    #[test]
    fn hamiltonian_magnitudes_follow_r() {
        let p = DiagonalObservable::new(vec![
            51.7022, 82.0324, 10.0114, 40.2333, 24.6756, 19.2339, 28.6260, 44.5561,
        ])
        .unwrap();
        let out = synthesis_pipeline(&SynthesisProblem::new(p), PhasePolicy::Positive).unwrap();
        let r = out.r.matrix();
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    let want = (r[(i, j)] / 2.0).sqrt();
                    assert!((out.h1.matrix()[(i, j)].norm() - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn constant_observable_is_refused() {
        let p = DiagonalObservable::with_n_star(vec![1.0; 4], 0).unwrap();
        let err = synthesis_pipeline(&SynthesisProblem::new(p), PhasePolicy::Positive).unwrap_err();
        assert!(matches!(err, Error::InfeasibleLambda { .. }));
    }
}
