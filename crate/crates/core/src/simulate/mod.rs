//! Closed-loop and open-loop trajectory engines and the Monte-Carlo ensemble runner.
//!
//! Record `k` of a trajectory describes `rho_k` together with the outcome and
//! control of the transition `k -> k+1`; the last record carries neither.

mod engine;
mod ensemble;
pub mod output;

use serde::{Deserialize, Serialize};

use crate::control::{ControllerConfig, ControllerKind};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::measurement::QndMeasurement;
use crate::state::{DensityMatrix, DiagonalObservable, HermitianOperator};

pub use engine::{run_deterministic, run_filtered, run_open_loop, run_stochastic};
pub use ensemble::{
    convergence_statistics, run_ensemble, splitmix64, within_three_sigma, AbsorptionFrequency,
    ConvergenceSummary, EnsembleResult, RealizationSummary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoopMode {
    Deterministic,
    Stochastic,
    OpenLoop,
    Filtered,
}

/// How often the state is re-Hermitized, renormalized and re-validated.
pub const REVALIDATE_EVERY: usize = 50;

#[derive(Debug, Clone)]
pub struct LoopConfig {
    pub mode: LoopMode,
    pub p: DiagonalObservable,
    /// Drift for the deterministic loop; treated as zero when absent.
    pub h0: Option<HermitianOperator>,
    pub h1: HermitianOperator,
    pub meas: Option<QndMeasurement>,
    pub controller: ControllerConfig,
    pub steps: usize,
    pub fidelity_threshold: f64,
    /// Keep the full state every `state_stride` steps; 0 disables.
    pub state_stride: usize,
    /// Initial filter estimate used by ensembles in filtered mode (default `I/N`).
    pub rho0_estimate: Option<DensityMatrix>,
}

impl LoopConfig {
    pub fn new(
        mode: LoopMode,
        p: DiagonalObservable,
        h1: HermitianOperator,
        controller: ControllerConfig,
    ) -> Self {
        Self {
            mode,
            p,
            h0: None,
            h1,
            meas: None,
            controller,
            steps: 1000,
            fidelity_threshold: 0.99,
            state_stride: 50,
            rho0_estimate: None,
        }
    }

    pub fn with_measurement(mut self, meas: QndMeasurement) -> Self {
        self.meas = Some(meas);
        self
    }

    pub fn with_drift(mut self, h0: HermitianOperator) -> Self {
        self.h0 = Some(h0);
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.p.dim();
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if !(self.fidelity_threshold > 0.0 && self.fidelity_threshold <= 1.0) {
            return bad(format!(
                "fidelity threshold must lie in (0, 1], got {}",
                self.fidelity_threshold
            ));
        }
        if self.h1.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.h1.dim(),
            });
        }
        if let Some(h0) = &self.h0 {
            if h0.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: h0.dim(),
                });
            }
        }
        if let Some(m) = &self.meas {
            if m.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.dim(),
                });
            }
        }
        if let Some(e) = &self.rho0_estimate {
            if e.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: e.dim(),
                });
            }
        }
        self.controller.validate()?;
        match self.mode {
            LoopMode::Deterministic => {
                if self.controller.kind != ControllerKind::Linear {
                    return bad("deterministic mode needs the linear controller".into());
                }
            }
            LoopMode::OpenLoop => {
                if self.meas.is_none() {
                    return bad("open-loop mode needs a measurement".into());
                }
            }
            LoopMode::Stochastic | LoopMode::Filtered => {
                if self.meas.is_none() {
                    return bad(format!("{:?} mode needs a measurement", self.mode).to_lowercase());
                }
                if self.controller.kind == ControllerKind::Linear {
                    return bad(
                        "measurement-driven loops need the exact-min or quadratic controller"
                            .into(),
                    );
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub k: usize,
    pub u: Option<f64>,
    pub outcome: Option<usize>,
    pub fidelity: f64,
    pub lyapunov: f64,
    pub purity: f64,
    pub state: Option<ComplexMatrix>,
}

/// Extra per-step quantities of a filtered run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FilterRecord {
    pub estimate_fidelity: f64,
    pub trace_distance: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    /// First `k` with fidelity at or above the threshold.
    pub first_hit: Option<usize>,
    pub final_state: DensityMatrix,
    /// Present for filtered runs only, aligned with `records`.
    pub filter: Option<Vec<FilterRecord>>,
    /// Number of times the filter estimate had to be regularized.
    pub filter_recoveries: usize,
}

impl Trajectory {
    pub fn fidelity_curve(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.fidelity).collect()
    }

    pub fn lyapunov_curve(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.lyapunov).collect()
    }

    pub fn controls(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.u).collect()
    }

    pub fn final_record(&self) -> &TrajectoryRecord {
        self.records
            .last()
            .expect("trajectory has at least one record")
    }
}
