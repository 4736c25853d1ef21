//! Experiment configuration: one JSON document, resolved into core types.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qndctl_core::io::{MatrixJson, MeasurementJson, ObservableJson};
use qndctl_core::synthesis::{synthesis_pipeline, ResidualNorm, SynthesisOutput};
use qndctl_core::{
    ControllerConfig, DensityMatrix, DiagonalObservable, HermitianOperator, LoopConfig, LoopMode,
    OperatorRole, PhasePolicy, QndMeasurement, SynthesisProblem,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub observable: ObservableJson,
    pub h1: H1Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h0: Option<DriftJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement: Option<MeasurementJson>,
    pub controller: ControllerConfig,
    #[serde(rename = "loop")]
    pub run: LoopJson,
    pub ensemble: EnsembleJson,
    /// `simulate` exits non-zero when the success rate falls below this.
    #[serde(default)]
    pub success_floor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Where H1 comes from: solved on the fly, a file written by `synthesize`, or inline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum H1Source {
    Synthesize(SynthesisJson),
    Path(PathBuf),
    Matrix(MatrixJson),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisJson {
    /// Shorthand for `alpha1 = alpha2 = 1`.
    #[serde(default)]
    pub sparse: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<ResidualNorm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_bound: Option<f64>,
    #[serde(default)]
    pub phase: PhasePolicy,
}

impl SynthesisJson {
    pub fn problem(&self, p: DiagonalObservable) -> SynthesisProblem {
        let mut problem = SynthesisProblem::new(p);
        if self.sparse {
            problem = problem.sparse();
        }
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut problem.gamma1, self.gamma1);
        set(&mut problem.gamma2, self.gamma2);
        set(&mut problem.alpha1, self.alpha1);
        set(&mut problem.alpha2, self.alpha2);
        if let Some(norm) = self.norm {
            problem.norm = norm;
        }
        problem.trace_bound = self.trace_bound;
        problem
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DriftJson {
    Diag { diag: Vec<f64> },
    Matrix(MatrixJson),
}

/// Initial states: a name, a basis index, a population vector, a mixture, or a full matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateJson {
    Named(NamedState),
    Basis { basis: usize },
    Diag { diag: Vec<f64> },
    Mix { mix: Box<MixJson> },
    Matrix(MatrixJson),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedState {
    MaximallyMixed,
    UniformSuperposition,
}

/// `weight * a + (1 - weight) * b`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixJson {
    pub weight: f64,
    pub a: StateJson,
    pub b: StateJson,
}

impl StateJson {
    pub fn resolve(&self, n: usize) -> Result<DensityMatrix> {
        let rho = match self {
            StateJson::Named(NamedState::MaximallyMixed) => DensityMatrix::maximally_mixed(n),
            StateJson::Named(NamedState::UniformSuperposition) => {
                DensityMatrix::uniform_superposition(n)
            }
            StateJson::Basis { basis } => DensityMatrix::basis(n, *basis)?,
            StateJson::Diag { diag } => {
                if diag.len() != n {
                    bail!(
                        "state has {} populations, system has {n} levels",
                        diag.len()
                    );
                }
                DensityMatrix::new(qndctl_core::ComplexMatrix::from_real_diag(diag))?
            }
            StateJson::Mix { mix } => mix.a.resolve(n)?.mix(&mix.b.resolve(n)?, mix.weight)?,
            StateJson::Matrix(m) => m.to_density()?,
        };
        if rho.dim() != n {
            bail!("state has dimension {}, system has {n} levels", rho.dim());
        }
        Ok(rho)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopJson {
    pub mode: LoopMode,
    pub steps: usize,
    #[serde(default = "default_threshold")]
    pub fidelity_threshold: f64,
    #[serde(default = "default_stride")]
    pub state_stride: usize,
    pub rho0: StateJson,
    /// Filter start for filtered mode; `I/N` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0_estimate: Option<StateJson>,
}

fn default_threshold() -> f64 {
    0.99
}

fn default_stride() -> usize {
    50
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleJson {
    pub realizations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

/// A configuration with every file reference loaded and every operator built.
pub struct Resolved {
    pub config: ExperimentConfig,
    pub p: DiagonalObservable,
    pub h1: HermitianOperator,
    pub synthesis: Option<SynthesisOutput>,
    pub h0: Option<HermitianOperator>,
    pub meas: Option<QndMeasurement>,
    pub rho0: DensityMatrix,
    pub loop_cfg: LoopConfig,
    pub config_hash: String,
}

impl Resolved {
    pub fn master_seed(&self) -> u64 {
        self.config.ensemble.master_seed.unwrap_or(0)
    }
}

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Reads an H1 file, ignoring the provenance keys `synthesize` adds next to the matrix.
pub fn read_h1_file(path: &Path) -> Result<HermitianOperator> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("config_hash");
        obj.remove("convention");
    }
    let m: MatrixJson =
        serde_json::from_value(value).with_context(|| format!("parsing {}", path.display()))?;
    Ok(m.to_hermitian(OperatorRole::Control)?)
}

/// SHA-256 over the canonical JSON of the inputs that determine the numbers.
pub fn hash_json<T: Serialize>(parts: &[&T]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(serde_json::to_vec(part).expect("serializable"));
        hasher.update([0u8]);
    }
    hex::encode(hasher.finalize())
}

/// Loads every referenced file, builds operators, and checks mode requirements.
///
/// Relative paths are taken from `base` (the directory holding the config).
pub fn resolve(mut config: ExperimentConfig, base: &Path) -> Result<Resolved> {
    let p = config.observable.to_observable()?;
    let n = p.dim();
    let (h1, synthesis) = match &config.h1 {
        H1Source::Synthesize(s) => {
            let out = synthesis_pipeline(&s.problem(p.clone()), s.phase)?;
            (out.h1.clone(), Some(out))
        }
        H1Source::Path(rel) => (read_h1_file(&base.join(rel))?, None),
        H1Source::Matrix(m) => (m.to_hermitian(OperatorRole::Control)?, None),
    };
    let h0 = match &config.h0 {
        Some(DriftJson::Diag { diag }) => {
            Some(HermitianOperator::from_real_diag(diag, OperatorRole::Drift))
        }
        Some(DriftJson::Matrix(m)) => Some(m.to_hermitian(OperatorRole::Drift)?),
        None => None,
    };
    let meas = config
        .measurement
        .as_ref()
        .map(|m| m.to_measurement())
        .transpose()?;
    let rho0 = config.run.rho0.resolve(n)?;
    let estimate = config
        .run
        .rho0_estimate
        .as_ref()
        .map(|s| s.resolve(n))
        .transpose()?;

    if config.ensemble.realizations == 0 {
        bail!("ensemble.realizations must be at least 1");
    }
    let mode = config.run.mode;
    if mode != LoopMode::Deterministic && config.ensemble.master_seed.is_none() {
        bail!("ensemble.master_seed is required for {mode:?} runs (or pass --seed)");
    }
    if !(0.0..=1.0).contains(&config.success_floor) {
        bail!("success_floor must lie in [0, 1]");
    }

    let mut loop_cfg = LoopConfig::new(mode, p.clone(), h1.clone(), config.controller);
    loop_cfg.h0 = h0.clone();
    loop_cfg.meas = meas.clone();
    loop_cfg.steps = config.run.steps;
    loop_cfg.fidelity_threshold = config.run.fidelity_threshold;
    loop_cfg.state_stride = config.run.state_stride;
    loop_cfg.rho0_estimate = estimate;
    loop_cfg.validate()?;

    // Output location and thread count never change the numbers.
    let threads = config.ensemble.threads.take();
    let output_dir = config.output_dir.take();
    let h1_json = MatrixJson::from_complex(h1.matrix());
    let config_hash = hash_json::<serde_json::Value>(&[
        &serde_json::to_value(&config)?,
        &serde_json::to_value(&h1_json)?,
    ]);
    config.ensemble.threads = threads;
    config.output_dir = output_dir;

    Ok(Resolved {
        config,
        p,
        h1,
        synthesis,
        h0,
        meas,
        rho0,
        loop_cfg,
        config_hash,
    })
}
