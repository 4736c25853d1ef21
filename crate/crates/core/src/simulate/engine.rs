use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FilterRecord, LoopConfig, LoopMode, Trajectory, TrajectoryRecord, REVALIDATE_EVERY};
use crate::control::Controller;
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};
use crate::measurement::{apply_outcome, outcome_probabilities, sample_outcome, QndMeasurement};
use crate::state::{density_violations, hermitian_expm, DensityMatrix, DensityTolerance};
use crate::tolerance::TOL;

fn expect_mode(cfg: &LoopConfig, modes: &[LoopMode]) -> Result<()> {
    cfg.validate()?;
    if modes.contains(&cfg.mode) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "engine expects mode {:?}, config has {:?}",
            modes, cfg.mode
        )))
    }
}

fn check_rho(cfg: &LoopConfig, rho: &DensityMatrix) -> Result<()> {
    if rho.dim() == cfg.p.dim() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: cfg.p.dim(),
            found: rho.dim(),
        })
    }
}

fn record(cfg: &LoopConfig, k: usize, rho: &DensityMatrix) -> TrajectoryRecord {
    let pops = rho.populations();
    let lyapunov = cfg.p.sigma().iter().zip(&pops).map(|(s, r)| s * r).sum();
    let keep = cfg.state_stride > 0 && k.is_multiple_of(cfg.state_stride);
    TrajectoryRecord {
        k,
        u: None,
        outcome: None,
        fidelity: pops[cfg.p.n_star()],
        lyapunov,
        purity: rho.purity(),
        state: keep.then(|| rho.matrix().clone()),
    }
}

/// Periodic clean-up against round-off drift, then a full invariant check.
fn maintain(rho: DensityMatrix, step: usize) -> Result<DensityMatrix> {
    if !step.is_multiple_of(REVALIDATE_EVERY) {
        return Ok(rho);
    }
    let rho = rho.renormalized();
    let violations = density_violations(rho.matrix(), DensityTolerance::default())?;
    if violations.is_empty() {
        Ok(rho)
    } else {
        Err(Error::StateInvariant { step, violations })
    }
}

fn is_diagonal(u: &ComplexMatrix) -> bool {
    let n = u.dim();
    (0..n).all(|i| (0..n).all(|j| i == j || u[(i, j)] == C64::new(0.0, 0.0)))
}

/// `U rho U^dag`. A diagonal `U` only rotates coherence phases, so populations are kept bit-exact.
fn conjugate(rho: &DensityMatrix, u: &ComplexMatrix) -> DensityMatrix {
    if !is_diagonal(u) {
        return DensityMatrix::from_trusted(rho.matrix().conjugate_by(u));
    }
    let m = rho.matrix();
    DensityMatrix::from_trusted(ComplexMatrix::from_fn(m.dim(), |i, j| {
        if i == j {
            m[(i, i)]
        } else {
            u[(i, i)] * m[(i, j)] * u[(j, j)].conj()
        }
    }))
}

/// `rho -> e^{-iH0} e^{-iH1 u} rho e^{iH1 u} e^{iH0}` with the linear feedback law,
/// until the fidelity threshold is reached or `steps` transitions have been made.
pub fn run_deterministic(cfg: &LoopConfig, rho0: &DensityMatrix) -> Result<Trajectory> {
    expect_mode(cfg, &[LoopMode::Deterministic])?;
    check_rho(cfg, rho0)?;
    let ctl = Controller::new(&cfg.p, &cfg.h1, None, cfg.controller)?;
    let drift = match &cfg.h0 {
        Some(h0) => Some(hermitian_expm(h0, 1.0)?),
        None => None,
    };
    let mut rho = rho0.clone();
    let mut records = Vec::with_capacity(cfg.steps.min(100_000) + 1);
    let mut first_hit = None;
    for k in 0..=cfg.steps {
        let mut rec = record(cfg, k, &rho);
        if rec.fidelity >= cfg.fidelity_threshold {
            first_hit = Some(k);
            records.push(rec);
            break;
        }
        if k == cfg.steps {
            records.push(rec);
            break;
        }
        let u = ctl.linear(&rho)?.u;
        rec.u = Some(u);
        records.push(rec);
        let mut unitary = ctl.propagator(u);
        if let Some(d) = &drift {
            unitary = d * &unitary;
        }
        rho = maintain(conjugate(&rho, &unitary), k + 1)?;
    }
    Ok(Trajectory {
        records,
        first_hit,
        final_state: rho,
        filter: None,
        filter_recoveries: 0,
    })
}

/// Repeated QND measurement with no control.
pub fn run_open_loop(cfg: &LoopConfig, rho0: &DensityMatrix, seed: u64) -> Result<Trajectory> {
    expect_mode(cfg, &[LoopMode::OpenLoop])?;
    check_rho(cfg, rho0)?;
    let meas = cfg.meas.as_ref().expect("validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rho = rho0.clone();
    let mut records = Vec::with_capacity(cfg.steps + 1);
    let mut first_hit = None;
    for k in 0..=cfg.steps {
        let mut rec = record(cfg, k, &rho);
        if first_hit.is_none() && rec.fidelity >= cfg.fidelity_threshold {
            first_hit = Some(k);
        }
        if k < cfg.steps {
            let out = sample_outcome(meas, &rho, &mut rng)?;
            rec.outcome = Some(out.mu);
            rho = maintain(apply_outcome(meas, out.mu, &rho)?, k + 1)?;
        }
        records.push(rec);
    }
    Ok(Trajectory {
        records,
        first_hit,
        final_state: rho,
        filter: None,
        filter_recoveries: 0,
    })
}

/// Measurement, then feedback computed on the post-measurement state, then `e^{-iH1 u}`.
pub fn run_stochastic(cfg: &LoopConfig, rho0: &DensityMatrix, seed: u64) -> Result<Trajectory> {
    expect_mode(cfg, &[LoopMode::Stochastic])?;
    check_rho(cfg, rho0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    measured_loop(cfg, rho0, None, &mut rng)
}

/// Like [`run_stochastic`], except that the control is computed from a filter
/// estimate driven by the same outcomes and controls as the true state.
pub fn run_filtered(
    cfg: &LoopConfig,
    rho0_true: &DensityMatrix,
    rho0_estimate: &DensityMatrix,
    seed: u64,
) -> Result<Trajectory> {
    expect_mode(cfg, &[LoopMode::Filtered])?;
    check_rho(cfg, rho0_true)?;
    check_rho(cfg, rho0_estimate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    measured_loop(cfg, rho0_true, Some(rho0_estimate.clone()), &mut rng)
}

const FILTER_MIX: f64 = 1e-3;

/// Conditions the estimate on outcome `mu`; regularizes once if the estimate
/// considers the outcome impossible.
fn update_estimate(
    meas: &QndMeasurement,
    est: &DensityMatrix,
    mu: usize,
    step: usize,
    recoveries: &mut usize,
) -> Result<DensityMatrix> {
    let p = outcome_probabilities(meas, est)?[mu];
    if p > TOL.p_floor {
        return apply_outcome(meas, mu, est);
    }
    let mixed = DensityMatrix::maximally_mixed(est.dim()).mix(est, FILTER_MIX)?;
    let p2 = outcome_probabilities(meas, &mixed)?[mu];
    if p2 <= TOL.p_floor {
        return Err(Error::FilterBreakdown {
            step,
            mu,
            probability: p2,
        });
    }
    *recoveries += 1;
    apply_outcome(meas, mu, &mixed)
}

fn measured_loop<R: Rng>(
    cfg: &LoopConfig,
    rho0: &DensityMatrix,
    mut estimate: Option<DensityMatrix>,
    rng: &mut R,
) -> Result<Trajectory> {
    let meas = cfg.meas.as_ref().expect("validated");
    let ctl = Controller::new(&cfg.p, &cfg.h1, Some(meas), cfg.controller)?;
    let mut rho = rho0.clone();
    let mut records = Vec::with_capacity(cfg.steps + 1);
    let mut filter = estimate.as_ref().map(|_| Vec::with_capacity(cfg.steps + 1));
    let mut recoveries = 0;
    let mut first_hit = None;
    for k in 0..=cfg.steps {
        let mut rec = record(cfg, k, &rho);
        if first_hit.is_none() && rec.fidelity >= cfg.fidelity_threshold {
            first_hit = Some(k);
        }
        if let (Some(est), Some(log)) = (&estimate, filter.as_mut()) {
            log.push(FilterRecord {
                estimate_fidelity: est.populations()[cfg.p.n_star()],
                trace_distance: rho.trace_distance(est)?,
            });
        }
        if k == cfg.steps {
            records.push(rec);
            break;
        }
        let out = sample_outcome(meas, &rho, rng)?;
        let post = apply_outcome(meas, out.mu, &rho)?;
        let decision = match estimate.take() {
            Some(est) => {
                let est_post = update_estimate(meas, &est, out.mu, k, &mut recoveries)?;
                let d = ctl.decide(&est_post, rng)?;
                let unitary = ctl.propagator(d.u);
                estimate = Some(maintain(conjugate(&est_post, &unitary), k + 1)?);
                d
            }
            None => ctl.decide(&post, rng)?,
        };
        rec.u = Some(decision.u);
        rec.outcome = Some(out.mu);
        records.push(rec);
        let unitary = ctl.propagator(decision.u);
        rho = maintain(conjugate(&post, &unitary), k + 1)?;
    }
    Ok(Trajectory {
        records,
        first_hit,
        final_state: rho,
        filter,
        filter_recoveries: recoveries,
    })
}

/// Runs whichever engine `cfg.mode` selects.
pub(crate) fn run_one(cfg: &LoopConfig, rho0: &DensityMatrix, seed: u64) -> Result<Trajectory> {
    match cfg.mode {
        LoopMode::Deterministic => run_deterministic(cfg, rho0),
        LoopMode::OpenLoop => run_open_loop(cfg, rho0, seed),
        LoopMode::Stochastic => run_stochastic(cfg, rho0, seed),
        LoopMode::Filtered => {
            let est = cfg
                .rho0_estimate
                .clone()
                .unwrap_or_else(|| DensityMatrix::maximally_mixed(cfg.p.dim()));
            run_filtered(cfg, rho0, &est, seed)
        }
    }
}
