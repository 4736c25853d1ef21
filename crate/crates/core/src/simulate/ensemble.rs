use rayon::prelude::*;
use serde::Serialize;

use super::engine::run_one;
use super::{LoopConfig, Trajectory};
use crate::error::{Error, Result};
use crate::state::DensityMatrix;
use crate::tolerance::TOL;

/// The splitmix64 output function; realization `i` is seeded with `splitmix64(master ^ i)`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Serialize)]
pub struct RealizationSummary {
    pub index: usize,
    pub seed: u64,
    pub final_fidelity: f64,
    pub final_lyapunov: f64,
    pub first_hit: Option<usize>,
    /// Basis state holding at least the absorption population at the end.
    pub absorbed: Option<usize>,
    /// Basis state with the largest final population.
    pub leading_state: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_trace_distance: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RealizationFailure {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Serialize)]
pub struct EnsembleResult {
    pub realizations: usize,
    pub master_seed: u64,
    pub fidelity_threshold: f64,
    pub n_star: usize,
    pub per_realization: Vec<RealizationSummary>,
    pub failures: Vec<RealizationFailure>,
    pub mean_fidelity_curve: Vec<f64>,
    pub mean_lyapunov_curve: Vec<f64>,
    pub std_lyapunov_curve: Vec<f64>,
    pub mean_purity_curve: Vec<f64>,
    /// Per basis state, number of realizations absorbed there.
    pub hit_histogram: Vec<usize>,
    pub unabsorbed: usize,
    /// Full trajectories of the successful realizations, by index.
    #[serde(skip)]
    pub trajectories: Vec<(usize, Trajectory)>,
    #[serde(skip)]
    errors: Vec<(usize, Error)>,
}

impl EnsembleResult {
    /// Fails with the first per-realization error, tagged with its index.
    pub fn ensure_all_ok(&mut self) -> Result<()> {
        if self.errors.is_empty() {
            return Ok(());
        }
        let (index, source) = self.errors.remove(0);
        Err(Error::Realization {
            index,
            source: Box::new(source),
        })
    }

    pub fn completed(&self) -> usize {
        self.per_realization.len()
    }
}

/// Pads a curve with its last value up to `len`.
fn padded(curve: &[f64], len: usize) -> impl Iterator<Item = f64> + '_ {
    let last = *curve.last().expect("non-empty curve");
    curve
        .iter()
        .copied()
        .chain(std::iter::repeat(last))
        .take(len)
}

fn summarize(index: usize, seed: u64, cfg: &LoopConfig, t: &Trajectory) -> RealizationSummary {
    let pops = t.final_state.populations();
    let leading_state = pops
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > pops[best] { i } else { best });
    let absorbed = (pops[leading_state] >= TOL.absorbed).then_some(leading_state);
    let last = t.final_record();
    RealizationSummary {
        index,
        seed,
        final_fidelity: pops[cfg.p.n_star()],
        final_lyapunov: last.lyapunov,
        first_hit: t.first_hit,
        absorbed,
        leading_state,
        final_trace_distance: t
            .filter
            .as_ref()
            .and_then(|f| f.last())
            .map(|r| r.trace_distance),
    }
}

/// Runs `n_realizations` independent trajectories. Results do not depend on
/// `threads`: each realization owns its random stream and aggregation is a
/// sequential reduction in index order.
pub fn run_ensemble(
    cfg: &LoopConfig,
    rho0: &DensityMatrix,
    n_realizations: usize,
    master_seed: u64,
    threads: Option<usize>,
) -> Result<EnsembleResult> {
    if n_realizations == 0 {
        return Err(Error::InvalidConfig("need at least one realization".into()));
    }
    cfg.validate()?;
    if rho0.dim() != cfg.p.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.p.dim(),
            found: rho0.dim(),
        });
    }
    let job = |i: usize| {
        let seed = splitmix64(master_seed ^ i as u64);
        (seed, run_one(cfg, rho0, seed))
    };
    let outcomes: Vec<(u64, Result<Trajectory>)> = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(|| (0..n_realizations).into_par_iter().map(job).collect()),
        None => (0..n_realizations).into_par_iter().map(job).collect(),
    };

    let n = cfg.p.dim();
    let mut per_realization = Vec::new();
    let mut failures = Vec::new();
    let mut errors = Vec::new();
    let mut trajectories = Vec::new();
    let mut hit_histogram = vec![0; n];
    let mut unabsorbed = 0;
    for (index, (seed, outcome)) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(t) => {
                let s = summarize(index, seed, cfg, &t);
                match s.absorbed {
                    Some(state) => hit_histogram[state] += 1,
                    None => unabsorbed += 1,
                }
                per_realization.push(s);
                trajectories.push((index, t));
            }
            Err(e) => {
                failures.push(RealizationFailure {
                    index,
                    error: e.to_string(),
                });
                errors.push((index, e));
            }
        }
    }

    let len = trajectories
        .iter()
        .map(|(_, t)| t.records.len())
        .max()
        .unwrap_or(0);
    let count = trajectories.len().max(1) as f64;
    let mut mean_fidelity_curve = vec![0.0; len];
    let mut mean_lyapunov_curve = vec![0.0; len];
    let mut mean_purity_curve = vec![0.0; len];
    let mut sq_lyapunov = vec![0.0; len];
    for (_, t) in &trajectories {
        let purity: Vec<f64> = t.records.iter().map(|r| r.purity).collect();
        for (k, v) in padded(&t.fidelity_curve(), len).enumerate() {
            mean_fidelity_curve[k] += v;
        }
        for (k, v) in padded(&t.lyapunov_curve(), len).enumerate() {
            mean_lyapunov_curve[k] += v;
            sq_lyapunov[k] += v * v;
        }
        for (k, v) in padded(&purity, len).enumerate() {
            mean_purity_curve[k] += v;
        }
    }
    for k in 0..len {
        mean_fidelity_curve[k] /= count;
        mean_lyapunov_curve[k] /= count;
        mean_purity_curve[k] /= count;
    }
    let std_lyapunov_curve = (0..len)
        .map(|k| {
            (sq_lyapunov[k] / count - mean_lyapunov_curve[k].powi(2))
                .max(0.0)
                .sqrt()
        })
        .collect();

    Ok(EnsembleResult {
        realizations: n_realizations,
        master_seed,
        fidelity_threshold: cfg.fidelity_threshold,
        n_star: cfg.p.n_star(),
        per_realization,
        failures,
        mean_fidelity_curve,
        mean_lyapunov_curve,
        std_lyapunov_curve,
        mean_purity_curve,
        hit_histogram,
        unabsorbed,
        trajectories,
        errors,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AbsorptionFrequency {
    pub state: usize,
    pub count: usize,
    pub frequency: f64,
    /// `frequency -/+ 3 sqrt(f (1 - f) / n)`, clipped to [0, 1].
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceSummary {
    pub completed: usize,
    pub failed: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Nearest-rank percentiles over the runs that reached the threshold.
    pub median_hitting_time: Option<usize>,
    pub p90_hitting_time: Option<usize>,
    pub absorption: Vec<AbsorptionFrequency>,
    pub unabsorbed: usize,
}

fn nearest_rank(sorted: &[usize], q: f64) -> Option<usize> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

pub fn convergence_statistics(result: &EnsembleResult) -> ConvergenceSummary {
    let completed = result.per_realization.len();
    let mut hits: Vec<usize> = result
        .per_realization
        .iter()
        .filter_map(|r| r.first_hit)
        .collect();
    hits.sort_unstable();
    let denom = completed.max(1) as f64;
    let absorption = result
        .hit_histogram
        .iter()
        .enumerate()
        .map(|(state, &count)| {
            let f = count as f64 / denom;
            let half = 3.0 * (f * (1.0 - f) / denom).sqrt();
            AbsorptionFrequency {
                state,
                count,
                frequency: f,
                ci_low: (f - half).max(0.0),
                ci_high: (f + half).min(1.0),
            }
        })
        .collect();
    ConvergenceSummary {
        completed,
        failed: result.failures.len(),
        successes: hits.len(),
        success_rate: if completed == 0 {
            0.0
        } else {
            hits.len() as f64 / denom
        },
        median_hitting_time: nearest_rank(&hits, 0.5),
        p90_hitting_time: nearest_rank(&hits, 0.9),
        absorption,
        unabsorbed: result.unabsorbed,
    }
}

/// Whether `count` successes in `n` trials are within three binomial standard
/// deviations of the expected `n p`.
pub fn within_three_sigma(count: usize, n: usize, p: f64) -> bool {
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    (count as f64 - mean).abs() <= 3.0 * sd
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // first outputs of the reference generator seeded with 0
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn nearest_rank_percentiles() {
        let v = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
        assert_eq!(nearest_rank(&v, 0.5), Some(5));
        assert_eq!(nearest_rank(&v, 0.9), Some(9));
        assert_eq!(nearest_rank(&[], 0.5), None);
        assert_eq!(nearest_rank(&[4], 0.9), Some(4));
    }

    #[test]
    fn three_sigma_band() {
        assert!(within_three_sigma(500, 2000, 0.25));
        assert!(within_three_sigma(558, 2000, 0.25));
        assert!(!within_three_sigma(559, 2000, 0.25));
    }
}
