//! Quantum non-demolition measurements: Kraus operators that are all diagonal
//! in the computational basis.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};
use crate::state::DensityMatrix;
use crate::tolerance::TOL;

/// Diagonal Kraus operators `M_mu = sum_n c[mu][n] |n><n|`.
#[derive(Clone, Debug, PartialEq)]
pub struct QndMeasurement {
    n: usize,
    coeffs: Vec<Vec<C64>>,
    /// |c[mu][n]|^2, cached.
    weights: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeasurementOutcome {
    pub mu: usize,
    pub probability: f64,
}

impl QndMeasurement {
    /// Validates completeness `sum_mu |c[mu][n]|^2 = 1` for every level.
    pub fn new(coeffs: Vec<Vec<C64>>) -> Result<Self> {
        let m = coeffs.len();
        if m == 0 {
            return Err(Error::InvalidMeasurement("no outcomes".into()));
        }
        let n = coeffs[0].len();
        if n < 2 {
            return Err(Error::DimensionTooSmall { min: 2, found: n });
        }
        if let Some(row) = coeffs.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: row.len(),
            });
        }
        if coeffs
            .iter()
            .flatten()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite);
        }
        let weights: Vec<Vec<f64>> = coeffs
            .iter()
            .map(|row| row.iter().map(|z| z.norm_sqr()).collect())
            .collect();
        for level in 0..n {
            let total: f64 = weights.iter().map(|w| w[level]).sum();
            if (total - 1.0).abs() > TOL.completeness {
                return Err(Error::InvalidMeasurement(format!(
                    "completeness fails at level {level}: sum |c|^2 = {total}"
                )));
            }
        }
        Ok(Self { n, coeffs, weights })
    }

    pub fn from_real(coeffs: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            coeffs
                .into_iter()
                .map(|r| r.into_iter().map(|v| C64::new(v, 0.0)).collect())
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn outcomes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Vec<C64>] {
        &self.coeffs
    }

    /// |c[mu][n]|^2.
    pub fn weight(&self, mu: usize, n: usize) -> f64 {
        self.weights[mu][n]
    }

    pub fn kraus(&self, mu: usize) -> ComplexMatrix {
        let mut k = ComplexMatrix::zeros(self.n);
        for (i, &c) in self.coeffs[mu].iter().enumerate() {
            k[(i, i)] = c;
        }
        k
    }

    fn check_dim(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.dim() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: rho.dim(),
            });
        }
        Ok(())
    }
}

/// Two-outcome measurement with `c_0n = cos(phi0 + n theta)` and `c_1n = sin(phi0 + n theta)`.
pub fn photon_box(n: usize, phi0: f64, theta: f64) -> Result<QndMeasurement> {
    if n < 2 {
        return Err(Error::DimensionTooSmall { min: 2, found: n });
    }
    let angle = |k: usize| phi0 + k as f64 * theta;
    QndMeasurement::from_real(vec![
        (0..n).map(|k| angle(k).cos()).collect(),
        (0..n).map(|k| angle(k).sin()).collect(),
    ])
}

/// `p_mu = sum_n |c_mu,n|^2 rho_nn`, clamped at zero.
pub fn outcome_probabilities(meas: &QndMeasurement, rho: &DensityMatrix) -> Result<Vec<f64>> {
    meas.check_dim(rho)?;
    let pops = rho.populations();
    Ok(meas
        .weights
        .iter()
        .map(|w| {
            w.iter()
                .zip(&pops)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .max(0.0)
        })
        .collect())
}

fn collapse(meas: &QndMeasurement, mu: usize, rho: &DensityMatrix, p: f64) -> DensityMatrix {
    let c = &meas.coeffs[mu];
    let m = rho.matrix();
    let inv = 1.0 / p;
    DensityMatrix::from_trusted(ComplexMatrix::from_fn(meas.n, |i, j| {
        c[i] * c[j].conj() * m[(i, j)] * inv
    }))
}

/// Post-measurement state `M_mu rho M_mu^dag / p_mu`.
pub fn apply_outcome(
    meas: &QndMeasurement,
    mu: usize,
    rho: &DensityMatrix,
) -> Result<DensityMatrix> {
    meas.check_dim(rho)?;
    if mu >= meas.outcomes() {
        return Err(Error::IndexOutOfRange {
            index: mu,
            len: meas.outcomes(),
        });
    }
    let p = outcome_probabilities(meas, rho)?[mu];
    if p <= TOL.p_floor {
        return Err(Error::OutcomeImpossible { mu, probability: p });
    }
    Ok(collapse(meas, mu, rho, p))
}

/// Draws an outcome by inverting the cumulative distribution on one uniform variate.
pub fn sample_outcome<R: Rng + ?Sized>(
    meas: &QndMeasurement,
    rho: &DensityMatrix,
    rng: &mut R,
) -> Result<MeasurementOutcome> {
    let probs = outcome_probabilities(meas, rho)?;
    Ok(sample_from(&probs, rng.random::<f64>()))
}

pub(crate) fn sample_from(probs: &[f64], draw: f64) -> MeasurementOutcome {
    let total: f64 = probs.iter().sum();
    let target = draw * total;
    let mut acc = 0.0;
    let mut last = None;
    for (mu, &p) in probs.iter().enumerate() {
        if p <= TOL.p_floor {
            continue;
        }
        acc += p;
        last = Some(mu);
        if acc > target {
            return MeasurementOutcome { mu, probability: p };
        }
    }
    // Round-off can leave `acc` a hair below `target`; fall back to the last possible outcome.
    let mu = last.unwrap_or(0);
    MeasurementOutcome {
        mu,
        probability: probs[mu],
    }
}

/// Every pair `(n1, n2)`, `n1 < n2`, whose outcome statistics agree within `tol`.
pub fn check_distinguishability(meas: &QndMeasurement, tol: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..meas.n {
        for b in (a + 1)..meas.n {
            let gap = meas
                .weights
                .iter()
                .map(|w| (w[a] - w[b]).abs())
                .fold(0.0, f64::max);
            if gap <= tol {
                out.push((a, b));
            }
        }
    }
    out
}

/// `sum_mu p_mu f(M_mu(rho))` over the possible outcomes.
pub fn expected_update(
    meas: &QndMeasurement,
    rho: &DensityMatrix,
    f: impl Fn(&DensityMatrix) -> f64,
) -> Result<f64> {
    let probs = outcome_probabilities(meas, rho)?;
    Ok(probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > TOL.p_floor)
        .map(|(mu, &p)| p * f(&collapse(meas, mu, rho, p)))
        .sum())
}

/// Post-measurement states paired with their probabilities, skipping impossible outcomes.
pub fn branches(meas: &QndMeasurement, rho: &DensityMatrix) -> Result<Vec<(f64, DensityMatrix)>> {
    let probs = outcome_probabilities(meas, rho)?;
    Ok(probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > TOL.p_floor)
        .map(|(mu, &p)| (p, collapse(meas, mu, rho, p)))
        .collect())
}
