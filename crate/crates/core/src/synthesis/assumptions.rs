//! Structural checks on a problem instance, each with witnessing indices.

use std::f64::consts::TAU;

use serde::Serialize;

use crate::measurement::{check_distinguishability, QndMeasurement};
use crate::state::{DiagonalObservable, HermitianOperator};
use crate::tolerance::TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assumption {
    /// P and H0 diagonal in the computational basis.
    Diagonal,
    /// P has pairwise distinct eigenvalues.
    NondegenerateObservable,
    /// Drift gaps `h_j - h_i` pairwise distinct modulo 2 pi.
    DistinctDriftGaps,
    /// Every off-diagonal entry of H1 is non-zero.
    FullConnectivity,
    /// Every pair of levels is told apart by some measurement outcome.
    Distinguishability,
}

impl Assumption {
    pub fn label(self) -> &'static str {
        match self {
            Assumption::Diagonal => "diagonal P and H0",
            Assumption::NondegenerateObservable => "non-degenerate P",
            Assumption::DistinctDriftGaps => "distinct drift gaps (mod 2pi)",
            Assumption::FullConnectivity => "fully connected H1",
            Assumption::Distinguishability => "distinguishable measurement",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// The operator the check needs was not supplied.
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub assumption: Assumption,
    pub status: Status,
    pub detail: String,
    /// Index tuples that witness a failure (pairs, or two pairs for drift gaps).
    pub witnesses: Vec<Vec<usize>>,
}

impl Check {
    fn skipped(assumption: Assumption, what: &str) -> Self {
        Self {
            assumption,
            status: Status::Skipped,
            detail: format!("no {what} supplied"),
            witnesses: Vec::new(),
        }
    }

    fn from_witnesses(
        assumption: Assumption,
        witnesses: Vec<Vec<usize>>,
        ok: String,
        bad: String,
    ) -> Self {
        let pass = witnesses.is_empty();
        Self {
            assumption,
            status: if pass { Status::Pass } else { Status::Fail },
            detail: if pass { ok } else { bad },
            witnesses,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub checks: Vec<Check>,
}

impl AssumptionReport {
    pub fn get(&self, a: Assumption) -> Option<&Check> {
        self.checks.iter().find(|c| c.assumption == a)
    }

    pub fn status(&self, a: Assumption) -> Status {
        self.get(a).map_or(Status::Skipped, |c| c.status)
    }

    /// Every listed assumption must have been checked and passed.
    pub fn require(&self, needed: &[Assumption]) -> Vec<Assumption> {
        needed
            .iter()
            .copied()
            .filter(|&a| self.status(a) != Status::Pass)
            .collect()
    }
}

fn off_diagonal_entries(h: &HermitianOperator, threshold: f64) -> Vec<Vec<usize>> {
    let m = h.matrix();
    let n = m.dim();
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if m[(i, j)].norm() > threshold {
                out.push(vec![i, j]);
            }
        }
    }
    out
}

fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Two distinct ordered pairs whose gaps coincide modulo 2 pi.
fn repeated_gaps(h: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let n = h.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let mut out = Vec::new();
    for (a, &(i, j)) in pairs.iter().enumerate() {
        for &(k, l) in &pairs[a + 1..] {
            if circular_distance(h[j] - h[i], h[l] - h[k]) <= tol {
                out.push(vec![i, j, k, l]);
            }
        }
    }
    out
}

pub fn assumption_report(
    p: &DiagonalObservable,
    h0: Option<&HermitianOperator>,
    h1: Option<&HermitianOperator>,
    meas: Option<&QndMeasurement>,
) -> AssumptionReport {
    let mut checks = Vec::new();

    // P is stored by its diagonal, so only H0 can break this one.
    checks.push(match h0 {
        Some(h0) => Check::from_witnesses(
            Assumption::Diagonal,
            off_diagonal_entries(h0, TOL.connectivity),
            "P and H0 are diagonal".into(),
            "H0 has off-diagonal entries".into(),
        ),
        None => Check {
            assumption: Assumption::Diagonal,
            status: Status::Pass,
            detail: "P is diagonal; no H0 supplied".into(),
            witnesses: Vec::new(),
        },
    });

    let sigma = p.sigma();
    let mut close = Vec::new();
    for i in 0..sigma.len() {
        for j in (i + 1)..sigma.len() {
            if (sigma[i] - sigma[j]).abs() <= TOL.nondegenerate {
                close.push(vec![i, j]);
            }
        }
    }
    let (gap, gi, gj) = p.min_gap();
    checks.push(Check::from_witnesses(
        Assumption::NondegenerateObservable,
        close,
        format!("minimum gap {gap:.6} between levels {gi} and {gj}"),
        "P has repeated eigenvalues".into(),
    ));

    checks.push(match h0 {
        Some(h0) => {
            let diag: Vec<f64> = h0.matrix().diagonal().iter().map(|z| z.re).collect();
            Check::from_witnesses(
                Assumption::DistinctDriftGaps,
                repeated_gaps(&diag, TOL.spectrum),
                "all drift gaps distinct modulo 2pi".into(),
                "drift gaps (i,j) and (k,l) coincide modulo 2pi".into(),
            )
        }
        None => Check::skipped(Assumption::DistinctDriftGaps, "H0"),
    });

    checks.push(match h1 {
        Some(h1) => {
            let m = h1.matrix();
            let n = m.dim();
            let mut missing = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if m[(i, j)].norm() <= TOL.connectivity {
                        missing.push(vec![i, j]);
                    }
                }
            }
            Check::from_witnesses(
                Assumption::FullConnectivity,
                missing,
                "every pair of levels is coupled by H1".into(),
                "H1 has zero couplings (not needed by the measurement-driven loop)".into(),
            )
        }
        None => Check::skipped(Assumption::FullConnectivity, "H1"),
    });

    checks.push(match meas {
        Some(meas) => Check::from_witnesses(
            Assumption::Distinguishability,
            check_distinguishability(meas, TOL.completeness)
                .into_iter()
                .map(|(a, b)| vec![a, b])
                .collect(),
            "every pair of levels is distinguishable".into(),
            "some level pairs have identical outcome statistics".into(),
        ),
        None => Check::skipped(Assumption::Distinguishability, "measurement"),
    });

    AssumptionReport { checks }
}
