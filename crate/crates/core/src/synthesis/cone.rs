//! The connectivity cone: symmetric negative-semidefinite matrices with zero
//! row sums, non-positive diagonal and non-negative off-diagonal.
//!
//! Such a matrix is exactly the negative of a weighted graph Laplacian with
//! non-negative edge weights, which is how the solver parameterises it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::linalg::{RealMatrix, C64};
use crate::state::{HermitianOperator, OperatorRole};
use crate::tolerance::TOL;

/// A matrix `R` of the connectivity cone.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectivityMatrix {
    r: RealMatrix,
}

/// Every membership condition `m` fails by more than `tol`.
pub fn cone_violations(m: &RealMatrix, tol: f64) -> Result<Vec<Violation>> {
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n = m.dim();
    let mut out = Vec::new();
    let sym = m.symmetric_deviation();
    if sym > tol {
        out.push(Violation {
            invariant: "symmetric",
            magnitude: sym,
        });
    }
    let row = m.row_sums().iter().map(|s| s.abs()).fold(0.0, f64::max);
    if row > tol {
        out.push(Violation {
            invariant: "zero row sums",
            magnitude: row,
        });
    }
    let diag = (0..n).map(|i| m[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    if diag > tol {
        out.push(Violation {
            invariant: "non-positive diagonal",
            magnitude: diag,
        });
    }
    let mut off: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off = off.max(-m[(i, j)]);
            }
        }
    }
    if off > tol {
        out.push(Violation {
            invariant: "non-negative off-diagonal",
            magnitude: off,
        });
    }
    let sym_part = RealMatrix::from_fn(n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let top = *sym_part
        .symmetric_eigen()?
        .values
        .last()
        .expect("non-empty spectrum");
    if top > tol {
        out.push(Violation {
            invariant: "negative semidefinite",
            magnitude: top,
        });
    }
    Ok(out)
}

impl ConnectivityMatrix {
    /// Accepts `r` iff it lies in the cone within [`TOL.cone`](crate::ToleranceConfig::cone).
    pub fn new(r: RealMatrix) -> Result<Self> {
        if r.dim() < 2 {
            return Err(Error::DimensionTooSmall {
                min: 2,
                found: r.dim(),
            });
        }
        let v = cone_violations(&r, TOL.cone)?;
        if v.is_empty() {
            Ok(Self { r })
        } else {
            Err(Error::NotInCone(v))
        }
    }

    /// `-L(w)` for edge weights `w[(i, j)]`, `i < j`, listed in [`edge_list`] order.
    pub fn from_edge_weights(n: usize, weights: &[f64]) -> Result<Self> {
        let edges = edge_list(n);
        if weights.len() != edges.len() {
            return Err(Error::DimensionMismatch {
                expected: edges.len(),
                found: weights.len(),
            });
        }
        if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::NotInCone(vec![Violation {
                invariant: "non-negative off-diagonal",
                magnitude: -w,
            }]));
        }
        Ok(Self {
            r: laplacian_from_weights(n, &edges, weights),
        })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            r: RealMatrix::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.r.dim()
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.r
    }

    pub fn into_matrix(self) -> RealMatrix {
        self.r
    }

    /// `R sigma`.
    pub fn apply(&self, sigma: &[f64]) -> Vec<f64> {
        self.r.mul_vec(sigma)
    }

    /// Sum of |R_ij| over all entries.
    pub fn l1_norm(&self) -> f64 {
        self.r.as_slice().iter().map(|v| v.abs()).sum()
    }

    /// Off-diagonal support: pairs `i < j` with `R_ij > threshold`.
    pub fn support(&self, threshold: f64) -> Vec<(usize, usize)> {
        edge_list(self.dim())
            .into_iter()
            .filter(|&(i, j)| self.r[(i, j)] > threshold)
            .collect()
    }
}

/// Upper-triangle index pairs `(i, j)`, `i < j`, in row-major order.
pub fn edge_list(n: usize) -> Vec<(usize, usize)> {
    let mut e = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            e.push((i, j));
        }
    }
    e
}

pub(crate) fn laplacian_from_weights(n: usize, edges: &[(usize, usize)], w: &[f64]) -> RealMatrix {
    let mut r = RealMatrix::zeros(n);
    for (&(i, j), &wij) in edges.iter().zip(w) {
        r[(i, j)] = wij;
        r[(j, i)] = wij;
    }
    for i in 0..n {
        let s: f64 = (0..n).filter(|&j| j != i).map(|j| r[(i, j)]).sum();
        r[(i, i)] = -s;
    }
    r
}

/// Off-diagonal `2|<i|H1|j>|^2`, diagonal `2(|<i|H1|i>|^2 - <i|H1^2|i>)`.
pub fn r_of_hamiltonian(h1: &HermitianOperator) -> ConnectivityMatrix {
    let h = h1.matrix();
    let n = h.dim();
    let h2 = h * h;
    let r = RealMatrix::from_fn(n, |i, j| {
        if i == j {
            2.0 * (h[(i, i)].norm_sqr() - h2[(i, i)].re)
        } else {
            2.0 * h[(i, j)].norm_sqr()
        }
    });
    ConnectivityMatrix { r }
}

/// How to pick the phase of each off-diagonal square root when building H1 from R.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PhasePolicy {
    /// All couplings real and non-negative.
    #[default]
    Positive,
    /// Real couplings with sign `(-1)^(i+j)`.
    Alternating,
    /// `+i` above the diagonal, `-i` below.
    ImaginaryOffDiagonal,
}

/// Zero-diagonal H1 with `|H1_ij| = sqrt(R_ij / 2)`.
///
/// This is the inverse of [`r_of_hamiltonian`] on the cone; see the README for
/// why the factor is `sqrt(1/2)`.
pub fn hamiltonian_of_r(r: &ConnectivityMatrix, policy: PhasePolicy) -> Result<HermitianOperator> {
    let m = r.matrix();
    let n = m.dim();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                worst = worst.max(-m[(i, j)]);
            }
        }
    }
    if worst > TOL.cone {
        return Err(Error::NotInCone(vec![Violation {
            invariant: "non-negative off-diagonal",
            magnitude: worst,
        }]));
    }
    let h = crate::linalg::ComplexMatrix::from_fn(n, |i, j| {
        if i == j {
            return C64::new(0.0, 0.0);
        }
        let mag = (0.5 * m[(i, j)].max(0.0)).sqrt();
        match policy {
            PhasePolicy::Positive => C64::new(mag, 0.0),
            PhasePolicy::Alternating => {
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                C64::new(sign * mag, 0.0)
            }
            PhasePolicy::ImaginaryOffDiagonal => {
                if i < j {
                    C64::new(0.0, mag)
                } else {
                    C64::new(0.0, -mag)
                }
            }
        }
    });
    HermitianOperator::new(h, OperatorRole::Control)
}

const PROJECTION_MAX_ITERS: usize = 100_000;
const PROJECTION_STEP_TOL: f64 = 1e-15;

/// Euclidean (Frobenius) projection onto the cone.
pub fn project_cone(m: &RealMatrix) -> Result<ConnectivityMatrix> {
    project_cone_with_trace_bound(m, None)
}

/// As [`project_cone`], optionally intersected with the halfspace `Tr(R) <= beta`.
///
/// Symmetry, zero row sums and non-negative off-diagonals already force
/// `R = -L(w)` to be negative semidefinite, so the projection is a
/// non-negative least-squares problem in the edge weights `w`. Its Gram
/// matrix `2I + B^T B` (B the node-edge incidence matrix) has condition
/// number at most `n`, which makes accelerated projected gradient converge to
/// round-off in a few hundred iterations.
pub fn project_cone_with_trace_bound(
    m: &RealMatrix,
    trace_bound: Option<f64>,
) -> Result<ConnectivityMatrix> {
    let n = m.dim();
    if n < 2 {
        return Err(Error::DimensionTooSmall { min: 2, found: n });
    }
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let sym = m.symmetric_deviation();
    if sym > TOL.cone {
        return Err(Error::NotInCone(vec![Violation {
            invariant: "symmetric",
            magnitude: sym,
        }]));
    }
    // Tr(R) = -2 sum(w), so the bound becomes sum(w) >= -beta / 2.
    let min_sum = match trace_bound {
        Some(beta) if beta <= 0.0 => -0.5 * beta,
        Some(beta) => {
            return Err(Error::InvalidProblem(format!(
                "trace bound must be non-positive, got {beta}"
            )))
        }
        None => 0.0,
    };

    let x = RealMatrix::from_fn(n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let edges = edge_list(n);
    let target: Vec<f64> = edges.iter().map(|&(i, j)| x[(i, j)]).collect();
    let diag: Vec<f64> = (0..n).map(|i| x[(i, i)]).collect();
    let grad = |w: &[f64]| -> Vec<f64> {
        let mut d = diag.clone();
        for (&(i, j), &we) in edges.iter().zip(w) {
            d[i] += we;
            d[j] += we;
        }
        // d holds X_ii - R_ii
        edges
            .iter()
            .zip(w.iter().zip(&target))
            .map(|(&(i, j), (&we, &t))| 2.0 * (we - t) + d[i] + d[j])
            .collect()
    };

    let lipschitz = 2.0 * n as f64;
    let kappa_root = (n as f64).sqrt();
    let momentum = (kappa_root - 1.0) / (kappa_root + 1.0);
    let scale = 1.0 + x.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut w = project_weights(&target, min_sum);
    let mut y = w.clone();
    let mut converged = false;
    let mut iters = 0;
    while iters < PROJECTION_MAX_ITERS {
        iters += 1;
        let g = grad(&y);
        let step: Vec<f64> = y.iter().zip(&g).map(|(v, gv)| v - gv / lipschitz).collect();
        let next = project_weights(&step, min_sum);
        // a fixed point of the projected gradient map is the minimiser
        let change = next
            .iter()
            .zip(&y)
            .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        y = next
            .iter()
            .zip(&w)
            .map(|(p, q)| p + momentum * (p - q))
            .collect();
        w = next;
        if change <= PROJECTION_STEP_TOL * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::ProjectionNoConvergence {
            cycles: iters,
            violations: Vec::new(),
        });
    }
    Ok(ConnectivityMatrix {
        r: laplacian_from_weights(n, &edges, &w),
    })
}

/// Projection onto `{w >= 0, sum(w) >= min_sum}`: clamp, and if the sum is
/// short, shift every weight up by the common `tau` that restores it.
fn project_weights(v: &[f64], min_sum: f64) -> Vec<f64> {
    let clamped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    if clamped.iter().sum::<f64>() >= min_sum {
        return clamped;
    }
    // sum(max(v + tau, 0)) is piecewise linear and increasing in tau
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (k, &vk) in sorted.iter().enumerate() {
        acc += vk;
        let t = (min_sum - acc) / (k + 1) as f64;
        let next_ok = sorted.get(k + 1).is_none_or(|&nv| nv + t <= 0.0);
        if vk + t > 0.0 && next_ok {
            tau = t;
            break;
        }
    }
    v.iter().map(|x| (x + tau).max(0.0)).collect()
}
