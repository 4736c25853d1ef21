//! First-order solver for the connectivity program
//!
//! ```text
//! minimise   alpha1 * ||R sigma - lambda|| + alpha2 * ||vec(R)||_1
//! subject to R in the connectivity cone,
//!            lambda_n <= -gamma1 (n != n*),  lambda_n* >= gamma2,
//!            optionally Tr(R) <= beta.
//! ```
//!
//! `R` is parameterised by its edge weights `w >= 0` (`R = -L(w)`), which makes
//! `R sigma = A w` linear, `||vec(R)||_1 = 4 * sum(w)` and `Tr(R) = -2 * sum(w)`.
//! The resulting conic problem is solved with ADMM: the `x`-step is a fixed
//! linear system (factored once per penalty update), the `z`-step is a set of
//! independent proximal maps (norm shrinkage, orthant clamp, box clamp).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RealMatrix;
use crate::state::DiagonalObservable;
use crate::synthesis::cone::{edge_list, laplacian_from_weights, ConnectivityMatrix};
use crate::tolerance::TOL;

/// Norm used for the `R sigma - lambda` residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ResidualNorm {
    L1,
    #[default]
    L2,
}

/// Hyper-parameters of one synthesis run.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisProblem {
    pub p: DiagonalObservable,
    pub gamma1: f64,
    pub gamma2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub norm: ResidualNorm,
    /// `Tr(R) <= beta` when set; `beta < 0`.
    pub trace_bound: Option<f64>,
}

impl SynthesisProblem {
    /// `gamma1 = gamma2 = 1`, `alpha1 = 1`, `alpha2 = 0`, l2 residual.
    pub fn new(p: DiagonalObservable) -> Self {
        Self {
            p,
            gamma1: 1.0,
            gamma2: 1.0,
            alpha1: 1.0,
            alpha2: 0.0,
            norm: ResidualNorm::L2,
            trace_bound: None,
        }
    }

    /// Switches on the l1 sparsity term with `alpha1 = alpha2 = 1`.
    pub fn sparse(mut self) -> Self {
        self.alpha1 = 1.0;
        self.alpha2 = 1.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !positive(self.gamma1) || !positive(self.gamma2) {
            return Err(Error::InvalidProblem(format!(
                "gamma1 and gamma2 must be > 0 (got {}, {})",
                self.gamma1, self.gamma2
            )));
        }
        if !nonneg(self.alpha1) || !nonneg(self.alpha2) {
            return Err(Error::InvalidProblem(format!(
                "alpha1 and alpha2 must be >= 0 (got {}, {})",
                self.alpha1, self.alpha2
            )));
        }
        if let Some(beta) = self.trace_bound {
            if !(beta.is_finite() && beta < 0.0) {
                return Err(Error::InvalidProblem(format!(
                    "trace bound must be < 0, got {beta}"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of [`solve_synthesis`].
#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub r: ConnectivityMatrix,
    /// The solver's lambda variable.
    pub lambda: Vec<f64>,
    /// `R sigma`, the vector the sign condition is checked on.
    pub lambda_tilde: Vec<f64>,
    pub residual: f64,
    pub objective: f64,
    pub iterations: usize,
    pub feasible: bool,
}

/// Per-entry verdict of [`verify_lambda`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaEntry {
    pub index: usize,
    pub value: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaCheck {
    pub ok: bool,
    pub sum: f64,
    pub sum_ok: bool,
    pub entries: Vec<LambdaEntry>,
}

/// Sign condition: `lambda_n <= -margin` for `n != n_star`, `lambda_n_star >= margin`,
/// and the entries sum to zero within [`TOL.lambda_sum`](crate::ToleranceConfig::lambda_sum).
pub fn verify_lambda(lambda_tilde: &[f64], n_star: usize, margin: f64) -> LambdaCheck {
    let entries: Vec<LambdaEntry> = lambda_tilde
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            let ok = if index == n_star {
                value >= margin
            } else {
                value <= -margin
            };
            LambdaEntry {
                index,
                value,
                ok: ok && value.is_finite(),
            }
        })
        .collect();
    let sum: f64 = lambda_tilde.iter().sum();
    let sum_ok = sum.abs() <= TOL.lambda_sum;
    let ok = n_star < lambda_tilde.len() && sum_ok && entries.iter().all(|e| e.ok);
    LambdaCheck {
        ok,
        sum,
        sum_ok,
        entries,
    }
}

/// Margin used for the feasibility verdict: strictly signed entries.
pub const LAMBDA_MARGIN: f64 = 1e-9;

const MAX_ITERATIONS: usize = 50_000;
const OBJECTIVE_REL_TOL: f64 = 1e-9;
const EPS_ABS: f64 = 1e-11;
const EPS_REL: f64 = 1e-11;
const RELAXATION: f64 = 1.6;
const RHO_UPDATE_EVERY: usize = 25;

fn norm_value(v: &[f64], norm: ResidualNorm) -> f64 {
    match norm {
        ResidualNorm::L1 => v.iter().map(|x| x.abs()).sum(),
        ResidualNorm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Dense Cholesky factor (lower, row-major) of an SPD matrix.
struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    fn factor(a: &[f64], n: usize) -> Self {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    l[i * n + i] = s.max(f64::MIN_POSITIVE).sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Self { n, l }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }
}

/// The stacked constraint operator `K x` with `x = (w, lambda)`:
/// rows are `A w - lambda`, `w`, `lambda` and, with a trace bound, `sum(w)`.
struct Operator {
    n: usize,
    edges: Vec<(usize, usize)>,
    /// `sigma_j - sigma_i` for each edge `(i, j)`.
    diffs: Vec<f64>,
    with_trace: bool,
}

impl Operator {
    fn m(&self) -> usize {
        self.edges.len()
    }

    fn x_len(&self) -> usize {
        self.m() + self.n
    }

    fn z_len(&self) -> usize {
        self.n + self.m() + self.n + usize::from(self.with_trace)
    }

    fn a_times(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            out[i] += w[e] * self.diffs[e];
            out[j] -= w[e] * self.diffs[e];
        }
        out
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (w, lam) = x.split_at(self.m());
        let aw = self.a_times(w);
        let mut z = Vec::with_capacity(self.z_len());
        z.extend(aw.iter().zip(lam).map(|(a, l)| a - l));
        z.extend_from_slice(w);
        z.extend_from_slice(lam);
        if self.with_trace {
            z.push(w.iter().sum());
        }
        z
    }

    fn apply_t(&self, z: &[f64]) -> Vec<f64> {
        let m = self.m();
        let n = self.n;
        let s = &z[..n];
        let zw = &z[n..n + m];
        let zl = &z[n + m..n + m + n];
        let mut x = vec![0.0; self.x_len()];
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            x[e] = self.diffs[e] * (s[i] - s[j]) + zw[e];
            if self.with_trace {
                x[e] += z[n + m + n];
            }
        }
        for k in 0..n {
            x[m + k] = -s[k] + zl[k];
        }
        x
    }

    /// `K^T K` as a dense matrix.
    fn gram(&self) -> Vec<f64> {
        let len = self.x_len();
        let mut g = vec![0.0; len * len];
        let mut unit = vec![0.0; len];
        for c in 0..len {
            unit[c] = 1.0;
            let col = self.apply_t(&self.apply(&unit));
            for r in 0..len {
                g[r * len + c] = col[r];
            }
            unit[c] = 0.0;
        }
        g
    }
}

fn factor_gram(gram: &[f64], len: usize) -> Cholesky {
    // Tiny ridge keeps the factorisation well defined if sigma has ties.
    let mut a = gram.to_vec();
    for i in 0..len {
        a[i * len + i] += 1e-12;
    }
    Cholesky::factor(&a, len)
}

/// Solves the connectivity program; deterministic from a zero start.
pub fn solve_synthesis(problem: &SynthesisProblem) -> Result<SynthesisResult> {
    problem.validate()?;
    let sigma = problem.p.sigma();
    let n = sigma.len();
    let n_star = problem.p.n_star();
    let edges = edge_list(n);
    let diffs: Vec<f64> = edges.iter().map(|&(i, j)| sigma[j] - sigma[i]).collect();
    let op = Operator {
        n,
        edges,
        diffs,
        with_trace: problem.trace_bound.is_some(),
    };
    let m = op.m();
    let x_len = op.x_len();
    let z_len = op.z_len();
    let min_weight_sum = problem.trace_bound.map(|beta| -0.5 * beta);
    let linear_cost = 4.0 * problem.alpha2;

    let lambda_lo: Vec<f64> = (0..n)
        .map(|k| {
            if k == n_star {
                problem.gamma2
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let lambda_hi: Vec<f64> = (0..n)
        .map(|k| {
            if k == n_star {
                f64::INFINITY
            } else {
                -problem.gamma1
            }
        })
        .collect();

    let scale = inf_norm(&op.diffs).max(1.0);
    let mut rho = problem.alpha1.max(problem.alpha2).max(1e-3) / scale;
    let gram = op.gram();
    // The scaled-form x-step matrix does not depend on rho.
    let chol = factor_gram(&gram, x_len);

    let mut x = vec![0.0; x_len];
    let mut z = vec![0.0; z_len];
    let mut u = vec![0.0; z_len];
    let objective_of = |w: &[f64], lam: &[f64]| {
        let aw = op.a_times(w);
        let r: Vec<f64> = aw.iter().zip(lam).map(|(a, l)| a - l).collect();
        problem.alpha1 * norm_value(&r, problem.norm) + linear_cost * w.iter().sum::<f64>()
    };
    let mut prev_objective = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);

    while iterations < MAX_ITERATIONS {
        iterations += 1;

        // x-step: (K^T K) x = K^T (z - u) - (c / rho) 1_w
        let diff: Vec<f64> = z.iter().zip(&u).map(|(a, b)| a - b).collect();
        let mut rhs = op.apply_t(&diff);
        for v in rhs.iter_mut().take(m) {
            *v -= linear_cost / rho;
        }
        chol.solve(&mut rhs);
        x = rhs;
        let kx = op.apply(&x);

        // z-step on the relaxed point
        let z_old = z.clone();
        let v: Vec<f64> = (0..z_len)
            .map(|k| RELAXATION * kx[k] + (1.0 - RELAXATION) * z_old[k] + u[k])
            .collect();
        let thresh = problem.alpha1 / rho;
        let s_in = &v[..n];
        match problem.norm {
            ResidualNorm::L2 => {
                let nrm = s_in.iter().map(|a| a * a).sum::<f64>().sqrt();
                let shrink = if nrm > thresh {
                    1.0 - thresh / nrm
                } else {
                    0.0
                };
                for k in 0..n {
                    z[k] = shrink * s_in[k];
                }
            }
            ResidualNorm::L1 => {
                for k in 0..n {
                    let a = s_in[k];
                    z[k] = a.signum() * (a.abs() - thresh).max(0.0);
                }
            }
        }
        for e in 0..m {
            z[n + e] = v[n + e].max(0.0);
        }
        for k in 0..n {
            z[n + m + k] = v[n + m + k].clamp(lambda_lo[k], lambda_hi[k]);
        }
        if let Some(tmin) = min_weight_sum {
            z[z_len - 1] = v[z_len - 1].max(tmin);
        }
        for k in 0..z_len {
            u[k] = v[k] - z[k];
        }

        // residuals
        let r_vec: Vec<f64> = kx.iter().zip(&z).map(|(a, b)| a - b).collect();
        primal = inf_norm(&r_vec);
        let dz: Vec<f64> = z.iter().zip(&z_old).map(|(a, b)| a - b).collect();
        dual = rho * inf_norm(&op.apply_t(&dz));
        let primal_tol = EPS_ABS + EPS_REL * inf_norm(&kx).max(inf_norm(&z));
        let dual_tol = EPS_ABS + EPS_REL * rho * inf_norm(&op.apply_t(&u));

        let objective = objective_of(&z[n..n + m], &z[n + m..n + m + n]);
        let rel_change = (objective - prev_objective).abs() / objective.abs().max(1.0);
        prev_objective = objective;

        if primal <= primal_tol && dual <= dual_tol && rel_change <= OBJECTIVE_REL_TOL {
            converged = true;
            break;
        }

        if iterations % RHO_UPDATE_EVERY == 0 {
            let p_scaled = primal / inf_norm(&kx).max(inf_norm(&z)).max(1e-30);
            let d_scaled = dual / (rho * inf_norm(&op.apply_t(&u))).max(1e-30);
            let ratio = (p_scaled / d_scaled.max(1e-30)).sqrt();
            if !(0.2..=5.0).contains(&ratio) && ratio.is_finite() {
                let new_rho = (rho * ratio).clamp(1e-8, 1e8);
                for uk in u.iter_mut() {
                    *uk *= rho / new_rho;
                }
                rho = new_rho;
            }
        }
    }

    if !converged && !(primal <= 1e-7 && dual <= 1e-7) {
        return Err(Error::NoFeasiblePoint {
            iterations,
            primal,
            dual,
        });
    }

    let mut w: Vec<f64> = z[n..n + m].to_vec();
    let mut lambda: Vec<f64> = z[n + m..n + m + n].to_vec();
    if let Some((w2, l2)) = shrink_along_ray(
        &w,
        &lambda,
        &objective_of,
        &op,
        &lambda_lo,
        &lambda_hi,
        min_weight_sum,
    ) {
        w = w2;
        lambda = l2;
    }
    let r = ConnectivityMatrix::from_edge_weights(n, &w)?;
    Ok(finish(problem, r, lambda, iterations))
}

/// The optimum is often a whole face (with `alpha2 = 0`, any feasible `R` can be
/// scaled up). Among the points `t * w`, `t in (0, 1]`, keep the smallest one that
/// is still optimal so the output does not depend on how far ADMM drifted.
fn shrink_along_ray(
    w: &[f64],
    lambda: &[f64],
    objective_of: &dyn Fn(&[f64], &[f64]) -> f64,
    op: &Operator,
    lo: &[f64],
    hi: &[f64],
    min_weight_sum: Option<f64>,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let aw = op.a_times(w);
    let mut t_min: f64 = 0.0;
    for k in 0..aw.len() {
        // t * aw[k] must stay inside [lo, hi] to keep a zero residual there.
        if lo[k].is_finite() && aw[k] > 0.0 {
            t_min = t_min.max(lo[k] / aw[k]);
        }
        if hi[k].is_finite() && aw[k] < 0.0 {
            t_min = t_min.max(hi[k] / aw[k]);
        }
    }
    if let Some(tmin) = min_weight_sum {
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            t_min = t_min.max(tmin / total);
        }
    }
    if !(t_min > 0.0 && t_min < 1.0) {
        return None;
    }
    let w2: Vec<f64> = w.iter().map(|x| x * t_min).collect();
    let l2: Vec<f64> = aw
        .iter()
        .enumerate()
        .map(|(k, a)| (a * t_min).clamp(lo[k], hi[k]))
        .collect();
    let before = objective_of(w, lambda);
    let after = objective_of(&w2, &l2);
    (after <= before + 1e-12 * before.abs().max(1.0)).then_some((w2, l2))
}

fn finish(
    problem: &SynthesisProblem,
    r: ConnectivityMatrix,
    lambda: Vec<f64>,
    iterations: usize,
) -> SynthesisResult {
    let sigma = problem.p.sigma();
    let lambda_tilde = r.apply(sigma);
    let diff: Vec<f64> = lambda_tilde
        .iter()
        .zip(&lambda)
        .map(|(a, b)| a - b)
        .collect();
    let residual = norm_value(&diff, problem.norm);
    let objective = problem.alpha1 * residual + problem.alpha2 * r.l1_norm();
    let feasible = verify_lambda(&lambda_tilde, problem.p.n_star(), LAMBDA_MARGIN).ok;
    SynthesisResult {
        r,
        lambda,
        lambda_tilde,
        residual,
        objective,
        iterations,
        feasible,
    }
}

/// Matrix form of the edge-weight map, exposed for cross-checks.
pub fn connectivity_from_weights(n: usize, weights: &[f64]) -> RealMatrix {
    laplacian_from_weights(n, &edge_list(n), weights)
}
