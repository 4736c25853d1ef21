//! Feedback laws and the Lyapunov functionals they act on.
//!
//! The control unitary is `U(u) = exp(-i H1 u)`. For `f(u) = Tr(P U rho U^dag)`
//! the Taylor coefficients at `u = 0` are
//!
//! ```text
//! f'(0)  = i Tr([H1, P] rho)
//! f''(0) = Tr([[H1, P], H1] rho)
//! ```
//!
//! which is what the linear and quadratic controllers are built from.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{commutator, eigh, ComplexMatrix, HermitianEigen, C64, I, ZERO};
use crate::measurement::{branches, QndMeasurement};
use crate::state::{hermitian_expm, DensityMatrix, DiagonalObservable, HermitianOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Linear,
    ExactMin,
    Quadratic,
}

/// How to pick between `+u_bar` and `-u_bar` when both are equally good.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    Positive,
    RandomSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_u_bar")]
    pub u_bar: f64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub tie_break: TieBreak,
}

fn default_kappa() -> f64 {
    0.05
}

fn default_u_bar() -> f64 {
    0.1
}

impl ControllerConfig {
    pub fn linear(kappa: f64) -> Self {
        Self {
            kind: ControllerKind::Linear,
            kappa,
            u_bar: default_u_bar(),
            epsilon: 0.0,
            tie_break: TieBreak::Positive,
        }
    }

    pub fn exact_min(u_bar: f64) -> Self {
        Self {
            kind: ControllerKind::ExactMin,
            kappa: default_kappa(),
            u_bar,
            epsilon: 0.0,
            tie_break: TieBreak::Positive,
        }
    }

    pub fn quadratic(u_bar: f64) -> Self {
        Self {
            kind: ControllerKind::Quadratic,
            ..Self::exact_min(u_bar)
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_tie_break(mut self, tie_break: TieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        match self.kind {
            ControllerKind::Linear if !(self.kappa.is_finite() && self.kappa > 0.0) => Err(
                Error::InvalidConfig(format!("kappa must be > 0, got {}", self.kappa)),
            ),
            ControllerKind::ExactMin | ControllerKind::Quadratic
                if !(self.u_bar.is_finite() && self.u_bar > 0.0) =>
            {
                Err(Error::InvalidConfig(format!(
                    "u_bar must be > 0, got {}",
                    self.u_bar
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlDecision {
    pub u: f64,
    /// `b = i Tr([H1, P] rho)`, the slope of V along the control direction.
    pub linear_coeff: f64,
    /// `a`, the curvature term of the quadratic model.
    pub quadratic_coeff: f64,
    /// Model prediction of the change in V (exact expectation for exact-min).
    pub predicted_delta_v: f64,
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// `V(rho) = Tr(P rho)`.
pub fn lyapunov_v(p: &DiagonalObservable, rho: &DensityMatrix) -> Result<f64> {
    check_dim(p.dim(), rho.dim())?;
    Ok(p.sigma()
        .iter()
        .zip(rho.populations())
        .map(|(s, r)| s * r)
        .sum())
}

/// `V(rho) - (eps / 2) * sum_n rho_nn^2`.
pub fn lyapunov_v_eps(p: &DiagonalObservable, rho: &DensityMatrix, epsilon: f64) -> Result<f64> {
    let v = lyapunov_v(p, rho)?;
    if epsilon == 0.0 {
        return Ok(v);
    }
    let sq: f64 = rho.populations().iter().map(|x| x * x).sum();
    Ok(v - 0.5 * epsilon * sq)
}

/// Exact `E[V_eps(U(u) M_mu(rho) U(u)^dag)]` over the outcome distribution of `rho`.
pub fn expected_v_after(
    p: &DiagonalObservable,
    h1: &HermitianOperator,
    meas: &QndMeasurement,
    rho: &DensityMatrix,
    u: f64,
    epsilon: f64,
) -> Result<f64> {
    check_dim(p.dim(), h1.dim())?;
    let unitary = hermitian_expm(h1, u)?;
    let mut acc = 0.0;
    for (prob, post) in branches(meas, rho)? {
        let next = DensityMatrix::from_trusted(post.matrix().conjugate_by(&unitary));
        acc += prob * lyapunov_v_eps(p, &next, epsilon)?;
    }
    Ok(acc)
}

/// `u = i kappa Tr([P, H1] rho)`.
pub fn linear_feedback(
    p: &DiagonalObservable,
    h1: &HermitianOperator,
    rho: &DensityMatrix,
    kappa: f64,
) -> Result<ControlDecision> {
    Controller::new(p, h1, None, ControllerConfig::linear(kappa))?.linear(rho)
}

pub fn exact_min_feedback<R: Rng + ?Sized>(
    p: &DiagonalObservable,
    h1: &HermitianOperator,
    meas: &QndMeasurement,
    rho: &DensityMatrix,
    cfg: ControllerConfig,
    rng: &mut R,
) -> Result<ControlDecision> {
    Controller::new(p, h1, Some(meas), cfg)?.exact_min(rho, rng)
}

pub fn quadratic_feedback<R: Rng + ?Sized>(
    p: &DiagonalObservable,
    h1: &HermitianOperator,
    rho: &DensityMatrix,
    cfg: ControllerConfig,
    rng: &mut R,
) -> Result<ControlDecision> {
    Controller::new(p, h1, None, cfg)?.quadratic(rho, rng)
}

/// Central second difference of `expected_v_after` at `|n><n|`, `eps = 0`.
pub fn curvature_at_eigenstate(
    p: &DiagonalObservable,
    h1: &HermitianOperator,
    meas: &QndMeasurement,
    n: usize,
    step: f64,
) -> Result<f64> {
    let rho = DensityMatrix::basis(p.dim(), n)?;
    let f = |u| expected_v_after(p, h1, meas, &rho, u, 0.0);
    Ok((f(step)? - 2.0 * f(0.0)? + f(-step)?) / (step * step))
}

const GRID_POINTS: usize = 129;
const GOLDEN_WIDTH: f64 = 1e-8;
const DEGENERATE: f64 = 1e-12;

/// A feedback law bound to one `(P, H1, measurement)` triple, with the
/// eigenbasis of H1 and the commutators precomputed.
#[derive(Debug, Clone)]
pub struct Controller {
    sigma: Vec<f64>,
    cfg: ControllerConfig,
    h1: ComplexMatrix,
    eig: HermitianEigen,
    /// `[H1, P]`
    comm: ComplexMatrix,
    /// `[[H1, P], H1]`
    double_comm: ComplexMatrix,
    /// P in the eigenbasis of H1.
    p_rot: ComplexMatrix,
    meas: Option<QndMeasurement>,
    /// `sum_mu c_{mu,i} conj(c_{mu,j})`: how a measurement round scales coherence `(i, j)`.
    dephasing: Option<ComplexMatrix>,
}

impl Controller {
    pub fn new(
        p: &DiagonalObservable,
        h1: &HermitianOperator,
        meas: Option<&QndMeasurement>,
        cfg: ControllerConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = p.dim();
        check_dim(n, h1.dim())?;
        if let Some(m) = meas {
            check_dim(n, m.dim())?;
        }
        if cfg.kind == ControllerKind::ExactMin && meas.is_none() {
            return Err(Error::InvalidConfig(
                "exact-min controller needs a measurement".into(),
            ));
        }
        let pm = p.to_matrix();
        let h = h1.matrix().clone();
        let comm = commutator(&h, &pm)?;
        let double_comm = commutator(&comm, &h)?;
        let eig = eigh(&h)?;
        let q = &eig.vectors;
        let p_rot = &(&q.adjoint() * &pm) * q;
        let dephasing = meas.map(|m| {
            ComplexMatrix::from_fn(n, |i, j| {
                m.coeffs().iter().map(|c| c[i] * c[j].conj()).sum()
            })
        });
        Ok(Self {
            sigma: p.sigma().to_vec(),
            cfg,
            h1: h,
            eig,
            comm,
            double_comm,
            p_rot,
            meas: meas.cloned(),
            dephasing,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn h1(&self) -> &ComplexMatrix {
        &self.h1
    }

    /// `exp(-i H1 u)`; exactly the identity at `u = 0` so stationary states stay put.
    pub fn propagator(&self, u: f64) -> ComplexMatrix {
        if u == 0.0 {
            return ComplexMatrix::identity(self.h1.dim());
        }
        self.eig.propagator(u)
    }

    fn v(&self, rho: &ComplexMatrix) -> f64 {
        self.sigma
            .iter()
            .enumerate()
            .map(|(i, s)| s * rho[(i, i)].re)
            .sum()
    }

    fn v_eps(&self, rho: &ComplexMatrix) -> f64 {
        let v = self.v(rho);
        if self.cfg.epsilon == 0.0 {
            return v;
        }
        let sq: f64 = (0..rho.dim()).map(|i| rho[(i, i)].re.powi(2)).sum();
        v - 0.5 * self.cfg.epsilon * sq
    }

    /// `b = i Tr([H1, P] rho)`; real because `[H1, P]` is anti-Hermitian.
    pub fn slope(&self, rho: &DensityMatrix) -> f64 {
        let t = I * self.comm.trace_product(rho.matrix());
        debug_assert!(
            t.im.abs() <= 1e-10 * (1.0 + t.re.abs()),
            "slope has imaginary part {}",
            t.im
        );
        t.re
    }

    /// `a = Tr([[H1, P], H1] rho) - (eps / 4) sum_i <i|[H1, rho]|i>^2`.
    pub fn curvature(&self, rho: &DensityMatrix) -> f64 {
        let mut a = self.double_comm.trace_product(rho.matrix()).re;
        if self.cfg.epsilon != 0.0 {
            let m = rho.matrix();
            let n = m.dim();
            // diagonal of [H1, rho] without forming the product
            let sum: f64 = (0..n)
                .map(|i| {
                    let d: C64 = (0..n)
                        .map(|k| self.h1[(i, k)] * m[(k, i)] - m[(i, k)] * self.h1[(k, i)])
                        .sum();
                    (d * d).re
                })
                .sum();
            a -= 0.25 * self.cfg.epsilon * sum;
        }
        a
    }

    pub fn linear(&self, rho: &DensityMatrix) -> Result<ControlDecision> {
        check_dim(self.sigma.len(), rho.dim())?;
        let b = self.slope(rho);
        let a = self.double_comm.trace_product(rho.matrix()).re;
        let u = -self.cfg.kappa * b;
        Ok(ControlDecision {
            u,
            linear_coeff: b,
            quadratic_coeff: a,
            predicted_delta_v: b * u + 0.5 * a * u * u,
        })
    }

    pub fn quadratic<R: Rng + ?Sized>(
        &self,
        rho: &DensityMatrix,
        rng: &mut R,
    ) -> Result<ControlDecision> {
        check_dim(self.sigma.len(), rho.dim())?;
        let a = self.curvature(rho);
        let b = self.slope(rho);
        let ub = self.cfg.u_bar;
        let q = |u: f64| 0.5 * a * u * u + b * u;
        let u = if a.abs() <= DEGENERATE {
            if b.abs() <= DEGENERATE {
                0.0
            } else {
                -ub * b.signum()
            }
        } else {
            let interior = -b / a;
            if a > DEGENERATE && interior.abs() <= ub {
                interior
            } else {
                let (qp, qm) = (q(ub), q(-ub));
                let tol = 1e-12 * (a.abs() * ub * ub + b.abs() * ub).max(1e-300);
                if (qp - qm).abs() <= tol {
                    self.break_tie(ub, rng)
                } else if qp < qm {
                    ub
                } else {
                    -ub
                }
            }
        };
        Ok(ControlDecision {
            u,
            linear_coeff: b,
            quadratic_coeff: a,
            predicted_delta_v: q(u),
        })
    }

    fn break_tie<R: Rng + ?Sized>(&self, magnitude: f64, rng: &mut R) -> f64 {
        match self.cfg.tie_break {
            TieBreak::Positive => magnitude,
            TieBreak::RandomSign => {
                if rng.random::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            }
        }
    }

    /// Expected V_eps after one measurement round followed by `U(u)`; exact.
    pub fn expected_v_after(&self, rho: &DensityMatrix, u: f64) -> Result<f64> {
        let meas = self
            .meas
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("no measurement attached to controller".into()))?;
        check_dim(self.sigma.len(), rho.dim())?;
        if self.cfg.epsilon == 0.0 {
            let rot = self.rotated_dephased(rho);
            Ok(self.eval_fast(&rot, u))
        } else {
            let unitary = self.propagator(u);
            let mut acc = 0.0;
            for (prob, post) in branches(meas, rho)? {
                acc += prob * self.v_eps(&post.matrix().conjugate_by(&unitary));
            }
            Ok(acc)
        }
    }

    /// `Q^dag D Q` with `D = sum_mu M_mu rho M_mu^dag`.
    fn rotated_dephased(&self, rho: &DensityMatrix) -> ComplexMatrix {
        let g = self.dephasing.as_ref().expect("measurement present");
        let m = rho.matrix();
        let d = ComplexMatrix::from_fn(m.dim(), |i, j| m[(i, j)] * g[(i, j)]);
        let q = &self.eig.vectors;
        &(&q.adjoint() * &d) * q
    }

    /// `Tr(P U D U^dag)` in the eigenbasis of H1: `sum_ab P_ba D_ab exp(-i (l_a - l_b) u)`.
    fn eval_fast(&self, d_rot: &ComplexMatrix, u: f64) -> f64 {
        let n = d_rot.dim();
        let phases: Vec<C64> = self
            .eig
            .values
            .iter()
            .map(|&l| C64::from_polar(1.0, -l * u))
            .collect();
        let mut acc = ZERO;
        for a in 0..n {
            for b in 0..n {
                acc += self.p_rot[(b, a)] * d_rot[(a, b)] * phases[a] * phases[b].conj();
            }
        }
        acc.re
    }

    pub fn exact_min<R: Rng + ?Sized>(
        &self,
        rho: &DensityMatrix,
        rng: &mut R,
    ) -> Result<ControlDecision> {
        check_dim(self.sigma.len(), rho.dim())?;
        let ub = self.cfg.u_bar;
        let fast = if self.cfg.epsilon == 0.0 {
            Some(self.rotated_dephased(rho))
        } else {
            None
        };
        let f = |u: f64| -> Result<f64> {
            match &fast {
                Some(rot) => Ok(self.eval_fast(rot, u)),
                None => self.expected_v_after(rho, u),
            }
        };

        let step = 2.0 * ub / (GRID_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..GRID_POINTS)
            .map(|k| {
                if k == GRID_POINTS / 2 {
                    0.0
                } else {
                    -ub + step * k as f64
                }
            })
            .collect();
        let values = grid.iter().map(|&u| f(u)).collect::<Result<Vec<_>>>()?;
        let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let tie = 1e-13 * scale;

        let mut best = GRID_POINTS / 2;
        for k in 0..GRID_POINTS {
            let (u, v) = (grid[k], values[k]);
            let (ub_, vb) = (grid[best], values[best]);
            let better = v < vb - tie
                || ((v - vb).abs() <= tie
                    && (u.abs() < ub_.abs() - 1e-15
                        || ((u.abs() - ub_.abs()).abs() <= 1e-15 && u > ub_)));
            if better {
                best = k;
            }
        }
        let mirror = GRID_POINTS - 1 - best;
        if mirror != best && (values[mirror] - values[best]).abs() <= tie {
            // equally good on both sides of zero
            let pick = self.break_tie(grid[best].abs(), rng);
            best = if pick > 0.0 {
                best.max(mirror)
            } else {
                best.min(mirror)
            };
        }

        let (mut u_best, mut v_best) = (grid[best], values[best]);
        let lo = (u_best - step).max(-ub);
        let hi = (u_best + step).min(ub);
        let (u_ref, v_ref) = golden_section(&f, lo, hi)?;
        if v_ref < v_best - tie {
            u_best = u_ref;
            v_best = v_ref;
        }
        let v0 = self.v_eps(rho.matrix());
        Ok(ControlDecision {
            u: u_best,
            linear_coeff: self.slope(rho),
            quadratic_coeff: self.curvature(rho),
            predicted_delta_v: v_best - v0,
        })
    }

    pub fn decide<R: Rng + ?Sized>(
        &self,
        rho: &DensityMatrix,
        rng: &mut R,
    ) -> Result<ControlDecision> {
        match self.cfg.kind {
            ControllerKind::Linear => self.linear(rho),
            ControllerKind::Quadratic => self.quadratic(rho, rng),
            ControllerKind::ExactMin => self.exact_min(rho, rng),
        }
    }
}

fn golden_section(f: &dyn Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while hi - lo > GOLDEN_WIDTH {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d)?;
        }
    }
    let mid = 0.5 * (lo + hi);
    Ok((mid, f(mid)?))
}

impl Controller {
    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn lyapunov(&self, rho: &DensityMatrix) -> f64 {
        self.v(rho.matrix())
    }

    pub fn lyapunov_eps(&self, rho: &DensityMatrix) -> f64 {
        self.v_eps(rho.matrix())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::photon_box;
    use crate::synthesis::{hamiltonian_of_r, solve_synthesis, PhasePolicy, SynthesisProblem};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

    const EXAMPLE_SIGMA: [f64; 8] = [
        51.7022, 82.0324, 10.0114, 40.2333, 24.6756, 19.2339, 28.6260, 44.5561,
    ];

    fn two_level() -> (DiagonalObservable, HermitianOperator) {
        let p = DiagonalObservable::new(vec![2.0, 1.0]).unwrap();
        let h = HermitianOperator::generic(
            ComplexMatrix::from_real(2, &[0.0, FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0]).unwrap(),
        )
        .unwrap();
        (p, h)
    }

    fn example() -> (
        DiagonalObservable,
        HermitianOperator,
        QndMeasurement,
        Vec<f64>,
    ) {
        let p = DiagonalObservable::new(EXAMPLE_SIGMA.to_vec()).unwrap();
        let res = solve_synthesis(&SynthesisProblem::new(p.clone())).unwrap();
        let h = hamiltonian_of_r(&res.r, PhasePolicy::Positive).unwrap();
        let meas = photon_box(8, 0.125, FRAC_PI_4).unwrap();
        (p, h, meas, res.lambda_tilde)
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn random_state(n: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
        let psi: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let pure = DensityMatrix::pure(&psi).unwrap();
        pure.mix(&DensityMatrix::maximally_mixed(n), rng.random::<f64>())
            .unwrap()
    }

    #[test]
    fn lyapunov_values() {
        let p = DiagonalObservable::new(EXAMPLE_SIGMA.to_vec()).unwrap();
        let mixed = DensityMatrix::maximally_mixed(8);
        assert_abs_diff_eq!(
            lyapunov_v(&p, &mixed).unwrap(),
            301.0709 / 8.0,
            epsilon = 1e-12
        );
        let star = DensityMatrix::basis(8, 2).unwrap();
        assert_abs_diff_eq!(lyapunov_v(&p, &star).unwrap(), 10.0114, epsilon = 1e-12);
        let b = DensityMatrix::basis(8, 5).unwrap();
        assert_abs_diff_eq!(
            lyapunov_v_eps(&p, &b, 0.1).unwrap(),
            19.2339 - 0.05,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            lyapunov_v_eps(&p, &mixed, 0.2).unwrap(),
            301.0709 / 8.0 - 0.2 / 16.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn linear_feedback_vanishes_on_diagonal_states() {
        let (p, h, _, _) = example();
        let diag = DensityMatrix::maximally_mixed(8);
        assert_eq!(linear_feedback(&p, &h, &diag, 0.05).unwrap().u, 0.0);
        for n in 0..8 {
            let b = DensityMatrix::basis(8, n).unwrap();
            assert_eq!(linear_feedback(&p, &h, &b, 0.05).unwrap().u, 0.0);
        }
    }

    #[test]
    fn linear_feedback_decreases_v_to_first_order() {
        let (p, h, _, _) = example();
        let h0 =
            HermitianOperator::from_real_diag(&EXAMPLE_SIGMA, crate::state::OperatorRole::Drift);
        let drift = hermitian_expm(&h0, 1.0).unwrap();
        let mut r = rng();
        let mut checked = 0;
        for _ in 0..50 {
            let rho = random_state(8, &mut r);
            let dec = linear_feedback(&p, &h, &rho, 1e-3).unwrap();
            if dec.linear_coeff.abs() <= 1e-3 {
                continue;
            }
            let u = &drift * &hermitian_expm(&h, dec.u).unwrap();
            let next = crate::state::evolve(&rho, &u).unwrap();
            assert!(lyapunov_v(&p, &next).unwrap() < lyapunov_v(&p, &rho).unwrap());
            checked += 1;
        }
        assert!(checked > 40);
    }

    #[test]
    fn slope_matches_finite_difference() {
        let (p, h, _, _) = example();
        let ctl = Controller::new(&p, &h, None, ControllerConfig::quadratic(0.1)).unwrap();
        let mut r = rng();
        for _ in 0..10 {
            let rho = random_state(8, &mut r);
            let f = |u: f64| {
                let next = crate::state::evolve(&rho, &hermitian_expm(&h, u).unwrap()).unwrap();
                lyapunov_v(&p, &next).unwrap()
            };
            let hstep = 1e-4;
            let d1 = (f(hstep) - f(-hstep)) / (2.0 * hstep);
            let d2 = (f(hstep) - 2.0 * f(0.0) + f(-hstep)) / (hstep * hstep);
            assert_abs_diff_eq!(ctl.slope(&rho), d1, epsilon = 1e-5 * (1.0 + d1.abs()));
            assert_abs_diff_eq!(ctl.curvature(&rho), d2, epsilon = 1e-2 * (1.0 + d2.abs()));
        }
    }

    #[test]
    fn martingale_at_zero_control() {
        let (p, h, meas, _) = example();
        let mut r = rng();
        for _ in 0..20 {
            let rho = random_state(8, &mut r);
            let v = lyapunov_v(&p, &rho).unwrap();
            assert_abs_diff_eq!(
                expected_v_after(&p, &h, &meas, &rho, 0.0, 0.0).unwrap(),
                v,
                epsilon = 1e-10
            );
            let ve = lyapunov_v_eps(&p, &rho, 0.3).unwrap();
            assert!(expected_v_after(&p, &h, &meas, &rho, 0.0, 0.3).unwrap() <= ve + 1e-12);
        }
    }

    #[test]
    fn fast_expectation_matches_direct() {
        let (p, h, meas, _) = example();
        let mut r = rng();
        for eps in [0.0, 0.2] {
            let ctl = Controller::new(
                &p,
                &h,
                Some(&meas),
                ControllerConfig::exact_min(0.1).with_epsilon(eps),
            )
            .unwrap();
            for _ in 0..5 {
                let rho = random_state(8, &mut r);
                for u in [-0.1, -0.03, 0.0, 0.07] {
                    let direct = expected_v_after(&p, &h, &meas, &rho, u, eps).unwrap();
                    assert_abs_diff_eq!(
                        ctl.expected_v_after(&rho, u).unwrap(),
                        direct,
                        epsilon = 1e-10
                    );
                }
            }
        }
    }

    #[test]
    fn two_level_curvature() {
        let (p, h) = two_level();
        let meas = photon_box(2, 0.125, 0.3).unwrap();
        assert_abs_diff_eq!(
            curvature_at_eigenstate(&p, &h, &meas, 0, 1e-3).unwrap(),
            -1.0,
            epsilon = 1e-5
        );
        assert_abs_diff_eq!(
            curvature_at_eigenstate(&p, &h, &meas, 1, 1e-3).unwrap(),
            1.0,
            epsilon = 1e-5
        );
        let diag =
            HermitianOperator::from_real_diag(&[0.3, -0.2], crate::state::OperatorRole::Control);
        assert_abs_diff_eq!(
            curvature_at_eigenstate(&p, &diag, &meas, 0, 1e-3).unwrap(),
            0.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn curvature_equals_lambda_tilde() {
        let (p, h, meas, lt) = example();
        for n in 0..8 {
            let c = curvature_at_eigenstate(&p, &h, &meas, n, 1e-3).unwrap();
            assert!(
                (c - lt[n]).abs() <= 1e-4 * lt[n].abs(),
                "n={n}: {c} vs {}",
                lt[n]
            );
        }
    }

    #[test]
    fn quadratic_at_eigenstates() {
        let (p, h, _, lt) = example();
        let cfg = ControllerConfig::quadratic(0.1);
        for n in 0..8 {
            let rho = DensityMatrix::basis(8, n).unwrap();
            let d = quadratic_feedback(&p, &h, &rho, cfg, &mut rng()).unwrap();
            assert_eq!(d.linear_coeff, 0.0);
            assert_abs_diff_eq!(
                d.quadratic_coeff,
                lt[n],
                epsilon = 1e-9 * lt[n].abs().max(1.0)
            );
            if n == 2 {
                assert_eq!(d.u, 0.0);
            } else {
                assert_eq!(d.u, 0.1);
            }
        }
    }

    #[test]
    fn quadratic_interior_and_degenerate() {
        let (p, h) = two_level();
        let ctl = Controller::new(&p, &h, None, ControllerConfig::quadratic(10.0)).unwrap();
        // near |1>, where the curvature is positive
        let psi = [C64::new(0.1, 0.0), C64::new(0.995_f64.sqrt(), 0.0)];
        let rho = DensityMatrix::pure(&psi).unwrap();
        let d = ctl.quadratic(&rho, &mut rng()).unwrap();
        assert!(d.quadratic_coeff > 0.0);
        assert_abs_diff_eq!(d.u, -d.linear_coeff / d.quadratic_coeff, epsilon = 1e-15);

        let zero =
            HermitianOperator::from_real_diag(&[0.0, 0.0], crate::state::OperatorRole::Control);
        let d = quadratic_feedback(
            &p,
            &zero,
            &rho,
            ControllerConfig::quadratic(0.1),
            &mut rng(),
        )
        .unwrap();
        assert_eq!(d.u, 0.0);
    }

    #[test]
    fn random_sign_tie_break_uses_both_signs() {
        let (p, h, _, _) = example();
        let cfg = ControllerConfig::quadratic(0.1).with_tie_break(TieBreak::RandomSign);
        let rho = DensityMatrix::basis(8, 0).unwrap();
        let mut r = rng();
        let signs: Vec<f64> = (0..64)
            .map(|_| quadratic_feedback(&p, &h, &rho, cfg, &mut r).unwrap().u)
            .collect();
        assert!(signs.contains(&0.1) && signs.contains(&-0.1));
    }

    #[test]
    fn exact_min_at_eigenstates() {
        let (p, h, meas, _) = example();
        let cfg = ControllerConfig::exact_min(0.1);
        for n in 0..8 {
            let rho = DensityMatrix::basis(8, n).unwrap();
            let d = exact_min_feedback(&p, &h, &meas, &rho, cfg, &mut rng()).unwrap();
            if n == 2 {
                assert!(d.u.abs() <= 1e-6);
            } else {
                assert_eq!(d.u.abs(), 0.1, "n={n}");
            }
            assert!(d.predicted_delta_v <= 1e-10);
        }
    }

    #[test]
    fn exact_min_never_predicts_increase() {
        let (p, h, meas, _) = example();
        let mut r = rng();
        for eps in [0.0, 0.1] {
            let cfg = ControllerConfig::exact_min(0.1).with_epsilon(eps);
            let ctl = Controller::new(&p, &h, Some(&meas), cfg).unwrap();
            for _ in 0..20 {
                let rho = random_state(8, &mut r);
                let d = ctl.exact_min(&rho, &mut r).unwrap();
                assert!(d.u.abs() <= 0.1);
                assert!(d.predicted_delta_v <= 1e-10);
                let at_zero = ctl.expected_v_after(&rho, 0.0).unwrap();
                assert!(ctl.expected_v_after(&rho, d.u).unwrap() <= at_zero + 1e-10);
            }
        }
    }

    #[test]
    fn controllers_agree_near_target() {
        let (p, h, meas, _) = example();
        let exact = Controller::new(&p, &h, Some(&meas), ControllerConfig::exact_min(0.1)).unwrap();
        let quad = Controller::new(&p, &h, Some(&meas), ControllerConfig::quadratic(0.1)).unwrap();
        let mut r = rng();
        for _ in 0..30 {
            let noise = random_state(8, &mut r);
            let rho = DensityMatrix::basis(8, 2)
                .unwrap()
                .mix(&noise, 0.9995)
                .unwrap();
            let ue = exact.exact_min(&rho, &mut r).unwrap().u;
            let uq = quad.quadratic(&rho, &mut r).unwrap().u;
            assert!((ue - uq).abs() <= 1e-3, "{ue} vs {uq}");
        }
    }

    #[test]
    fn config_validation_and_json() {
        assert!(ControllerConfig::linear(0.0).validate().is_err());
        assert!(ControllerConfig::quadratic(-1.0).validate().is_err());
        assert!(ControllerConfig::exact_min(0.1)
            .with_epsilon(-0.1)
            .validate()
            .is_err());
        let cfg: ControllerConfig =
            serde_json::from_str(r#"{"kind":"exact-min","u_bar":0.2,"tie_break":"random-sign"}"#)
                .unwrap();
        assert_eq!(cfg.kind, ControllerKind::ExactMin);
        assert_eq!(cfg.tie_break, TieBreak::RandomSign);
        assert_eq!(cfg.epsilon, 0.0);
        let (p, h) = two_level();
        assert!(Controller::new(&p, &h, None, cfg).is_err());
    }
}
