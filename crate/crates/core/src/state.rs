//! Quantum states, Hermitian operators and diagonal observables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::linalg::{eigh, ComplexMatrix, C64, ONE};
use crate::tolerance::TOL;

/// Tolerances for the three density-matrix invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityTolerance {
    pub hermitian: f64,
    pub trace: f64,
    pub psd: f64,
}

impl Default for DensityTolerance {
    fn default() -> Self {
        Self {
            hermitian: TOL.hermitian,
            trace: TOL.trace,
            psd: TOL.psd,
        }
    }
}

/// A validated density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
}

/// Checks the density-matrix invariants and reports every one that fails.
pub fn density_violations(m: &ComplexMatrix, tol: DensityTolerance) -> Result<Vec<Violation>> {
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    let mut out = Vec::new();
    let herm = m.hermitian_deviation();
    if herm > tol.hermitian {
        out.push(Violation {
            invariant: "hermitian",
            magnitude: herm,
        });
    }
    let trace_err = (m.trace() - ONE).norm();
    if trace_err > tol.trace {
        out.push(Violation {
            invariant: "unit trace",
            magnitude: trace_err,
        });
    }
    // The PSD check runs on the Hermitian part so a non-Hermitian input still
    // gets a complete report.
    let hp = m.hermitian_part();
    let min_eig = eigh(&hp)?.values[0];
    if min_eig < -tol.psd {
        out.push(Violation {
            invariant: "positive semidefinite",
            magnitude: -min_eig,
        });
    }
    Ok(out)
}

/// Returns a [`DensityMatrix`] iff `m` is Hermitian, unit-trace and PSD at `tol`.
pub fn validate_density(m: ComplexMatrix, tol: DensityTolerance) -> Result<DensityMatrix> {
    let violations = density_violations(&m, tol)?;
    if violations.is_empty() {
        Ok(DensityMatrix { mat: m })
    } else {
        Err(Error::InvalidDensity(violations))
    }
}

impl DensityMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        validate_density(m, DensityTolerance::default())
    }

    /// Wraps a matrix the caller already knows to be a state.
    pub(crate) fn from_trusted(mat: ComplexMatrix) -> Self {
        Self { mat }
    }

    /// |k><k|.
    pub fn basis(n: usize, k: usize) -> Result<Self> {
        if k >= n {
            return Err(Error::IndexOutOfRange { index: k, len: n });
        }
        let mut m = ComplexMatrix::zeros(n);
        m[(k, k)] = ONE;
        Ok(Self { mat: m })
    }

    /// I / n.
    pub fn maximally_mixed(n: usize) -> Self {
        Self {
            mat: ComplexMatrix::identity(n).scale(C64::new(1.0 / n as f64, 0.0)),
        }
    }

    /// |psi><psi| after normalising `psi`.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::NonFinite);
        }
        let n = psi.len();
        let mat = ComplexMatrix::from_fn(n, |i, j| psi[i] * psi[j].conj() / (norm * norm));
        Ok(Self { mat })
    }

    /// Equal-amplitude superposition over all basis states.
    pub fn uniform_superposition(n: usize) -> Self {
        Self {
            mat: ComplexMatrix::from_fn(n, |_, _| C64::new(1.0 / n as f64, 0.0)),
        }
    }

    /// `weight * self + (1 - weight) * other`.
    pub fn mix(&self, other: &DensityMatrix, weight: f64) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::InvalidConfig(format!(
                "mixing weight {weight} outside [0, 1]"
            )));
        }
        let a = self.mat.scale(C64::new(weight, 0.0));
        let b = other.mat.scale(C64::new(1.0 - weight, 0.0));
        Ok(Self { mat: &a + &b })
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    /// Populations rho_nn.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).collect()
    }

    /// Tr(rho^2).
    pub fn purity(&self) -> f64 {
        self.mat.trace_product(&self.mat).re
    }

    /// (rho + rho^dag)/2 rescaled to unit trace, absorbing accumulated round-off.
    pub fn renormalized(&self) -> Self {
        let h = self.mat.hermitian_part();
        let tr = h.trace().re;
        Self {
            mat: h.scale(C64::new(1.0 / tr, 0.0)),
        }
    }

    /// Trace distance (1/2)||self - other||_1.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let d = &self.mat - &other.mat;
        Ok(0.5
            * eigh(&d.hermitian_part())?
                .values
                .iter()
                .map(|v| v.abs())
                .sum::<f64>())
    }
}

/// What a Hermitian operator is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OperatorRole {
    Drift,
    Control,
    #[default]
    Generic,
}

/// A Hermitian matrix tagged with its role.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    mat: ComplexMatrix,
    role: OperatorRole,
}

impl HermitianOperator {
    pub fn new(mat: ComplexMatrix, role: OperatorRole) -> Result<Self> {
        if !mat.is_finite() {
            return Err(Error::NonFinite);
        }
        let dev = mat.hermitian_deviation();
        if dev > TOL.hermitian {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self { mat, role })
    }

    pub fn generic(mat: ComplexMatrix) -> Result<Self> {
        Self::new(mat, OperatorRole::Generic)
    }

    pub fn from_real_diag(diag: &[f64], role: OperatorRole) -> Self {
        Self {
            mat: ComplexMatrix::from_real_diag(diag),
            role,
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn role(&self) -> OperatorRole {
        self.role
    }

    pub fn with_role(mut self, role: OperatorRole) -> Self {
        self.role = role;
        self
    }
}

/// Re Tr(A rho).
pub fn expectation(a: &HermitianOperator, rho: &DensityMatrix) -> Result<f64> {
    if a.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: rho.dim(),
        });
    }
    let t = a.matrix().trace_product(rho.matrix());
    debug_assert!(t.im.abs() <= TOL.imaginary * (1.0 + t.re.abs()));
    Ok(t.re)
}

/// exp(-i s h) through the Hermitian eigendecomposition of `h`.
pub fn hermitian_expm(h: &HermitianOperator, s: f64) -> Result<ComplexMatrix> {
    Ok(eigh(h.matrix())?.propagator(s))
}

/// U rho U^dag for a unitary `u`.
pub fn evolve(rho: &DensityMatrix, u: &ComplexMatrix) -> Result<DensityMatrix> {
    if u.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: u.dim(),
        });
    }
    let dev = u.unitary_deviation();
    if dev > TOL.unitary {
        return Err(Error::NotUnitary(dev));
    }
    Ok(DensityMatrix::from_trusted(rho.matrix().conjugate_by(u)))
}

/// Population of basis state `n`, i.e. Tr(rho |n><n|).
pub fn fidelity_to_basis(rho: &DensityMatrix, n: usize) -> Result<f64> {
    if n >= rho.dim() {
        return Err(Error::IndexOutOfRange {
            index: n,
            len: rho.dim(),
        });
    }
    Ok(rho.matrix()[(n, n)].re)
}

/// Energy operator P, stored through its diagonal and the index of its minimum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagonalObservable {
    sigma: Vec<f64>,
    n_star: usize,
}

impl DiagonalObservable {
    /// Takes the first minimising index as `n_star`.
    pub fn new(sigma: Vec<f64>) -> Result<Self> {
        Self::check_sigma(&sigma)?;
        let n_star = sigma
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        Ok(Self { sigma, n_star })
    }

    /// Uses the supplied minimiser, which must attain the minimum.
    pub fn with_n_star(sigma: Vec<f64>, n_star: usize) -> Result<Self> {
        Self::check_sigma(&sigma)?;
        if n_star >= sigma.len() {
            return Err(Error::IndexOutOfRange {
                index: n_star,
                len: sigma.len(),
            });
        }
        let min = sigma.iter().copied().fold(f64::INFINITY, f64::min);
        if sigma[n_star] > min {
            return Err(Error::InvalidObservable(format!(
                "sigma[{n_star}] = {} is not the minimum {min}",
                sigma[n_star]
            )));
        }
        Ok(Self { sigma, n_star })
    }

    fn check_sigma(sigma: &[f64]) -> Result<()> {
        if sigma.len() < 2 {
            return Err(Error::DimensionTooSmall {
                min: 2,
                found: sigma.len(),
            });
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn n_star(&self) -> usize {
        self.n_star
    }

    pub fn min_value(&self) -> f64 {
        self.sigma[self.n_star]
    }

    pub fn to_matrix(&self) -> ComplexMatrix {
        ComplexMatrix::from_real_diag(&self.sigma)
    }

    pub fn to_operator(&self) -> HermitianOperator {
        HermitianOperator::from_real_diag(&self.sigma, OperatorRole::Generic)
    }

    /// Smallest |p_i - p_j| over i != j, with the pair attaining it.
    pub fn min_gap(&self) -> (f64, usize, usize) {
        let mut best = (f64::INFINITY, 0, 1);
        for i in 0..self.dim() {
            for j in (i + 1)..self.dim() {
                let g = (self.sigma[i] - self.sigma[j]).abs();
                if g < best.0 {
                    best = (g, i, j);
                }
            }
        }
        best
    }

    pub fn is_nondegenerate(&self, tol: f64) -> bool {
        self.min_gap().0 > tol
    }

    /// True when no other level is within `tol` of the minimum.
    pub fn minimum_is_unique(&self, tol: f64) -> bool {
        let m = self.min_value();
        self.sigma
            .iter()
            .enumerate()
            .all(|(i, &v)| i == self.n_star || v - m > tol)
    }

    /// A copy with every level scaled by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            sigma: self.sigma.iter().map(|v| v * c).collect(),
            n_star: self.n_star,
        }
    }
}
