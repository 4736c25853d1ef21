//! Numerical tolerances shared by every module.

/// One place for every threshold used in validation and property checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceConfig {
    /// Max |A_ij - conj(A_ji)| for a matrix to count as Hermitian.
    pub hermitian: f64,
    /// Max |Tr(rho) - 1|.
    pub trace: f64,
    /// Smallest admissible eigenvalue is `-psd`.
    pub psd: f64,
    /// Max entry of |U^dag U - I|.
    pub unitary: f64,
    /// Element-wise agreement of sorted spectra.
    pub spectrum: f64,
    /// Jacobi stops once the off-diagonal Frobenius norm falls below this (relative to ||A||_F, floored at 1).
    pub eigen_off_diagonal: f64,
    pub eigen_max_sweeps: usize,
    /// Completeness of QND coefficient rows.
    pub completeness: f64,
    /// Outcomes with probability at or below this are treated as impossible.
    pub p_floor: f64,
    /// Membership tolerance for the connectivity cone.
    pub cone: f64,
    /// Max |sum lambda_tilde|.
    pub lambda_sum: f64,
    /// Minimum pairwise gap for a spectrum to count as non-degenerate.
    pub nondegenerate: f64,
    /// Off-diagonal entries of H1 at or below this count as missing links.
    pub connectivity: f64,
    /// Max imaginary part tolerated when a trace is known to be real.
    pub imaginary: f64,
    /// A trajectory is absorbed once some population reaches this.
    pub absorbed: f64,
}

impl ToleranceConfig {
    pub const DEFAULT: ToleranceConfig = ToleranceConfig {
        hermitian: 1e-10,
        trace: 1e-9,
        psd: 1e-9,
        unitary: 1e-9,
        spectrum: 1e-8,
        eigen_off_diagonal: 1e-12,
        eigen_max_sweeps: 100,
        completeness: 1e-10,
        p_floor: 1e-12,
        cone: 1e-8,
        lambda_sum: 1e-7,
        nondegenerate: 1e-8,
        connectivity: 1e-8,
        imaginary: 1e-9,
        absorbed: 0.999,
    };
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// The tolerances every module uses unless told otherwise.
pub const TOL: ToleranceConfig = ToleranceConfig::DEFAULT;
