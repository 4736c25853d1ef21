#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use qndctl_core::{ComplexMatrix, DensityMatrix, DiagonalObservable, C64};
use rand::Rng;

/// Diagonal of P for the 8-level example instance.
pub const EXAMPLE_SIGMA: [f64; 8] = [
    51.7022, 82.0324, 10.0114, 40.2333, 24.6756, 19.2339, 28.6260, 44.5561,
];

pub fn example_p() -> DiagonalObservable {
    DiagonalObservable::new(EXAMPLE_SIGMA.to_vec()).unwrap()
}

/// `(1/2)|0><0| + (1/2)|+><+|` with `|+>` the uniform superposition.
pub fn example_rho0() -> DensityMatrix {
    DensityMatrix::basis(8, 0)
        .unwrap()
        .mix(&DensityMatrix::uniform_superposition(8), 0.5)
        .unwrap()
}

pub fn to_na(m: &ComplexMatrix) -> DMatrix<Complex64> {
    let n = m.dim();
    DMatrix::from_fn(n, n, |i, j| m[(i, j)])
}

pub fn from_na(m: &DMatrix<Complex64>) -> ComplexMatrix {
    ComplexMatrix::from_fn(m.nrows(), |i, j| m[(i, j)])
}

/// Eigenvalues from nalgebra, sorted ascending.
pub fn na_spectrum(m: &ComplexMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = to_na(m).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

pub fn random_hermitian<R: Rng>(n: usize, scale: f64, rng: &mut R) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n);
    for i in 0..n {
        m[(i, i)] = C64::new(scale * (2.0 * rng.random::<f64>() - 1.0), 0.0);
        for j in (i + 1)..n {
            let z = C64::new(
                2.0 * rng.random::<f64>() - 1.0,
                2.0 * rng.random::<f64>() - 1.0,
            ) * scale;
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

pub fn random_pure<R: Rng>(n: usize, rng: &mut R) -> DensityMatrix {
    let psi: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    DensityMatrix::pure(&psi).unwrap()
}

/// A random mixed state of random rank.
pub fn random_state<R: Rng>(n: usize, rng: &mut R) -> DensityMatrix {
    let a = random_pure(n, rng);
    let b = random_pure(n, rng);
    let ab = a.mix(&b, rng.random::<f64>()).unwrap();
    ab.mix(
        &DensityMatrix::maximally_mixed(n),
        0.5 + 0.5 * rng.random::<f64>(),
    )
    .unwrap()
}
