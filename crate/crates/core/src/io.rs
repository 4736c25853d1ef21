//! JSON file formats for matrices, observables, measurements and synthesis results.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, RealMatrix, C64};
use crate::measurement::{photon_box, QndMeasurement};
use crate::state::{DensityMatrix, DiagonalObservable, HermitianOperator, OperatorRole};
use crate::synthesis::SynthesisResult;

/// `{"n": 2, "re": [[..], [..]], "im": [[..], [..]]}`; `im` may be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub n: usize,
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixJson {
    pub fn from_complex(m: &ComplexMatrix) -> Self {
        let (re, im) = m.to_rows();
        let has_im = im.iter().flatten().any(|&x| x != 0.0);
        Self {
            n: m.dim(),
            re,
            im: has_im.then_some(im),
        }
    }

    pub fn from_real(m: &RealMatrix) -> Self {
        Self {
            n: m.dim(),
            re: m.to_rows(),
            im: None,
        }
    }

    pub fn to_complex(&self) -> Result<ComplexMatrix> {
        let m = ComplexMatrix::from_rows(&self.re, self.im.as_deref())?;
        if m.dim() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: m.dim(),
            });
        }
        Ok(m)
    }

    pub fn to_hermitian(&self, role: OperatorRole) -> Result<HermitianOperator> {
        HermitianOperator::new(self.to_complex()?, role)
    }

    pub fn to_density(&self) -> Result<DensityMatrix> {
        DensityMatrix::new(self.to_complex()?)
    }
}

/// `{"diag": [..], "n_star": k}`; `n_star` defaults to the argmin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableJson {
    pub diag: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_star: Option<usize>,
}

impl ObservableJson {
    pub fn to_observable(&self) -> Result<DiagonalObservable> {
        match self.n_star {
            Some(k) => DiagonalObservable::with_n_star(self.diag.clone(), k),
            None => DiagonalObservable::new(self.diag.clone()),
        }
    }

    pub fn from_observable(p: &DiagonalObservable) -> Self {
        Self {
            diag: p.sigma().to_vec(),
            n_star: Some(p.n_star()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotonBoxJson {
    pub n: usize,
    pub phi0: f64,
    pub theta: f64,
}

/// Either explicit coefficients `c[mu][n]` or the photon-box shorthand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasurementJson {
    PhotonBox {
        photon_box: PhotonBoxJson,
    },
    Coefficients {
        n: usize,
        m: usize,
        coeffs_re: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coeffs_im: Option<Vec<Vec<f64>>>,
    },
}

impl MeasurementJson {
    pub fn to_measurement(&self) -> Result<QndMeasurement> {
        match self {
            MeasurementJson::PhotonBox { photon_box: b } => photon_box(b.n, b.phi0, b.theta),
            MeasurementJson::Coefficients {
                n,
                m,
                coeffs_re,
                coeffs_im,
            } => {
                if coeffs_re.len() != *m {
                    return Err(Error::InvalidMeasurement(format!(
                        "declared {m} outcomes, found {}",
                        coeffs_re.len()
                    )));
                }
                if let Some(im) = coeffs_im {
                    if im.len() != *m || im.iter().zip(coeffs_re).any(|(a, b)| a.len() != b.len()) {
                        return Err(Error::InvalidMeasurement(
                            "coeffs_im does not match the shape of coeffs_re".into(),
                        ));
                    }
                }
                let coeffs: Vec<Vec<C64>> = coeffs_re
                    .iter()
                    .enumerate()
                    .map(|(mu, row)| {
                        row.iter()
                            .enumerate()
                            .map(|(k, &re)| {
                                let im = coeffs_im.as_ref().map_or(0.0, |im| im[mu][k]);
                                C64::new(re, im)
                            })
                            .collect()
                    })
                    .collect();
                let meas = QndMeasurement::new(coeffs)?;
                if meas.dim() != *n {
                    return Err(Error::DimensionMismatch {
                        expected: *n,
                        found: meas.dim(),
                    });
                }
                Ok(meas)
            }
        }
    }

    pub fn from_measurement(meas: &QndMeasurement) -> Self {
        let coeffs_re = meas
            .coeffs()
            .iter()
            .map(|r| r.iter().map(|c| c.re).collect())
            .collect();
        let im: Vec<Vec<f64>> = meas
            .coeffs()
            .iter()
            .map(|r| r.iter().map(|c| c.im).collect())
            .collect();
        let has_im = im.iter().flatten().any(|&x| x != 0.0);
        MeasurementJson::Coefficients {
            n: meas.dim(),
            m: meas.outcomes(),
            coeffs_re,
            coeffs_im: has_im.then_some(im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResultJson {
    pub r: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub lambda_tilde: Vec<f64>,
    pub residual: f64,
    pub objective: f64,
    pub iterations: usize,
    pub feasible: bool,
    pub convention: String,
}

/// Magnitude convention for `|H1_ij|` in terms of `R_ij`.
pub const CONVENTION: &str = "sqrt(R/2)";

impl From<&SynthesisResult> for SynthesisResultJson {
    fn from(r: &SynthesisResult) -> Self {
        Self {
            r: r.r.matrix().to_rows(),
            lambda: r.lambda.clone(),
            lambda_tilde: r.lambda_tilde.clone(),
            residual: r.residual,
            objective: r.objective,
            iterations: r.iterations,
            feasible: r.feasible,
            convention: CONVENTION.into(),
        }
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
