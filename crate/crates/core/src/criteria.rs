//! Information criteria shared by every likelihood-based model.
//!
//! All are on the "smaller is better" scale.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::posterior_entropy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoCriteria {
    pub loglik: f64,
    pub n_params: usize,
    pub n_obs: usize,
    pub bic: f64,
    pub aic: f64,
    pub icl: f64,
}

impl InfoCriteria {
    pub fn new(loglik: f64, n_params: usize, posteriors: &DMatrix<f64>) -> Self {
        let n_obs = posteriors.nrows();
        let k = n_params as f64;
        let bic = -2.0 * loglik + k * (n_obs as f64).ln();
        InfoCriteria {
            loglik,
            n_params,
            n_obs,
            bic,
            aic: -2.0 * loglik + 2.0 * k,
            icl: bic + 2.0 * posterior_entropy(posteriors),
        }
    }

    pub fn get(&self, which: Criterion) -> f64 {
        match which {
            Criterion::Bic => self.bic,
            Criterion::Aic => self.aic,
            Criterion::Icl => self.icl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Bic,
    Aic,
    Icl,
}

impl std::str::FromStr for Criterion {
    type Err = crate::FdError;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bic" => Ok(Criterion::Bic),
            "aic" => Ok(Criterion::Aic),
            "icl" => Ok(Criterion::Icl),
            other => Err(crate::FdError::invalid(format!("unknown criterion '{other}'"))),
        }
    }
}
