//! Model-based functional clustering fitted by EM: a spline mixed-effects
//! mixture, a wavelet-domain mixed model and group-specific latent
//! subspaces, plus information-criterion selection of the cluster count.

mod fclust;
mod funhddc;
mod select;
pub mod simulate;
mod waveclust;
pub mod wavelet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::criteria::InfoCriteria;
use crate::error::{FdError, Result};
use crate::mvclust::{kmeans_detailed, KMeansOptions};

pub use fclust::{fclust_em, fclust_posterior, FclustModel, FclustOptions};
pub use funhddc::{funhddc_em, scree_dimension, FunHddcModel, FunHddcOptions, HddcGroup, HddcMetric, HddcSubmodel};
pub use select::{select_m_bic, CriterionRow, Selection};
pub use waveclust::{
    wavelet_features, waveclust_em, waveclust_em_on_coefficients, VarianceStructure, WaveclustOptions, WaveletModel,
};

/// How EM restarts are initialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Hard responsibilities from a single seeded k-means run.
    #[default]
    KMeans,
    /// A random balanced hard assignment.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmOptions {
    /// Stop when `|Δℓ| < tol · max(|ℓ|, 1)`.
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
    pub init: Init,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            tol: 1e-6,
            max_iter: 500,
            restarts: 5,
            seed: 0,
            init: Init::KMeans,
        }
    }
}

/// Anything carrying a log-likelihood and information criteria.
pub trait Fitted {
    fn criteria(&self) -> &InfoCriteria;

    fn loglik(&self) -> f64 {
        self.criteria().loglik
    }
}

pub(crate) fn initial_responsibilities(
    features: &DMatrix<f64>,
    m: usize,
    opts: &EmOptions,
    restart: usize,
) -> Result<DMatrix<f64>> {
    let n = features.nrows();
    if m == 0 || m > n {
        return Err(FdError::invalid(format!(
            "cannot form {m} clusters from {n} observations"
        )));
    }
    let labels = match opts.init {
        Init::KMeans => {
            kmeans_detailed(
                features,
                m,
                &KMeansOptions {
                    restarts: 1,
                    max_iter: 300,
                    seed: opts.seed.wrapping_add(restart as u64),
                },
            )?
            .partition
            .labels
        }
        Init::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(restart as u64);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut labels = vec![0; n];
            for (pos, &i) in order.iter().enumerate() {
                labels[i] = pos % m;
            }
            labels
        }
    };
    let mut post = DMatrix::zeros(n, m);
    for (i, &l) in labels.iter().enumerate() {
        post[(i, l)] = 1.0;
    }
    Ok(post)
}

pub(crate) fn has_converged(prev: f64, cur: f64, tol: f64) -> bool {
    (cur - prev).abs() < tol * cur.abs().max(1.0)
}

/// Highest log-likelihood wins, ties to the earlier restart; failures are
/// logged and only surface if every restart failed.
pub(crate) fn best_restart<T: Fitted>(runs: Vec<Result<T>>, what: &str) -> Result<T> {
    let mut best: Option<T> = None;
    let mut first_err = None;
    for (r, res) in runs.into_iter().enumerate() {
        match res {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.loglik() > b.loglik()) {
                    best = Some(fit);
                }
            }
            Err(e) => {
                log::debug!("{what} restart {r} failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or_else(|| FdError::invalid("no restarts requested")))
}
