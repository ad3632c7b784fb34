use serde::{Deserialize, Serialize};

use super::Fitted;
use crate::criteria::Criterion;
use crate::error::{FdError, Result};
use crate::par;

/// One candidate cluster count in a selection sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionRow {
    pub m: usize,
    pub loglik: Option<f64>,
    pub n_params: Option<usize>,
    pub bic: Option<f64>,
    pub aic: Option<f64>,
    pub icl: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Selection<T> {
    pub m: usize,
    pub model: T,
    pub table: Vec<CriterionRow>,
}

/// Fit every M in `m_range` and keep the smallest criterion (ties to the
/// smaller M). Failed fits are recorded in the table; the sweep only fails
/// if every fit did.
pub fn select_m_bic<T, F>(m_range: &[usize], criterion: Criterion, fit: F) -> Result<Selection<T>>
where
    T: Fitted + Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let mut ms = m_range.to_vec();
    ms.sort_unstable();
    ms.dedup();
    if ms.is_empty() {
        return Err(FdError::invalid("empty cluster-count range"));
    }
    let fits = par::map_indexed(ms.len(), |i| fit(ms[i]));
    let mut table = Vec::with_capacity(ms.len());
    let mut best: Option<(usize, T)> = None;
    let mut errors = Vec::new();
    for (&m, res) in ms.iter().zip(fits) {
        match res {
            Ok(model) => {
                let c = *model.criteria();
                table.push(CriterionRow {
                    m,
                    loglik: Some(c.loglik),
                    n_params: Some(c.n_params),
                    bic: Some(c.bic),
                    aic: Some(c.aic),
                    icl: Some(c.icl),
                    error: None,
                });
                let better = best
                    .as_ref()
                    .is_none_or(|(_, b)| c.get(criterion) < b.criteria().get(criterion));
                if better {
                    best = Some((m, model));
                }
            }
            Err(e) => {
                errors.push(format!("M={m}: {e}"));
                table.push(CriterionRow {
                    m,
                    loglik: None,
                    n_params: None,
                    bic: None,
                    aic: None,
                    icl: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    match best {
        Some((m, model)) => Ok(Selection { m, model, table }),
        None => Err(FdError::AllFitsFailed(errors.join("; "))),
    }
}
