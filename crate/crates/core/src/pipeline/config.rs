use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive::{HddcSubmodel, VarianceStructure};
use crate::basis::LambdaChoice;
use crate::curves::SyntheticConfig;
use crate::error::{FdError, Result};
use crate::mvclust::{CovarianceModel, Linkage};

/// Where the curves come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    Csv(PathBuf),
    Synthetic(SyntheticConfig),
}

/// Multivariate algorithm applied to a finite representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "algorithm")]
pub enum Clusterer {
    /// M by majority vote of silhouette, Dunn and Calinski–Harabasz.
    Kmeans {
        #[serde(default = "default_restarts")]
        restarts: usize,
    },
    /// M by majority vote, tree cut at each candidate M.
    Hierarchical {
        #[serde(default = "default_linkage")]
        linkage: Linkage,
    },
    /// Gaussian mixtures; M and covariance model by BIC.
    ModelBased {
        #[serde(default = "all_covariances")]
        covariances: Vec<CovarianceModel>,
        #[serde(default = "default_em_restarts")]
        restarts: usize,
    },
}

impl Clusterer {
    fn tag(&self) -> &'static str {
        match self {
            Clusterer::Kmeans { .. } => "kmeans",
            Clusterer::Hierarchical { .. } => "hierarchical",
            Clusterer::ModelBased { .. } => "model_based",
        }
    }

    fn uses_bic(&self) -> bool {
        matches!(self, Clusterer::ModelBased { .. })
    }
}

/// A method family together with its representation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum MethodKind {
    /// Cluster grid values kept every `step` points.
    Raw {
        #[serde(default = "default_step")]
        step: usize,
        #[serde(flatten)]
        clusterer: Clusterer,
    },
    /// Cluster B-spline coefficients.
    FilteringBspline {
        #[serde(default = "default_filter_basis")]
        n_basis: usize,
        #[serde(default = "zero_lambda")]
        lambda: LambdaChoice,
        #[serde(flatten)]
        clusterer: Clusterer,
    },
    /// Cluster the leading FPCA scores of smoothed curves.
    FilteringFpca {
        #[serde(default = "default_rich_basis")]
        n_basis: usize,
        #[serde(default = "LambdaChoice::gcv_default")]
        lambda: LambdaChoice,
        #[serde(default = "default_variance")]
        variance: f64,
        #[serde(flatten)]
        clusterer: Clusterer,
    },
    /// Spline mixed-effects mixture; M and K by BIC.
    Fclust {
        #[serde(default = "default_fclust_bases")]
        n_basis: Vec<usize>,
        #[serde(default = "default_true")]
        random_effects: bool,
        #[serde(default = "default_em_restarts")]
        restarts: usize,
    },
    /// Wavelet-domain mixed model; M, variance structure and denoising by BIC.
    Waveclust {
        #[serde(default = "all_structures")]
        structures: Vec<VarianceStructure>,
        #[serde(default = "both_bools")]
        denoise: Vec<bool>,
        #[serde(default = "default_em_restarts")]
        restarts: usize,
    },
    /// Group-specific subspaces; M, threshold and submodel by BIC.
    Funhddc {
        #[serde(default = "default_filter_basis")]
        n_basis: usize,
        #[serde(default = "default_thresholds")]
        thresholds: Vec<f64>,
        #[serde(default = "all_submodels")]
        submodels: Vec<HddcSubmodel>,
        #[serde(default = "default_restarts")]
        restarts: usize,
    },
    /// k-means under the L² distance of the `l`-th derivative; M by silhouette.
    DistanceBased {
        #[serde(default = "default_rich_basis")]
        n_basis: usize,
        #[serde(default = "LambdaChoice::gcv_default")]
        lambda: LambdaChoice,
        #[serde(default)]
        l: usize,
        #[serde(default = "default_restarts")]
        restarts: usize,
    },
}

impl MethodKind {
    /// Name used for output files when none is configured.
    pub fn default_name(&self) -> String {
        match self {
            MethodKind::Raw { clusterer, .. } => format!("raw_{}", clusterer.tag()),
            MethodKind::FilteringBspline { clusterer, .. } => format!("bspline_{}", clusterer.tag()),
            MethodKind::FilteringFpca { clusterer, .. } => format!("fpca_{}", clusterer.tag()),
            MethodKind::Fclust { .. } => "fclust".into(),
            MethodKind::Waveclust { .. } => "waveclust".into(),
            MethodKind::Funhddc { .. } => "funhddc".into(),
            MethodKind::DistanceBased { .. } => "distance_based".into(),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            MethodKind::Raw { .. } => "raw",
            MethodKind::FilteringBspline { .. } => "filtering_bspline",
            MethodKind::FilteringFpca { .. } => "filtering_fpca",
            MethodKind::Fclust { .. } => "fclust",
            MethodKind::Waveclust { .. } => "waveclust",
            MethodKind::Funhddc { .. } => "funhddc",
            MethodKind::DistanceBased { .. } => "distance_based",
        }
    }

    pub fn algorithm(&self) -> Option<&'static str> {
        match self {
            MethodKind::Raw { clusterer, .. }
            | MethodKind::FilteringBspline { clusterer, .. }
            | MethodKind::FilteringFpca { clusterer, .. } => Some(clusterer.tag()),
            _ => None,
        }
    }

    /// Smallest admissible cluster count: likelihood-selected methods may
    /// pick a single cluster, index-selected ones need two.
    pub fn min_clusters(&self) -> usize {
        match self {
            MethodKind::Raw { clusterer, .. }
            | MethodKind::FilteringBspline { clusterer, .. }
            | MethodKind::FilteringFpca { clusterer, .. } => {
                if clusterer.uses_bic() {
                    1
                } else {
                    2
                }
            }
            MethodKind::Fclust { .. } | MethodKind::Waveclust { .. } | MethodKind::Funhddc { .. } => 1,
            MethodKind::DistanceBased { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: MethodKind,
    /// Candidate cluster counts; defaults to `min..=8` capped at `n - 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_range: Option<Vec<usize>>,
    /// Overrides the pipeline seed for this method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl MethodSpec {
    pub fn new(kind: MethodKind) -> Self {
        MethodSpec {
            name: None,
            kind,
            m_range: None,
            seed: None,
        }
    }

    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.default_name())
    }

    /// The candidate cluster counts for `n` curves.
    pub fn candidates(&self, n: usize) -> Result<Vec<usize>> {
        let lo = self.kind.min_clusters();
        let hi = n.saturating_sub(1);
        match &self.m_range {
            None => {
                let ms: Vec<usize> = (lo..=DEFAULT_MAX_CLUSTERS.min(hi)).collect();
                if ms.is_empty() {
                    return Err(FdError::Config(format!("{n} curves leave no admissible cluster count")));
                }
                Ok(ms)
            }
            Some(r) => {
                let mut ms = r.clone();
                ms.sort_unstable();
                ms.dedup();
                match (ms.first(), ms.last()) {
                    (Some(&a), Some(&b)) if a >= lo && b <= hi => Ok(ms),
                    (None, _) | (_, None) => Err(FdError::Config("empty m_range".into())),
                    _ => Err(FdError::Config(format!("m_range must lie in [{lo}, {hi}]"))),
                }
            }
        }
    }
}

const DEFAULT_MAX_CLUSTERS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: InputSource,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_true")]
    pub plots: bool,
}

impl PipelineConfig {
    pub fn new(input: InputSource, methods: Vec<MethodSpec>, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            input,
            methods,
            out_dir: out_dir.into(),
            seed: 0,
            workers: None,
            plots: true,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(s).map_err(|e| FdError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| FdError::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Structural checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(FdError::Config("at least one method is required".into()));
        }
        let mut names: Vec<String> = self.methods.iter().map(|m| m.name()).collect();
        for n in &names {
            if n.is_empty() || !n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(FdError::Config(format!(
                    "method name '{n}' must be non-empty ASCII letters, digits, '_' or '-'"
                )));
            }
        }
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(FdError::Config(format!("duplicate method name '{}'", w[0])));
        }
        if self.workers == Some(0) {
            return Err(FdError::Config("workers must be at least 1".into()));
        }
        for m in &self.methods {
            if let Some(r) = &m.m_range {
                if r.is_empty() {
                    return Err(FdError::Config(format!("{}: empty m_range", m.name())));
                }
                if r.iter().any(|&k| k < m.kind.min_clusters()) {
                    return Err(FdError::Config(format!(
                        "{}: cluster counts start at {}",
                        m.name(),
                        m.kind.min_clusters()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The thirteen methods compared in the study, with their published
/// settings.
pub fn paper_methods() -> Vec<MethodSpec> {
    let clusterers = || {
        [
            Clusterer::Hierarchical {
                linkage: default_linkage(),
            },
            Clusterer::Kmeans {
                restarts: default_restarts(),
            },
            Clusterer::ModelBased {
                covariances: all_covariances(),
                restarts: default_em_restarts(),
            },
        ]
    };
    let mut out = Vec::new();
    for c in clusterers() {
        out.push(MethodSpec::new(MethodKind::Raw {
            step: default_step(),
            clusterer: c,
        }));
    }
    for c in clusterers() {
        out.push(MethodSpec::new(MethodKind::FilteringBspline {
            n_basis: default_filter_basis(),
            lambda: zero_lambda(),
            clusterer: c,
        }));
    }
    for c in clusterers() {
        out.push(MethodSpec::new(MethodKind::FilteringFpca {
            n_basis: default_rich_basis(),
            lambda: LambdaChoice::gcv_default(),
            variance: default_variance(),
            clusterer: c,
        }));
    }
    out.push(MethodSpec::new(MethodKind::Fclust {
        n_basis: default_fclust_bases(),
        random_effects: true,
        restarts: default_em_restarts(),
    }));
    out.push(MethodSpec::new(MethodKind::Waveclust {
        structures: all_structures(),
        denoise: both_bools(),
        restarts: default_em_restarts(),
    }));
    out.push(MethodSpec::new(MethodKind::Funhddc {
        n_basis: default_filter_basis(),
        thresholds: default_thresholds(),
        submodels: all_submodels(),
        restarts: default_restarts(),
    }));
    out.push(MethodSpec::new(MethodKind::DistanceBased {
        n_basis: default_rich_basis(),
        lambda: LambdaChoice::gcv_default(),
        l: 0,
        restarts: default_restarts(),
    }));
    out
}

fn default_restarts() -> usize {
    20
}

fn default_em_restarts() -> usize {
    5
}

fn default_linkage() -> Linkage {
    Linkage::Ward
}

fn default_step() -> usize {
    13
}

fn default_filter_basis() -> usize {
    12
}

fn default_rich_basis() -> usize {
    100
}

fn zero_lambda() -> LambdaChoice {
    LambdaChoice::Fixed(0.0)
}

fn default_variance() -> f64 {
    0.99
}

fn default_fclust_bases() -> Vec<usize> {
    vec![5, 10]
}

fn default_thresholds() -> Vec<f64> {
    vec![0.2, 0.5, 0.9]
}

fn all_covariances() -> Vec<CovarianceModel> {
    vec![CovarianceModel::Spherical, CovarianceModel::Diagonal, CovarianceModel::Full]
}

fn all_structures() -> Vec<VarianceStructure> {
    vec![VarianceStructure::Constant, VarianceStructure::Group]
}

fn all_submodels() -> Vec<HddcSubmodel> {
    vec![HddcSubmodel::Full, HddcSubmodel::CommonNoise]
}

fn both_bools() -> Vec<bool> {
    vec![false, true]
}

fn default_true() -> bool {
    true
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
