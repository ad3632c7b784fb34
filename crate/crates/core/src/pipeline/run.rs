use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use super::ari::adjusted_rand_index;
use super::config::{Clusterer, InputSource, MethodKind, MethodSpec, PipelineConfig};
use super::plot::{centroid_curves, plot_centroids, plot_clusters, plot_raw};
use crate::adaptive::{
    fclust_em, funhddc_em, select_m_bic, waveclust_em, CriterionRow, EmOptions, FclustOptions, Fitted,
    FunHddcOptions, Selection, WaveclustOptions,
};
use crate::basis::{make_bspline_basis, smooth_curveset, CoefficientSet, LambdaChoice};
use crate::criteria::Criterion;
use crate::curves::{generate_synthetic, load_curveset, subsample_grid, CurveSet};
use crate::error::{FdError, Result};
use crate::fpca::{fpca, select_components};
use crate::funclust::select_m_functional;
use crate::mvclust::{
    gmm_em, select_m_majority, GmmOptions, IndexRow, MajorityMethod, Partition, ValidityIndex,
};
use crate::par;

/// How a method arrived at its cluster count.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum SelectionDetail {
    Majority {
        votes: Vec<(ValidityIndex, usize)>,
        indices: Vec<IndexRow>,
    },
    Bic {
        candidates: Vec<CandidateTable>,
    },
    Silhouette {
        widths: Vec<(usize, f64)>,
    },
}

/// BIC sweep over M for one model setting.
#[derive(Debug, Clone, Serialize)]
pub struct CandidateTable {
    pub setting: String,
    pub rows: Vec<CriterionRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Result of running one method in isolation.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub m: usize,
    /// 0-based labels with no empty cluster.
    pub labels: Vec<usize>,
    /// Winning model setting when several were compared.
    pub setting: Option<String>,
    pub selection: SelectionDetail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub name: String,
    pub family: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<String>,
    pub status: MethodStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub setting: Option<String>,
    pub cluster_sizes: Vec<usize>,
    pub seconds: f64,
    /// Agreement with the generating labels of synthetic input.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ari_truth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionDetail>,
    pub artifacts: Vec<PathBuf>,
    #[serde(skip)]
    pub labels: Option<Vec<usize>>,
}

/// Pairwise ARI over the methods that succeeded, in configuration order.
#[derive(Debug, Clone, Serialize)]
pub struct AriMatrix {
    pub methods: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub n_curves: usize,
    pub n_points: usize,
    pub seed: u64,
    pub methods: Vec<MethodReport>,
    pub ari: AriMatrix,
    pub report_path: PathBuf,
}

impl ComparisonReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }

    /// Plain-text table: method, cluster count, seconds.
    pub fn table(&self) -> String {
        let w = self.methods.iter().map(|m| m.name.len()).max().unwrap_or(6).max(6);
        let mut s = format!("{:<w$}  {:>8}  {:>10}\n", "method", "clusters", "seconds");
        for m in &self.methods {
            let k = match (m.status, m.m) {
                (MethodStatus::Ok, Some(k)) => k.to_string(),
                _ => "failed".into(),
            };
            let _ = writeln!(s, "{:<w$}  {:>8}  {:>10.3}", m.name, k, m.seconds);
        }
        s
    }
}

/// Load the configured curves, with generating labels for synthetic input.
pub fn load_input(input: &InputSource) -> Result<(CurveSet, Option<Vec<usize>>)> {
    match input {
        InputSource::Csv(p) => Ok((load_curveset(p)?, None)),
        InputSource::Synthetic(s) => {
            let d = generate_synthetic(s)?;
            Ok((d.curves, Some(d.labels)))
        }
    }
}

fn smooth(cs: &CurveSet, n_basis: usize, lambda: &LambdaChoice) -> Result<CoefficientSet> {
    let basis = make_bspline_basis(cs.domain(), n_basis, 4)?;
    smooth_curveset(cs, &basis, lambda)
}

/// Relabel so clusters are `0..k` with no gaps, keeping their order.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let top = labels.iter().copied().max().map_or(0, |v| v + 1);
    let mut map = vec![usize::MAX; top];
    for &l in labels {
        map[l] = 0;
    }
    let mut k = 0;
    for v in map.iter_mut().filter(|v| **v == 0) {
        *v = k;
        k += 1;
    }
    (labels.iter().map(|&l| map[l]).collect(), k)
}

fn em(restarts: usize, seed: u64) -> EmOptions {
    EmOptions {
        restarts,
        seed,
        ..EmOptions::default()
    }
}

/// Run BIC sweeps for each setting and keep the overall minimum (ties go
/// to the earlier setting, then to the smaller M).
fn best_by_bic<T, F>(settings: Vec<(String, F)>, ms: &[usize]) -> Result<(String, Selection<T>, Vec<CandidateTable>)>
where
    T: Fitted + Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let mut tables = Vec::new();
    let mut best: Option<(String, Selection<T>)> = None;
    let mut errors = Vec::new();
    for (setting, fit) in settings {
        match select_m_bic(ms, Criterion::Bic, fit) {
            Ok(sel) => {
                tables.push(CandidateTable {
                    setting: setting.clone(),
                    rows: sel.table.clone(),
                    error: None,
                });
                let better = best
                    .as_ref()
                    .is_none_or(|(_, b)| sel.model.criteria().bic < b.model.criteria().bic);
                if better {
                    best = Some((setting, sel));
                }
            }
            Err(e) => {
                errors.push(format!("{setting}: {e}"));
                tables.push(CandidateTable {
                    setting,
                    rows: Vec::new(),
                    error: Some(e.to_string()),
                });
            }
        }
    }
    match best {
        Some((s, sel)) => Ok((s, sel, tables)),
        None => Err(FdError::AllFitsFailed(errors.join("; "))),
    }
}

fn bic_result<T: Fitted>(
    setting: String,
    sel: Selection<T>,
    tables: Vec<CandidateTable>,
    labels: &[usize],
) -> MethodResult {
    let (labels, _) = compact(labels);
    MethodResult {
        m: sel.m,
        labels,
        setting: Some(setting),
        selection: SelectionDetail::Bic { candidates: tables },
    }
}

fn run_multivariate(x: &DMatrix<f64>, clusterer: &Clusterer, ms: &[usize], seed: u64) -> Result<MethodResult> {
    let majority = |method| -> Result<MethodResult> {
        let sel = select_m_majority(x, method, ms, seed)?;
        Ok(MethodResult {
            m: sel.m,
            labels: sel.partition.labels,
            setting: None,
            selection: SelectionDetail::Majority {
                votes: sel.votes,
                indices: sel.table,
            },
        })
    };
    match clusterer {
        Clusterer::Kmeans { restarts } => majority(MajorityMethod::Kmeans { restarts: *restarts }),
        Clusterer::Hierarchical { linkage } => majority(MajorityMethod::Hierarchical { linkage: *linkage }),
        Clusterer::ModelBased { covariances, restarts } => {
            let opts = GmmOptions {
                restarts: *restarts,
                seed,
                ..GmmOptions::default()
            };
            let settings = covariances
                .iter()
                .map(|&c| (c.to_string(), move |m| gmm_em(x, m, c, &opts)))
                .collect();
            let (s, sel, tables) = best_by_bic(settings, ms)?;
            let labels = sel.model.labels.clone();
            Ok(bic_result(s, sel, tables, &labels))
        }
    }
}

/// Run one method on `cs` with its configured settings.
pub fn run_method(cs: &CurveSet, spec: &MethodSpec, seed: u64) -> Result<MethodResult> {
    let ms = spec.candidates(cs.n_curves())?;
    match &spec.kind {
        MethodKind::Raw { step, clusterer } => {
            let sub = subsample_grid(cs, *step)?;
            run_multivariate(sub.values(), clusterer, &ms, seed)
        }
        MethodKind::FilteringBspline {
            n_basis,
            lambda,
            clusterer,
        } => {
            let coeffs = smooth(cs, *n_basis, lambda)?;
            run_multivariate(&coeffs.coefficients, clusterer, &ms, seed)
        }
        MethodKind::FilteringFpca {
            n_basis,
            lambda,
            variance,
            clusterer,
        } => {
            let model = fpca(&smooth(cs, *n_basis, lambda)?)?;
            let l = select_components(&model, *variance)?;
            let mut res = run_multivariate(&model.leading_scores(l), clusterer, &ms, seed)?;
            let comp = format!("{l} components");
            res.setting = Some(match res.setting {
                Some(s) => format!("{comp}, {s}"),
                None => comp,
            });
            Ok(res)
        }
        MethodKind::Fclust {
            n_basis,
            random_effects,
            restarts,
        } => {
            let bases = n_basis
                .iter()
                .map(|&k| Ok((k, make_bspline_basis(cs.domain(), k, 4)?)))
                .collect::<Result<Vec<_>>>()?;
            let opts = FclustOptions {
                em: em(*restarts, seed),
                random_effects: *random_effects,
            };
            let settings = bases
                .iter()
                .map(|(k, b)| (format!("K={k}"), move |m| fclust_em(cs, b, m, &opts)))
                .collect();
            let (s, sel, tables) = best_by_bic(settings, &ms)?;
            let labels = sel.model.labels.clone();
            Ok(bic_result(s, sel, tables, &labels))
        }
        MethodKind::Waveclust {
            structures,
            denoise,
            restarts,
        } => {
            let mut settings = Vec::new();
            for &st in structures {
                for &dn in denoise {
                    let opts = WaveclustOptions {
                        em: em(*restarts, seed),
                        structure: Some(st),
                        denoise: dn,
                        random_effects: true,
                    };
                    let name = format!("{}{}", format!("{st:?}").to_lowercase(), if dn { ", denoised" } else { "" });
                    settings.push((name, move |m| waveclust_em(cs, m, &opts)));
                }
            }
            let (s, sel, tables) = best_by_bic(settings, &ms)?;
            let labels = sel.model.labels.clone();
            Ok(bic_result(s, sel, tables, &labels))
        }
        MethodKind::Funhddc {
            n_basis,
            thresholds,
            submodels,
            restarts,
        } => {
            let coeffs = smooth(cs, *n_basis, &LambdaChoice::Fixed(0.0))?;
            let coeffs = &coeffs;
            let mut settings = Vec::new();
            for &sm in submodels {
                for &th in thresholds {
                    let opts = FunHddcOptions {
                        em: em(*restarts, seed),
                        threshold: th,
                        submodel: sm,
                        ..FunHddcOptions::default()
                    };
                    let name = format!("{}, threshold {th}", format!("{sm:?}").to_lowercase());
                    settings.push((name, move |m| funhddc_em(coeffs, m, &opts)));
                }
            }
            let (s, sel, tables) = best_by_bic(settings, &ms)?;
            let labels = sel.model.labels.clone();
            Ok(bic_result(s, sel, tables, &labels))
        }
        MethodKind::DistanceBased {
            n_basis,
            lambda,
            l,
            restarts,
        } => {
            let coeffs = smooth(cs, *n_basis, lambda)?;
            let sel = select_m_functional(&coeffs, *l, &ms, *restarts, seed)?;
            Ok(MethodResult {
                m: sel.m,
                labels: sel.partition.labels,
                setting: None,
                selection: SelectionDetail::Silhouette { widths: sel.silhouettes },
            })
        }
    }
}

fn write_centroids(path: &Path, grid: &[f64], centroids: &DMatrix<f64>) -> Result<()> {
    let ids = (1..=centroids.nrows()).map(|k| format!("cluster_{k}")).collect();
    CurveSet::new(grid.to_vec(), centroids.clone(), ids)?.write_csv(path)
}

fn export(cs: &CurveSet, name: &str, res: &MethodResult, dir: &Path, plots: bool) -> Result<Vec<PathBuf>> {
    let (labels, k) = compact(&res.labels);
    let part = Partition::from_labels(cs.values(), labels, k)?;
    let mut out = Vec::new();
    let p = dir.join(format!("assignments_{name}.csv"));
    part.write_csv(&p, cs.ids())?;
    out.push(p);
    let centroids = centroid_curves(cs, &part)?;
    let p = dir.join(format!("centroids_{name}.csv"));
    write_centroids(&p, cs.grid(), &centroids)?;
    out.push(p);
    if plots {
        out.push(plot_clusters(cs, &part.labels, name, dir.join(format!("clusters_{name}.svg")))?);
        out.push(plot_centroids(
            cs.grid(),
            &centroids,
            &format!("{name} centroids"),
            dir.join(format!("centroids_{name}.svg")),
        )?);
    }
    Ok(out)
}

/// Run every configured method, write the per-method exports and
/// `report.json` to the output directory, and return the report.
///
/// A failing method is recorded as failed; the others still run.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<ComparisonReport> {
    cfg.validate()?;
    let (cs, truth) = load_input(&cfg.input)?;
    run_pipeline_on(cfg, &cs, truth.as_deref())
}

/// As [`run_pipeline`] on already loaded curves.
pub fn run_pipeline_on(cfg: &PipelineConfig, cs: &CurveSet, truth: Option<&[usize]>) -> Result<ComparisonReport> {
    cfg.validate()?;
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| FdError::io(dir, e))?;
    let runs = par::with_workers(cfg.workers, || {
        par::map_indexed(cfg.methods.len(), |i| {
            let spec = &cfg.methods[i];
            let start = Instant::now();
            let res = run_method(cs, spec, spec.seed.unwrap_or(cfg.seed));
            (res, start.elapsed().as_secs_f64())
        })
    });
    if cfg.plots {
        plot_raw(cs, "curves", dir.join("raw.svg"))?;
    }
    let mut methods = Vec::with_capacity(runs.len());
    for (spec, (res, seconds)) in cfg.methods.iter().zip(runs) {
        let name = spec.name();
        let mut rep = MethodReport {
            name: name.clone(),
            family: spec.kind.family().into(),
            algorithm: spec.kind.algorithm().map(str::to_string),
            status: MethodStatus::Failed,
            error: None,
            m: None,
            setting: None,
            cluster_sizes: Vec::new(),
            seconds,
            ari_truth: None,
            selection: None,
            artifacts: Vec::new(),
            labels: None,
        };
        match res.and_then(|r| export(cs, &name, &r, dir, cfg.plots).map(|a| (r, a))) {
            Ok((r, artifacts)) => {
                log::info!("{name}: M = {} in {seconds:.2} s", r.m);
                let (labels, k) = compact(&r.labels);
                let mut sizes = vec![0; k];
                for &l in &labels {
                    sizes[l] += 1;
                }
                rep.status = MethodStatus::Ok;
                rep.m = Some(r.m);
                rep.setting = r.setting;
                rep.cluster_sizes = sizes;
                rep.ari_truth = truth.map(|t| adjusted_rand_index(t, &labels)).transpose()?;
                rep.selection = Some(r.selection);
                rep.artifacts = artifacts;
                rep.labels = Some(labels);
            }
            Err(e) => {
                log::warn!("{name} failed: {e}");
                rep.error = Some(e.to_string());
            }
        }
        methods.push(rep);
    }
    let ok: Vec<&MethodReport> = methods.iter().filter(|m| m.status == MethodStatus::Ok).collect();
    let mut values = vec![vec![1.0; ok.len()]; ok.len()];
    for a in 0..ok.len() {
        for b in a + 1..ok.len() {
            let v = adjusted_rand_index(ok[a].labels.as_ref().unwrap(), ok[b].labels.as_ref().unwrap())?;
            values[a][b] = v;
            values[b][a] = v;
        }
    }
    let ari = AriMatrix {
        methods: ok.iter().map(|m| m.name.clone()).collect(),
        values,
    };
    let report = ComparisonReport {
        n_curves: cs.n_curves(),
        n_points: cs.n_points(),
        seed: cfg.seed,
        methods,
        ari,
        report_path: dir.join("report.json"),
    };
    let text = serde_json::to_string_pretty(&report)?;
    std::fs::write(&report.report_path, text + "\n").map_err(|e| FdError::io(&report.report_path, e))?;
    Ok(report)
}

/// Read an assignments CSV (`curve_id,cluster`, 1-based) back into
/// 0-based labels ordered like `ids`.
pub fn read_assignments(path: impl AsRef<Path>, ids: &[String]) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut map = std::collections::HashMap::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse_err = |msg: String| FdError::Parse { row: row + 2, col: 2, msg };
        let id = rec.get(0).ok_or_else(|| parse_err("missing curve id".into()))?;
        let cell = rec.get(1).ok_or_else(|| parse_err("missing cluster".into()))?;
        let k: usize = cell
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("'{cell}' is not a cluster number")))?;
        if k == 0 {
            return Err(parse_err("cluster numbers start at 1".into()));
        }
        map.insert(id.to_string(), k - 1);
    }
    ids.iter()
        .map(|id| {
            map.get(id)
                .copied()
                .ok_or_else(|| FdError::invalid(format!("no assignment for curve {id} in {}", path.display())))
        })
        .collect()
}
