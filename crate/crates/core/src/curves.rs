//! Curve ingestion, grid manipulation and synthetic dynamic-resistance curves.

use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{FdError, Result};

/// `n` curves sampled on one shared, strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    grid: Vec<f64>,
    values: DMatrix<f64>,
    ids: Vec<String>,
}

impl CurveSet {
    /// Build a curve set, validating the grid, the shape and finiteness.
    pub fn new(grid: Vec<f64>, values: DMatrix<f64>, ids: Vec<String>) -> Result<Self> {
        if grid.len() < 2 {
            return Err(FdError::invalid("a curve set needs at least 2 grid points"));
        }
        if values.nrows() == 0 {
            return Err(FdError::invalid("a curve set needs at least one curve"));
        }
        if values.ncols() != grid.len() {
            return Err(FdError::DimensionMismatch(format!(
                "{} grid points but {} columns of values",
                grid.len(),
                values.ncols()
            )));
        }
        if ids.len() != values.nrows() {
            return Err(FdError::DimensionMismatch(format!(
                "{} ids for {} curves",
                ids.len(),
                values.nrows()
            )));
        }
        for (j, t) in grid.iter().enumerate() {
            if !t.is_finite() {
                return Err(FdError::NonFinite(format!("grid point {j}")));
            }
            if j > 0 && *t <= grid[j - 1] {
                return Err(FdError::NonIncreasingGrid { col: j });
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return Err(FdError::NonFinite(format!("curve {} at grid index {c}", ids[r])));
        }
        Ok(CurveSet { grid, values, ids })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// `n × m` sample matrix, one curve per row.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn n_curves(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.grid.len()
    }

    pub fn curve(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.grid[0], self.grid[self.grid.len() - 1])
    }

    /// Write the CSV layout read by [`load_curveset`].
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string()];
        header.extend(self.grid.iter().map(|t| fmt_num(*t)));
        w.write_record(&header)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.values.row(i).iter().map(|v| fmt_num(*v)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| FdError::io(path, e))?;
        Ok(())
    }
}

pub(crate) fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Read a curve CSV: the header row holds a label cell followed by the
/// numeric grid, each body row an id followed by one value per grid point.
///
/// Locations in error messages are 1-based (row 1 is the header).
pub fn load_curveset(path: impl AsRef<Path>) -> Result<CurveSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| FdError::io(path, e))?;
    read_curveset(file)
}

pub fn read_curveset<R: std::io::Read>(reader: R) -> Result<CurveSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| FdError::invalid("empty curve file"))??;
    let mut grid = Vec::with_capacity(header.len().saturating_sub(1));
    for (c, cell) in header.iter().enumerate().skip(1) {
        grid.push(parse_cell(cell, 1, c + 1)?);
    }
    if grid.len() < 2 {
        return Err(FdError::invalid("header must list at least 2 grid points"));
    }
    for j in 1..grid.len() {
        if grid[j] <= grid[j - 1] {
            return Err(FdError::NonIncreasingGrid { col: j + 2 });
        }
    }
    let m = grid.len();
    let mut ids = Vec::new();
    let mut flat = Vec::new();
    for (r, rec) in records.enumerate() {
        let rec = rec?;
        let row = r + 2;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let id = rec[0].to_string();
        if rec.len() - 1 != m {
            return Err(FdError::RaggedRow {
                row,
                id,
                expected: m,
                found: rec.len() - 1,
            });
        }
        for (c, cell) in rec.iter().enumerate().skip(1) {
            flat.push(parse_cell(cell, row, c + 1)?);
        }
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(FdError::invalid("curve file has no data rows"));
    }
    let values = DMatrix::from_row_slice(ids.len(), m, &flat);
    CurveSet::new(grid, values, ids)
}

fn parse_cell(cell: &str, row: usize, col: usize) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| FdError::Parse {
        row,
        col,
        msg: format!("'{cell}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(FdError::Parse {
            row,
            col,
            msg: format!("'{cell}' is not finite"),
        });
    }
    Ok(v)
}

/// Keep grid indices `0, step, 2·step, …`.
pub fn subsample_grid(cs: &CurveSet, step: usize) -> Result<CurveSet> {
    let m = cs.n_points();
    if step < 1 || step > m {
        return Err(FdError::invalid(format!("step {step} outside 1..={m}")));
    }
    let keep: Vec<usize> = (0..m).step_by(step).collect();
    let grid = keep.iter().map(|&j| cs.grid[j]).collect();
    let values = cs.values.select_columns(&keep);
    if keep.len() < 2 {
        return Err(FdError::invalid(format!(
            "step {step} leaves a single grid point"
        )));
    }
    CurveSet::new(grid, values, cs.ids.clone())
}

/// Shape parameters of the noiseless template curve.
///
/// The template is an exponential drop to a local minimum, a logistic rise
/// to a local maximum and a smooth linear-like decay to the end of the weld:
///
/// `r(t) = baseline + drop·e^{-t/drop_tau} + amplitude·σ((t-rise_center)/rise_width)
///        - slope·decay_width·softplus((t-rise_center)/decay_width)`
///
/// with `slope = final_decay / (T - rise_center)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrcShape {
    pub baseline: f64,
    pub drop: f64,
    pub drop_tau: f64,
    pub amplitude: f64,
    pub rise_center: f64,
    pub rise_width: f64,
    pub final_decay: f64,
    pub decay_width: f64,
}

impl Default for DrcShape {
    fn default() -> Self {
        DrcShape {
            baseline: 150.0,
            drop: 60.0,
            drop_tau: 12.0,
            amplitude: 40.0,
            rise_center: 80.0,
            rise_width: 10.0,
            final_decay: 25.0,
            decay_width: 15.0,
        }
    }
}

/// Per-cluster displacement of the three DRC features: amplitude of the
/// rise, time of the local maximum, and resistance at the end of the weld.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateShift {
    pub amplitude: f64,
    pub phase: f64,
    pub final_level: f64,
}

impl DrcShape {
    pub fn shifted(&self, s: &TemplateShift) -> DrcShape {
        DrcShape {
            amplitude: self.amplitude + s.amplitude,
            rise_center: self.rise_center + s.phase,
            final_decay: self.final_decay - s.final_level,
            ..*self
        }
    }

    pub fn eval(&self, t: f64, domain_end: f64) -> f64 {
        let slope = self.final_decay / (domain_end - self.rise_center);
        let z = (t - self.rise_center) / self.rise_width;
        let zd = (t - self.rise_center) / self.decay_width;
        self.baseline + self.drop * (-t / self.drop_tau).exp() + self.amplitude * logistic(z)
            - slope * self.decay_width * softplus(zd)
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_per_cluster: usize,
    pub templates: Vec<TemplateShift>,
    pub noise_sd: f64,
    pub m: usize,
    /// Right end `T` of the time domain `[0, T]` (ms).
    pub domain_end: f64,
    pub seed: u64,
    pub shape: DrcShape,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_per_cluster: 30,
            templates: vec![
                TemplateShift {
                    amplitude: -10.0,
                    phase: -10.0,
                    final_level: -8.0,
                },
                TemplateShift::default(),
                TemplateShift {
                    amplitude: 10.0,
                    phase: 10.0,
                    final_level: 8.0,
                },
            ],
            noise_sd: 1.0,
            m: 238,
            domain_end: 237.0,
            seed: 1,
            shape: DrcShape::default(),
        }
    }
}

/// Synthetic curves plus the template index of every row.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub curves: CurveSet,
    pub labels: Vec<usize>,
}

/// Draw `n_per_cluster` noisy copies of every template; rows are grouped by
/// template in order and `labels` holds the 0-based template index.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    if !(cfg.domain_end > 0.0) || !cfg.domain_end.is_finite() {
        return Err(FdError::invalid(format!(
            "degenerate domain [0, {}]",
            cfg.domain_end
        )));
    }
    if cfg.n_per_cluster < 1 {
        return Err(FdError::invalid("n_per_cluster must be at least 1"));
    }
    if cfg.templates.is_empty() {
        return Err(FdError::invalid("at least one template is required"));
    }
    if !(cfg.noise_sd >= 0.0) {
        return Err(FdError::invalid("noise_sd must be non-negative"));
    }
    if cfg.m < 2 {
        return Err(FdError::invalid("grid size m must be at least 2"));
    }
    let grid: Vec<f64> = (0..cfg.m)
        .map(|j| cfg.domain_end * j as f64 / (cfg.m - 1) as f64)
        .collect();
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| FdError::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_per_cluster * cfg.templates.len();
    let mut values = DMatrix::zeros(n, cfg.m);
    let mut ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (k, shift) in cfg.templates.iter().enumerate() {
        let shape = cfg.shape.shifted(shift);
        let template: Vec<f64> = grid.iter().map(|&t| shape.eval(t, cfg.domain_end)).collect();
        for r in 0..cfg.n_per_cluster {
            for (j, base) in template.iter().enumerate() {
                let e = if cfg.noise_sd > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                values[(row, j)] = base + e;
            }
            ids.push(format!("k{}_{:04}", k + 1, r + 1));
            labels.push(k);
            row += 1;
        }
    }
    Ok(SyntheticData {
        curves: CurveSet::new(grid, values, ids)?,
        labels,
    })
}
