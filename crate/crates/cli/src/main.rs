use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use fdclust::basis::{make_bspline_basis, smooth_curveset, LambdaChoice};
use fdclust::curves::{generate_synthetic, load_curveset, SyntheticConfig};
use fdclust::fpca::{fpca, select_components};
use fdclust::mvclust::Partition;
use fdclust::par;
use fdclust::pipeline::{
    centroid_curves, emit_plots, paper_methods, read_assignments, run_pipeline, InputSource, MethodSpec,
    MethodStatus, PipelineConfig,
};

/// Functional data clustering of discretely sampled curves.
#[derive(Parser)]
#[command(name = "fdclust", version)]
struct Cli {
    /// Worker threads for data-parallel steps (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Curve CSV: header `id,t1,t2,…`, one curve per row.
    #[arg(long)]
    input: Option<PathBuf>,
    /// JSON settings for the subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing [default: out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for restarts and synthetic data.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic dynamic-resistance curves from shifted templates.
    Synth(Common),
    /// Smooth every curve in a B-spline basis.
    Smooth(Common),
    /// Smooth, then compute functional principal components.
    Fpca(Common),
    /// Run one clustering method and export its partition.
    Cluster {
        #[command(flatten)]
        common: Common,
        /// One of the built-in method names, used when --config is absent.
        #[arg(long)]
        method: Option<String>,
    },
    /// Run a suite of methods (the full study suite by default) and compare them.
    Compare(Common),
    /// Plot curves colored by an assignments CSV, with their centroids.
    Plot {
        #[command(flatten)]
        common: Common,
        /// `curve_id,cluster` CSV as written by `cluster` or `compare`.
        #[arg(long)]
        assignments: PathBuf,
        /// Stem for the output file names.
        #[arg(long, default_value = "plot")]
        name: String,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct SmoothConfig {
    n_basis: usize,
    order: usize,
    lambda: LambdaChoice,
}

impl Default for SmoothConfig {
    fn default() -> Self {
        SmoothConfig {
            n_basis: 12,
            order: 4,
            lambda: LambdaChoice::Fixed(0.0),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct FpcaConfig {
    n_basis: usize,
    order: usize,
    lambda: LambdaChoice,
    variance: f64,
}

impl Default for FpcaConfig {
    fn default() -> Self {
        FpcaConfig {
            n_basis: 100,
            order: 4,
            lambda: LambdaChoice::gcv_default(),
            variance: 0.99,
        }
    }
}

#[derive(Serialize)]
struct FpcaSummary<'a> {
    n_curves: usize,
    n_basis: usize,
    components: usize,
    variance_threshold: f64,
    eigenvalues: Vec<f64>,
    cumulative_variance: &'a [f64],
    lambdas: &'a [f64],
}

fn read_json<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn out_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

impl Common {
    fn out(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn require_input(c: &Common) -> Result<&Path> {
    match &c.input {
        Some(p) => Ok(p),
        None => bail!("--input is required"),
    }
}

fn synth(c: &Common) -> Result<()> {
    let mut cfg: SyntheticConfig = read_json(c.config.as_deref())?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let data = generate_synthetic(&cfg)?;
    let out = c.out();
    out_dir(&out)?;
    let curves = out.join("curves.csv");
    data.curves.write_csv(&curves)?;
    let part = Partition::from_labels(data.curves.values(), data.labels.clone(), cfg.templates.len())?;
    part.write_csv(out.join("truth.csv"), data.curves.ids())?;
    println!("{} curves on {} points -> {}", data.curves.n_curves(), data.curves.n_points(), curves.display());
    Ok(())
}

fn smooth(c: &Common) -> Result<()> {
    let cfg: SmoothConfig = read_json(c.config.as_deref())?;
    let cs = load_curveset(require_input(c)?)?;
    let basis = make_bspline_basis(cs.domain(), cfg.n_basis, cfg.order)?;
    let coeffs = smooth_curveset(&cs, &basis, &cfg.lambda)?;
    let out = c.out();
    out_dir(&out)?;
    coeffs.write_csv(out.join("coefficients.csv"))?;
    basis.write_json(out.join("basis.json"))?;
    println!("{} curves smoothed with {} basis functions", coeffs.n_curves(), cfg.n_basis);
    Ok(())
}

fn run_fpca(c: &Common) -> Result<()> {
    let cfg: FpcaConfig = read_json(c.config.as_deref())?;
    let cs = load_curveset(require_input(c)?)?;
    let basis = make_bspline_basis(cs.domain(), cfg.n_basis, cfg.order)?;
    let coeffs = smooth_curveset(&cs, &basis, &cfg.lambda)?;
    let model = fpca(&coeffs)?;
    let l = select_components(&model, cfg.variance)?;
    let out = c.out();
    out_dir(&out)?;
    model.write_scores_csv(out.join("scores.csv"), l)?;
    let summary = FpcaSummary {
        n_curves: cs.n_curves(),
        n_basis: cfg.n_basis,
        components: l,
        variance_threshold: cfg.variance,
        eigenvalues: model.eigenvalues.iter().copied().collect(),
        cumulative_variance: &model.var_explained,
        lambdas: &coeffs.lambdas,
    };
    fs::write(out.join("fpca.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!("{l} components reach {:.1}% of the variance", 100.0 * cfg.variance);
    Ok(())
}

fn report(cfg: &PipelineConfig) -> Result<()> {
    let rep = run_pipeline(cfg)?;
    print!("{}", rep.table());
    for m in rep.methods.iter().filter(|m| m.status == MethodStatus::Failed) {
        eprintln!("{}: {}", m.name, m.error.as_deref().unwrap_or("failed"));
    }
    println!("report: {}", rep.report_path.display());
    if rep.methods.iter().all(|m| m.status == MethodStatus::Failed) {
        bail!("every method failed");
    }
    Ok(())
}

fn cluster(c: &Common, method: Option<&str>, workers: Option<usize>) -> Result<()> {
    let spec: MethodSpec = match (&c.config, method) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        (None, Some(name)) => match paper_methods().into_iter().find(|m| m.name() == name) {
            Some(m) => m,
            None => {
                let names: Vec<String> = paper_methods().iter().map(|m| m.name()).collect();
                bail!("unknown method '{name}'; built-in methods: {}", names.join(", "))
            }
        },
        (None, None) => bail!("give --config (a method JSON) or --method"),
    };
    let mut cfg = PipelineConfig::new(InputSource::Csv(require_input(c)?.to_path_buf()), vec![spec], c.out());
    cfg.seed = c.seed.unwrap_or(0);
    cfg.workers = workers;
    report(&cfg)
}

fn compare(c: &Common, workers: Option<usize>) -> Result<()> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::new(InputSource::Csv(require_input(c)?.to_path_buf()), paper_methods(), c.out()),
    };
    if let Some(p) = &c.input {
        cfg.input = InputSource::Csv(p.clone());
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if workers.is_some() {
        cfg.workers = workers;
    }
    report(&cfg)
}

fn plot(c: &Common, assignments: &Path, name: &str) -> Result<()> {
    let cs = load_curveset(require_input(c)?)?;
    let labels = read_assignments(assignments, cs.ids())?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let part = Partition::from_labels(cs.values(), labels, k)
        .context("assignments must use every cluster number from 1 to the largest")?;
    let centroids = centroid_curves(&cs, &part)?;
    let out = c.out();
    out_dir(&out)?;
    for f in emit_plots(&cs, &part, &centroids, &out, name)? {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.workers == Some(0) {
        bail!("--workers must be at least 1");
    }
    let workers = cli.workers;
    par::with_workers(workers, move || match &cli.command {
        Command::Synth(c) => synth(c),
        Command::Smooth(c) => smooth(c),
        Command::Fpca(c) => run_fpca(c),
        Command::Cluster { common, method } => cluster(common, method.as_deref(), workers),
        Command::Compare(c) => compare(c, workers),
        Command::Plot {
            common,
            assignments,
            name,
        } => plot(common, assignments, name),
    })
}
