//! Config-driven comparison of every method family on one curve set:
//! cluster-count selection per method, assignments, centroid curves,
//! plots, cross-method ARI and timings.

mod ari;
mod config;
mod plot;
mod run;

pub use ari::adjusted_rand_index;
pub use config::{paper_methods, Clusterer, InputSource, MethodKind, MethodSpec, PipelineConfig};
pub use plot::{centroid_curves, cluster_color, emit_plots, plot_centroids, plot_clusters, plot_raw};
pub use run::{
    load_input, read_assignments, run_method, run_pipeline, run_pipeline_on, AriMatrix, CandidateTable,
    ComparisonReport, MethodReport, MethodResult, MethodStatus, SelectionDetail,
};
