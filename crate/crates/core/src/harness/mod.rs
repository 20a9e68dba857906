//! Configuration, dataset files, the transfer experiment and its reports.

mod config;
mod dataset;
mod experiment;
mod report;

pub use config::ExperimentConfig;
pub use dataset::{decode_dataset, encode_dataset, generate_dataset, load_dataset, save_dataset, SceneContext};
pub use experiment::{build_scenarios, central_quantization_floor, evaluate, run_experiment, spearman, ChordalRow, ErrorRow, ExperimentReport};
pub use report::{aed_svg, chordal_csv, emit_report, errors_csv, parse_chordal_csv, parse_errors_csv, summary_text};
