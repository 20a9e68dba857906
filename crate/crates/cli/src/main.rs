use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use staploc_core::harness::{
    build_scenarios, central_quantization_floor, emit_report, evaluate, load_dataset, parse_chordal_csv, parse_errors_csv, run_experiment,
    save_dataset, spearman, ExperimentConfig, ExperimentReport, SceneContext,
};
use staploc_core::neural::{freeze_and_finetune, load_checkpoint, save_checkpoint, train, CnnModel, TrainConfig};
use staploc_core::rng::derive_seed;
use staploc_core::scene::ScenarioTag;
use staploc_core::subspace::pairwise_from_covariances;
use staploc_core::{Error, Result};

/// NAMF heatmaps, CNN target localization and clutter-subspace transfer
/// analysis for a displaced airborne radar.
///
/// Any configuration key can be overridden with `--section.key=value`,
/// for example `--train.epochs=5` or `--experiment.scnr_db=0,20`.
#[derive(Parser, Debug)]
#[command(name = "staploc", version)]
struct Cli {
    /// Configuration file (sectioned key = value).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, same as `--experiment.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, same as `--output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for data generation and evaluation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the resolved configuration and a summary of each scenario.
    GenScenario {
        /// Only this scenario (O, N, NE, ...).
        #[arg(long)]
        tag: Option<ScenarioTag>,
    },
    /// Generate a calibrated heatmap dataset for one scenario.
    GenDataset {
        #[arg(long, default_value = "O")]
        tag: ScenarioTag,
        #[arg(long)]
        count: usize,
        #[arg(long, allow_hyphen_values = true)]
        scnr_db: f64,
        /// Destination file; defaults to `<out>/<tag>_<scnr>dB.hmt`.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Chordal distance of every displaced scenario to the original.
    Chordal,
    /// Train a network on a dataset file.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Fine-tune a trained network's dense layers on a few examples.
    Fsl {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score a network and the cell-midpoint estimator on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Scenario the dataset was drawn from.
        #[arg(long, default_value = "O")]
        tag: ScenarioTag,
    },
    /// Run the full transfer experiment and write its report.
    RunExperiment,
    /// Rebuild plots and summary from the CSVs in the output directory.
    Report,
}

/// Splits `--section.key=value` overrides from the arguments clap handles.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        if let Some(body) = a.strip_prefix("--") {
            if let Some((key, value)) = body.split_once('=') {
                if key.contains('.') {
                    overrides.push((key.to_string(), value.to_string()));
                    continue;
                }
            }
        }
        rest.push(a);
    }
    (rest, overrides)
}

/// `println!` that reports a failed write, such as a closed pipe, as an
/// error instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        writeln!(std::io::stdout().lock(), $($arg)*)?
    }};
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (args, mut overrides) = split_overrides(std::env::args().collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(seed) = cli.seed {
        overrides.push(("experiment.seed".into(), seed.to_string()));
    }
    if let Some(out) = &cli.out {
        overrides.push(("output.dir".into(), out.display().to_string()));
    }
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn context(cfg: &ExperimentConfig, tag: ScenarioTag) -> Result<SceneContext> {
    let scenarios = build_scenarios(&ExperimentConfig {
        directions: if tag == ScenarioTag::O { vec![] } else { vec![tag] },
        ..cfg.clone()
    })?;
    let s = scenarios.last().expect("at least the original");
    SceneContext::new(s, &cfg.covariance, cfg.calibration_count, derive_seed(cfg.seed, 7))
}

fn run(cli: &Cli, overrides: &[(String, String)]) -> Result<()> {
    let cfg = ExperimentConfig::load(cli.config.as_deref(), overrides)?;
    match &cli.command {
        Command::GenScenario { tag } => {
            out!("{}", cfg.to_ini_string());
            for s in build_scenarios(&cfg)? {
                if tag.is_some_and(|t| t != s.tag) {
                    continue;
                }
                let c = &s.config;
                out!(
                    "scenario {}: platform N {:.1} E {:.1} m; bins {}..{} ({:.1}-{:.1} m); azimuth {:.2}-{:.2} deg; \
                     elevation {:.4}-{:.4} deg; grid {}x{}x{}; {} clutter patches",
                    s.tag,
                    c.platform.north,
                    c.platform.east,
                    c.first_bin_index,
                    c.first_bin_index + c.num_bins as i64 - 1,
                    c.range_bounds_m.0,
                    c.range_bounds_m.1,
                    c.azimuth_bounds_deg.0,
                    c.azimuth_bounds_deg.1,
                    c.elevation_bounds_deg.0,
                    c.elevation_bounds_deg.1,
                    c.num_bins,
                    c.num_azimuths(),
                    c.num_elevations(),
                    s.patches.len()
                );
            }
        }
        Command::GenDataset {
            tag,
            count,
            scnr_db,
            file,
        } => {
            let ctx = context(&cfg, *tag)?;
            let data = ctx.generate(*count, *scnr_db, cfg.seed)?;
            let path = file
                .clone()
                .unwrap_or_else(|| cfg.output_dir.join(format!("{tag}_{scnr_db}dB.hmt")));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            save_dataset(&path, &data)?;
            let mean = data.iter().map(|t| t.output_scnr_db as f64).sum::<f64>() / data.len() as f64;
            out!("wrote {} tensors to {} (mean output SCNR {mean:.2} dB)", data.len(), path.display());
        }
        Command::Chordal => {
            let scenarios = build_scenarios(&cfg)?;
            let ctxs: Vec<SceneContext> = scenarios
                .iter()
                .map(|s| SceneContext::new(s, &cfg.covariance, cfg.calibration_count, cfg.seed))
                .collect::<Result<_>>()?;
            let displaced: Vec<_> = ctxs[1..].iter().map(|c| (c.scenario.tag, c.covariances.clone())).collect();
            out!("scenario,distance_raw,distance_normalized,rank");
            for d in pairwise_from_covariances(&ctxs[0].covariances, &displaced, cfg.bin_policy, cfg.rank_rule)? {
                let rank = d.per_bin.iter().map(|b| b.rank_used).max().unwrap_or(0);
                out!("{},{},{},{}", d.tag, d.distance, d.normalized, rank);
            }
        }
        Command::Train { data, model } => {
            let set = load_dataset(data)?;
            let first = set.first().ok_or_else(|| Error::argument("dataset is empty"))?;
            let [k, h, w] = first.shape;
            let mut net = CnnModel::<f32>::new((k, h, w), cfg.architecture, derive_seed(cfg.seed, 4))?;
            let tc = TrainConfig {
                seed: derive_seed(cfg.seed, 5),
                ..cfg.train.clone()
            };
            let history = train(&mut net, &set, &tc)?;
            save_checkpoint(model, &net, None)?;
            out!(
                "trained on {} examples, final loss {:.6}; saved {}",
                set.len(),
                history.last().copied().unwrap_or(f64::NAN),
                model.display()
            );
        }
        Command::Fsl { model, data, output } => {
            let (mut net, _) = load_checkpoint::<f32>(model)?;
            let set = load_dataset(data)?;
            let tc = TrainConfig {
                seed: derive_seed(cfg.seed, 6),
                ..cfg.fsl.clone()
            };
            freeze_and_finetune(&mut net, &set, &tc)?;
            save_checkpoint(output, &net, None)?;
            out!(
                "fine-tuned {} of {} parameters on {} examples; saved {}",
                net.trainable_parameter_count(),
                net.parameter_count(),
                set.len(),
                output.display()
            );
        }
        Command::Eval { model, data, tag } => {
            let (net, _) = load_checkpoint::<f32>(model)?;
            let set = load_dataset(data)?;
            let ctx = context(&cfg, *tag)?;
            let (namf, cnn) = evaluate(&net, &ctx, &set)?;
            out!("scenario {tag}: namf {namf:.3} m, cnn {cnn:.3} m, gain {:.4}", namf / cnn);
        }
        Command::RunExperiment => {
            let report = run_experiment(&cfg)?;
            let files = emit_report(&report, &cfg.output_dir)?;
            for f in files {
                out!("wrote {}", f.display());
            }
            if let Some(rho) = report.spearman {
                out!("spearman {rho:.4}");
            }
        }
        Command::Report => {
            let report = report_from_dir(&cfg, &cfg.output_dir)?;
            for f in emit_report(&report, &cfg.output_dir)? {
                out!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn report_from_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<ExperimentReport> {
    let errors = parse_errors_csv(&std::fs::read_to_string(dir.join("errors.csv"))?)?;
    let chordal = parse_chordal_csv(&std::fs::read_to_string(dir.join("chordal.csv"))?)?;
    let top = errors.iter().map(|r| r.scnr_db).fold(f64::NEG_INFINITY, f64::max);
    let xs: Vec<f64> = chordal.iter().map(|c| c.distance_raw).collect();
    let ys: Vec<f64> = chordal.iter().map(|c| c.gain_at_top_scnr).collect();
    let floor = central_quantization_floor(cfg)?;
    Ok(ExperimentReport {
        errors,
        chordal,
        top_scnr_db: top,
        spearman: spearman(&xs, &ys),
        quantization_floor_m: floor,
        train_loss: Vec::new(),
    })
}
