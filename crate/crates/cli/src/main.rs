//! Command-line front end for experiments, baselines and data generation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use beliefnet_core::baselines::BaselineMethod;
use beliefnet_core::io::{
    generate_synthetic, rebuild_report, run_ablation_suite, run_baseline_suite, run_degroot_sweep, run_experiment,
    save_cohort, save_scores, DataSource, ExperimentSpec, ProviderKind, RunStatus, Setting, SyntheticSource,
    SCORES_FILE,
};
use beliefnet_core::trust::TOKEN_ENV;
use beliefnet_core::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "beliefnet",
    version,
    about = "Belief propagation over perceived classroom networks"
)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Experiment spec (JSON). Flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Single seed; shorthand for `--seeds N`.
    #[arg(long, global = true, conflicts_with = "seeds")]
    seed: Option<u64>,

    /// Comma-separated seeds; `a-b` is an inclusive range.
    #[arg(long, global = true, value_parser = parse_seeds)]
    seeds: Option<SeedList>,

    /// baseline, no_rag, no_subjective_graph, no_llm_trust or a baseline method.
    #[arg(long, global = true)]
    setting: Option<String>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    provider: Option<Provider>,

    /// Remote trust endpoint URL. The bearer token is read from the
    /// environment.
    #[arg(long, global = true, env = "BELIEFNET_TRUST_ENDPOINT")]
    endpoint: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one setting over the seed set.
    Simulate,
    /// Baseline and the three ablations under shared seeds, with paired deltas.
    Ablate,
    /// External baselines with a final-epoch summary table.
    Baselines {
        /// Comma-separated method names; all when omitted.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
    },
    /// DeGroot ranking and diversity versus number of steps.
    DegrootSweep {
        #[arg(long, value_delimiter = ',')]
        steps: Vec<usize>,
    },
    /// Write a synthetic cohort as CSV files.
    GenerateData,
    /// Rebuild aggregate, class-wise and paired tables of a finished run.
    Report {
        /// Run directory; defaults to `--out`.
        #[arg(long)]
        run: Option<PathBuf>,
        /// Reference run for paired differences.
        #[arg(long)]
        against: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Provider {
    Stub,
    Remote,
}

#[derive(Debug, Clone)]
struct SeedList(Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (
                    a.trim().parse().map_err(|_| format!("bad seed range {part:?}"))?,
                    b.trim().parse().map_err(|_| format!("bad seed range {part:?}"))?,
                );
                if a > b {
                    return Err(format!("empty seed range {part:?}"));
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| format!("bad seed {part:?}"))?),
        }
    }
    if out.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(SeedList(out))
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn build_spec(common: &Common) -> Result<ExperimentSpec, Failure> {
    let mut spec = match &common.config {
        Some(path) => {
            ExperimentSpec::from_json_file(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?
        }
        None => ExperimentSpec::default(),
    };
    if let Some(seed) = common.seed {
        spec.seeds = vec![seed];
    }
    if let Some(SeedList(seeds)) = &common.seeds {
        spec.seeds = seeds.clone();
    }
    if let Some(s) = &common.setting {
        spec.setting = s.parse::<Setting>()?;
    }
    if let Some(out) = &common.out {
        spec.output_dir = out.clone();
    }
    if let Some(p) = common.provider {
        spec.provider = match p {
            Provider::Stub => ProviderKind::Stub,
            Provider::Remote => ProviderKind::Remote,
        };
    }
    if let Some(endpoint) = &common.endpoint {
        spec.remote.endpoint = Some(endpoint.clone());
    }
    if spec.provider == ProviderKind::Remote && std::env::var_os(TOKEN_ENV).is_none() {
        warn!("{TOKEN_ENV} is not set; remote requests go out without a bearer token");
    }
    spec.validate()?;
    Ok(spec)
}

fn status_code(complete: bool) -> u8 {
    if complete {
        0
    } else {
        EXIT_PARTIAL
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let spec = build_spec(&cli.common)?;
    match cli.command {
        Command::Simulate => {
            let outcome = run_experiment(&spec)?;
            let m = &outcome.manifest;
            println!(
                "{}: {} of {} seeds complete -> {}",
                m.setting,
                m.completed_seeds.len(),
                m.seeds.len(),
                spec.output_dir.display()
            );
            for f in &m.failures {
                println!(
                    "  seed {} failed after {} epochs: {}",
                    f.seed, f.completed_epochs, f.error
                );
            }
            Ok(status_code(m.status == RunStatus::Complete))
        }
        Command::Ablate => {
            let suite = run_ablation_suite(&spec)?;
            for r in &suite.runs {
                println!(
                    "{}: {} of {} seeds complete",
                    r.manifest.setting,
                    r.manifest.completed_seeds.len(),
                    r.manifest.seeds.len()
                );
            }
            println!("{} paired rows -> {}", suite.paired.len(), spec.output_dir.display());
            Ok(status_code(suite.is_complete()))
        }
        Command::Baselines { methods } => {
            let methods = if methods.is_empty() {
                BaselineMethod::ALL.to_vec()
            } else {
                methods
                    .iter()
                    .map(|m| m.parse::<BaselineMethod>())
                    .collect::<Result<Vec<_>, _>>()?
            };
            let suite = run_baseline_suite(&spec, &methods)?;
            for r in &suite.runs {
                println!(
                    "{}: {} of {} seeds complete",
                    r.manifest.setting,
                    r.manifest.completed_seeds.len(),
                    r.manifest.seeds.len()
                );
            }
            Ok(status_code(suite.is_complete()))
        }
        Command::DegrootSweep { steps } => {
            let steps = (!steps.is_empty()).then_some(steps.as_slice());
            let records = run_degroot_sweep(&spec, steps)?;
            println!("data_seed,steps,dpae,diversity");
            for r in &records {
                let dpae = r.dpae.map_or("NA".to_string(), |v| format!("{v:.4}"));
                println!("{},{},{dpae},{:.3e}", r.data_seed, r.steps, r.diversity);
            }
            Ok(0)
        }
        Command::GenerateData => {
            let source = match &spec.data {
                DataSource::Synthetic(s) => s.clone(),
                DataSource::Csv(_) => SyntheticSource::default(),
            };
            let seed = cli.common.seed.unwrap_or(source.seed);
            let data = generate_synthetic(&source.spec, seed)?;
            let dir = &spec.output_dir;
            save_cohort(&data.cohort, dir)?;
            save_scores(&data.scores, &dir.join(SCORES_FILE))?;
            println!(
                "{} students in {} classes, {} epochs -> {}",
                data.cohort.len(),
                data.cohort.classes().len(),
                data.scores.epochs(),
                dir.display()
            );
            Ok(0)
        }
        Command::Report { run, against } => {
            let dir = run.unwrap_or_else(|| spec.output_dir.clone());
            require_dir(&dir)?;
            if let Some(a) = &against {
                require_dir(a)?;
            }
            let rows = rebuild_report(&dir, against.as_deref(), &spec.bootstrap)?;
            println!("{} metric rows re-aggregated in {}", rows.len(), dir.display());
            Ok(0)
        }
    }
}

fn require_dir(dir: &Path) -> Result<(), Failure> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Failure::Validation(format!("{} is not a run directory", dir.display())))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    info!("{:?}", cli.command);
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
