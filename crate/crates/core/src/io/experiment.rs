use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ingest::{full_temporal, load_cohort, load_scores};
use super::report::{
    aggregate, classwise, metric_rows, paired, read_csv, write_csv, BootstrapConfig, MetricRow, PairedRow,
    AGGREGATE_FILE, CLASSWISE_FILE, METRICS_FILE, PAIRED_FILE,
};
use super::synthetic::{generate_synthetic, SyntheticCohortSpec};
use crate::baselines::{
    degroot_sweep, run_baseline, BaselineConfig, BaselineMethod, SweepRow, WeightMatrix, DEGROOT_SWEEP_STEPS,
};
use crate::domain::{latent_truth, AnxietyRange, Cohort, ExamSeries};
use crate::engine::{run_simulation, Ablations, AuditCounts, EpochTrace, ProtocolConfig, SimulationOutput};
use crate::error::{Error, Result};
use crate::graph::union_of_reported_ties;
use crate::metrics::EpochReport;
use crate::trust::{ProviderTag, RemoteConfig, RemoteTrust, StubTrust, TrustProvider};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";
pub const ROUND_LOG_FILE: &str = "round_log.jsonl";
pub const SWEEP_FILE: &str = "degroot_sweep.csv";
pub const BASELINES_SUMMARY_FILE: &str = "baselines_summary.csv";

/// One experimental condition: the full protocol, an ablation, or an
/// external baseline method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Setting {
    #[default]
    Baseline,
    NoRag,
    NoSubjectiveGraph,
    NoLlmTrust,
    Method(BaselineMethod),
}

impl Setting {
    pub const ABLATION_SUITE: [Setting; 4] = [
        Setting::Baseline,
        Setting::NoRag,
        Setting::NoSubjectiveGraph,
        Setting::NoLlmTrust,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Setting::Baseline => "baseline",
            Setting::NoRag => "no_rag",
            Setting::NoSubjectiveGraph => "no_subjective_graph",
            Setting::NoLlmTrust => "no_llm_trust",
            Setting::Method(m) => m.name(),
        }
    }

    /// Engine ablation flags; `None` for external baselines.
    pub fn ablations(&self) -> Option<Ablations> {
        let mut a = Ablations::default();
        match self {
            Setting::Baseline => {}
            Setting::NoRag => a.no_rag = true,
            Setting::NoSubjectiveGraph => a.no_subjective_graph = true,
            Setting::NoLlmTrust => a.no_llm_trust = true,
            Setting::Method(_) => return None,
        }
        Some(a)
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ABLATION_SUITE
            .into_iter()
            .find(|x| x.name() == s)
            .map(Ok)
            .unwrap_or_else(|| {
                s.parse::<BaselineMethod>()
                    .map(Setting::Method)
                    .map_err(|_| Error::Config(format!("unknown setting {s:?}")))
            })
    }
}

impl Serialize for Setting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Setting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSource {
    pub spec: SyntheticCohortSpec,
    pub seed: u64,
}

impl Default for SyntheticSource {
    fn default() -> Self {
        Self {
            spec: SyntheticCohortSpec::default(),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSource {
    pub students: PathBuf,
    pub friendships: PathBuf,
    #[serde(default)]
    pub questionnaire: Option<PathBuf>,
    pub scores: PathBuf,
    #[serde(default)]
    pub anxiety_range: AnxietyRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSource),
    Csv(CsvSource),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSource::default())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub protocol: ProtocolConfig,
    pub seeds: Vec<u64>,
    pub setting: Setting,
    pub data: DataSource,
    pub output_dir: PathBuf,
    pub provider: ProviderKind,
    pub remote: RemoteConfig,
    pub baselines: BaselineConfig,
    pub bootstrap: BootstrapConfig,
    /// Directory of an earlier run to difference against, seed by seed.
    pub paired_against: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            protocol: ProtocolConfig::default(),
            seeds: vec![42, 43, 44, 45, 46],
            setting: Setting::Baseline,
            data: DataSource::default(),
            output_dir: PathBuf::from("runs"),
            provider: ProviderKind::Stub,
            remote: RemoteConfig::default(),
            baselines: BaselineConfig::default(),
            bootstrap: BootstrapConfig::default(),
            paired_against: None,
        }
    }
}

impl ExperimentSpec {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        self.protocol.validate()
    }

    /// SHA-256 of the canonical JSON form of the whole spec.
    pub fn config_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec is always serialisable");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub cohort: Cohort,
    pub scores: ExamSeries,
    pub warnings: Vec<String>,
}

pub fn load_data(source: &DataSource) -> Result<LoadedData> {
    match source {
        DataSource::Synthetic(s) => {
            let d = generate_synthetic(&s.spec, s.seed)?;
            Ok(LoadedData {
                cohort: d.cohort,
                scores: d.scores,
                warnings: Vec::new(),
            })
        }
        DataSource::Csv(c) => {
            let loaded = load_cohort(&c.students, &c.friendships, c.questionnaire.as_deref(), c.anxiety_range)?;
            let scores = load_scores(&c.scores, None)?;
            let mut warnings = loaded.warnings;
            if !scores.excluded.is_empty() {
                let ids: Vec<String> = scores.excluded.iter().map(ToString::to_string).collect();
                warnings.push(format!("excluded for incomplete scores: {}", ids.join(", ")));
            }
            Ok(LoadedData {
                cohort: full_temporal(&loaded.value, &scores.series)?,
                scores: scores.series,
                warnings,
            })
        }
    }
}

pub fn make_provider(kind: ProviderKind, remote: &RemoteConfig) -> Result<Box<dyn TrustProvider>> {
    Ok(match kind {
        ProviderKind::Stub => Box::new(StubTrust),
        ProviderKind::Remote => Box::new(RemoteTrust::new(remote.clone())?),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
    pub completed_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub setting: Setting,
    pub seeds: Vec<u64>,
    pub completed_seeds: Vec<u64>,
    pub failures: Vec<SeedFailure>,
    pub status: RunStatus,
    pub provider: ProviderKind,
    pub provider_tags: BTreeMap<u64, BTreeMap<ProviderTag, usize>>,
    pub audit: BTreeMap<u64, AuditCounts>,
    pub data_warnings: Vec<String>,
    pub paired_against: Option<PathBuf>,
    pub files: Vec<String>,
    pub spec: ExperimentSpec,
}

/// Everything one seed wrote to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub setting: Setting,
    pub seed: u64,
    pub reports: Vec<EpochReport>,
    pub traces: Vec<EpochTrace>,
    pub audit: Option<AuditCounts>,
    pub provider_tags: BTreeMap<ProviderTag, usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub manifest: Manifest,
    pub rows: Vec<MetricRow>,
    pub paired: Vec<PairedRow>,
}

impl ExperimentOutcome {
    pub fn status(&self) -> &RunStatus {
        &self.manifest.status
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_round_log(path: &Path, out: &SimulationOutput) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for entry in &out.round_log {
        serde_json::to_writer(&mut w, entry)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

struct SeedResult {
    report: SeedReport,
    failure: Option<String>,
}

fn run_seed(
    spec: &ExperimentSpec,
    data: &LoadedData,
    provider: &dyn TrustProvider,
    seed: u64,
    dir: &Path,
) -> Result<SeedResult> {
    create_dir(dir)?;
    let setting = spec.setting;
    let (report, failure) = match setting.ablations() {
        Some(ablations) => {
            let config = ProtocolConfig {
                seed,
                ablations,
                ..spec.protocol.clone()
            };
            let (out, failure) = match run_simulation(&data.cohort, &data.scores, &config, provider) {
                Ok(out) => (out, None),
                Err(failed) => (*failed.partial, Some(failed.error.to_string())),
            };
            write_round_log(&dir.join(ROUND_LOG_FILE), &out)?;
            let report = SeedReport {
                setting,
                seed,
                reports: out.reports,
                traces: out.traces,
                audit: Some(out.audit),
                provider_tags: out.provider_tags,
            };
            (report, failure)
        }
        None => {
            let Setting::Method(method) = setting else {
                unreachable!()
            };
            let (reports, failure) = match run_baseline(
                method,
                &data.cohort,
                &data.scores,
                spec.protocol.scale,
                spec.protocol.epochs,
                &spec.protocol.acc_ks,
                &spec.baselines,
                seed,
            ) {
                Ok(r) => (r, None),
                Err(e) => (Vec::new(), Some(e.to_string())),
            };
            let report = SeedReport {
                setting,
                seed,
                reports,
                traces: Vec::new(),
                audit: None,
                provider_tags: BTreeMap::new(),
            };
            (report, failure)
        }
    };
    write_json(&dir.join(REPORT_FILE), &report)?;
    Ok(SeedResult { report, failure })
}

/// Runs every seed of `spec`, writing per-seed reports and round logs
/// under `output_dir/seed_<n>/` and the flat tables plus a manifest at the
/// top level. A seed that fails keeps whatever it completed and is listed
/// in the manifest; the run is then marked partial.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let data = load_data(&spec.data)?;
    if data.scores.epochs() < spec.protocol.epochs {
        return Err(Error::Config(format!(
            "protocol wants {} epochs but data covers {}",
            spec.protocol.epochs,
            data.scores.epochs()
        )));
    }
    let provider = make_provider(spec.provider, &spec.remote)?;
    run_experiment_with(spec, &data, provider.as_ref())
}

/// As [`run_experiment`] with preloaded data and an explicit provider.
pub fn run_experiment_with(
    spec: &ExperimentSpec,
    data: &LoadedData,
    provider: &dyn TrustProvider,
) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let out_dir = &spec.output_dir;
    create_dir(out_dir)?;
    let reference = match &spec.paired_against {
        Some(dir) => Some(read_csv::<MetricRow>(&dir.join(METRICS_FILE))?),
        None => None,
    };

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut completed = Vec::new();
    let mut provider_tags = BTreeMap::new();
    let mut audit = BTreeMap::new();
    for &seed in &spec.seeds {
        info!("{}: seed {seed}", spec.setting);
        let result = run_seed(spec, data, provider, seed, &out_dir.join(format!("seed_{seed}")))?;
        rows.extend(metric_rows(spec.setting.name(), seed, &result.report.reports));
        if !result.report.provider_tags.is_empty() {
            provider_tags.insert(seed, result.report.provider_tags.clone());
        }
        if let Some(a) = result.report.audit {
            audit.insert(seed, a);
        }
        match result.failure {
            None => completed.push(seed),
            Some(error) => {
                warn!("{} seed {seed} failed: {error}", spec.setting);
                failures.push(SeedFailure {
                    seed,
                    error,
                    completed_epochs: result.report.reports.len(),
                });
            }
        }
    }

    write_csv(&out_dir.join(METRICS_FILE), &rows)?;
    write_csv(&out_dir.join(AGGREGATE_FILE), &aggregate(&rows, &spec.bootstrap))?;
    write_csv(&out_dir.join(CLASSWISE_FILE), &classwise(&rows))?;
    let mut files = vec![
        METRICS_FILE.to_string(),
        AGGREGATE_FILE.to_string(),
        CLASSWISE_FILE.to_string(),
    ];
    let paired_rows = match &reference {
        Some(reference) if !rows.is_empty() => {
            let p = paired(&rows, reference, &spec.bootstrap)?;
            write_csv(&out_dir.join(PAIRED_FILE), &p)?;
            files.push(PAIRED_FILE.to_string());
            p
        }
        _ => Vec::new(),
    };

    let manifest = Manifest {
        config_hash: spec.config_hash(),
        setting: spec.setting,
        seeds: spec.seeds.clone(),
        completed_seeds: completed,
        status: if failures.is_empty() {
            RunStatus::Complete
        } else {
            RunStatus::Partial
        },
        failures,
        provider: spec.provider,
        provider_tags,
        audit,
        data_warnings: data.warnings.clone(),
        paired_against: spec.paired_against.clone(),
        files,
        spec: spec.clone(),
    };
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(ExperimentOutcome {
        manifest,
        rows,
        paired: paired_rows,
    })
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub runs: Vec<ExperimentOutcome>,
    pub paired: Vec<PairedRow>,
}

impl SuiteOutcome {
    pub fn is_complete(&self) -> bool {
        self.runs.iter().all(|r| r.manifest.status == RunStatus::Complete)
    }
}

/// Baseline plus the three ablations under the same seeds, each in
/// `output_dir/<setting>/`, with every ablation differenced against the
/// baseline into `output_dir/paired.csv`.
pub fn run_ablation_suite(spec: &ExperimentSpec) -> Result<SuiteOutcome> {
    spec.validate()?;
    let data = load_data(&spec.data)?;
    let provider = make_provider(spec.provider, &spec.remote)?;
    let base_dir = spec.output_dir.join(Setting::Baseline.name());
    let mut runs = Vec::new();
    let mut all_paired = Vec::new();
    for setting in Setting::ABLATION_SUITE {
        let sub = ExperimentSpec {
            setting,
            output_dir: spec.output_dir.join(setting.name()),
            paired_against: (setting != Setting::Baseline).then(|| base_dir.clone()),
            ..spec.clone()
        };
        let outcome = run_experiment_with(&sub, &data, provider.as_ref())?;
        all_paired.extend(outcome.paired.iter().cloned());
        runs.push(outcome);
    }
    write_csv(&spec.output_dir.join(PAIRED_FILE), &all_paired)?;
    Ok(SuiteOutcome {
        runs,
        paired: all_paired,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummaryRow {
    pub method: String,
    pub epoch: usize,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

/// Runs each external method into `output_dir/<method>/` and writes a
/// final-epoch comparison table.
pub fn run_baseline_suite(spec: &ExperimentSpec, methods: &[BaselineMethod]) -> Result<SuiteOutcome> {
    spec.validate()?;
    let data = load_data(&spec.data)?;
    let mut runs = Vec::new();
    let mut summary = Vec::new();
    for &method in methods {
        let sub = ExperimentSpec {
            setting: Setting::Method(method),
            output_dir: spec.output_dir.join(method.name()),
            paired_against: None,
            ..spec.clone()
        };
        let outcome = run_experiment_with(&sub, &data, &StubTrust)?;
        let last = spec.protocol.epochs;
        for a in aggregate(&outcome.rows, &spec.bootstrap)
            .into_iter()
            .filter(|a| a.epoch == last)
        {
            summary.push(BaselineSummaryRow {
                method: method.name().to_string(),
                epoch: a.epoch,
                metric: a.metric,
                n: a.n,
                mean: a.mean,
                std: a.std,
            });
        }
        runs.push(outcome);
    }
    write_csv(&spec.output_dir.join(BASELINES_SUMMARY_FILE), &summary)?;
    Ok(SuiteOutcome {
        runs,
        paired: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub data_seed: u64,
    pub epoch: usize,
    pub steps: usize,
    pub dpae: Option<f64>,
    pub spearman: Option<f64>,
    pub acc_at_3: Option<f64>,
    pub diversity: f64,
}

/// DeGroot step sweep on one dataset at `epoch`.
pub fn sweep_dataset(
    cohort: &Cohort,
    scores: &ExamSeries,
    spec: &ExperimentSpec,
    epoch: usize,
    steps: &[usize],
) -> Result<Vec<SweepRow>> {
    let truth = latent_truth(scores, spec.protocol.scale, cohort, epoch)?;
    let w = WeightMatrix::from_ties(
        cohort,
        &union_of_reported_ties(cohort),
        spec.baselines.degroot.weight_policy,
        spec.baselines.degroot.self_weight,
    )?;
    degroot_sweep(cohort, &w, &truth, steps)
}

/// Runs the sweep once per seed. With synthetic data each seed generates
/// its own cohort; CSV data is swept once.
pub fn run_degroot_sweep(spec: &ExperimentSpec, steps: Option<&[usize]>) -> Result<Vec<SweepRecord>> {
    spec.validate()?;
    let steps = steps.unwrap_or(&DEGROOT_SWEEP_STEPS);
    let epoch = spec.protocol.epochs;
    let sources: Vec<(u64, DataSource)> = match &spec.data {
        DataSource::Synthetic(s) => spec
            .seeds
            .iter()
            .map(|&seed| (seed, DataSource::Synthetic(SyntheticSource { seed, ..s.clone() })))
            .collect(),
        csv => vec![(0, csv.clone())],
    };
    let mut records = Vec::new();
    for (data_seed, source) in sources {
        let data = load_data(&source)?;
        for row in sweep_dataset(&data.cohort, &data.scores, spec, epoch, steps)? {
            records.push(SweepRecord {
                data_seed,
                epoch,
                steps: row.steps,
                dpae: row.dpae,
                spearman: row.spearman,
                acc_at_3: row.acc_at_3,
                diversity: row.diversity,
            });
        }
    }
    create_dir(&spec.output_dir)?;
    write_csv(&spec.output_dir.join(SWEEP_FILE), &records)?;
    Ok(records)
}

/// Rebuilds `aggregate.csv` and `classwise.csv` of a finished run from its
/// `metrics.csv`, and `paired.csv` when a reference run is given.
pub fn rebuild_report(dir: &Path, reference: Option<&Path>, boot: &BootstrapConfig) -> Result<Vec<MetricRow>> {
    let rows: Vec<MetricRow> = read_csv(&dir.join(METRICS_FILE))?;
    write_csv(&dir.join(AGGREGATE_FILE), &aggregate(&rows, boot))?;
    write_csv(&dir.join(CLASSWISE_FILE), &classwise(&rows))?;
    if let Some(reference) = reference {
        let base: Vec<MetricRow> = read_csv(&reference.join(METRICS_FILE))?;
        write_csv(&dir.join(PAIRED_FILE), &paired(&rows, &base, boot)?)?;
    }
    Ok(rows)
}
