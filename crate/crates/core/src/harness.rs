//! Experiment orchestration: Monte Carlo runs of the coordination test and
//! the single-dataset detect-then-reconstruct pipeline.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::afriat::{self, AfriatError, GridSpec, PiecewiseLinearUtility};
use crate::dataset::{Dataset, DatasetError};
use crate::io;
use crate::milp::{self, DecideOptions, Decision, MilpError, DEFAULT_NODE_BUDGET};
use crate::sim::{self, NetworkSpec, SimError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Afriat(#[from] AfriatError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Coordinated,
    Independent,
}

fn default_agents() -> usize {
    3
}

fn default_goods() -> usize {
    2
}

fn default_budget() -> f64 {
    1.0
}

fn default_node_budget() -> usize {
    DEFAULT_NODE_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Agent spec file for coordinated runs; the three-radar network if absent.
    #[serde(default)]
    pub agents: Option<PathBuf>,
    /// Number of agents in independent runs.
    #[serde(default = "default_agents")]
    pub num_agents: usize,
    #[serde(default = "default_goods")]
    pub goods: usize,
    #[serde(default = "default_budget")]
    pub budget: f64,
    #[serde(rename = "T")]
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
    /// Strictness margin; scaled to the data when absent.
    #[serde(default)]
    pub epsilon_strict: Option<f64>,
    #[serde(default = "default_node_budget")]
    pub node_budget: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(mode: Mode, steps: usize, trials: usize, seed: u64) -> Self {
        Self {
            mode,
            agents: None,
            num_agents: default_agents(),
            goods: default_goods(),
            budget: default_budget(),
            steps,
            trials,
            seed,
            epsilon_strict: None,
            node_budget: DEFAULT_NODE_BUDGET,
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let config: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| Err(HarnessError::Config(msg.to_string()));
        if self.trials == 0 {
            return bad("trial count must be at least 1");
        }
        if self.steps == 0 {
            return bad("T must be at least 1");
        }
        if self.num_agents == 0 || self.goods == 0 {
            return bad("need at least one agent and one good");
        }
        if let Some(eps) = self.epsilon_strict {
            if !(eps > 0.0 && eps.is_finite()) {
                return bad("epsilon_strict must be positive");
            }
        }
        Ok(())
    }

    fn network(&self) -> Result<NetworkSpec, HarnessError> {
        match &self.agents {
            None => Ok(NetworkSpec::tri_radar()),
            Some(path) => {
                let text = fs::read_to_string(path).map_err(io_err(path))?;
                Ok(NetworkSpec::from_agent_file(&text, self.budget, self.goods)?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Coordinating,
    NotCoordinating,
    Undecided,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Coordinating => "coordinating",
            Verdict::NotCoordinating => "not-coordinating",
            Verdict::Undecided => "undecided",
        }
    }
}

impl From<Decision> for Verdict {
    fn from(d: Decision) -> Self {
        match d {
            Decision::Coordinating => Verdict::Coordinating,
            Decision::NotCoordinating => Verdict::NotCoordinating,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub verdict: Verdict,
    pub node_count: usize,
    pub wall_time: Duration,
    pub witness: Option<PathBuf>,
    pub certificates: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub results: Vec<TrialResult>,
}

impl ExperimentSummary {
    fn count(&self, v: Verdict) -> usize {
        self.results.iter().filter(|r| r.verdict == v).count()
    }

    pub fn coordinating(&self) -> usize {
        self.count(Verdict::Coordinating)
    }

    pub fn not_coordinating(&self) -> usize {
        self.count(Verdict::NotCoordinating)
    }

    pub fn undecided(&self) -> usize {
        self.count(Verdict::Undecided)
    }

    pub fn all_decided(&self) -> bool {
        self.undecided() == 0
    }

    /// Rejections over decided trials.
    pub fn rejection_rate(&self) -> f64 {
        let decided = self.results.len() - self.undecided();
        if decided == 0 {
            0.0
        } else {
            self.not_coordinating() as f64 / decided as f64
        }
    }

    /// `trial,verdict,nodes,ms`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,verdict,nodes,ms\n");
        for r in &self.results {
            out.push_str(&format!(
                "{},{},{},{:.3}\n",
                r.trial,
                r.verdict.as_str(),
                r.node_count,
                r.wall_time.as_secs_f64() * 1e3
            ));
        }
        out
    }

    /// Machine-readable rollup with no timing fields, byte-stable for a
    /// fixed config.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Trial {
            trial: usize,
            verdict: Verdict,
            nodes: usize,
        }
        #[derive(Serialize)]
        struct Rollup<'a> {
            mode: Mode,
            #[serde(rename = "T")]
            steps: usize,
            seed: u64,
            trials: usize,
            coordinating: usize,
            not_coordinating: usize,
            undecided: usize,
            acceptance_rate: f64,
            rejection_rate: f64,
            results: &'a [Trial],
        }
        let results: Vec<Trial> = self
            .results
            .iter()
            .map(|r| Trial { trial: r.trial, verdict: r.verdict, nodes: r.node_count })
            .collect();
        let rejection_rate = self.rejection_rate();
        let decided = self.results.len() - self.undecided();
        let rollup = Rollup {
            mode: self.config.mode,
            steps: self.config.steps,
            seed: self.config.seed,
            trials: self.results.len(),
            coordinating: self.coordinating(),
            not_coordinating: self.not_coordinating(),
            undecided: self.undecided(),
            acceptance_rate: if decided == 0 { 0.0 } else { 1.0 - rejection_rate },
            rejection_rate,
            results: &results,
        };
        let mut s = serde_json::to_string_pretty(&rollup).expect("rollup serializes");
        s.push('\n');
        s
    }
}

/// Random stream owned by one trial.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// The dataset a trial runs on.
pub fn trial_dataset(config: &ExperimentConfig, network: &NetworkSpec, trial: usize) -> Result<Dataset, HarnessError> {
    let mut rng = trial_rng(config.seed, trial);
    Ok(match config.mode {
        Mode::Coordinated => sim::simulate_with_rng(network, config.steps, &mut rng)?.0,
        Mode::Independent => sim::simulate_independent_with_rng(config.num_agents, config.goods, config.steps, &mut rng)?,
    })
}

fn run_trial(config: &ExperimentConfig, network: &NetworkSpec, trial: usize) -> Result<TrialResult, HarnessError> {
    let dataset = trial_dataset(config, network, trial)?;
    let eps = config.epsilon_strict.unwrap_or_else(|| milp::default_epsilon(&dataset));
    let problem = milp::build_problem(&dataset, eps)?;
    let options = DecideOptions { node_budget: config.node_budget };
    let (verdict, node_count, wall_time) = match milp::decide_with(&problem, &options) {
        Ok(v) => (v.decision.into(), v.node_count, v.wall_time),
        Err(MilpError::NodeBudgetExceeded { budget }) => {
            log::warn!("trial {trial}: node budget {budget} exhausted");
            (Verdict::Undecided, budget, Duration::ZERO)
        }
        Err(e) => return Err(e.into()),
    };
    Ok(TrialResult { trial, verdict, node_count, wall_time, witness: None, certificates: Vec::new() })
}

/// Runs every trial of the experiment, in parallel, each on its own
/// random stream derived from `(seed, trial)`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary, HarnessError> {
    config.validate()?;
    let network = match config.mode {
        Mode::Coordinated => config.network()?,
        Mode::Independent => NetworkSpec::tri_radar(),
    };
    let results = (0..config.trials)
        .into_par_iter()
        .map(|trial| run_trial(config, &network, trial))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentSummary { config: config.clone(), results })
}

/// Writes `summary.csv`, `summary.json` and `manifest.json` into `dir`.
pub fn write_summary(summary: &ExperimentSummary, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = vec![
        ("summary.csv".to_string(), summary.to_csv()),
        ("summary.json".to_string(), summary.to_json()),
    ];
    write_with_manifest(dir, &files)
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
}

/// Writes `(file name, content)` pairs into `dir` plus a `manifest.json`
/// with their SHA-256 hashes.
pub fn write_with_manifest(dir: &Path, files: &[(String, String)]) -> Result<Vec<PathBuf>, HarnessError> {
    let mut written = Vec::with_capacity(files.len() + 1);
    let mut entries = Vec::with_capacity(files.len());
    for (name, content) in files {
        let path = dir.join(name);
        fs::write(&path, content).map_err(io_err(&path))?;
        entries.push(ManifestEntry { path: name.clone(), sha256: hex::encode(Sha256::digest(content.as_bytes())) });
        written.push(path);
    }
    let manifest = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&serde_json::json!({ "artifacts": entries })).expect("manifest serializes");
    text.push('\n');
    fs::write(&manifest, text).map_err(io_err(&manifest))?;
    written.push(manifest);
    Ok(written)
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub epsilon_strict: Option<f64>,
    pub node_budget: usize,
    /// Contour grid points per axis.
    pub grid: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self { epsilon_strict: None, node_budget: DEFAULT_NODE_BUDGET, grid: 100 }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub decision: Decision,
    pub node_count: usize,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerdictFile {
    pub decision: Decision,
    #[serde(rename = "T")]
    pub steps: usize,
    #[serde(rename = "M")]
    pub agents: usize,
    #[serde(rename = "N")]
    pub goods: usize,
    pub epsilon_strict: f64,
    pub nodes: usize,
}

/// Every artifact of the pipeline as `(file name, content)`.
pub fn pipeline_artifacts(
    dataset: &Dataset,
    options: &PipelineOptions,
) -> Result<(Decision, usize, Vec<(String, String)>), HarnessError> {
    let eps = options.epsilon_strict.unwrap_or_else(|| milp::default_epsilon(dataset));
    let problem = milp::build_problem(dataset, eps)?;
    let verdict = milp::decide_with(&problem, &DecideOptions { node_budget: options.node_budget })?;
    let header = VerdictFile {
        decision: verdict.decision,
        steps: dataset.len(),
        agents: dataset.agents(),
        goods: dataset.goods(),
        epsilon_strict: eps,
        nodes: verdict.node_count,
    };
    let mut files = vec![("verdict.json".to_string(), {
        let mut s = serde_json::to_string_pretty(&header).expect("verdict serializes");
        s.push('\n');
        s
    })];
    if let Some(witness) = &verdict.witness {
        files.push(("witness.json".to_string(), io::allocation_to_json(witness)));
        for i in 0..dataset.agents() {
            let cert = afriat::solve_certificate(dataset, witness, i)?;
            files.push((format!("certificate_agent{}.json", i + 1), io::certificate_to_json(i, &cert)));
            if dataset.goods() == 2 {
                let utility = PiecewiseLinearUtility::reconstruct(dataset, witness, i, &cert);
                let grid = GridSpec::around(&witness.agent_bundles(i), options.grid);
                files.push((format!("contour_agent{}.csv", i + 1), afriat::export_contour(&utility, &grid)?));
            }
        }
        if dataset.goods() != 2 {
            log::info!("contours are only exported for two goods");
        }
    }
    Ok((verdict.decision, verdict.node_count, files))
}

/// Reads a dataset, decides it and, when coordinating, reconstructs every
/// agent. Output is staged next to `out` and renamed into place, so `out`
/// either holds a complete run or is left as it was.
pub fn run_pipeline(dataset_path: &Path, out: &Path, options: &PipelineOptions) -> Result<PipelineReport, HarnessError> {
    let dataset = io::read_dataset(dataset_path)?;
    let (decision, node_count, files) = pipeline_artifacts(&dataset, options)?;

    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(io_err(parent))?;
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    let staging = parent.join(format!(".{name}.staging-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
    }
    fs::create_dir(&staging).map_err(io_err(&staging))?;
    if let Err(e) = write_with_manifest(&staging, &files) {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    if out.exists() {
        fs::remove_dir_all(out).map_err(io_err(out))?;
    }
    fs::rename(&staging, out).map_err(io_err(out))?;
    let mut artifacts: Vec<PathBuf> = files.iter().map(|(n, _)| out.join(n)).collect();
    artifacts.push(out.join("manifest.json"));
    Ok(PipelineReport { decision, node_count, artifacts })
}
