//! Shared plumbing for the subcommands: config loading, error-to-exit-code
//! mapping, task-pair construction, and output writing.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use masklab::nn::{pretrain, Activation, MlpModel, TaskPair};
use masklab::tensor::RngStream;
use masklab::Error as LabError;

use crate::config::{PretrainSection, TaskSection};
use crate::manifest::ExperimentManifest;

/// Exit status contract: 0 all checks passed, 1 check failure,
/// 2 usage/config error, 3 internal numeric error.
#[derive(Debug)]
pub enum CmdError {
    Config(String),
    Check(String),
    Numeric(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Config(_) => 2,
            CmdError::Check(_) => 1,
            CmdError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CmdError::Config(m) | CmdError::Check(m) | CmdError::Numeric(m) => m,
        }
    }
}

impl From<LabError> for CmdError {
    fn from(e: LabError) -> Self {
        match &e {
            LabError::InvalidInput(_) | LabError::Precondition(_) => CmdError::Config(e.to_string()),
            LabError::PretrainingFailed { .. } | LabError::NoValidCell { .. } => {
                CmdError::Check(e.to_string())
            }
            LabError::NoConvergence { .. } | LabError::NonFinite(_) => {
                CmdError::Numeric(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Config(format!("i/o error: {e}"))
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub config_path: Option<PathBuf>,
    pub seed_override: Option<u64>,
    pub out_dir: PathBuf,
    pub timings: bool,
}

/// Loads a config file, or the built-in defaults when no path is given.
/// A path that does not exist or does not parse is a usage error; unknown
/// keys are rejected with the offending line and column.
pub fn load_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T, CmdError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| {
                CmdError::Config(format!("cannot read config {}: {e}", p.display()))
            })?;
            serde_json::from_str(&text).map_err(|e| {
                CmdError::Config(format!(
                    "config {}: {e} (line {}, column {})",
                    p.display(),
                    e.line(),
                    e.column()
                ))
            })
        }
    }
}

/// One named check with its verdict; commands exit 1 if any check fails.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

pub fn all_passed(checks: &[CheckResult]) -> bool {
    checks.iter().all(|c| c.passed)
}

pub fn write_file(out_dir: &Path, name: &str, content: &str) -> Result<(), CmdError> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(name), content)?;
    Ok(())
}

pub fn write_json<T: Serialize>(out_dir: &Path, name: &str, value: &T) -> Result<(), CmdError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CmdError::Numeric(format!("serialization: {e}")))?;
    text.push('\n');
    write_file(out_dir, name, &text)
}

/// Emits the resolved config (directly loadable with --config, so a run can
/// be reproduced from its output directory alone) and the manifest listing
/// every artifact the command wrote.
pub fn write_provenance<T: Serialize>(
    out_dir: &Path,
    manifest: &ExperimentManifest,
    config: &T,
    written: &[&str],
) -> Result<(), CmdError> {
    write_json(out_dir, "config.json", config)?;
    let mut manifest = manifest.clone();
    manifest.output_paths = written.iter().map(|s| s.to_string()).collect();
    manifest.output_paths.push("config.json".to_string());
    write_json(out_dir, "manifest.json", &manifest)
}

pub fn build_task_pair(task: &TaskSection, master_seed: u64) -> Result<TaskPair, CmdError> {
    let base = masklab::nn::SyntheticTask::gaussian_mixture(
        task.input_dim,
        task.classes,
        task.mean_radius,
        task.noise_sigma,
        task.train_size,
        task.test_size,
        master_seed,
    )?;
    let target = base.shifted_variant(task.target_shift, master_seed.wrapping_add(1));
    Ok(TaskPair { base, target })
}

pub fn build_pretrained(
    section: &PretrainSection,
    pair: &TaskPair,
    master_seed: u64,
) -> Result<MlpModel, CmdError> {
    let cfg = masklab::nn::TrainConfig::new(
        masklab::nn::OptimizerKind::adamw_default(),
        section.learning_rate,
        section.epochs,
        section.batch_size,
    )?;
    let mut rng = RngStream::new(master_seed, 0xBA5E);
    let res = pretrain(&pair.base, &section.hidden, Activation::Relu, &cfg, &mut rng)?;
    Ok(res.model)
}
