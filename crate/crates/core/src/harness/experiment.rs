use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::config::ConfigSet;
use crate::nn::Checkpoint;
use crate::rl::{train_env, train_in_env, write_metrics_csv, Algorithm, TrainingLog};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Share of each run's episodes averaged by the aggregator.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.1;

/// Weight held fixed on the axis that is not swept.
const HELD_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    None,
    Q,
    H,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Q => "q",
            Self::H => "h",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "q" => Ok(Self::Q),
            "h" => Ok(Self::H),
            other => Err(format!("unknown sweep axis `{other}` (expected none, q or h)")),
        }
    }
}

/// A campaign: one algorithm, a base configuration, seeds and an optional
/// weight sweep. Every (value, seed) pair is one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub algorithm: Algorithm,
    /// Base configuration; `train.seed` and the swept weight are replaced per run.
    pub config: ConfigSet,
    pub seeds: Vec<u64>,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub out_dir: PathBuf,
    /// Write the per-phase environment trace of every run.
    pub trace: bool,
}

/// One fully resolved run of a campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub id: String,
    pub seed: u64,
    pub sweep_value: Option<f64>,
    pub config: ConfigSet,
}

impl ExperimentSpec {
    pub fn new(algorithm: Algorithm, config: ConfigSet, seeds: Vec<u64>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            algorithm,
            config,
            seeds,
            axis: SweepAxis::None,
            values: Vec::new(),
            out_dir: out_dir.into(),
            trace: false,
        }
    }

    pub fn with_sweep(mut self, axis: SweepAxis, values: Vec<f64>) -> Self {
        self.axis = axis;
        self.values = values;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::Spec(m));
        if self.seeds.is_empty() {
            return fail("seed list is empty".into());
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return fail("seed list has duplicates".into());
        }
        match self.axis {
            SweepAxis::None if !self.values.is_empty() => return fail("sweep values given without a sweep axis".into()),
            SweepAxis::Q | SweepAxis::H if self.values.is_empty() => return fail("sweep axis given without values".into()),
            _ => {}
        }
        if let Some(v) = self.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return fail(format!("sweep value {v} outside [0,1]"));
        }
        for (k, v) in self.values.iter().enumerate() {
            if self.values[..k].contains(v) {
                return fail(format!("sweep value {v} repeated"));
            }
        }
        self.config.validate()?;
        Ok(())
    }

    /// Runs in output order: sweep values outermost, then seeds.
    pub fn plan(&self) -> Result<Vec<RunPlan>, HarnessError> {
        self.validate()?;
        let values: Vec<Option<f64>> = match self.axis {
            SweepAxis::None => vec![None],
            _ => self.values.iter().map(|&v| Some(v)).collect(),
        };
        let mut runs = Vec::with_capacity(values.len() * self.seeds.len());
        for value in values {
            for &seed in &self.seeds {
                let mut config = self.config.clone();
                config.train.seed = seed;
                let id = match (self.axis, value) {
                    (SweepAxis::Q, Some(v)) => {
                        config.net.weight_q = v;
                        config.net.weight_h = HELD_WEIGHT;
                        format!("q{v}_seed{seed}")
                    }
                    (SweepAxis::H, Some(v)) => {
                        config.net.weight_h = v;
                        config.net.weight_q = HELD_WEIGHT;
                        format!("h{v}_seed{seed}")
                    }
                    _ => format!("seed{seed}"),
                };
                config.validate()?;
                runs.push(RunPlan {
                    id,
                    seed,
                    sweep_value: value,
                    config,
                });
            }
        }
        Ok(runs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Aborted,
}

/// Paths relative to the experiment directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFiles {
    pub metrics: String,
    pub training_log: String,
    pub checkpoint: String,
    pub trace: Option<String>,
}

impl RunFiles {
    pub fn all(&self) -> Vec<&str> {
        let mut files = vec![self.metrics.as_str(), self.training_log.as_str(), self.checkpoint.as_str()];
        files.extend(self.trace.as_deref());
        files
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub id: String,
    pub seed: u64,
    pub sweep_value: Option<f64>,
    pub status: RunStatus,
    pub abort_reason: Option<String>,
    pub episodes: usize,
    pub config_hash: String,
    /// Resolved configuration document.
    pub config: String,
    pub files: RunFiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub algorithm: Algorithm,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub tail_fraction: f64,
    pub runs: Vec<RunEntry>,
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<(), HarnessError> {
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn write_run_files(
    dir: &Path,
    id: &str,
    log: &TrainingLog,
    ck: &Checkpoint,
    trace: Option<&[crate::env::TraceRecord]>,
) -> Result<RunFiles, HarnessError> {
    let run_dir = dir.join(id);
    fs::create_dir_all(&run_dir).map_err(|e| HarnessError::io(&run_dir, e))?;
    let files = RunFiles {
        metrics: format!("{id}/metrics.csv"),
        training_log: format!("{id}/training_log.jsonl"),
        checkpoint: format!("{id}/checkpoint.bin"),
        trace: trace.map(|_| format!("{id}/trace.jsonl")),
    };

    let path = dir.join(&files.metrics);
    let mut w = create(&path)?;
    write_metrics_csv(&log.episodes, &mut w).map_err(|e| HarnessError::format(&path, e))?;
    finish(&path, w)?;

    let path = dir.join(&files.training_log);
    let mut w = create(&path)?;
    log.write_jsonl(&mut w).map_err(|e| HarnessError::io(&path, e))?;
    finish(&path, w)?;

    let path = dir.join(&files.checkpoint);
    ck.save(&path).map_err(|e| HarnessError::format(&path, e))?;

    if let (Some(records), Some(name)) = (trace, &files.trace) {
        let path = dir.join(name);
        let mut w = create(&path)?;
        for r in records {
            serde_json::to_writer(&mut w, r).map_err(|e| HarnessError::format(&path, e))?;
            w.write_all(b"\n").map_err(|e| HarnessError::io(&path, e))?;
        }
        finish(&path, w)?;
    }
    Ok(files)
}

fn execute(spec: &ExperimentSpec, plan: &RunPlan) -> Result<RunEntry, HarnessError> {
    let ConfigSet { net, train } = &plan.config;
    let mut env = train_env(net, train.seed);
    if spec.trace {
        env.enable_trace();
    }
    let (log, ck, trace, abort_reason) = match train_in_env(env, train, spec.algorithm) {
        Ok(out) => {
            let ck = out.agents.checkpoint(net, train);
            (out.log, ck, out.trace, None)
        }
        Err(f) => (f.log, f.checkpoint, f.trace, Some(f.error.to_string())),
    };
    let trace = spec.trace.then_some(trace.as_slice());
    let files = write_run_files(&spec.out_dir, &plan.id, &log, &ck, trace)?;
    Ok(RunEntry {
        id: plan.id.clone(),
        seed: plan.seed,
        sweep_value: plan.sweep_value,
        status: if abort_reason.is_some() {
            RunStatus::Aborted
        } else {
            RunStatus::Completed
        },
        abort_reason,
        episodes: log.episodes.len(),
        config_hash: plan.config.hash(),
        config: plan.config.to_document(),
        files,
    })
}

/// Executes every run, in parallel, and writes the manifest last.
///
/// A run that aborts still writes its partial outputs and is marked in the
/// manifest; only I/O failures fail the campaign.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Manifest, HarnessError> {
    let plans = spec.plan()?;
    fs::create_dir_all(&spec.out_dir).map_err(|e| HarnessError::io(&spec.out_dir, e))?;
    let runs = plans
        .par_iter()
        .map(|plan| execute(spec, plan))
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = Manifest {
        algorithm: spec.algorithm,
        axis: spec.axis,
        values: spec.values.clone(),
        seeds: spec.seeds.clone(),
        tail_fraction: DEFAULT_TAIL_FRACTION,
        runs,
    };
    let path = spec.out_dir.join(MANIFEST_FILE);
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| HarnessError::format(&path, e))?;
    w.write_all(b"\n").map_err(|e| HarnessError::io(&path, e))?;
    finish(&path, w)?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest, HarnessError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::format(&path, e))
}
