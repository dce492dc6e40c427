//! Line-delimited persistence for pools, seed files, and checkpoints.
//!
//! A pool or checkpoint file starts with a header record carrying the format
//! version, the rng seed, the pipeline position, and the task count (used to
//! detect truncation), followed by one task record per line. Seed files are
//! headerless task records; unknown fields are ignored so seed sets from
//! other tooling load as long as they carry id/instruction/is_classification
//! and instances.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, Task, TaskOrigin, TaskPool, TaskType};

pub const FORMAT_VERSION: u32 = 1;

/// Where a resumable run stands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStage {
    Generating,
    Classifying,
    Instancing,
    Done,
}

/// Resume point persisted in the checkpoint header. Randomness is derived
/// per (seed, round, prompt) from `rng_seed`, so the seed plus the stage and
/// round counters fully determine the remaining random choices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub rng_seed: u64,
    pub stage: PipelineStage,
    pub round: u32,
    /// Task ids still owed work in the current stage.
    #[serde(default)]
    pub pending: Vec<String>,
}

impl PipelineState {
    pub fn fresh(rng_seed: u64) -> Self {
        PipelineState {
            rng_seed,
            stage: PipelineStage::Generating,
            round: 0,
            pending: Vec::new(),
        }
    }

    pub fn done(rng_seed: u64, round: u32) -> Self {
        PipelineState {
            rng_seed,
            stage: PipelineStage::Done,
            round,
            pending: Vec::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    rng_seed: u64,
    stage: PipelineStage,
    round: u32,
    #[serde(default)]
    pending: Vec<String>,
    n_tasks: usize,
}

#[derive(Serialize, Deserialize)]
struct TaskRecord {
    id: String,
    instruction: String,
    is_classification: Option<bool>,
    #[serde(default)]
    origin: Option<TaskOrigin>,
    instances: Vec<Instance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    admission_similarity: Option<f64>,
}

impl From<&Task> for TaskRecord {
    fn from(task: &Task) -> Self {
        TaskRecord {
            id: task.id.clone(),
            instruction: task.instruction.clone(),
            is_classification: task.task_type.as_flag(),
            origin: Some(task.origin),
            instances: task.instances.clone(),
            admission_similarity: task.admission_similarity,
        }
    }
}

impl TaskRecord {
    fn into_task(self, default_origin: TaskOrigin) -> Task {
        Task {
            id: self.id,
            instruction: self.instruction,
            task_type: TaskType::from_flag(self.is_classification),
            origin: self.origin.unwrap_or(default_origin),
            instances: self.instances,
            admission_similarity: self.admission_similarity,
        }
    }
}

/// Load the seed task file: headerless records, each with a known type flag
/// and exactly one instance.
pub fn load_seed_tasks(path: &Path) -> Result<TaskPool> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut pool = TaskPool::new(0);

    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: TaskRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: line_no,
                message: e.to_string(),
            })?;
        if record.is_classification.is_none() {
            return Err(Error::MalformedRecord {
                line: line_no,
                message: format!(
                    "seed task '{}' must carry is_classification true or false",
                    record.id
                ),
            });
        }
        if record.instances.len() != 1 {
            return Err(Error::MalformedRecord {
                line: line_no,
                message: format!(
                    "seed task '{}' must carry exactly one instance, found {}",
                    record.id,
                    record.instances.len()
                ),
            });
        }
        if let Some(origin) = record.origin {
            if !origin.is_seed() {
                return Err(Error::MalformedRecord {
                    line: line_no,
                    message: format!("seed task '{}' claims a generated origin", record.id),
                });
            }
        }
        let task = record.into_task(TaskOrigin::Seed);
        pool.add_task(task).map_err(|e| match e {
            Error::DuplicateTaskId { id } => Error::MalformedRecord {
                line: line_no,
                message: format!("duplicate task id '{id}'"),
            },
            Error::EmptyInstruction { id } => Error::MalformedRecord {
                line: line_no,
                message: format!("task '{id}' has an empty instruction"),
            },
            Error::EmptyOutput { id } => Error::MalformedRecord {
                line: line_no,
                message: format!("task '{id}' has an instance with an empty output"),
            },
            other => other,
        })?;
    }

    if pool.is_empty() {
        return Err(Error::NoTasks { path: path.into() });
    }
    Ok(pool)
}

/// Persist the pool with its pipeline state. The write is atomic
/// (temp file + rename) so an interrupted save never corrupts a checkpoint.
pub fn save_checkpoint(pool: &TaskPool, state: &PipelineState, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut writer = BufWriter::new(file);
        let header = Header {
            format_version: FORMAT_VERSION,
            rng_seed: state.rng_seed,
            stage: state.stage,
            round: state.round,
            pending: state.pending.clone(),
            n_tasks: pool.len(),
        };
        let mut write_line = |value: String| -> Result<()> {
            writer
                .write_all(value.as_bytes())
                .and_then(|_| writer.write_all(b"\n"))
                .map_err(|e| Error::io(&tmp, e))
        };
        write_line(serde_json::to_string(&header)?)?;
        for task in pool.tasks() {
            write_line(serde_json::to_string(&TaskRecord::from(task))?)?;
        }
        writer.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Persist a finished pool (stage `done`).
pub fn save_pool(pool: &TaskPool, path: &Path) -> Result<()> {
    save_checkpoint(pool, &PipelineState::done(pool.rng_seed(), 0), path)
}

/// Load a checkpoint written by [`save_checkpoint`]. The header is required.
pub fn load_checkpoint(path: &Path) -> Result<(TaskPool, PipelineState)> {
    let (pool, state) = load_pool_and_state(path)?;
    match state {
        Some(state) => Ok((pool, state)),
        None => Err(Error::MissingHeader { path: path.into() }),
    }
}

/// Load a pool file, tolerating a missing header (seed-style files).
pub fn load_pool(path: &Path) -> Result<TaskPool> {
    Ok(load_pool_and_state(path)?.0)
}

fn load_pool_and_state(path: &Path) -> Result<(TaskPool, Option<PipelineState>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut pool = TaskPool::new(0);
    let mut state: Option<PipelineState> = None;
    let mut declared_tasks: Option<usize> = None;
    let mut saw_header = false;

    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header && line.contains("\"format_version\"") {
            let header: Header =
                serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                    line: line_no,
                    message: e.to_string(),
                })?;
            if header.format_version != FORMAT_VERSION {
                return Err(Error::VersionMismatch {
                    found: header.format_version,
                    supported: FORMAT_VERSION,
                });
            }
            pool.set_rng_seed(header.rng_seed);
            declared_tasks = Some(header.n_tasks);
            state = Some(PipelineState {
                rng_seed: header.rng_seed,
                stage: header.stage,
                round: header.round,
                pending: header.pending,
            });
            saw_header = true;
            continue;
        }
        saw_header = true;
        let record: TaskRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: line_no,
                message: e.to_string(),
            })?;
        let task = record.into_task(TaskOrigin::Seed);
        pool.add_task(task).map_err(|e| match e {
            Error::DuplicateTaskId { id } => Error::MalformedRecord {
                line: line_no,
                message: format!("duplicate task id '{id}'"),
            },
            other => other,
        })?;
    }

    if let Some(declared) = declared_tasks {
        if declared != pool.len() {
            return Err(Error::Truncated {
                path: path.into(),
                declared,
                found: pool.len(),
            });
        }
    }
    Ok((pool, state))
}
