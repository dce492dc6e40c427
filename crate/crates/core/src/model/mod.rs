//! Domain types: instances, tasks, the task pool, and pool statistics.

pub mod io;

use std::collections::HashSet;
use std::time::SystemTime;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One (input, output) pair for a task. "No input" is the empty string,
/// never a sentinel word; the output must survive trimming.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub input: String,
    pub output: String,
    /// Set when the output was rewritten by a later regeneration pass.
    #[serde(default, skip_serializing_if = "is_false")]
    pub regenerated: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl Instance {
    pub fn new(input: impl Into<String>, output: impl Into<String>) -> Self {
        Instance {
            input: input.into(),
            output: output.into(),
            regenerated: false,
        }
    }

    pub fn has_empty_input(&self) -> bool {
        word_count(&self.input) == 0
    }

    pub fn validate(&self, task_id: &str) -> Result<()> {
        if self.output.trim().is_empty() {
            return Err(Error::EmptyOutput {
                id: task_id.to_string(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    Classification,
    NonClassification,
    Unknown,
}

impl TaskType {
    pub fn as_flag(self) -> Option<bool> {
        match self {
            TaskType::Classification => Some(true),
            TaskType::NonClassification => Some(false),
            TaskType::Unknown => None,
        }
    }

    pub fn from_flag(flag: Option<bool>) -> Self {
        match flag {
            Some(true) => TaskType::Classification,
            Some(false) => TaskType::NonClassification,
            None => TaskType::Unknown,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskOrigin {
    Seed,
    Generated { round: u32 },
}

impl TaskOrigin {
    pub fn is_seed(self) -> bool {
        matches!(self, TaskOrigin::Seed)
    }

    pub fn round(self) -> Option<u32> {
        match self {
            TaskOrigin::Seed => None,
            TaskOrigin::Generated { round } => Some(round),
        }
    }
}

/// An instruction plus its type flag, origin, and instances.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub id: String,
    pub instruction: String,
    pub task_type: TaskType,
    pub origin: TaskOrigin,
    pub instances: Vec<Instance>,
    /// Max ROUGE-L against the pool at the moment this task was admitted;
    /// recorded for generated tasks so the novelty rule stays auditable.
    pub admission_similarity: Option<f64>,
}

impl Task {
    pub fn new(
        id: impl Into<String>,
        instruction: impl Into<String>,
        task_type: TaskType,
        origin: TaskOrigin,
    ) -> Self {
        Task {
            id: id.into(),
            instruction: instruction.into(),
            task_type,
            origin,
            instances: Vec::new(),
            admission_similarity: None,
        }
    }

    pub fn with_instances(mut self, instances: Vec<Instance>) -> Self {
        self.instances = instances;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.instruction.trim().is_empty() {
            return Err(Error::EmptyInstruction {
                id: self.id.clone(),
            });
        }
        for instance in &self.instances {
            instance.validate(&self.id)?;
        }
        Ok(())
    }
}

/// Ordered, id-unique collection of tasks.
///
/// Single-writer: mutation goes through the owning orchestrator; snapshots
/// may be shared freely across threads. Timestamps are informational only
/// and never serialized, so identical runs produce identical files.
#[derive(Clone, Debug)]
pub struct TaskPool {
    tasks: Vec<Task>,
    ids: HashSet<String>,
    rng_seed: u64,
    pub created_at: SystemTime,
    pub updated_at: SystemTime,
}

impl TaskPool {
    pub fn new(rng_seed: u64) -> Self {
        let now = SystemTime::now();
        TaskPool {
            tasks: Vec::new(),
            ids: HashSet::new(),
            rng_seed,
            created_at: now,
            updated_at: now,
        }
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn set_rng_seed(&mut self, seed: u64) {
        self.rng_seed = seed;
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn get(&self, id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.contains(id)
    }

    /// Append a task. The id must be fresh and the task must validate.
    pub fn add_task(&mut self, task: Task) -> Result<()> {
        task.validate()?;
        if !self.ids.insert(task.id.clone()) {
            return Err(Error::DuplicateTaskId { id: task.id });
        }
        self.tasks.push(task);
        self.updated_at = SystemTime::now();
        Ok(())
    }

    pub fn seed_tasks(&self) -> impl Iterator<Item = &Task> {
        self.tasks.iter().filter(|t| t.origin.is_seed())
    }

    pub fn generated_tasks(&self) -> impl Iterator<Item = &Task> {
        self.tasks.iter().filter(|t| !t.origin.is_seed())
    }

    pub fn generated_count(&self) -> usize {
        self.generated_tasks().count()
    }

    pub fn tasks_in_round(&self, round: u32) -> impl Iterator<Item = &Task> {
        self.tasks
            .iter()
            .filter(move |t| t.origin.round() == Some(round))
    }

    pub fn set_task_type(&mut self, id: &str, task_type: TaskType) -> Result<()> {
        let task = self.task_mut(id)?;
        task.task_type = task_type;
        self.updated_at = SystemTime::now();
        Ok(())
    }

    pub fn set_instances(&mut self, id: &str, instances: Vec<Instance>) -> Result<()> {
        for instance in &instances {
            instance.validate(id)?;
        }
        let task = self.task_mut(id)?;
        task.instances = instances;
        self.updated_at = SystemTime::now();
        Ok(())
    }

    pub fn replace_instance_output(
        &mut self,
        id: &str,
        index: usize,
        output: String,
    ) -> Result<()> {
        let task = self.task_mut(id)?;
        let instance = task.instances.get_mut(index).ok_or(Error::NoInstances {
            id: id.to_string(),
        })?;
        instance.output = output;
        instance.regenerated = true;
        self.updated_at = SystemTime::now();
        Ok(())
    }

    fn task_mut(&mut self, id: &str) -> Result<&mut Task> {
        self.tasks
            .iter_mut()
            .find(|t| t.id == id)
            .ok_or_else(|| Error::TaskNotFound { id: id.to_string() })
    }

    /// Equality over everything the pool persists (timestamps excluded).
    pub fn content_eq(&self, other: &TaskPool) -> bool {
        self.rng_seed == other.rng_seed && self.tasks == other.tasks
    }
}

/// Which slice of the pool a statistics report covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Population {
    All,
    Seed,
    Generated,
}

/// Counts and word-length averages over a pool.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoolStats {
    pub n_instructions: usize,
    pub n_classification: usize,
    pub n_non_classification: usize,
    pub n_unknown: usize,
    pub n_instances: usize,
    pub n_empty_input_instances: usize,
    pub avg_instruction_words: f64,
    pub avg_nonempty_input_words: f64,
    pub avg_output_words: f64,
}

/// Word = maximal run of non-whitespace (Unicode rule), no stemming or
/// punctuation stripping.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn pool_stats(pool: &TaskPool) -> PoolStats {
    pool_stats_for(pool, Population::All)
}

pub fn pool_stats_for(pool: &TaskPool, population: Population) -> PoolStats {
    let tasks: Vec<&Task> = pool
        .tasks()
        .iter()
        .filter(|t| match population {
            Population::All => true,
            Population::Seed => t.origin.is_seed(),
            Population::Generated => !t.origin.is_seed(),
        })
        .collect();

    let mut stats = PoolStats {
        n_instructions: tasks.len(),
        n_classification: 0,
        n_non_classification: 0,
        n_unknown: 0,
        n_instances: 0,
        n_empty_input_instances: 0,
        avg_instruction_words: 0.0,
        avg_nonempty_input_words: 0.0,
        avg_output_words: 0.0,
    };

    let mut instruction_words = 0usize;
    let mut input_words = 0usize;
    let mut nonempty_inputs = 0usize;
    let mut output_words = 0usize;

    for task in &tasks {
        match task.task_type {
            TaskType::Classification => stats.n_classification += 1,
            TaskType::NonClassification => stats.n_non_classification += 1,
            TaskType::Unknown => stats.n_unknown += 1,
        }
        instruction_words += word_count(&task.instruction);
        for instance in &task.instances {
            stats.n_instances += 1;
            let in_words = word_count(&instance.input);
            if in_words == 0 {
                stats.n_empty_input_instances += 1;
            } else {
                nonempty_inputs += 1;
                input_words += in_words;
            }
            output_words += word_count(&instance.output);
        }
    }

    if stats.n_instructions > 0 {
        stats.avg_instruction_words = instruction_words as f64 / stats.n_instructions as f64;
    }
    if nonempty_inputs > 0 {
        stats.avg_nonempty_input_words = input_words as f64 / nonempty_inputs as f64;
    }
    if stats.n_instances > 0 {
        stats.avg_output_words = output_words as f64 / stats.n_instances as f64;
    }
    stats
}
