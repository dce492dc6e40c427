//! Turn a pool into finetune-ready files, coverage-preserving subsamples,
//! and anonymized human-evaluation sheets.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::model::{Instance, Task, TaskPool, TaskType};

/// One of sixteen prompt-format variants: optional "Task: " prefix,
/// optional "Input: " prefix, optional trailing "Output:" marker, and a
/// one- or two-newline separator. The id encodes the four bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingTemplate {
    pub task_prefix: bool,
    pub input_prefix: bool,
    pub output_marker: bool,
    pub double_separator: bool,
}

pub const TEMPLATE_COUNT: u8 = 16;

impl EncodingTemplate {
    /// Fully-affixed, single-newline variant; also the shape used when a
    /// prompt must be rebuilt for output regeneration.
    pub fn canonical() -> Self {
        EncodingTemplate {
            task_prefix: true,
            input_prefix: true,
            output_marker: true,
            double_separator: false,
        }
    }

    pub fn id(&self) -> u8 {
        (self.task_prefix as u8)
            | (self.input_prefix as u8) << 1
            | (self.output_marker as u8) << 2
            | (self.double_separator as u8) << 3
    }

    pub fn from_id(id: u8) -> Result<Self> {
        if id >= TEMPLATE_COUNT {
            return Err(Error::InvalidParams {
                message: format!("template id must be 0..{TEMPLATE_COUNT}, got {id}"),
            });
        }
        Ok(EncodingTemplate {
            task_prefix: id & 1 != 0,
            input_prefix: id & 2 != 0,
            output_marker: id & 4 != 0,
            double_separator: id & 8 != 0,
        })
    }

    pub fn all() -> Vec<EncodingTemplate> {
        (0..TEMPLATE_COUNT).map(|id| Self::from_id(id).unwrap()).collect()
    }

    fn separator(&self) -> &'static str {
        if self.double_separator {
            "\n\n"
        } else {
            "\n"
        }
    }
}

/// A single prompt/completion training pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FinetuneExample {
    pub prompt: String,
    pub completion: String,
    pub template_id: u8,
    pub task_id: String,
}

/// Serialize one (task, instance) pair under a template. The prompt ends
/// exactly where the model should begin; the completion carries a single
/// leading space. An empty input elides the whole input block.
pub fn encode_example(
    task: &Task,
    instance: &Instance,
    template: &EncodingTemplate,
) -> Result<FinetuneExample> {
    if task.instruction.trim().is_empty() {
        return Err(Error::EmptyInstruction {
            id: task.id.clone(),
        });
    }
    if instance.output.trim().is_empty() {
        return Err(Error::EmptyOutput {
            id: task.id.clone(),
        });
    }
    let sep = template.separator();
    let mut prompt = String::new();
    if template.task_prefix {
        prompt.push_str("Task: ");
    }
    prompt.push_str(&task.instruction);
    if !instance.input.is_empty() {
        prompt.push_str(sep);
        if template.input_prefix {
            prompt.push_str("Input: ");
        }
        prompt.push_str(&instance.input);
    }
    if template.output_marker {
        prompt.push_str(sep);
        prompt.push_str("Output:");
    }
    Ok(FinetuneExample {
        prompt,
        completion: format!(" {}", instance.output),
        template_id: template.id(),
        task_id: task.id.clone(),
    })
}

/// How templates are assigned to exported pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemplatePolicy {
    Fixed(u8),
    /// Independent uniform draw per (task, instance) pair.
    UniformPerExample,
    /// One uniform draw per task, shared by its instances.
    UniformPerTask,
}

#[derive(Clone, Debug)]
#[derive(Default)]
pub struct ExportOptions {
    /// Appended to every completion, e.g. an end-of-text marker.
    pub completion_suffix: Option<String>,
    /// Error out on zero-instance or unknown-type tasks instead of skipping.
    pub strict: bool,
}


#[derive(Serialize)]
struct FinetuneRecord<'a> {
    prompt: &'a str,
    completion: String,
}

#[derive(Serialize)]
struct JobSettings<'a> {
    n_epochs: u32,
    prompt_loss_weight: f64,
    records: usize,
    template_policy: String,
    rng_seed: u64,
    pool_digest: &'a str,
}

/// Result of a finetune export.
#[derive(Clone, Debug)]
pub struct ExportReport {
    pub records_written: usize,
    pub tasks_skipped: Vec<String>,
    pub settings_path: std::path::PathBuf,
}

/// Write one `{"prompt", "completion"}` record per (task, instance) pair.
/// Every exported task must be classified; zero-instance tasks are skipped
/// with a warning (or rejected under `strict`). A sibling settings stub
/// records the finetune job parameters the operator should apply.
pub fn export_finetune_file<R: Rng>(
    pool: &TaskPool,
    rng: &mut R,
    path: &Path,
    policy: TemplatePolicy,
    options: &ExportOptions,
) -> Result<ExportReport> {
    if let TemplatePolicy::Fixed(id) = policy {
        EncodingTemplate::from_id(id)?;
    }
    let mut skipped = Vec::new();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    let mut records = 0usize;
    let mut digest_input = String::new();

    for task in pool.tasks() {
        if task.task_type == TaskType::Unknown {
            return Err(Error::UnknownTaskType {
                id: task.id.clone(),
            });
        }
        if task.instances.is_empty() {
            if options.strict {
                return Err(Error::NoInstances {
                    id: task.id.clone(),
                });
            }
            skipped.push(task.id.clone());
            continue;
        }
        let task_template = match policy {
            TemplatePolicy::UniformPerTask => {
                Some(EncodingTemplate::from_id(rng.random_range(0..TEMPLATE_COUNT))?)
            }
            _ => None,
        };
        for instance in &task.instances {
            let template = match policy {
                TemplatePolicy::Fixed(id) => EncodingTemplate::from_id(id)?,
                TemplatePolicy::UniformPerExample => {
                    EncodingTemplate::from_id(rng.random_range(0..TEMPLATE_COUNT))?
                }
                TemplatePolicy::UniformPerTask => task_template.unwrap(),
            };
            let example = encode_example(task, instance, &template)?;
            let completion = match &options.completion_suffix {
                Some(suffix) => format!("{}{}", example.completion, suffix),
                None => example.completion.clone(),
            };
            let record = FinetuneRecord {
                prompt: &example.prompt,
                completion,
            };
            serde_json::to_writer(&mut writer, &record)?;
            writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            digest_input.push_str(&task.id);
            digest_input.push('\n');
            records += 1;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))?;

    let settings_path = path.with_extension("settings.json");
    let settings = JobSettings {
        n_epochs: 2,
        prompt_loss_weight: 0.0,
        records,
        template_policy: format!("{policy:?}"),
        rng_seed: pool.rng_seed(),
        pool_digest: &sha256_hex(digest_input.as_bytes()),
    };
    let settings_file = File::create(&settings_path).map_err(|e| Error::io(&settings_path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(settings_file), &settings)?;

    Ok(ExportReport {
        records_written: records,
        tasks_skipped: skipped,
        settings_path,
    })
}

/// Keep exactly `n` instances while covering every instruction that has at
/// least one: first one uniformly-chosen instance per instruction, then the
/// remaining slots fill uniformly without replacement from the leftovers.
pub fn subsample_by_instances<R: Rng>(pool: &TaskPool, n: usize, rng: &mut R) -> Result<TaskPool> {
    let covered: Vec<&Task> = pool.tasks().iter().filter(|t| !t.instances.is_empty()).collect();
    let min = covered.len();
    let max: usize = covered.iter().map(|t| t.instances.len()).sum();
    if n < min || n > max {
        return Err(Error::SubsampleBounds {
            requested: n,
            min,
            max,
        });
    }

    // per task, pick the guaranteed instance
    let mut keep: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut leftovers: Vec<(&str, usize)> = Vec::new();
    for task in &covered {
        let chosen = rng.random_range(0..task.instances.len());
        keep.insert(task.id.as_str(), vec![chosen]);
        for idx in 0..task.instances.len() {
            if idx != chosen {
                leftovers.push((task.id.as_str(), idx));
            }
        }
    }
    // fill the remaining slots
    let extra = n - covered.len();
    leftovers.shuffle(rng);
    for (task_id, idx) in leftovers.into_iter().take(extra) {
        keep.get_mut(task_id).unwrap().push(idx);
    }

    let mut out = TaskPool::new(pool.rng_seed());
    for task in pool.tasks() {
        let mut trimmed = task.clone();
        if let Some(indices) = keep.get(task.id.as_str()) {
            trimmed.instances = task
                .instances
                .iter()
                .enumerate()
                .filter(|(i, _)| indices.contains(i))
                .map(|(_, inst)| inst.clone())
                .collect();
        }
        out.add_task(trimmed)?;
    }
    Ok(out)
}

/// Uniform sample of `k` tasks keeping all their instances. With
/// `always_include_seeds`, seed tasks are forced in and count toward `k`,
/// so `k` equal to the seed count yields exactly the seed tasks.
pub fn subsample_by_instructions<R: Rng>(
    pool: &TaskPool,
    k: usize,
    rng: &mut R,
    always_include_seeds: bool,
) -> Result<TaskPool> {
    let total = pool.len();
    if k > total {
        return Err(Error::SubsampleBounds {
            requested: k,
            min: 0,
            max: total,
        });
    }
    let mut chosen: Vec<usize> = Vec::new();
    if always_include_seeds {
        let seeds: Vec<usize> = pool
            .tasks()
            .iter()
            .enumerate()
            .filter(|(_, t)| t.origin.is_seed())
            .map(|(i, _)| i)
            .collect();
        if k < seeds.len() {
            return Err(Error::SubsampleBounds {
                requested: k,
                min: seeds.len(),
                max: total,
            });
        }
        let mut rest: Vec<usize> = pool
            .tasks()
            .iter()
            .enumerate()
            .filter(|(_, t)| !t.origin.is_seed())
            .map(|(i, _)| i)
            .collect();
        rest.shuffle(rng);
        chosen.extend(&seeds);
        chosen.extend(rest.into_iter().take(k - seeds.len()));
    } else {
        let mut all: Vec<usize> = (0..total).collect();
        all.shuffle(rng);
        chosen.extend(all.into_iter().take(k));
    }
    chosen.sort_unstable(); // pool order preserved in the output

    let mut out = TaskPool::new(pool.rng_seed());
    for idx in chosen {
        out.add_task(pool.tasks()[idx].clone())?;
    }
    Ok(out)
}

/// One row of a human-evaluation export: an instruction instance plus the
/// model responses to compare, keyed by model name.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub instruction: String,
    #[serde(default)]
    pub input: String,
    #[serde(default)]
    pub target: String,
    pub responses: BTreeMap<String, String>,
}

const RATING_LEGEND: &str =
    "A=valid and satisfying, B=acceptable with minor issues, C=responds but significant errors, D=irrelevant or invalid";

/// Write the anonymized rating sheet and its answer key. Responses appear
/// in a fresh random order per row; the key maps (item_id, column) back to
/// the model. Rating cells are left blank for the annotators.
pub fn export_human_eval_sheet<R: Rng>(
    items: &[EvalItem],
    rng: &mut R,
    sheet_path: &Path,
    key_path: &Path,
) -> Result<()> {
    if items.is_empty() {
        return Err(Error::InvalidParams {
            message: "no evaluation items supplied".into(),
        });
    }
    let model_set: Vec<&String> = items[0].responses.keys().collect();
    if model_set.is_empty() {
        return Err(Error::InvalidParams {
            message: "items must carry at least one response".into(),
        });
    }
    for item in items {
        let models: Vec<&String> = item.responses.keys().collect();
        if models != model_set {
            return Err(Error::InconsistentModelSets {
                item_id: item.id.clone(),
            });
        }
    }
    let m = model_set.len();

    let mut sheet = csv::Writer::from_path(sheet_path)?;
    let mut key = csv::Writer::from_path(key_path)?;

    let mut header = vec![
        "item_id".to_string(),
        "instruction".to_string(),
        "input".to_string(),
        "target".to_string(),
    ];
    for i in 1..=m {
        header.push(format!("response_{i}"));
        header.push(format!("rating_{i} ({RATING_LEGEND})"));
    }
    sheet.write_record(&header)?;
    key.write_record(["item_id", "column", "model"])?;

    for item in items {
        let mut order: Vec<&String> = model_set.clone();
        order.shuffle(rng);
        let mut row = vec![
            item.id.clone(),
            item.instruction.clone(),
            item.input.clone(),
            item.target.clone(),
        ];
        for (i, model) in order.iter().enumerate() {
            row.push(item.responses[*model].clone());
            row.push(String::new()); // rating left blank
            key.write_record([&item.id, &format!("response_{}", i + 1), model])?;
        }
        sheet.write_record(&row)?;
    }
    sheet.flush().map_err(|e| Error::io(sheet_path, e))?;
    key.flush().map_err(|e| Error::io(key_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TaskOrigin;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_task() -> Task {
        Task::new("t1", "Add the numbers.", TaskType::NonClassification, TaskOrigin::Seed)
            .with_instances(vec![Instance::new("1 2", "3")])
    }

    #[test]
    fn encode_worked_examples() {
        let task = sample_task();
        let tpl = EncodingTemplate::canonical();
        let ex = encode_example(&task, &task.instances[0], &tpl).unwrap();
        assert_eq!(ex.prompt, "Task: Add the numbers.\nInput: 1 2\nOutput:");
        assert_eq!(ex.completion, " 3");

        let empty_input = Instance::new("", "3");
        let ex = encode_example(&task, &empty_input, &tpl).unwrap();
        assert_eq!(ex.prompt, "Task: Add the numbers.\nOutput:");

        let bare = EncodingTemplate::from_id(0).unwrap();
        let ex = encode_example(&task, &task.instances[0], &bare).unwrap();
        assert_eq!(ex.prompt, "Add the numbers.\n1 2");
        assert_eq!(ex.completion, " 3");
    }

    #[test]
    fn encode_rejects_empty_output() {
        let task = sample_task();
        let bad = Instance::new("x", "   ");
        assert!(matches!(
            encode_example(&task, &bad, &EncodingTemplate::canonical()),
            Err(Error::EmptyOutput { .. })
        ));
    }

    #[test]
    fn template_grid_has_sixteen_distinct_variants() {
        let all = EncodingTemplate::all();
        assert_eq!(all.len(), 16);
        let task = sample_task();
        let mut prompts = std::collections::HashSet::new();
        for tpl in &all {
            assert_eq!(EncodingTemplate::from_id(tpl.id()).unwrap(), *tpl);
            let ex = encode_example(&task, &task.instances[0], tpl).unwrap();
            prompts.insert(ex.prompt);
        }
        assert_eq!(prompts.len(), 16);
        assert!(EncodingTemplate::from_id(16).is_err());
    }

    fn pool_3x2() -> TaskPool {
        let mut pool = TaskPool::new(9);
        for i in 0..3 {
            let task = Task::new(
                format!("t{i}"),
                format!("Instruction number {i}."),
                TaskType::NonClassification,
                TaskOrigin::Seed,
            )
            .with_instances(vec![
                Instance::new(format!("in {i} a"), format!("out {i} a")),
                Instance::new(format!("in {i} b"), format!("out {i} b")),
            ]);
            pool.add_task(task).unwrap();
        }
        pool
    }

    #[test]
    fn export_writes_one_record_per_pair() {
        let dir = tempfile::tempdir().unwrap();
        let pool = pool_3x2();
        let path = dir.path().join("ft.jsonl");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let report = export_finetune_file(
            &pool,
            &mut rng,
            &path,
            TemplatePolicy::Fixed(EncodingTemplate::canonical().id()),
            &ExportOptions::default(),
        )
        .unwrap();
        assert_eq!(report.records_written, 6);
        let content = std::fs::read_to_string(&path).unwrap();
        assert_eq!(content.lines().count(), 6);
        for line in content.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v["prompt"].as_str().unwrap().starts_with("Task: "));
            assert!(v["completion"].as_str().unwrap().starts_with(' '));
        }
        assert!(report.settings_path.exists());
        let settings: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&report.settings_path).unwrap()).unwrap();
        assert_eq!(settings["n_epochs"], 2);
        assert_eq!(settings["prompt_loss_weight"], 0.0);
    }

    #[test]
    fn export_is_deterministic_under_a_seed() {
        let dir = tempfile::tempdir().unwrap();
        let pool = pool_3x2();
        let mut bytes = Vec::new();
        for run in 0..2 {
            let path = dir.path().join(format!("ft{run}.jsonl"));
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            export_finetune_file(
                &pool,
                &mut rng,
                &path,
                TemplatePolicy::UniformPerExample,
                &ExportOptions::default(),
            )
            .unwrap();
            bytes.push(std::fs::read(&path).unwrap());
        }
        assert_eq!(bytes[0], bytes[1]);
    }

    #[test]
    fn export_refuses_unknown_and_skips_empty() {
        let dir = tempfile::tempdir().unwrap();
        let mut pool = pool_3x2();
        pool.add_task(Task::new("u", "Unclassified task here.", TaskType::Unknown, TaskOrigin::Seed))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = export_finetune_file(
            &pool,
            &mut rng,
            &dir.path().join("x.jsonl"),
            TemplatePolicy::Fixed(0),
            &ExportOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownTaskType { .. }));

        let mut pool = pool_3x2();
        pool.add_task(Task::new(
            "empty",
            "No instances yet.",
            TaskType::NonClassification,
            TaskOrigin::Seed,
        ))
        .unwrap();
        let report = export_finetune_file(
            &pool,
            &mut rng,
            &dir.path().join("y.jsonl"),
            TemplatePolicy::Fixed(0),
            &ExportOptions::default(),
        )
        .unwrap();
        assert_eq!(report.tasks_skipped, vec!["empty".to_string()]);

        let strict = ExportOptions {
            strict: true,
            ..ExportOptions::default()
        };
        let err = export_finetune_file(
            &pool,
            &mut rng,
            &dir.path().join("z.jsonl"),
            TemplatePolicy::Fixed(0),
            &strict,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NoInstances { .. }));
    }

    fn pool_with_counts(counts: &[usize]) -> TaskPool {
        let mut pool = TaskPool::new(3);
        for (i, n) in counts.iter().enumerate() {
            let instances = (0..*n)
                .map(|j| Instance::new(format!("in {i} {j}"), format!("out {i} {j}")))
                .collect();
            pool.add_task(
                Task::new(
                    format!("t{i}"),
                    format!("Instruction number {i}."),
                    TaskType::NonClassification,
                    TaskOrigin::Seed,
                )
                .with_instances(instances),
            )
            .unwrap();
        }
        pool
    }

    #[test]
    fn instance_subsample_covers_every_instruction() {
        let pool = pool_with_counts(&[3, 3, 2, 1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sampled = subsample_by_instances(&pool, 7, &mut rng).unwrap();
        let total: usize = sampled.tasks().iter().map(|t| t.instances.len()).sum();
        assert_eq!(total, 7);
        assert!(sampled.tasks().iter().all(|t| !t.instances.is_empty()));
    }

    #[test]
    fn instance_subsample_boundaries() {
        let pool = pool_with_counts(&[3, 2, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);

        // n = total instances: identity
        let same = subsample_by_instances(&pool, 6, &mut rng).unwrap();
        assert!(same.content_eq(&pool));

        // n = instruction count: exactly one instance each
        let minimal = subsample_by_instances(&pool, 3, &mut rng).unwrap();
        assert!(minimal.tasks().iter().all(|t| t.instances.len() == 1));

        assert!(matches!(
            subsample_by_instances(&pool, 2, &mut rng),
            Err(Error::SubsampleBounds { min: 3, max: 6, .. })
        ));
        assert!(matches!(
            subsample_by_instances(&pool, 7, &mut rng),
            Err(Error::SubsampleBounds { .. })
        ));
    }

    #[test]
    fn instruction_subsample_keeps_seeds_when_asked() {
        let mut pool = pool_with_counts(&[1, 1, 1]);
        for i in 0..4 {
            pool.add_task(
                Task::new(
                    format!("g{i}"),
                    format!("Generated instruction {i}."),
                    TaskType::NonClassification,
                    TaskOrigin::Generated { round: 0 },
                )
                .with_instances(vec![Instance::new("", "x")]),
            )
            .unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let seeds_only = subsample_by_instructions(&pool, 3, &mut rng, true).unwrap();
        assert_eq!(seeds_only.len(), 3);
        assert!(seeds_only.tasks().iter().all(|t| t.origin.is_seed()));

        let whole = subsample_by_instructions(&pool, 7, &mut rng, false).unwrap();
        assert_eq!(whole.len(), 7);

        let mut rng_a = ChaCha8Rng::seed_from_u64(9);
        let mut rng_b = ChaCha8Rng::seed_from_u64(9);
        let a = subsample_by_instructions(&pool, 5, &mut rng_a, true).unwrap();
        let b = subsample_by_instructions(&pool, 5, &mut rng_b, true).unwrap();
        assert!(a.content_eq(&b));

        assert!(subsample_by_instructions(&pool, 8, &mut rng, false).is_err());
        assert!(subsample_by_instructions(&pool, 2, &mut rng, true).is_err());
    }

    fn eval_items(n: usize, models: &[&str]) -> Vec<EvalItem> {
        (0..n)
            .map(|i| EvalItem {
                id: format!("item{i}"),
                instruction: format!("Do the thing {i}."),
                input: if i % 2 == 0 { String::new() } else { format!("input {i}") },
                target: format!("target {i}"),
                responses: models
                    .iter()
                    .map(|m| (m.to_string(), format!("{m} answer {i}")))
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn sheet_and_key_join_losslessly() {
        let dir = tempfile::tempdir().unwrap();
        let items = eval_items(2, &["alpha", "beta", "gamma"]);
        let sheet_path = dir.path().join("sheet.csv");
        let key_path = dir.path().join("key.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        export_human_eval_sheet(&items, &mut rng, &sheet_path, &key_path).unwrap();

        let mut sheet = csv::Reader::from_path(&sheet_path).unwrap();
        let headers = sheet.headers().unwrap().clone();
        assert_eq!(headers.get(0), Some("item_id"));
        assert!(headers.get(4).unwrap().starts_with("response_1"));
        assert!(headers.get(5).unwrap().contains("A=valid"));

        // rebuild (item, model, response) triples through the key
        let mut key = csv::Reader::from_path(&key_path).unwrap();
        let mut mapping: BTreeMap<(String, String), String> = BTreeMap::new();
        for record in key.records() {
            let record = record.unwrap();
            mapping.insert(
                (record[0].to_string(), record[1].to_string()),
                record[2].to_string(),
            );
        }
        let mut recovered: BTreeMap<(String, String), String> = BTreeMap::new();
        for row in sheet.records() {
            let row = row.unwrap();
            let item_id = row[0].to_string();
            for i in 0..3 {
                let response = row[4 + 2 * i].to_string();
                let model = mapping[&(item_id.clone(), format!("response_{}", i + 1))].clone();
                recovered.insert((item_id.clone(), model), response);
            }
        }
        for item in &items {
            for (model, response) in &item.responses {
                assert_eq!(&recovered[&(item.id.clone(), model.clone())], response);
            }
        }
    }

    #[test]
    fn sheet_permutations_are_seeded() {
        let dir = tempfile::tempdir().unwrap();
        let items = eval_items(6, &["m1", "m2", "m3"]);
        let mut keys = Vec::new();
        for run in 0..2 {
            let sheet = dir.path().join(format!("s{run}.csv"));
            let key = dir.path().join(format!("k{run}.csv"));
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            export_human_eval_sheet(&items, &mut rng, &sheet, &key).unwrap();
            keys.push(std::fs::read(&key).unwrap());
        }
        assert_eq!(keys[0], keys[1]);
    }

    #[test]
    fn inconsistent_model_sets_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut items = eval_items(2, &["m1", "m2"]);
        items[1].responses.remove("m2");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = export_human_eval_sheet(
            &items,
            &mut rng,
            &dir.path().join("s.csv"),
            &dir.path().join("k.csv"),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InconsistentModelSets { .. }));
    }
}
