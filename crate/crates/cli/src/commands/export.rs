use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use instructgen::export::{
    export_finetune_file, export_human_eval_sheet, subsample_by_instances,
    subsample_by_instructions, EvalItem, ExportOptions, TemplatePolicy,
};
use instructgen::model::io::{load_pool, save_pool};
use rand::SeedableRng;

use crate::ExportCommand;

pub fn run(cmd: ExportCommand) -> Result<ExitCode> {
    match cmd {
        ExportCommand::Finetune {
            pool,
            out,
            template,
            seed,
            eot,
            strict,
        } => finetune(&pool, &out, &template, seed, eot, strict),
        ExportCommand::Subsample {
            pool,
            out,
            instances,
            instructions,
            include_seeds,
            seed,
        } => subsample(&pool, &out, instances, instructions, include_seeds, seed),
        ExportCommand::Evalsheet {
            items,
            sheet,
            key,
            seed,
        } => evalsheet(&items, &sheet, &key, seed),
    }
}

fn parse_policy(spec: &str) -> Result<TemplatePolicy> {
    match spec {
        "random" => Ok(TemplatePolicy::UniformPerExample),
        "per-task" => Ok(TemplatePolicy::UniformPerTask),
        other => match other.strip_prefix("fixed:") {
            Some(id) => Ok(TemplatePolicy::Fixed(id.parse().context("template id")?)),
            None => bail!("template policy must be 'random', 'per-task', or 'fixed:<id>'"),
        },
    }
}

fn finetune(
    pool_path: &Path,
    out: &Path,
    template: &str,
    seed: u64,
    eot: Option<String>,
    strict: bool,
) -> Result<ExitCode> {
    super::announce_params(
        &serde_json::json!({"template": template, "eot": eot, "strict": strict}),
        seed,
    );
    let pool = load_pool(pool_path)?;
    let policy = parse_policy(template)?;
    let options = ExportOptions {
        completion_suffix: eot,
        strict,
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let report = export_finetune_file(&pool, &mut rng, out, policy, &options)?;
    for id in &report.tasks_skipped {
        eprintln!("warning: task '{id}' skipped (no instances)");
    }
    eprintln!(
        "wrote {} records -> {} (job settings at {})",
        report.records_written,
        out.display(),
        report.settings_path.display()
    );
    println!("{}", report.records_written);
    Ok(ExitCode::SUCCESS)
}

fn subsample(
    pool_path: &Path,
    out: &Path,
    instances: Option<usize>,
    instructions: Option<usize>,
    include_seeds: bool,
    seed: u64,
) -> Result<ExitCode> {
    super::announce_params(
        &serde_json::json!({
            "instances": instances,
            "instructions": instructions,
            "include_seeds": include_seeds,
        }),
        seed,
    );
    let pool = load_pool(pool_path)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let sampled = match (instances, instructions) {
        (Some(n), None) => subsample_by_instances(&pool, n, &mut rng)?,
        (None, Some(k)) => subsample_by_instructions(&pool, k, &mut rng, include_seeds)?,
        _ => bail!("pass exactly one of --instances or --instructions"),
    };
    save_pool(&sampled, out)?;
    let kept: usize = sampled.tasks().iter().map(|t| t.instances.len()).sum();
    eprintln!(
        "subsampled {} tasks / {} instances -> {}",
        sampled.len(),
        kept,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn evalsheet(items_path: &Path, sheet: &Path, key: &Path, seed: u64) -> Result<ExitCode> {
    super::announce_params(&serde_json::json!({"command": "evalsheet"}), seed);
    let text = std::fs::read_to_string(items_path)
        .with_context(|| format!("reading {}", items_path.display()))?;
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut value: serde_json::Value =
            serde_json::from_str(line).with_context(|| format!("line {}", i + 1))?;
        if value.get("id").is_none() {
            value["id"] = serde_json::json!(format!("item_{i}"));
        }
        let item: EvalItem = serde_json::from_value(value).with_context(|| format!("line {}", i + 1))?;
        items.push(item);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    export_human_eval_sheet(&items, &mut rng, sheet, key)?;
    eprintln!(
        "wrote {} items -> sheet {} / key {}",
        items.len(),
        sheet.display(),
        key.display()
    );
    Ok(ExitCode::SUCCESS)
}
