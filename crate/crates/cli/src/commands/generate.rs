use std::process::ExitCode;

use anyhow::Result;
use instructgen::bootstrap::{Pipeline, RunOutcome, RunPaths};
use instructgen::templates::TemplateSet;

use crate::backend;
use crate::GenerateArgs;

pub fn run(args: GenerateArgs) -> Result<ExitCode> {
    let mut config = super::load_config(args.config.as_deref())?;
    if let Some(target) = args.target {
        config.target_instruction_count = target;
    }
    if let Some(cap) = args.rounds_cap {
        config.rounds_cap = cap;
    }
    if let Some(seed) = args.seed {
        config.rng_seed = seed;
    }
    if let Some(n) = args.prompts_per_round {
        config.prompts_per_round = n;
    }
    config.parallelism = args.backend.parallelism;
    super::announce(&config);
    if config.target_instruction_count == 0 {
        eprintln!("note: target is 0, the growth stage is a no-op");
    }

    let setup = backend::build(&args.backend)?;
    let templates = TemplateSet::builtin();
    let mut pipeline = Pipeline::new(&setup.gateway, templates, config)?;
    if let Some(path) = &args.rejects_log {
        pipeline = pipeline.with_rejects_log(path)?;
    } else {
        pipeline = pipeline.with_rejects_log(&args.out.with_extension("rejects.jsonl"))?;
    }
    pipeline.stop_after_rounds = args.stop_after_rounds;

    let mut paths = RunPaths::for_out(&args.out);
    if let Some(checkpoint) = &args.checkpoint {
        paths.checkpoint = checkpoint.clone();
    }

    let outcome = match &args.resume {
        Some(checkpoint) => pipeline.resume(checkpoint, &paths),
        None => pipeline.run(args.seeds.as_deref().expect("clap enforces seeds"), &paths),
    };
    backend::flush_recorder(&args.backend, &setup.recorder)?;
    let outcome = outcome?;

    match outcome {
        RunOutcome::Completed(summary) => {
            for report in &summary.rounds {
                eprintln!(
                    "round {}: prompts={} parsed={} accepted={} rejected={} tokens={} wall={:?}",
                    report.round,
                    report.prompts_issued,
                    report.instructions_parsed,
                    report.accepted,
                    report.rejected_total(),
                    report.tokens_used,
                    report.wall_time,
                );
                for (reason, count) in &report.rejected_by_reason {
                    eprintln!("  rejected {reason}: {count}");
                }
            }
            eprintln!(
                "classified: {} ({} classification, {} non-classification, {} left unknown)",
                summary.classify.classified,
                summary.classify.classification,
                summary.classify.non_classification,
                summary.classify.left_unknown,
            );
            eprintln!(
                "instances: {} tasks, {} kept, {} filtered",
                summary.instances.tasks_processed,
                summary.instances.instances_kept,
                summary.instances.instances_filtered,
            );
            eprintln!(
                "done: {} generated tasks, pool at {}, manifest at {}",
                summary.generated_tasks,
                summary.pool_path.display(),
                summary.manifest_path.display(),
            );
            Ok(ExitCode::SUCCESS)
        }
        RunOutcome::Paused { checkpoint, round } => {
            eprintln!(
                "paused after round {round}; resume with --resume {}",
                checkpoint.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
