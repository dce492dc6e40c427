//! Standalone classify / instances / regenerate passes over a pool file.
//! Inputs are never mutated; results land in --out.

use std::process::ExitCode;

use anyhow::Result;
use instructgen::bootstrap::Pipeline;
use instructgen::model::io::{load_pool, save_pool};
use instructgen::templates::TemplateSet;

use crate::backend;
use crate::PoolInOutArgs;

pub fn classify(args: PoolInOutArgs) -> Result<ExitCode> {
    let mut config = super::load_config(args.config.as_deref())?;
    config.parallelism = args.backend.parallelism;
    super::announce(&config);

    let mut pool = load_pool(&args.pool)?;
    let setup = backend::build(&args.backend)?;
    let pipeline = Pipeline::new(&setup.gateway, TemplateSet::builtin(), config)?;
    let report = pipeline.classify_tasks(&mut pool);
    backend::flush_recorder(&args.backend, &setup.recorder)?;
    let report = report?;

    save_pool(&pool, &args.out)?;
    eprintln!(
        "classified {} tasks ({} classification, {} non-classification, {} left unknown) -> {}",
        report.classified,
        report.classification,
        report.non_classification,
        report.left_unknown,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn instances(args: PoolInOutArgs) -> Result<ExitCode> {
    let mut config = super::load_config(args.config.as_deref())?;
    config.parallelism = args.backend.parallelism;
    super::announce(&config);

    let mut pool = load_pool(&args.pool)?;
    let setup = backend::build(&args.backend)?;
    let pipeline = Pipeline::new(&setup.gateway, TemplateSet::builtin(), config)?;
    let report = pipeline.instantiate_missing(&mut pool);
    backend::flush_recorder(&args.backend, &setup.recorder)?;
    let report = report?;

    save_pool(&pool, &args.out)?;
    eprintln!(
        "instantiated {} tasks: {} instances kept, {} filtered -> {}",
        report.tasks_processed,
        report.instances_kept,
        report.instances_filtered,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn regenerate(args: PoolInOutArgs) -> Result<ExitCode> {
    let mut config = super::load_config(args.config.as_deref())?;
    config.parallelism = args.backend.parallelism;
    super::announce(&config);

    let mut pool = load_pool(&args.pool)?;
    let setup = backend::build(&args.backend)?;
    let pipeline = Pipeline::new(&setup.gateway, TemplateSet::builtin(), config)?;
    let params = pipeline.config().stage_params.evaluate.clone();
    let report = pipeline.regenerate_outputs(&mut pool, &params);
    backend::flush_recorder(&args.backend, &setup.recorder)?;
    let report = report?;

    save_pool(&pool, &args.out)?;
    eprintln!(
        "regenerated outputs: {} rewritten, {} kept original -> {}",
        report.rewritten,
        report.kept_original,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}
