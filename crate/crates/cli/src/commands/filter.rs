//! Audit mode: replay the admission decisions of an existing pool.
//!
//! Tasks are walked in file order, which is admission order. Each task is
//! re-scored against the prefix pool exactly as the orchestrator saw it;
//! generated tasks must reproduce their recorded admission similarity
//! bit-for-bit.

use std::process::ExitCode;

use anyhow::Result;
use instructgen::filters::{run_instruction_filter_chain_indexed, NoveltyIndex};
use instructgen::model::io::load_pool;
use serde::Serialize;

use crate::FilterArgs;

#[derive(Serialize)]
struct AuditRecord<'a> {
    id: &'a str,
    origin: &'static str,
    verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    recorded_score: Option<f64>,
    score_replayed: bool,
}

pub fn run(args: FilterArgs) -> Result<ExitCode> {
    let config = super::load_config(args.config.as_deref())?;
    super::announce(&config);
    let filter_config = &config.filter_config;

    let pool = load_pool(&args.pool)?;
    let mut prefix = NoveltyIndex::default();
    let mut rejected = 0usize;
    let mut mismatched = 0usize;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();

    for task in pool.tasks() {
        let is_seed = task.origin.is_seed();
        // seeds were never filtered at admission; they are scored here only
        // so the report is complete
        let (verdict, novelty) = if prefix.is_empty() {
            (instructgen::filters::FilterVerdict::Ok, None)
        } else {
            run_instruction_filter_chain_indexed(&task.instruction, &prefix, filter_config)
        };
        let score = novelty.as_ref().map(|(s, _)| *s);
        let score_replayed = match (task.admission_similarity, score) {
            (Some(recorded), Some(recomputed)) => recorded.to_bits() == recomputed.to_bits(),
            (Some(_), None) => false,
            (None, _) => true,
        };
        if !is_seed && !verdict.accepted() {
            rejected += 1;
        }
        if !score_replayed {
            mismatched += 1;
        }
        let record = AuditRecord {
            id: &task.id,
            origin: if is_seed { "seed" } else { "generated" },
            verdict: if verdict.accepted() { "ok" } else { "reject" },
            reason: verdict.reason().map(|r| r.code()),
            score,
            recorded_score: task.admission_similarity,
            score_replayed,
        };
        serde_json::to_writer(&mut out, &record)?;
        use std::io::Write;
        writeln!(out)?;
        prefix.push(&task.id, &task.instruction);
    }

    eprintln!(
        "audited {} tasks: {} generated tasks would be rejected, {} recorded scores failed to replay",
        pool.len(),
        rejected,
        mismatched
    );
    if args.strict && (rejected > 0 || mismatched > 0) {
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}
