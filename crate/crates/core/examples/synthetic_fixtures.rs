//! Produce a replayable fixture set from a synthetic stand-in model, so the
//! CLI can be driven end to end with no endpoint or credentials:
//!
//! ```sh
//! cargo run -p instructgen --example synthetic_fixtures -- fixtures.jsonl [target] [seed]
//! instructgen generate --seeds data/seed_tasks.jsonl --out pool.jsonl \
//!     --target <target> --seed <seed> --scripted fixtures.jsonl
//! ```
//!
//! The stand-in answers every prompt deterministically from the prompt
//! digest, so the fixture set covers exactly the prompts a run with the
//! same seed file, target, and seed will issue.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use instructgen::bootstrap::{Pipeline, PipelineConfig, RunOutcome, RunPaths};
use instructgen::digest::prompt_digest;
use instructgen::gateway::{
    CompletionBackend, CompletionResult, FinishReason, Gateway, GenerationParams,
    RecordingBackend, Usage,
};
use instructgen::model::word_count;
use instructgen::templates::{format_instruction_completion, TemplateSet};

struct SynthBackend;

const VERBS: [&str; 4] = ["Summarize", "Rewrite", "Evaluate", "Translate"];
const NOUNS: [&str; 4] = ["report", "letter", "proposal", "transcript"];

impl CompletionBackend for SynthBackend {
    fn complete(
        &self,
        prompt: &str,
        params: &GenerationParams,
    ) -> instructgen::Result<CompletionResult> {
        let digest = prompt_digest(prompt, &params.stop);
        let text = if prompt.starts_with("Come up with a series of tasks:") {
            let items: Vec<String> = (0..5)
                .map(|i| {
                    let a = &digest[i..i + 6];
                    let b = &digest[i + 6..i + 12];
                    let c = &digest[i + 12..i + 18];
                    let d = &digest[i + 18..i + 24];
                    let verb = VERBS[(digest.as_bytes()[i] as usize + i) % 4];
                    let noun = NOUNS[(digest.as_bytes()[i + 1] as usize + i) % 4];
                    format!("{verb} the {noun} about {a}, {b}, {c}, and {d} soon.")
                })
                .collect();
            format_instruction_completion(&items)
        } else if prompt.starts_with("Can the following task be regarded") {
            if digest.as_bytes()[0].is_multiple_of(2) { " Yes" } else { " No" }.to_string()
        } else if prompt.starts_with("Given the classification task definition") {
            format!(
                "Class label: Alpha\nText: the {} case\nClass label: Beta\nText: the {} case",
                &digest[..6],
                &digest[6..12]
            )
        } else {
            format!(
                "Example 1\nText: sample {}\nOutput: handled {}",
                &digest[..6],
                &digest[..6]
            )
        };
        Ok(CompletionResult {
            finish_reason: FinishReason::Stop,
            usage: Usage {
                prompt_tokens: word_count(prompt) as u64,
                completion_tokens: word_count(&text) as u64,
            },
            text,
            attempts: 1,
        })
    }
}

fn main() {
    let mut args = std::env::args().skip(1);
    let out: PathBuf = args.next().unwrap_or_else(|| "fixtures.jsonl".into()).into();
    let target: usize = args.next().map(|s| s.parse().expect("target")).unwrap_or(25);
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(7);

    let seeds = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/seed_tasks.jsonl");
    let config = PipelineConfig {
        target_instruction_count: target,
        rng_seed: seed,
        ..PipelineConfig::default()
    };

    let recorder = Arc::new(RecordingBackend::new(SynthBackend));
    let gateway = Gateway::new(Box::new(recorder.clone()));
    let pipeline =
        Pipeline::new(&gateway, TemplateSet::builtin(), config).expect("config is valid");

    let scratch = std::env::temp_dir().join(format!("synthetic_fixtures_{seed}_{target}"));
    std::fs::create_dir_all(&scratch).expect("scratch dir");
    let paths = RunPaths::for_out(&scratch.join("pool.jsonl"));
    match pipeline.run(&seeds, &paths).expect("synthetic run") {
        RunOutcome::Completed(summary) => {
            let n = recorder.write_fixtures(&out).expect("write fixtures");
            eprintln!(
                "recorded {n} fixtures to {} ({} generated tasks at target {target}, seed {seed})",
                out.display(),
                summary.generated_tasks
            );
            eprintln!(
                "replay with: instructgen generate --seeds data/seed_tasks.jsonl --out pool.jsonl --target {target} --seed {seed} --scripted {}",
                out.display()
            );
        }
        RunOutcome::Paused { .. } => unreachable!("no pause budget set"),
    }
    let _ = std::fs::remove_dir_all(&scratch);
}
