use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use instructgen::analysis::{
    cohen_kappa, length_distributions, ordinal_values, overlap_distribution, spearman_rho,
    top_verb_noun,
};
use instructgen::model::io::load_pool;

use crate::AnalyzeCommand;

pub fn run(cmd: AnalyzeCommand, seed: u64) -> Result<ExitCode> {
    super::announce_params(&serde_json::json!({"command": "analyze"}), seed);
    match cmd {
        AnalyzeCommand::Overlap {
            candidates,
            references,
            generated_only,
            bins,
            per_candidate,
        } => overlap(&candidates, &references, generated_only, bins, per_candidate.as_deref()),
        AnalyzeCommand::Lengths { pool, out_dir } => lengths(&pool, &out_dir),
        AnalyzeCommand::Verbs {
            pool,
            top_verbs,
            top_nouns,
        } => verbs(&pool, top_verbs, top_nouns),
        AnalyzeCommand::Kappa { ratings, collapse } => kappa(&ratings, collapse.as_deref()),
        AnalyzeCommand::Spearman { ratings, order } => spearman(&ratings, &order),
    }
}

fn overlap(
    candidates_path: &Path,
    references_path: &Path,
    generated_only: bool,
    bins: usize,
    per_candidate: Option<&Path>,
) -> Result<ExitCode> {
    let candidate_pool = load_pool(candidates_path)?;
    let reference_pool = load_pool(references_path)?;
    let candidates: Vec<String> = candidate_pool
        .tasks()
        .iter()
        .filter(|t| !generated_only || !t.origin.is_seed())
        .map(|t| t.instruction.clone())
        .collect();
    let references: Vec<String> = reference_pool
        .tasks()
        .iter()
        .map(|t| t.instruction.clone())
        .collect();

    let report = overlap_distribution(&candidates, &references, bins)?;
    println!("mean,{}", report.mean);
    print!("{}", report.histogram.to_csv());
    if let Some(path) = per_candidate {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["candidate_index", "score", "nearest_reference_index"])?;
        for (i, (score, nearest)) in report.per_candidate.iter().enumerate() {
            writer.write_record([i.to_string(), score.to_string(), nearest.to_string()])?;
        }
        writer.flush()?;
        eprintln!("per-candidate scores -> {}", path.display());
    }
    eprintln!(
        "overlap: {} candidates vs {} references, mean max score {:.4}",
        candidates.len(),
        references.len(),
        report.mean
    );
    Ok(ExitCode::SUCCESS)
}

fn lengths(pool_path: &Path, out_dir: &Path) -> Result<ExitCode> {
    let pool = load_pool(pool_path)?;
    let report = length_distributions(&pool);
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    for (name, histogram) in [
        ("instruction_words.csv", &report.instruction),
        ("nonempty_input_words.csv", &report.nonempty_input),
        ("output_words.csv", &report.output),
    ] {
        let path = out_dir.join(name);
        std::fs::write(&path, histogram.to_csv())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!("mean_instruction_words,{}", report.mean_instruction_words);
    println!("mean_nonempty_input_words,{}", report.mean_nonempty_input_words);
    println!("mean_output_words,{}", report.mean_output_words);
    eprintln!("length histograms -> {}", out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn verbs(pool_path: &Path, top_verbs: usize, top_nouns: usize) -> Result<ExitCode> {
    let pool = load_pool(pool_path)?;
    let ranking = top_verb_noun(&pool, top_verbs, top_nouns);
    println!("verb,verb_count,noun,noun_count");
    for entry in &ranking.verbs {
        for (noun, count) in &entry.nouns {
            println!("{},{},{},{}", entry.verb, entry.count, noun, count);
        }
    }
    eprintln!(
        "verb-noun pairs found in {}/{} instructions (coverage {:.3})",
        ranking.pairs_found, ranking.instructions_total, ranking.coverage
    );
    Ok(ExitCode::SUCCESS)
}

fn read_rating_columns(path: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() < 2 {
            bail!("ratings file needs at least two columns per row");
        }
        a.push(record[0].trim().to_string());
        b.push(record[1].trim().to_string());
    }
    Ok((a, b))
}

fn parse_collapse(spec: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for group in spec.split('|') {
        let labels: Vec<&str> = group.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        if labels.is_empty() {
            bail!("empty group in collapse spec '{spec}'");
        }
        let merged = labels.join("+");
        for label in labels {
            map.insert(label.to_string(), merged.clone());
        }
    }
    Ok(map)
}

fn kappa(ratings: &Path, collapse: Option<&str>) -> Result<ExitCode> {
    let (a, b) = read_rating_columns(ratings)?;
    let collapse = collapse.map(parse_collapse).transpose()?;
    let kappa = cohen_kappa(&a, &b, collapse.as_ref())?;
    println!("kappa,{kappa}");
    eprintln!("Cohen's kappa over {} pairs: {kappa:.4}", a.len());
    Ok(ExitCode::SUCCESS)
}

fn spearman(ratings: &Path, order: &str) -> Result<ExitCode> {
    let (a, b) = read_rating_columns(ratings)?;
    let order: Vec<String> = order.split('>').map(|s| s.trim().to_string()).collect();
    let va = ordinal_values(&a, &order)?;
    let vb = ordinal_values(&b, &order)?;
    match spearman_rho(&va, &vb)? {
        Some(rho) => {
            println!("spearman_rho,{rho}");
            eprintln!("Spearman's rho over {} pairs: {rho:.4}", a.len());
        }
        None => {
            println!("spearman_rho,undefined");
            eprintln!("Spearman's rho undefined: a rating column has zero variance");
        }
    }
    Ok(ExitCode::SUCCESS)
}
