use std::process::ExitCode;

use anyhow::Result;
use instructgen::model::io::load_pool;
use instructgen::model::{pool_stats_for, Population};

use crate::StatsArgs;

pub fn run(args: StatsArgs) -> Result<ExitCode> {
    super::announce_params(
        &serde_json::json!({"csv": args.csv, "population": args.population}),
        args.seed,
    );
    let pool = load_pool(&args.pool)?;
    let population = match args.population.as_str() {
        "seed" => Population::Seed,
        "generated" => Population::Generated,
        _ => Population::All,
    };
    let stats = pool_stats_for(&pool, population);

    let rows: Vec<(&str, String)> = vec![
        ("n_instructions", stats.n_instructions.to_string()),
        ("n_classification", stats.n_classification.to_string()),
        ("n_non_classification", stats.n_non_classification.to_string()),
        ("n_unknown", stats.n_unknown.to_string()),
        ("n_instances", stats.n_instances.to_string()),
        ("n_empty_input_instances", stats.n_empty_input_instances.to_string()),
        ("avg_instruction_words", format!("{:.4}", stats.avg_instruction_words)),
        ("avg_nonempty_input_words", format!("{:.4}", stats.avg_nonempty_input_words)),
        ("avg_output_words", format!("{:.4}", stats.avg_output_words)),
    ];

    if args.csv {
        println!("metric,value");
        for (metric, value) in rows {
            println!("{metric},{value}");
        }
    } else {
        let width = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(0);
        for (metric, value) in rows {
            println!("{metric:<width$}  {value}");
        }
    }
    Ok(ExitCode::SUCCESS)
}
