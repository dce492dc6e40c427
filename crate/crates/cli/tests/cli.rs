//! Command-line surface checks: flag handling, exit codes, stream
//! separation, and the scripted-backend paths of every LM-touching command.

use std::path::{Path, PathBuf};
use std::process::Command;

use instructgen::gateway::{ScriptedBackend, StageParams};
use instructgen::model::io::{load_pool, save_pool};
use instructgen::model::{Instance, Task, TaskOrigin, TaskPool, TaskType};
use instructgen::templates::TemplateSet;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_instructgen"))
}

fn seed_file() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/seed_tasks.jsonl")
        .canonicalize()
        .unwrap()
}

fn write_fixtures(path: &Path, entries: &[(String, Vec<String>, &str)]) {
    use std::io::Write;
    let mut file = std::fs::File::create(path).unwrap();
    for (prompt, stop, completion) in entries {
        let record = serde_json::json!({
            "prompt": prompt,
            "stop": stop,
            "completion": completion,
        });
        writeln!(file, "{record}").unwrap();
    }
}

#[test]
fn config_file_supplies_pipeline_settings() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("pipeline.json");
    std::fs::write(
        &config,
        r#"{"target_instruction_count": 0, "rng_seed": 11, "filter_config": {"min_instruction_words": 2}}"#,
    )
    .unwrap();
    let out = dir.path().join("out.jsonl");
    let fixtures = dir.path().join("none.jsonl");
    std::fs::write(&fixtures, "").unwrap();
    let output = bin()
        .args(["generate", "--seeds"])
        .arg(seed_file())
        .arg("--out")
        .arg(&out)
        .arg("--config")
        .arg(&config)
        .arg("--scripted")
        .arg(&fixtures)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("rng_seed=11"), "config seed not applied: {stderr}");
    // target 0 from the config file: seed-only pool
    let pool = load_pool(&out).unwrap();
    assert_eq!(pool.len(), 175);
    assert_eq!(pool.rng_seed(), 11);
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let output = bin().args(["generate", "--out", "/tmp/x.jsonl"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn missing_pool_file_is_operational() {
    let output = bin()
        .args(["stats", "--pool", "/nonexistent/nope.jsonl"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("error"));
}

#[test]
fn malformed_pool_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let pool = dir.path().join("bad.jsonl");
    std::fs::write(&pool, "{not json}\n").unwrap();
    let output = bin().args(["stats", "--pool"]).arg(&pool).output().unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn scripted_miss_is_operational() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("empty.jsonl");
    std::fs::write(&fixtures, "").unwrap();
    let out = dir.path().join("out.jsonl");
    let output = bin()
        .args(["generate", "--seeds"])
        .arg(seed_file())
        .arg("--out")
        .arg(&out)
        .args(["--target", "5", "--seed", "1", "--scripted"])
        .arg(&fixtures)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("batch failed"));
    // the aborted round still checkpointed
    assert!(dir.path().join("out.checkpoint.jsonl").exists());
}

#[test]
fn stats_streams_are_separated() {
    let output = bin()
        .args(["stats", "--csv", "--pool"])
        .arg(seed_file())
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.starts_with("metric,value"));
    assert!(stdout.contains("n_instructions,175"));
    assert!(stdout.contains("n_classification,25"));
    assert!(stdout.contains("n_non_classification,150"));
}

#[test]
fn stats_population_split() {
    let output = bin()
        .args(["stats", "--csv", "--population", "generated", "--pool"])
        .arg(seed_file())
        .output()
        .unwrap();
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("n_instructions,0"));
}

#[test]
fn classify_via_scripted_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let mut pool = TaskPool::new(0);
    pool.add_task(Task::new(
        "g0",
        "Decide if the review is positive or negative.",
        TaskType::Unknown,
        TaskOrigin::Generated { round: 0 },
    ))
    .unwrap();
    pool.add_task(Task::new(
        "g1",
        "Write a short essay about rivers.",
        TaskType::Unknown,
        TaskOrigin::Generated { round: 0 },
    ))
    .unwrap();
    let pool_path = dir.path().join("pool.jsonl");
    save_pool(&pool, &pool_path).unwrap();

    let templates = TemplateSet::builtin();
    let stop = StageParams::default().clf_identify.stop.clone();
    let entries: Vec<(String, Vec<String>, &str)> = vec![
        (
            templates
                .render_clf_prompt("Decide if the review is positive or negative.")
                .unwrap()
                .text,
            stop.clone(),
            " Yes",
        ),
        (
            templates
                .render_clf_prompt("Write a short essay about rivers.")
                .unwrap()
                .text,
            stop,
            " No",
        ),
    ];
    let fixtures = dir.path().join("fixtures.jsonl");
    write_fixtures(&fixtures, &entries);

    let out = dir.path().join("classified.jsonl");
    let output = bin()
        .args(["classify", "--pool"])
        .arg(&pool_path)
        .arg("--out")
        .arg(&out)
        .arg("--scripted")
        .arg(&fixtures)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );

    let classified = load_pool(&out).unwrap();
    assert_eq!(classified.get("g0").unwrap().task_type, TaskType::Classification);
    assert_eq!(
        classified.get("g1").unwrap().task_type,
        TaskType::NonClassification
    );
    // input pool untouched
    assert_eq!(load_pool(&pool_path).unwrap().get("g0").unwrap().task_type, TaskType::Unknown);
}

#[test]
fn instances_via_scripted_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let mut pool = TaskPool::new(0);
    pool.add_task(Task::new(
        "g0",
        "Classify the fruit as citrus or not.",
        TaskType::Classification,
        TaskOrigin::Generated { round: 0 },
    ))
    .unwrap();
    pool.add_task(Task::new(
        "g1",
        "Suggest a title for the short story.",
        TaskType::NonClassification,
        TaskOrigin::Generated { round: 0 },
    ))
    .unwrap();
    let pool_path = dir.path().join("pool.jsonl");
    save_pool(&pool, &pool_path).unwrap();

    let templates = TemplateSet::builtin();
    let stop = StageParams::default().instance_gen.stop.clone();
    let entries = vec![
        (
            templates
                .render_output_first_prompt("Classify the fruit as citrus or not.")
                .unwrap()
                .text,
            stop.clone(),
            "Class label: Citrus\nFruit: lemon\nClass label: Not Citrus\nFruit: banana",
        ),
        (
            templates
                .render_input_first_prompt("Suggest a title for the short story.")
                .unwrap()
                .text,
            stop,
            "Example 1\nStory: A lighthouse keeper adopts a seal pup.\nOutput: The Keeper's Companion",
        ),
    ];
    let fixtures = dir.path().join("fixtures.jsonl");
    write_fixtures(&fixtures, &entries);

    let out = dir.path().join("instanced.jsonl");
    let output = bin()
        .args(["instances", "--pool"])
        .arg(&pool_path)
        .arg("--out")
        .arg(&out)
        .arg("--scripted")
        .arg(&fixtures)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );

    let instanced = load_pool(&out).unwrap();
    let clf = instanced.get("g0").unwrap();
    assert_eq!(clf.instances.len(), 2);
    assert_eq!(clf.instances[0].output, "Citrus");
    let gen = instanced.get("g1").unwrap();
    assert_eq!(gen.instances.len(), 1);
    assert_eq!(gen.instances[0].output, "The Keeper's Companion");
}

#[test]
fn filter_strict_flags_a_tampered_pool() {
    let dir = tempfile::tempdir().unwrap();
    let mut pool = TaskPool::new(0);
    for i in 0..3 {
        pool.add_task(
            Task::new(
                format!("s{i}"),
                format!("Seed instruction number {i} goes here."),
                TaskType::NonClassification,
                TaskOrigin::Seed,
            )
            .with_instances(vec![Instance::new("", "x")]),
        )
        .unwrap();
    }
    let mut tampered = Task::new(
        "g0",
        "Seed instruction number 0 goes here.",
        TaskType::NonClassification,
        TaskOrigin::Generated { round: 0 },
    );
    tampered.admission_similarity = Some(0.12); // cannot be right: it's a verbatim copy
    pool.add_task(tampered).unwrap();
    let pool_path = dir.path().join("pool.jsonl");
    save_pool(&pool, &pool_path).unwrap();

    let output = bin()
        .args(["filter", "--strict", "--pool"])
        .arg(&pool_path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let stdout = String::from_utf8(output.stdout).unwrap();
    let last: serde_json::Value = serde_json::from_str(stdout.lines().last().unwrap()).unwrap();
    assert_eq!(last["id"], "g0");
    assert_eq!(last["verdict"], "reject");
    assert_eq!(last["reason"], "too_similar");
    assert_eq!(last["score_replayed"], false);
}

#[test]
fn analyze_kappa_and_spearman() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = dir.path().join("ratings.csv");
    std::fs::write(&ratings, "rater_a,rater_b\nA,A\nA,B\nB,A\nB,B\n").unwrap();
    let output = bin()
        .args(["analyze", "kappa", "--ratings"])
        .arg(&ratings)
        .output()
        .unwrap();
    assert!(output.status.success());
    assert_eq!(String::from_utf8_lossy(&output.stdout).trim(), "kappa,0");

    // collapsing both labels into one group makes agreement perfect
    let output = bin()
        .args(["analyze", "kappa", "--collapse", "A,B", "--ratings"])
        .arg(&ratings)
        .output()
        .unwrap();
    assert_eq!(String::from_utf8_lossy(&output.stdout).trim(), "kappa,1");

    let ordinal = dir.path().join("ordinal.csv");
    std::fs::write(&ordinal, "a,b\nA,B\nB,A\nC,D\nD,C\n").unwrap();
    let output = bin()
        .args(["analyze", "spearman", "--order", "A>B>C>D", "--ratings"])
        .arg(&ordinal)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    let rho: f64 = stdout.trim().strip_prefix("spearman_rho,").unwrap().parse().unwrap();
    assert!((rho - 0.6).abs() < 1e-12, "got {rho}");

    let flat = dir.path().join("flat.csv");
    std::fs::write(&flat, "a,b\nA,A\nA,B\nA,C\n").unwrap();
    let output = bin()
        .args(["analyze", "spearman", "--order", "A>B>C", "--ratings"])
        .arg(&flat)
        .output()
        .unwrap();
    assert_eq!(
        String::from_utf8_lossy(&output.stdout).trim(),
        "spearman_rho,undefined"
    );
}

#[test]
fn analyze_overlap_and_lengths_and_verbs() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin()
        .args(["analyze", "overlap", "--candidates"])
        .arg(seed_file())
        .arg("--references")
        .arg(seed_file())
        .args(["--bins", "10"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.starts_with("mean,1\n"));
    assert!(stdout.contains("bin_lo,bin_hi,count"));

    let output = bin()
        .args(["analyze", "lengths", "--pool"])
        .arg(seed_file())
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(output.status.success());
    for name in ["instruction_words.csv", "nonempty_input_words.csv", "output_words.csv"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("mean_instruction_words,"));

    let output = bin()
        .args(["analyze", "verbs", "--pool"])
        .arg(seed_file())
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.starts_with("verb,verb_count,noun,noun_count"));
    assert!(stdout.lines().count() > 5);
    assert!(String::from_utf8_lossy(&output.stderr).contains("coverage"));
}

#[test]
fn export_subsample_and_evalsheet() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("seeds_only.jsonl");
    let output = bin()
        .args(["export", "subsample", "--pool"])
        .arg(seed_file())
        .arg("--out")
        .arg(&out)
        .args(["--instructions", "175", "--include-seeds", "--seed", "3"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let pool = load_pool(&out).unwrap();
    assert_eq!(pool.len(), 175);
    assert!(pool.tasks().iter().all(|t| t.origin.is_seed()));

    let smaller = dir.path().join("fewer_instances.jsonl");
    let output = bin()
        .args(["export", "subsample", "--pool"])
        .arg(seed_file())
        .arg("--out")
        .arg(&smaller)
        .args(["--instances", "175", "--seed", "3"])
        .output()
        .unwrap();
    assert!(output.status.success());

    let items = dir.path().join("items.jsonl");
    std::fs::write(
        &items,
        concat!(
            r#"{"instruction":"Name a prime.","responses":{"m1":"7","m2":"11"}}"#,
            "\n",
            r#"{"id":"q2","instruction":"Greet me.","input":"name: Ada","target":"Hello Ada","responses":{"m1":"Hi Ada","m2":"Hello!"}}"#,
            "\n"
        ),
    )
    .unwrap();
    let sheet = dir.path().join("sheet.csv");
    let key = dir.path().join("key.csv");
    let output = bin()
        .args(["export", "evalsheet", "--items"])
        .arg(&items)
        .arg("--sheet")
        .arg(&sheet)
        .arg("--key")
        .arg(&key)
        .args(["--seed", "9"])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let sheet_text = std::fs::read_to_string(&sheet).unwrap();
    assert!(sheet_text.starts_with("item_id,instruction,input,target,response_1"));
    assert_eq!(sheet_text.lines().count(), 3);
    let key_text = std::fs::read_to_string(&key).unwrap();
    assert_eq!(key_text.lines().count(), 5); // header + 2 items x 2 models
}

#[test]
fn export_finetune_rejects_unknown_types() {
    let dir = tempfile::tempdir().unwrap();
    let mut pool = TaskPool::new(0);
    pool.add_task(
        Task::new("u", "Mystery task with words.", TaskType::Unknown, TaskOrigin::Seed)
            .with_instances(vec![Instance::new("", "out")]),
    )
    .unwrap();
    let pool_path = dir.path().join("pool.jsonl");
    save_pool(&pool, &pool_path).unwrap();

    let output = bin()
        .args(["export", "finetune", "--pool"])
        .arg(&pool_path)
        .arg("--out")
        .arg(dir.path().join("ft.jsonl"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&output.stderr).contains("classify"));
}

#[test]
fn record_flag_produces_replayable_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let mut pool = TaskPool::new(0);
    pool.add_task(Task::new(
        "g0",
        "Sort these numbers for me please.",
        TaskType::Unknown,
        TaskOrigin::Generated { round: 0 },
    ))
    .unwrap();
    let pool_path = dir.path().join("pool.jsonl");
    save_pool(&pool, &pool_path).unwrap();

    // source fixture set acts as the "endpoint"; --record captures traffic
    let templates = TemplateSet::builtin();
    let stop = StageParams::default().clf_identify.stop.clone();
    let prompt = templates
        .render_clf_prompt("Sort these numbers for me please.")
        .unwrap()
        .text;
    let endpoint = dir.path().join("endpoint.jsonl");
    write_fixtures(&endpoint, &[(prompt.clone(), stop.clone(), " No")]);

    let recorded = dir.path().join("recorded.jsonl");
    let output = bin()
        .args(["classify", "--pool"])
        .arg(&pool_path)
        .arg("--out")
        .arg(dir.path().join("out.jsonl"))
        .arg("--scripted")
        .arg(&endpoint)
        .arg("--record")
        .arg(&recorded)
        .output()
        .unwrap();
    assert!(output.status.success());

    let replay = ScriptedBackend::from_path(&recorded).unwrap();
    assert_eq!(replay.len(), 1);
}
