//! Prompt rendering and completion parsing for the four query kinds.
//!
//! The few-shot exemplar blocks are data, not code: they ship as resource
//! files listed in `resources/templates/manifest.json` with content digests,
//! and can be swapped out via [`TemplateSet::from_dir`]. Rendering is
//! deterministic; identical inputs produce identical bytes.
//!
//! Parsers are total: no completion text fails, it just yields an empty
//! result. A completion that ended at the token limit drops its final,
//! possibly partial item.

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::model::{Instance, TaskType};

pub const DEMOS_PER_PROMPT: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    InstructionGen,
    ClfIdentify,
    InputFirst,
    OutputFirst,
}

/// A rendered request body.
#[derive(Clone, Debug, PartialEq)]
pub struct Prompt {
    pub text: String,
    pub kind: PromptKind,
}

/// Instructions recovered from an instruction-generation completion.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedInstructions {
    pub instructions: Vec<String>,
    /// True when an incomplete final item was dropped.
    pub truncated_tail: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct TemplateManifestEntry {
    pub kind: PromptKind,
    pub path: String,
    pub sha256: String,
    #[serde(default)]
    pub abridged: bool,
    #[serde(default)]
    pub note: String,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct TemplateManifest {
    pub templates: Vec<TemplateManifestEntry>,
}

/// The four templates plus their manifest.
#[derive(Clone, Debug)]
pub struct TemplateSet {
    instruction_gen: String,
    clf_identify: String,
    input_first: String,
    output_first: String,
    manifest: TemplateManifest,
}

const INSTRUCTION_GEN: &str = include_str!("../resources/templates/instruction_gen.txt");
const CLF_IDENTIFY: &str = include_str!("../resources/templates/clf_identify.txt");
const INPUT_FIRST: &str = include_str!("../resources/templates/input_first.txt");
const OUTPUT_FIRST: &str = include_str!("../resources/templates/output_first.txt");
const MANIFEST: &str = include_str!("../resources/templates/manifest.json");

static BUILTIN: OnceLock<TemplateSet> = OnceLock::new();

impl TemplateSet {
    /// The templates compiled into the binary.
    pub fn builtin() -> &'static TemplateSet {
        BUILTIN.get_or_init(|| TemplateSet {
            instruction_gen: INSTRUCTION_GEN.to_string(),
            clf_identify: CLF_IDENTIFY.to_string(),
            input_first: INPUT_FIRST.to_string(),
            output_first: OUTPUT_FIRST.to_string(),
            manifest: serde_json::from_str(MANIFEST).expect("builtin manifest parses"),
        })
    }

    /// Load a substitute template directory. The directory must contain a
    /// `manifest.json`; each listed file is digest-checked against it.
    pub fn from_dir(dir: &Path) -> Result<TemplateSet> {
        let manifest_path = dir.join("manifest.json");
        let manifest_text =
            std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: TemplateManifest = serde_json::from_str(&manifest_text)?;

        let mut set = TemplateSet {
            instruction_gen: String::new(),
            clf_identify: String::new(),
            input_first: String::new(),
            output_first: String::new(),
            manifest: manifest.clone(),
        };
        for entry in &manifest.templates {
            let path = dir.join(&entry.path);
            let content = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let actual = sha256_hex(content.as_bytes());
            if actual != entry.sha256 {
                return Err(Error::TemplateDigest {
                    kind: format!("{:?}", entry.kind),
                    expected: entry.sha256.clone(),
                    actual,
                });
            }
            match entry.kind {
                PromptKind::InstructionGen => set.instruction_gen = content,
                PromptKind::ClfIdentify => set.clf_identify = content,
                PromptKind::InputFirst => set.input_first = content,
                PromptKind::OutputFirst => set.output_first = content,
            }
        }
        for (kind, text) in [
            ("instruction_gen", &set.instruction_gen),
            ("clf_identify", &set.clf_identify),
            ("input_first", &set.input_first),
            ("output_first", &set.output_first),
        ] {
            if text.is_empty() {
                return Err(Error::InvalidParams {
                    message: format!("template directory is missing the {kind} template"),
                });
            }
        }
        Ok(set)
    }

    pub fn manifest(&self) -> &TemplateManifest {
        &self.manifest
    }

    /// Digests of the loaded template texts, for run manifests.
    pub fn digests(&self) -> Vec<(PromptKind, String)> {
        vec![
            (PromptKind::InstructionGen, sha256_hex(self.instruction_gen.as_bytes())),
            (PromptKind::ClfIdentify, sha256_hex(self.clf_identify.as_bytes())),
            (PromptKind::InputFirst, sha256_hex(self.input_first.as_bytes())),
            (PromptKind::OutputFirst, sha256_hex(self.output_first.as_bytes())),
        ]
    }

    /// Few-shot prompt asking for new task instructions. Takes exactly eight
    /// demonstration instructions, rendered verbatim as "Task i:" lines; the
    /// prompt ends at the "Task 9:" cue with no trailing newline.
    pub fn render_instruction_prompt<S: AsRef<str>>(&self, demos: &[S]) -> Result<Prompt> {
        if demos.len() != DEMOS_PER_PROMPT {
            return Err(Error::DemoCount {
                expected: DEMOS_PER_PROMPT,
                got: demos.len(),
            });
        }
        let mut block = String::new();
        for (i, demo) in demos.iter().enumerate() {
            block.push_str(&format!("Task {}: {}\n", i + 1, demo.as_ref()));
        }
        Ok(Prompt {
            text: self.instruction_gen.replace("{demos}", &block),
            kind: PromptKind::InstructionGen,
        })
    }

    /// Few-shot classification-or-not prompt ending "Task: <target>\n".
    pub fn render_clf_prompt(&self, target: &str) -> Result<Prompt> {
        self.render_target(PromptKind::ClfIdentify, &self.clf_identify, target)
    }

    /// Instance-generation prompt for non-classification tasks.
    pub fn render_input_first_prompt(&self, target: &str) -> Result<Prompt> {
        self.render_target(PromptKind::InputFirst, &self.input_first, target)
    }

    /// Instance-generation prompt for classification tasks.
    pub fn render_output_first_prompt(&self, target: &str) -> Result<Prompt> {
        self.render_target(PromptKind::OutputFirst, &self.output_first, target)
    }

    fn render_target(&self, kind: PromptKind, template: &str, target: &str) -> Result<Prompt> {
        let trimmed = target.trim();
        if trimmed.is_empty() {
            return Err(Error::InvalidParams {
                message: "target instruction is empty".into(),
            });
        }
        Ok(Prompt {
            text: template.replace("{target}", trimmed),
            kind,
        })
    }
}

fn task_marker(line: &str) -> Option<u32> {
    let rest = line.trim_start().strip_prefix("Task")?;
    let rest = rest.trim_start();
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() {
        return None;
    }
    let after = &rest[digits.len()..];
    if !after.trim_start().starts_with(':') {
        return None;
    }
    digits.parse().ok()
}

fn is_task_stop_line(line: &str) -> bool {
    line.trim_start().starts_with("Task:")
}

/// Split an instruction completion into task items. The text before the
/// first "Task 10:" line is the content of task 9; markers for tasks 10-15
/// start new items. `hit_length_limit` marks a completion cut off at
/// max_tokens, whose final item is dropped as partial.
pub fn parse_instruction_completion(completion: &str, hit_length_limit: bool) -> ParsedInstructions {
    let mut raw_items: Vec<String> = vec![String::new()];
    for line in completion.lines() {
        match task_marker(line) {
            Some(k) if (10..=15).contains(&k) => {
                let after_colon = line.split_once(':').map(|x| x.1).unwrap_or("");
                raw_items.push(after_colon.to_string());
            }
            _ => {
                let cur = raw_items.last_mut().expect("non-empty");
                if !cur.is_empty() {
                    cur.push('\n');
                }
                cur.push_str(line);
            }
        }
    }

    let mut items: Vec<String> = raw_items
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut truncated_tail = false;

    if items.last().is_some_and(|s| s.is_empty()) && items.len() > 1 {
        // a trailing bare marker means the model was cut off mid-item
        truncated_tail = true;
    }
    if hit_length_limit && items.last().is_some_and(|s| !s.is_empty()) {
        items.pop();
        truncated_tail = true;
    }
    let instructions: Vec<String> = items
        .into_iter()
        .filter(|s| !s.is_empty())
        .take(7)
        .collect();
    ParsedInstructions {
        instructions,
        truncated_tail,
    }
}

/// First non-whitespace token, case-insensitive: "yes" means classification,
/// "no" means non-classification, anything else stays unknown.
pub fn parse_clf_completion(completion: &str) -> TaskType {
    match completion.split_whitespace().next() {
        Some(tok) if tok.eq_ignore_ascii_case("yes") => TaskType::Classification,
        Some(tok) if tok.eq_ignore_ascii_case("no") => TaskType::NonClassification,
        _ => TaskType::Unknown,
    }
}

/// Parse an input-first completion. Two shapes are recognized: "Example k"
/// blocks whose field lines precede an "Output:" marker, and bare "Output:"
/// blocks that carry no input. Parsing stops at a "Task:" line.
pub fn parse_input_first_completion(completion: &str, hit_length_limit: bool) -> Vec<Instance> {
    enum State {
        Idle,
        CollectingInput(Vec<String>),
        CollectingOutput { input: String, output: Vec<String> },
    }

    let mut instances = Vec::new();
    let mut state = State::Idle;

    let finalize = |instances: &mut Vec<Instance>, state: State| {
        if let State::CollectingOutput { input, output } = state {
            let output = output.join("\n").trim().to_string();
            if !output.is_empty() {
                instances.push(Instance::new(input, output));
            }
        }
    };

    for line in completion.lines() {
        if is_task_stop_line(line) {
            finalize(&mut instances, state);
            state = State::Idle;
            break;
        }
        let trimmed = line.trim();
        if is_example_marker(trimmed) {
            finalize(&mut instances, std::mem::replace(&mut state, State::Idle));
            state = State::CollectingInput(Vec::new());
            continue;
        }
        if let Some(rest) = output_marker(trimmed) {
            let input = match std::mem::replace(&mut state, State::Idle) {
                State::CollectingInput(lines) => lines.join("\n").trim().to_string(),
                other => {
                    finalize(&mut instances, other);
                    String::new()
                }
            };
            let mut output = Vec::new();
            if !rest.trim().is_empty() {
                output.push(rest.trim_start().to_string());
            }
            state = State::CollectingOutput { input, output };
            continue;
        }
        match &mut state {
            State::Idle => {} // preamble junk before any recognized marker
            State::CollectingInput(lines) => lines.push(line.trim_end().to_string()),
            State::CollectingOutput { output, .. } => output.push(line.trim_end().to_string()),
        }
    }
    finalize(&mut instances, state);

    if hit_length_limit && !instances.is_empty() {
        instances.pop();
    }
    instances
}

fn is_example_marker(line: &str) -> bool {
    match line.strip_prefix("Example") {
        Some(rest) => {
            let rest = rest.trim();
            !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit())
        }
        None => false,
    }
}

fn output_marker(line: &str) -> Option<&str> {
    line.strip_prefix("Output:")
}

/// Parse an output-first completion: each "Class label:" line opens a block
/// whose label becomes the output and whose remaining lines become the
/// input. Stops at a "Task:" line.
pub fn parse_output_first_completion(completion: &str, hit_length_limit: bool) -> Vec<Instance> {
    let mut instances = Vec::new();
    let mut current: Option<(String, Vec<String>)> = None;

    let finalize = |instances: &mut Vec<Instance>, current: Option<(String, Vec<String>)>| {
        if let Some((label, lines)) = current {
            if !label.is_empty() {
                let input = lines.join("\n").trim().to_string();
                instances.push(Instance::new(input, label));
            }
        }
    };

    for line in completion.lines() {
        if is_task_stop_line(line) {
            break;
        }
        if let Some(rest) = line.trim().strip_prefix("Class label:") {
            finalize(&mut instances, current.take());
            current = Some((rest.trim().to_string(), Vec::new()));
        } else if let Some((_, lines)) = &mut current {
            lines.push(line.trim_end().to_string());
        }
    }
    finalize(&mut instances, current);

    if hit_length_limit && !instances.is_empty() {
        instances.pop();
    }
    instances
}

/// Format instructions the way an instruction-generation completion lays
/// them out (the inverse of [`parse_instruction_completion`]); useful for
/// building fixtures and round-trip tests.
pub fn format_instruction_completion<S: AsRef<str>>(instructions: &[S]) -> String {
    let mut out = String::new();
    for (i, inst) in instructions.iter().enumerate() {
        if i == 0 {
            out.push(' ');
            out.push_str(inst.as_ref());
        } else {
            out.push_str(&format!("\nTask {}: {}", i + 9, inst.as_ref()));
        }
    }
    out
}

/// Inverse of [`parse_input_first_completion`] for well-formed instance
/// lists: either one no-input instance rendered as a bare output, or
/// "Example k" blocks for instances that all carry input.
pub fn format_input_first_completion(instances: &[Instance]) -> String {
    if instances.len() == 1 && instances[0].input.is_empty() {
        return format!("Output: {}", instances[0].output);
    }
    let mut out = String::new();
    for (i, instance) in instances.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("Example {}\n", i + 1));
        if !instance.input.is_empty() {
            out.push_str(&instance.input);
            out.push('\n');
        }
        out.push_str(&format!("Output: {}", instance.output));
    }
    out
}

/// Inverse of [`parse_output_first_completion`].
pub fn format_output_first_completion(instances: &[Instance]) -> String {
    let mut out = String::new();
    for (i, instance) in instances.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("Class label: {}", instance.output));
        if !instance.input.is_empty() {
            out.push('\n');
            out.push_str(&instance.input);
        }
    }
    out
}

pub fn format_clf_completion(task_type: TaskType) -> &'static str {
    match task_type {
        TaskType::Classification => " Yes",
        TaskType::NonClassification => " No",
        TaskType::Unknown => " Unsure",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demos() -> Vec<String> {
        (1..=8).map(|i| format!("Demo instruction number {i}.")).collect()
    }

    #[test]
    fn instruction_prompt_layout() {
        let prompt = TemplateSet::builtin()
            .render_instruction_prompt(&demos())
            .unwrap();
        assert!(prompt.text.starts_with("Come up with a series of tasks:\n\n"));
        assert!(prompt.text.contains("\nTask 8: Demo instruction number 8.\n"));
        assert!(prompt.text.ends_with("Task 9:"));
        assert_eq!(prompt.kind, PromptKind::InstructionGen);

        // deterministic bytes
        let again = TemplateSet::builtin()
            .render_instruction_prompt(&demos())
            .unwrap();
        assert_eq!(prompt.text, again.text);
    }

    #[test]
    fn instruction_prompt_arity_is_checked() {
        let seven: Vec<String> = demos().into_iter().take(7).collect();
        assert!(matches!(
            TemplateSet::builtin().render_instruction_prompt(&seven),
            Err(Error::DemoCount { expected: 8, got: 7 })
        ));
    }

    #[test]
    fn multiline_demos_render_verbatim() {
        let mut d = demos();
        d[2] = "Line one.\nLine two.".to_string();
        let prompt = TemplateSet::builtin().render_instruction_prompt(&d).unwrap();
        assert!(prompt.text.contains("Task 3: Line one.\nLine two.\nTask 4:"));
    }

    #[test]
    fn parse_instruction_completion_worked_example() {
        let parsed =
            parse_instruction_completion(" Write a poem.\nTask 10: Sort a list.\nTask 11:", false);
        assert_eq!(parsed.instructions, ["Write a poem.", "Sort a list."]);
        assert!(parsed.truncated_tail);
    }

    #[test]
    fn parse_instruction_completion_degenerates() {
        let parsed = parse_instruction_completion("", false);
        assert!(parsed.instructions.is_empty());
        assert!(!parsed.truncated_tail);

        let garbage = parse_instruction_completion("no markers anywhere", false);
        assert_eq!(garbage.instructions, ["no markers anywhere"]);
    }

    #[test]
    fn parse_instruction_completion_caps_at_seven() {
        let mut text = String::from(" First one.");
        for k in 10..=15 {
            text.push_str(&format!("\nTask {k}: Item {k}."));
        }
        let parsed = parse_instruction_completion(&text, false);
        assert_eq!(parsed.instructions.len(), 7);
        assert!(!parsed.truncated_tail);
    }

    #[test]
    fn length_limit_drops_final_item() {
        let parsed =
            parse_instruction_completion(" Full item.\nTask 10: Cut off mid sen", true);
        assert_eq!(parsed.instructions, ["Full item."]);
        assert!(parsed.truncated_tail);
    }

    #[test]
    fn clf_prompt_has_fixed_prefix_and_trailing_newline() {
        let set = TemplateSet::builtin();
        let a = set.render_clf_prompt("Classify my thing.").unwrap();
        let b = set.render_clf_prompt("  Another target.  ").unwrap();
        assert!(a.text.ends_with("Task: Classify my thing.\n"));
        assert!(b.text.ends_with("Task: Another target.\n"));
        let shared = a.text.rfind("Task:").unwrap();
        assert_eq!(a.text[..shared], b.text[..b.text.rfind("Task:").unwrap()]);
        assert_eq!(a.text.matches("Is it classification?").count(), 31);
    }

    #[test]
    fn parse_clf_completion_rules() {
        assert_eq!(parse_clf_completion(" Yes"), TaskType::Classification);
        assert_eq!(parse_clf_completion("no"), TaskType::NonClassification);
        assert_eq!(parse_clf_completion("maybe so"), TaskType::Unknown);
        assert_eq!(parse_clf_completion(""), TaskType::Unknown);
    }

    #[test]
    fn input_first_direct_output() {
        let got = parse_input_first_completion("Output:\n- Plank\n- Sit-ups", false);
        assert_eq!(got, vec![Instance::new("", "- Plank\n- Sit-ups")]);
    }

    #[test]
    fn input_first_example_blocks() {
        let text = "Example 1\nList: [3,1]\nOutput: [1,3]\nExample 2\nList: [2]\nOutput: [2]";
        let got = parse_input_first_completion(text, false);
        assert_eq!(
            got,
            vec![
                Instance::new("List: [3,1]", "[1,3]"),
                Instance::new("List: [2]", "[2]"),
            ]
        );
    }

    #[test]
    fn input_first_stops_at_task_line() {
        assert!(parse_input_first_completion("Task: something else", false).is_empty());
        let got = parse_input_first_completion("Output: real\nTask: next task\nOutput: not me", false);
        assert_eq!(got, vec![Instance::new("", "real")]);
    }

    #[test]
    fn input_first_multiline_output_preserves_blank_lines() {
        let text = "Example 1\nTopic: rain\nOutput: line one\n\nline three";
        let got = parse_input_first_completion(text, false);
        assert_eq!(got, vec![Instance::new("Topic: rain", "line one\n\nline three")]);
    }

    #[test]
    fn output_first_blocks() {
        let text = "Class label: Positive\nSentence: Great day.\nClass label: Negative\nSentence: Bad day.";
        let got = parse_output_first_completion(text, false);
        assert_eq!(
            got,
            vec![
                Instance::new("Sentence: Great day.", "Positive"),
                Instance::new("Sentence: Bad day.", "Negative"),
            ]
        );
    }

    #[test]
    fn output_first_label_only() {
        let got = parse_output_first_completion("Class label: (e)", false);
        assert_eq!(got, vec![Instance::new("", "(e)")]);
    }

    #[test]
    fn output_first_without_labels_is_empty() {
        assert!(parse_output_first_completion("nothing to see here", false).is_empty());
    }

    #[test]
    fn round_trip_instruction_items() {
        let items = vec![
            "Write a limerick about tea.".to_string(),
            "Given a date, output the weekday.".to_string(),
            "Summarize the paragraph.".to_string(),
        ];
        let completion = format_instruction_completion(&items);
        let parsed = parse_instruction_completion(&completion, false);
        assert_eq!(parsed.instructions, items);
        assert!(!parsed.truncated_tail);
    }

    #[test]
    fn round_trip_instances_both_shapes() {
        let with_input = vec![
            Instance::new("Sentence: One.", "First"),
            Instance::new("Sentence: Two.", "Second"),
        ];
        let text = format_input_first_completion(&with_input);
        assert_eq!(parse_input_first_completion(&text, false), with_input);

        let no_input = vec![Instance::new("", "Direct answer")];
        let text = format_input_first_completion(&no_input);
        assert_eq!(parse_input_first_completion(&text, false), no_input);

        let labels = vec![
            Instance::new("Thread: hello", "Not Hate Speech"),
            Instance::new("", "(b)"),
        ];
        let text = format_output_first_completion(&labels);
        assert_eq!(parse_output_first_completion(&text, false), labels);
    }

    #[test]
    fn builtin_digests_match_manifest() {
        let set = TemplateSet::builtin();
        let digests: std::collections::HashMap<_, _> = set.digests().into_iter().collect();
        for entry in &set.manifest().templates {
            assert_eq!(
                digests.get(&entry.kind).unwrap(),
                &entry.sha256,
                "digest drift for {:?}; update the manifest",
                entry.kind
            );
        }
    }

    #[test]
    fn template_directory_substitution_is_digest_checked() {
        let dir = tempfile::tempdir().unwrap();
        let builtin = TemplateSet::builtin();
        // materialize the builtin set as a custom template directory
        for (name, content) in [
            ("instruction_gen.txt", INSTRUCTION_GEN),
            ("clf_identify.txt", CLF_IDENTIFY),
            ("input_first.txt", INPUT_FIRST),
            ("output_first.txt", OUTPUT_FIRST),
            ("manifest.json", MANIFEST),
        ] {
            std::fs::write(dir.path().join(name), content).unwrap();
        }
        let loaded = TemplateSet::from_dir(dir.path()).unwrap();
        assert_eq!(loaded.digests(), builtin.digests());
        let a = loaded.render_clf_prompt("Target here.").unwrap();
        let b = builtin.render_clf_prompt("Target here.").unwrap();
        assert_eq!(a.text, b.text);

        // editing a template without updating the manifest fails the check
        std::fs::write(
            dir.path().join("clf_identify.txt"),
            format!("{CLF_IDENTIFY}\nextra line"),
        )
        .unwrap();
        assert!(matches!(
            TemplateSet::from_dir(dir.path()),
            Err(Error::TemplateDigest { .. })
        ));
    }

    #[test]
    fn parsed_fields_never_start_with_marker_lines() {
        let text = "Example 1\nSentence: x\nOutput: y\nExample 2\nSentence: z\nOutput: w";
        for instance in parse_input_first_completion(text, false) {
            for field in [&instance.input, &instance.output] {
                let first = field.lines().next().unwrap_or("");
                assert!(!first.starts_with("Task:"));
                assert!(!is_example_marker(first.trim()));
                assert!(!first.starts_with("Class label:"));
            }
        }
    }
}
