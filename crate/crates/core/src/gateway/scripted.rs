//! Deterministic fixture-driven backend, plus a recorder that turns live
//! traffic into replayable fixtures.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::digest::prompt_digest;
use crate::error::{Error, Result};
use crate::model::word_count;

use super::{CompletionBackend, CompletionResult, FinishReason, GenerationParams, Usage};

/// One fixture line: either the raw prompt plus stop list (digested at
/// load), or a precomputed digest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixtureRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_digest: Option<String>,
    pub completion: String,
    #[serde(default = "default_finish")]
    pub finish_reason: FinishReason,
}

fn default_finish() -> FinishReason {
    FinishReason::Stop
}

/// Replays completions keyed by the digest of the exact prompt bytes plus
/// the stop list, so any template drift fails the lookup immediately.
pub struct ScriptedBackend {
    fixtures: HashMap<String, (String, FinishReason)>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        ScriptedBackend {
            fixtures: HashMap::new(),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut backend = ScriptedBackend::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: FixtureRecord =
                serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            backend.insert_record(record, idx + 1)?;
        }
        Ok(backend)
    }

    fn insert_record(&mut self, record: FixtureRecord, line: usize) -> Result<()> {
        let digest = match (&record.prompt, &record.prompt_digest) {
            (Some(prompt), _) => prompt_digest(prompt, &record.stop),
            (None, Some(digest)) => digest.clone(),
            (None, None) => {
                return Err(Error::MalformedRecord {
                    line,
                    message: "fixture needs either 'prompt' or 'prompt_digest'".into(),
                })
            }
        };
        self.fixtures
            .insert(digest, (record.completion, record.finish_reason));
        Ok(())
    }

    pub fn insert(&mut self, prompt: &str, stop: &[String], completion: &str) {
        self.fixtures.insert(
            prompt_digest(prompt, stop),
            (completion.to_string(), FinishReason::Stop),
        );
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

impl Default for ScriptedBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<CompletionResult> {
        let digest = prompt_digest(prompt, &params.stop);
        let (completion, finish_reason) = self
            .fixtures
            .get(&digest)
            .ok_or_else(|| Error::ScriptedMiss {
                digest: digest.clone(),
            })?;
        Ok(CompletionResult {
            text: completion.clone(),
            finish_reason: *finish_reason,
            // no tokenizer here: word counts stand in for token counts
            usage: Usage {
                prompt_tokens: word_count(prompt) as u64,
                completion_tokens: word_count(completion) as u64,
            },
            attempts: 1,
        })
    }

    fn name(&self) -> &'static str {
        "scripted"
    }
}

/// Wraps any backend and captures (prompt, stop, completion) triples that
/// [`write_fixtures`](RecordingBackend::write_fixtures) turns into a
/// fixture file replayable by [`ScriptedBackend`].
pub struct RecordingBackend<B: CompletionBackend> {
    inner: B,
    records: Mutex<Vec<FixtureRecord>>,
}

impl<B: CompletionBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            records: Mutex::new(Vec::new()),
        }
    }

    pub fn write_fixtures(&self, path: &Path) -> Result<usize> {
        let records = self.records.lock().unwrap();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        for record in records.iter() {
            serde_json::to_writer(&mut writer, record)?;
            writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(records.len())
    }
}

impl<B: CompletionBackend> CompletionBackend for RecordingBackend<B> {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<CompletionResult> {
        let result = self.inner.complete(prompt, params)?;
        self.records.lock().unwrap().push(FixtureRecord {
            prompt: Some(prompt.to_string()),
            stop: params.stop.clone(),
            prompt_digest: None,
            completion: result.text.clone(),
            finish_reason: result.finish_reason,
        });
        Ok(result)
    }

    fn name(&self) -> &'static str {
        "recording"
    }
}
