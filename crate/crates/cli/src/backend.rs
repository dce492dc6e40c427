//! Gateway construction from command-line flags.

use std::sync::Arc;

use anyhow::Result;
use instructgen::gateway::{
    CompletionBackend, Gateway, HttpBackend, RateLimiter, RecordingBackend, ScriptedBackend,
};

use crate::BackendArgs;

/// Handle to a recorder kept alive alongside the gateway so fixtures can be
/// flushed after the run.
pub type Recorder = Arc<RecordingBackend<Box<dyn CompletionBackend>>>;

pub struct BackendSetup {
    pub gateway: Gateway,
    pub recorder: Option<Recorder>,
}

/// Build the gateway: scripted fixtures when given, otherwise the HTTP
/// endpoint configured through the environment. `--record` wraps either.
pub fn build(args: &BackendArgs) -> Result<BackendSetup> {
    let inner: Box<dyn CompletionBackend> = match &args.scripted {
        Some(path) => Box::new(ScriptedBackend::from_path(path)?),
        None => Box::new(HttpBackend::from_env()?),
    };

    let mut recorder = None;
    let backend: Box<dyn CompletionBackend> = if args.record.is_some() {
        let shared: Recorder = Arc::new(RecordingBackend::new(inner));
        recorder = Some(shared.clone());
        Box::new(shared)
    } else {
        inner
    };

    let mut gateway = Gateway::new(backend);
    if args.requests_per_min.is_some() || args.tokens_per_min.is_some() {
        gateway =
            gateway.with_rate_limiter(RateLimiter::new(args.requests_per_min, args.tokens_per_min));
    }
    if let Some(path) = &args.audit_log {
        gateway = gateway.with_audit_log(path)?;
    }
    Ok(BackendSetup { gateway, recorder })
}

/// Flush recorded fixtures if a recorder is active.
pub fn flush_recorder(args: &BackendArgs, recorder: &Option<Recorder>) -> Result<()> {
    if let (Some(path), Some(recorder)) = (&args.record, recorder) {
        let n = recorder.write_fixtures(path)?;
        eprintln!("recorded {n} fixtures to {}", path.display());
    }
    Ok(())
}
