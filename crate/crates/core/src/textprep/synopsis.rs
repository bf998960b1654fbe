use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{canonical_text_na, CanonicalText, ItemMetadata, Provenance, Result, TextMode, TextPrepError};

pub const SYSTEM_MESSAGE: &str = "You are a helpful assistant.";
const TASK_LINE: &str = "Write a vivid, engaging 100-150-word synopsis for a movie or artist.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub system: String,
    pub user: String,
}

fn render_list(items: &[String]) -> String {
    if items.is_empty() {
        "[]".to_owned()
    } else {
        items.join(", ")
    }
}

pub fn build_synopsis_prompt(meta: &ItemMetadata) -> PromptPair {
    let user = format!(
        "{TASK_LINE}\n\nInputs:\n- Title: {}\n- Genre List: {}\n- Tags: {}",
        meta.title.trim(),
        render_list(&meta.genres),
        render_list(&meta.tags),
    );
    PromptPair {
        system: SYSTEM_MESSAGE.to_owned(),
        user,
    }
}

pub type ProviderFailure = Box<dyn std::error::Error + Send + Sync>;

/// Text generator queried once per item.
pub trait SynopsisProvider: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, prompt: &PromptPair) -> std::result::Result<String, ProviderFailure>;
}

/// Deterministic offline provider: answers `SYNOPSIS(<title>)`.
#[derive(Debug, Clone, Default)]
pub struct StubProvider;

impl SynopsisProvider for StubProvider {
    fn name(&self) -> &str {
        "stub"
    }

    fn generate(&self, prompt: &PromptPair) -> std::result::Result<String, ProviderFailure> {
        let title = prompt
            .user
            .lines()
            .find_map(|l| l.strip_prefix("- Title: "))
            .ok_or("prompt has no title line")?;
        Ok(format!("SYNOPSIS({title})"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub item_id: String,
    pub prompt: PromptPair,
    pub response: String,
    pub provider: String,
    pub timestamp: u64,
}

/// Append-only newline-delimited JSON sink for prompt/response pairs.
/// Writes are serialized, so concurrent augmentation may share one log.
pub struct TranscriptLog {
    sink: Mutex<Box<dyn Write + Send>>,
}

impl TranscriptLog {
    pub fn new(sink: Box<dyn Write + Send>) -> Self {
        Self { sink: Mutex::new(sink) }
    }

    pub fn append_to(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file: File = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| TextPrepError::Io {
                path: path.display().to_string(),
                source,
            })?;
        Ok(Self::new(Box::new(file)))
    }

    pub fn record(&self, record: &TranscriptRecord) -> Result<()> {
        let mut line = serde_json::to_string(record).expect("transcript records always serialize");
        line.push('\n');
        let mut sink = self.sink.lock().unwrap_or_else(|e| e.into_inner());
        sink.write_all(line.as_bytes())
            .and_then(|_| sink.flush())
            .map_err(|source| TextPrepError::Io {
                path: "<transcript>".into(),
                source,
            })
    }
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Queries `provider` for an item synopsis. The response is kept verbatim and
/// the exchange is appended to `log` when one is given. Nothing is logged on
/// failure.
pub fn augment_synopsis(
    meta: &ItemMetadata,
    provider: &dyn SynopsisProvider,
    log: Option<&TranscriptLog>,
) -> Result<CanonicalText> {
    let prompt = build_synopsis_prompt(meta);
    let response = provider.generate(&prompt).map_err(|e| TextPrepError::Provider {
        provider: provider.name().to_owned(),
        item_id: meta.item_id.clone(),
        message: e.to_string(),
    })?;
    if let Some(log) = log {
        log.record(&TranscriptRecord {
            item_id: meta.item_id.clone(),
            prompt: prompt.clone(),
            response: response.clone(),
            provider: provider.name().to_owned(),
            timestamp: now_secs(),
        })?;
    }
    Ok(CanonicalText {
        item_id: meta.item_id.clone(),
        mode: TextMode::A,
        text: response,
        provenance: Some(Provenance::Prompt {
            provider: provider.name().to_owned(),
            system: prompt.system,
            user: prompt.user,
        }),
    })
}

/// Like [`augment_synopsis`], but on provider failure returns the NA view
/// flagged with a fallback provenance when `fallback` is set.
pub fn augment_with_fallback(
    meta: &ItemMetadata,
    provider: &dyn SynopsisProvider,
    fallback: bool,
    log: Option<&TranscriptLog>,
) -> Result<CanonicalText> {
    match augment_synopsis(meta, provider, log) {
        Err(TextPrepError::Provider { provider, message, .. }) if fallback => {
            let mut na = canonical_text_na(meta);
            na.provenance = Some(Provenance::Fallback {
                provider,
                error: message,
            });
            Ok(na)
        }
        other => other,
    }
}
