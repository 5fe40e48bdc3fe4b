//! Scripted offline backend.
//!
//! Entries are keyed by the SHA-256 of the full prompt, optionally narrowed to
//! one occurrence ordinal. Unscripted prompts either fail or are answered by
//! echoing the text in the prompt's final source slot, which makes any
//! translation prompt answerable offline.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{cut_at_stop, prompt_sha256, Backend, CallContext, GatewayError, GenerationRequest, GenerationResponse};
use crate::prompting::DELIMITER;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFallback {
    /// Answer with the final source text followed by the closing delimiter.
    #[default]
    Echo,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFailure {
    Timeout,
    Auth,
    RateLimit,
    Malformed,
    Server,
}

impl MockFailure {
    fn to_error(self) -> GatewayError {
        match self {
            MockFailure::Timeout => GatewayError::Timeout { attempts: 1 },
            MockFailure::Auth => GatewayError::Auth("scripted auth failure".into()),
            MockFailure::RateLimit => GatewayError::RateLimited { attempts: 1 },
            MockFailure::Malformed => GatewayError::Malformed("scripted malformed payload".into()),
            MockFailure::Server => GatewayError::Server {
                status: 500,
                attempts: 1,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockEntry {
    pub prompt_sha256: String,
    /// Only match this occurrence of the prompt; any occurrence when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<u64>,
    /// Raw completion as a server would generate it, stop sequence included if reached.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<String>,
    /// Overrides the derived finish reason ("stop" when a stop sequence occurs, else "length").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<MockFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<u64>,
    /// Free-form label for humans reading the script.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl MockEntry {
    pub fn completion(prompt_sha256: impl Into<String>, completion: impl Into<String>) -> Self {
        MockEntry {
            prompt_sha256: prompt_sha256.into(),
            ordinal: None,
            completion: Some(completion.into()),
            finish_reason: None,
            failure: None,
            delay_ms: None,
            note: None,
        }
    }

    pub fn failure(prompt_sha256: impl Into<String>, failure: MockFailure) -> Self {
        MockEntry {
            completion: None,
            failure: Some(failure),
            ..MockEntry::completion(prompt_sha256, "")
        }
    }

    pub fn with_ordinal(mut self, ordinal: u64) -> Self {
        self.ordinal = Some(ordinal);
        self
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay_ms = Some(delay.as_millis() as u64);
        self
    }

    pub fn with_finish_reason(mut self, reason: impl Into<String>) -> Self {
        self.finish_reason = Some(reason.into());
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub fallback: MockFallback,
    #[serde(default)]
    pub entries: Vec<MockEntry>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes")
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    fallback: MockFallback,
    entries: HashMap<(String, Option<u64>), MockEntry>,
}

impl MockBackend {
    pub fn echo() -> Self {
        MockBackend::default()
    }

    pub fn strict() -> Self {
        MockBackend {
            fallback: MockFallback::Error,
            ..MockBackend::default()
        }
    }

    pub fn from_script(script: MockScript) -> Self {
        let mut backend = MockBackend {
            fallback: script.fallback,
            entries: HashMap::new(),
        };
        for entry in script.entries {
            backend = backend.with_entry(entry);
        }
        backend
    }

    /// Later entries for the same key replace earlier ones.
    pub fn with_entry(mut self, entry: MockEntry) -> Self {
        self.entries.insert((entry.prompt_sha256.clone(), entry.ordinal), entry);
        self
    }

    pub fn with_completion(self, prompt: &str, completion: &str) -> Self {
        self.with_entry(MockEntry::completion(prompt_sha256(prompt), completion))
    }

    fn lookup(&self, hash: &str, ordinal: u64) -> Option<&MockEntry> {
        self.entries
            .get(&(hash.to_string(), Some(ordinal)))
            .or_else(|| self.entries.get(&(hash.to_string(), None)))
    }
}

/// The text of the final source slot of a translation prompt.
///
/// Prompt texts never contain the delimiter, so the last block starts after
/// the last "`\n\n" and its source sits between the first two delimiters.
pub(crate) fn final_source_text(prompt: &str) -> Option<&str> {
    let block_end = format!("{DELIMITER}\n\n");
    let last_block = match prompt.rfind(&block_end) {
        Some(pos) => &prompt[pos + block_end.len()..],
        None => prompt,
    };
    let mut parts = last_block.split(DELIMITER);
    parts.next()?;
    let source = parts.next()?;
    parts.next()?;
    Some(source)
}

fn respond(completion: &str, request: &GenerationRequest, finish_override: Option<&str>) -> GenerationResponse {
    match cut_at_stop(completion, &request.stop_sequences) {
        Some(text) => GenerationResponse::from_finish_reason(text, finish_override.unwrap_or("stop")),
        None => GenerationResponse::from_finish_reason(completion, finish_override.unwrap_or("length")),
    }
}

impl Backend for MockBackend {
    fn complete(&self, request: &GenerationRequest, call: CallContext) -> Result<GenerationResponse, GatewayError> {
        let hash = prompt_sha256(&request.prompt);
        if let Some(entry) = self.lookup(&hash, call.ordinal) {
            if let Some(ms) = entry.delay_ms {
                std::thread::sleep(Duration::from_millis(ms));
            }
            if let Some(failure) = entry.failure {
                return Err(failure.to_error());
            }
            let completion = entry.completion.as_deref().unwrap_or("");
            return Ok(respond(completion, request, entry.finish_reason.as_deref()));
        }
        match self.fallback {
            MockFallback::Echo => {
                let source = final_source_text(&request.prompt).ok_or_else(|| GatewayError::Unscripted {
                    prompt_sha256: hash.clone(),
                })?;
                Ok(respond(&format!("{source}{DELIMITER}"), request, None))
            }
            MockFallback::Error => Err(GatewayError::Unscripted { prompt_sha256: hash }),
        }
    }

    fn name(&self) -> &str {
        "mock"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn final_source_is_found() {
        let prompt = "en: `Hello`\nde: `Hallo`\n\nen: `Good\nmorning`\nde: `";
        assert_eq!(final_source_text(prompt), Some("Good\nmorning"));
        assert_eq!(final_source_text("en: `x`\nde: `"), Some("x"));
        assert_eq!(final_source_text("no delimiters"), None);
    }

    #[test]
    fn echo_and_strict_fallbacks() {
        let request = GenerationRequest::new("en: `Hi`\nde: `", 8, vec!["`".into()]).unwrap();
        let ctx = CallContext { ordinal: 0 };
        let echoed = MockBackend::echo().complete(&request, ctx).unwrap();
        assert_eq!(echoed.text, "Hi");
        assert!(echoed.terminated_by_stop);
        assert!(matches!(
            MockBackend::strict().complete(&request, ctx),
            Err(GatewayError::Unscripted { .. })
        ));
    }

    #[test]
    fn script_file_round_trip() {
        let script = MockScript {
            fallback: MockFallback::Error,
            entries: vec![
                MockEntry::completion("ab", "x`").with_note("hello"),
                MockEntry::failure("cd", MockFailure::RateLimit).with_ordinal(2),
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        std::fs::write(&path, script.to_json()).unwrap();
        assert_eq!(MockScript::load(&path).unwrap(), script);
    }

    #[test]
    fn finish_reason_override() {
        let request = GenerationRequest::new("p", 8, vec!["`".into()]).unwrap();
        let mock = MockBackend::strict()
            .with_entry(MockEntry::completion(prompt_sha256("p"), "partial").with_finish_reason("content_filter"));
        let got = mock.complete(&request, CallContext { ordinal: 0 }).unwrap();
        assert!(!got.terminated_by_stop);
        assert_eq!(got.raw_finish_reason, "content_filter");
    }
}
