use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;

use super::{Backend, UsageCounter, UsageStats};
use crate::error::{BackendError, Error, Result};
use crate::prompting::Prompt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Matcher {
    Any,
    /// Matches prompts whose user text contains the string.
    Contains(String),
}

impl Matcher {
    fn matches(&self, prompt: &Prompt) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Contains(s) => prompt.user_text.contains(s.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptEntry {
    pub matcher: Matcher,
    pub response: String,
}

impl ScriptEntry {
    pub fn any(response: impl Into<String>) -> Self {
        ScriptEntry {
            matcher: Matcher::Any,
            response: response.into(),
        }
    }

    pub fn when(needle: impl Into<String>, response: impl Into<String>) -> Self {
        ScriptEntry {
            matcher: Matcher::Contains(needle.into()),
            response: response.into(),
        }
    }
}

/// Replays a fixed script. Each call consumes the first remaining entry
/// whose matcher accepts the prompt.
#[derive(Debug)]
pub struct ScriptedBackend {
    id: String,
    remaining: Mutex<Vec<ScriptEntry>>,
    usage: UsageCounter,
}

#[derive(Deserialize)]
struct ScriptFile {
    #[serde(default = "default_id")]
    id: String,
    entries: Vec<FileEntry>,
}

fn default_id() -> String {
    "scripted".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEntry {
    #[serde(rename = "match", default = "wildcard")]
    matcher: String,
    #[serde(default)]
    response: Option<String>,
    #[serde(default)]
    response_file: Option<String>,
}

fn wildcard() -> String {
    "*".into()
}

impl ScriptedBackend {
    pub fn new(id: impl Into<String>, entries: Vec<ScriptEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("a scripted backend needs at least one entry".into()));
        }
        Ok(ScriptedBackend {
            id: id.into(),
            remaining: Mutex::new(entries),
            usage: UsageCounter::default(),
        })
    }

    /// Loads a JSON script:
    /// `{"id": "...", "entries": [{"match": "*" | "substring", "response": "..." | "response_file": "rel/path"}]}`.
    /// `response_file` paths are relative to the script.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read script {}: {e}", path.display())))?;
        let file: ScriptFile = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("malformed script {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let entries = file
            .entries
            .into_iter()
            .map(|e| {
                let response = match (e.response, e.response_file) {
                    (Some(r), None) => r,
                    (None, Some(f)) => std::fs::read_to_string(base.join(&f)).map_err(|err| {
                        Error::Config(format!("cannot read response file {f}: {err}"))
                    })?,
                    _ => {
                        return Err(Error::Config(
                            "each script entry needs exactly one of `response` or `response_file`".into(),
                        ))
                    }
                };
                let matcher = if e.matcher == "*" {
                    Matcher::Any
                } else {
                    Matcher::Contains(e.matcher)
                };
                Ok(ScriptEntry { matcher, response })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(file.id, entries)
    }

    pub fn remaining(&self) -> usize {
        self.remaining.lock().unwrap().len()
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, prompt: &Prompt) -> std::result::Result<String, BackendError> {
        self.usage.call(prompt);
        let mut remaining = self.remaining.lock().unwrap();
        let result = if remaining.is_empty() {
            Err(BackendError::Exhausted)
        } else {
            match remaining.iter().position(|e| e.matcher.matches(prompt)) {
                Some(i) => {
                    let entry = remaining.remove(i);
                    if entry.response.trim().is_empty() {
                        Err(BackendError::Empty)
                    } else {
                        Ok(entry.response)
                    }
                }
                None => Err(BackendError::NoMatch),
            }
        };
        match &result {
            Ok(text) => self.usage.output(text),
            Err(_) => self.usage.failure(),
        }
        result
    }

    fn id(&self) -> String {
        self.id.clone()
    }

    fn usage(&self) -> UsageStats {
        self.usage.snapshot()
    }
}
