//! Completion backends.
//!
//! [`ScriptedBackend`] replays canned responses and needs no network;
//! [`HttpBackend`] talks to a chat-completions service.

mod http;
mod scripted;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

pub use http::{backoff_delay, HttpBackend, HttpConfig, DEFAULT_API_KEY_ENV};
pub use scripted::{Matcher, ScriptEntry, ScriptedBackend};

use crate::error::BackendError;
use crate::prompting::Prompt;

pub trait Backend: Send + Sync {
    /// Returns the raw response text, never an empty string.
    fn complete(&self, prompt: &Prompt) -> Result<String, BackendError>;
    /// Identity recorded in the spec hash and cache records.
    fn id(&self) -> String;
    fn usage(&self) -> UsageStats;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageStats {
    pub calls: u64,
    pub input_chars: u64,
    pub output_chars: u64,
    pub failures: u64,
}

/// Lock-free usage counters shared by the backend implementations.
#[derive(Debug, Default)]
pub struct UsageCounter {
    calls: AtomicU64,
    input_chars: AtomicU64,
    output_chars: AtomicU64,
    failures: AtomicU64,
}

impl UsageCounter {
    pub fn call(&self, prompt: &Prompt) {
        let chars = prompt.system_text.chars().count() + prompt.user_text.chars().count();
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.input_chars.fetch_add(chars as u64, Ordering::Relaxed);
    }

    pub fn output(&self, text: &str) {
        self.output_chars
            .fetch_add(text.chars().count() as u64, Ordering::Relaxed);
    }

    pub fn failure(&self) {
        self.failures.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> UsageStats {
        UsageStats {
            calls: self.calls.load(Ordering::Relaxed),
            input_chars: self.input_chars.load(Ordering::Relaxed),
            output_chars: self.output_chars.load(Ordering::Relaxed),
            failures: self.failures.load(Ordering::Relaxed),
        }
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn complete(&self, prompt: &Prompt) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }

    fn id(&self) -> String {
        (**self).id()
    }

    fn usage(&self) -> UsageStats {
        (**self).usage()
    }
}
