//! Transport-agnostic request/response contract for external classifiers.
//!
//! Messages are one JSON object per line. A request names its phase:
//!
//! ```text
//! {"phase":"generate_examples","compound":"big fish","language":"en","count":3}
//! {"phase":"classify","compound":"big fish","language":"en","sentence":"...","examples":["..."]}
//! {"phase":"translate","compound":"peixe grande","language":"pt","sentence":"..."}
//! ```
//!
//! and the reply carries whichever of `examples`, `label`, `translation` the
//! phase calls for. `label` may be a bare `LITERAL`/`IDIOMATIC` or a short
//! free-text answer ending in one of them.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SentenceType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    GenerateExamples,
    Classify,
    Translate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRequest {
    pub phase: Phase,
    pub compound: String,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub examples: Option<Vec<String>>,
    /// Number of examples to generate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Backend selector, passed through opaquely.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClientResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub examples: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<String>,
}

pub trait ClassifierClient: Send + Sync {
    fn send(&self, request: &ClientRequest) -> Result<ClientResponse>;
}

impl<T: ClassifierClient + ?Sized> ClassifierClient for Arc<T> {
    fn send(&self, request: &ClientRequest) -> Result<ClientResponse> {
        (**self).send(request)
    }
}

fn words_upper(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
        .map(str::to_uppercase)
        .collect()
}

fn label_word(word: &str) -> Option<SentenceType> {
    match word {
        "LITERAL" => Some(SentenceType::Literal),
        "IDIOMATIC" => Some(SentenceType::Idiomatic),
        _ => None,
    }
}

/// Extracts a single label from a classifier answer. A final line that is
/// exactly one label wins; otherwise the text must mention exactly one of
/// the two labels.
pub fn parse_label(text: &str) -> Option<SentenceType> {
    if let Some(last) = text.lines().rev().find(|l| !l.trim().is_empty()) {
        let words = words_upper(last);
        if words.len() == 1 {
            if let Some(l) = label_word(&words[0]) {
                return Some(l);
            }
        }
    }
    let mut found: Option<SentenceType> = None;
    for w in words_upper(text) {
        if let Some(l) = label_word(&w) {
            match found {
                Some(prev) if prev != l => return None,
                _ => found = Some(l),
            }
        }
    }
    found
}

/// Speaks the line protocol over any reader/writer pair.
pub struct LineClient<R, W> {
    io: Mutex<(BufReader<R>, W)>,
}

impl<R: std::io::Read, W: Write> LineClient<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        LineClient {
            io: Mutex::new((BufReader::new(reader), writer)),
        }
    }
}

impl<R: std::io::Read + Send, W: Write + Send> ClassifierClient for LineClient<R, W> {
    fn send(&self, request: &ClientRequest) -> Result<ClientResponse> {
        let unavailable = |e: &dyn std::fmt::Display| Error::ClientUnavailable(e.to_string());
        let mut io = self
            .io
            .lock()
            .map_err(|_| Error::ClientUnavailable("transport poisoned".into()))?;
        let (reader, writer) = &mut *io;
        let line = serde_json::to_string(request).map_err(|e| unavailable(&e))?;
        writeln!(writer, "{line}").map_err(|e| unavailable(&e))?;
        writer.flush().map_err(|e| unavailable(&e))?;
        let mut reply = String::new();
        let n = reader.read_line(&mut reply).map_err(|e| unavailable(&e))?;
        if n == 0 {
            return Err(Error::ClientUnavailable("transport closed".into()));
        }
        serde_json::from_str(reply.trim_end()).map_err(|e| Error::UnparseableResponse(e.to_string()))
    }
}

/// Runs a bridge program and talks to it over stdin/stdout.
pub struct ProcessClient {
    child: Mutex<Child>,
    inner: LineClient<ChildStdout, ChildStdin>,
}

impl ProcessClient {
    pub fn spawn(command: &[String]) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::Config("classifier command is empty".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::ClientUnavailable(format!("{program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(ProcessClient {
            child: Mutex::new(child),
            inner: LineClient::new(stdout, stdin),
        })
    }
}

impl ClassifierClient for ProcessClient {
    fn send(&self, request: &ClientRequest) -> Result<ClientResponse> {
        self.inner.send(request)
    }
}

impl Drop for ProcessClient {
    fn drop(&mut self) {
        if let Ok(mut child) = self.child.lock() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// In-process client for tests and offline runs.
///
/// Literal examples are generated as `"<i>. A literal <compound>."`, labels
/// come from a sentence → label map (default idiomatic) and translations from
/// a dictionary. Every request is counted per phase.
#[derive(Debug, Default)]
pub struct MockClient {
    labels: HashMap<String, String>,
    translations: HashMap<String, String>,
    default_label: Option<String>,
    unavailable: bool,
    generate_calls: AtomicUsize,
    classify_calls: AtomicUsize,
    translate_calls: AtomicUsize,
}

impl MockClient {
    pub fn new() -> Self {
        MockClient::default()
    }

    /// Answer `answer` verbatim when asked to classify `sentence`.
    pub fn with_answer(mut self, sentence: impl Into<String>, answer: impl Into<String>) -> Self {
        self.labels.insert(sentence.into(), answer.into());
        self
    }

    pub fn with_default_answer(mut self, answer: impl Into<String>) -> Self {
        self.default_label = Some(answer.into());
        self
    }

    pub fn with_translation(mut self, sentence: impl Into<String>, translation: impl Into<String>) -> Self {
        self.translations.insert(sentence.into(), translation.into());
        self
    }

    /// Every request fails with `ClientUnavailable`.
    pub fn offline() -> Self {
        MockClient {
            unavailable: true,
            ..MockClient::default()
        }
    }

    pub fn calls(&self, phase: Phase) -> usize {
        match phase {
            Phase::GenerateExamples => self.generate_calls.load(Ordering::SeqCst),
            Phase::Classify => self.classify_calls.load(Ordering::SeqCst),
            Phase::Translate => self.translate_calls.load(Ordering::SeqCst),
        }
    }
}

impl ClassifierClient for MockClient {
    fn send(&self, request: &ClientRequest) -> Result<ClientResponse> {
        let counter = match request.phase {
            Phase::GenerateExamples => &self.generate_calls,
            Phase::Classify => &self.classify_calls,
            Phase::Translate => &self.translate_calls,
        };
        counter.fetch_add(1, Ordering::SeqCst);
        if self.unavailable {
            return Err(Error::ClientUnavailable("mock offline".into()));
        }
        let sentence = request.sentence.clone().unwrap_or_default();
        Ok(match request.phase {
            Phase::GenerateExamples => ClientResponse {
                examples: Some(
                    (1..=request.count.unwrap_or(3))
                        .map(|i| format!("{i}. A literal {}.", request.compound))
                        .collect(),
                ),
                ..ClientResponse::default()
            },
            Phase::Classify => ClientResponse {
                label: Some(
                    self.labels
                        .get(&sentence)
                        .or(self.default_label.as_ref())
                        .cloned()
                        .unwrap_or_else(|| "IDIOMATIC".into()),
                ),
                ..ClientResponse::default()
            },
            Phase::Translate => ClientResponse {
                translation: Some(self.translations.get(&sentence).cloned().unwrap_or(sentence)),
                ..ClientResponse::default()
            },
        })
    }
}
