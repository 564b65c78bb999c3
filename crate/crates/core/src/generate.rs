//! Prompt templates and per-paragraph workflow-phrase generation.

use std::fs;
use std::io::Write;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Paragraph, ParagraphRef};
use crate::error::{Error, Result};
use crate::llm::ChatModel;
use crate::text::{normalize_whitespace, tokenize, truncate_tokens};

pub const PARAGRAPH_SLOT: &str = "[X]";
pub const COMPLETION_SLOT: &str = "[Y]";
pub const DEFAULT_TEMPLATE_ID: u8 = 9;

const BUILTIN_PATTERNS: [&str; 10] = [
    "[X] The title of the above text is: [Y]",
    "[X] The title describing research workflow of the above text is: [Y]",
    "[X] Summarize a title for the above text: [Y]",
    "[X] Summarize a title describing research workflow for the above text: [Y]",
    "[X] Summarize the research workflow described in the above text: [Y]",
    "[X] Summarize a research workflow from the above text: [Y]",
    "[X] Summarize the above text with a phrase: [Y]",
    "[X] Generate a title for the above text: [Y]",
    "[X] Generate a title describing research workflow for the above text: [Y]",
    "[X] Generate a research workflow from the above text: [Y]",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: u8,
    pub pattern: String,
}

impl PromptTemplate {
    pub fn new(id: u8, pattern: impl Into<String>) -> Result<Self> {
        let t = PromptTemplate {
            id,
            pattern: pattern.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let xs = self.pattern.matches(PARAGRAPH_SLOT).count();
        if xs != 1 {
            return Err(Error::Template(format!(
                "template {} must contain exactly one {PARAGRAPH_SLOT}, found {xs}",
                self.id
            )));
        }
        match self.pattern.matches(COMPLETION_SLOT).count() {
            0 => Ok(()),
            1 if self.pattern.trim_end().ends_with(COMPLETION_SLOT) => Ok(()),
            n => Err(Error::Template(format!(
                "template {} may only end with a single {COMPLETION_SLOT}, found {n}",
                self.id
            ))),
        }
    }
}

pub fn builtin_templates() -> Vec<PromptTemplate> {
    BUILTIN_PATTERNS
        .iter()
        .zip(1u8..)
        .map(|(p, id)| PromptTemplate {
            id,
            pattern: (*p).to_string(),
        })
        .collect()
}

pub fn builtin_template(id: u8) -> Result<PromptTemplate> {
    builtin_templates()
        .into_iter()
        .find(|t| t.id == id)
        .ok_or_else(|| Error::Config(format!("no built-in prompt template {id}; ids are 1-10")))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    pub truncated: bool,
}

/// Substitutes the paragraph and drops the completion slot.
pub fn render_prompt(template: &PromptTemplate, paragraph_text: &str, max_len: Option<usize>) -> Result<RenderedPrompt> {
    template.validate()?;
    let text = normalize_whitespace(paragraph_text);
    if text.is_empty() {
        return Err(Error::Template("cannot render a prompt for empty paragraph text".into()));
    }
    let (text, truncated) = match max_len {
        Some(n) => truncate_tokens(&text, n),
        None => (text, false),
    };
    let pattern = template.pattern.trim_end();
    let pattern = pattern.strip_suffix(COMPLETION_SLOT).unwrap_or(pattern).trim_end();
    Ok(RenderedPrompt {
        text: pattern.replacen(PARAGRAPH_SLOT, &text, 1),
        truncated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            max_tokens: 32,
            temperature: 0.0,
        }
    }
}

/// What a backend sees for one paragraph.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub prompt: &'a str,
    pub paragraph: &'a Paragraph,
    pub params: GenerationParams,
}

pub trait GenerationBackend: Sync {
    fn id(&self) -> String;

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String>;
}

/// Deterministic stand-in: the paragraph's heading if it has one, otherwise
/// its first six tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct OfflineBackend;

pub const OFFLINE_FALLBACK_TOKENS: usize = 6;

impl GenerationBackend for OfflineBackend {
    fn id(&self) -> String {
        "offline".to_string()
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String> {
        if let Some(h) = &request.paragraph.heading {
            return Ok(h.clone());
        }
        let tokens = tokenize(&request.paragraph.text);
        Ok(tokens
            .iter()
            .take(OFFLINE_FALLBACK_TOKENS)
            .cloned()
            .collect::<Vec<_>>()
            .join(" "))
    }
}

/// Sends the rendered prompt to a chat model.
pub struct ChatBackend<'a> {
    pub model: &'a dyn ChatModel,
}

impl GenerationBackend for ChatBackend<'_> {
    fn id(&self) -> String {
        self.model.id()
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String> {
        self.model.complete(request.prompt)
    }
}

/// Trims whitespace, wrapping quotes and trailing periods, then lowercases.
pub fn clean_output(raw: &str) -> String {
    const QUOTES: &[char] = &['"', '\'', '`', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}'];
    let mut s = raw.trim();
    loop {
        let before = s;
        s = s.trim_end_matches('.').trim();
        if let Some(q) = s.chars().next().filter(|c| QUOTES.contains(c)) {
            if s.len() > q.len_utf8() && s.ends_with(QUOTES) {
                let last = s.chars().next_back().map_or(0, char::len_utf8);
                s = s[q.len_utf8()..s.len() - last].trim();
            }
        }
        if s == before {
            break;
        }
    }
    normalize_whitespace(s).to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowPhrase {
    pub paper_id: String,
    pub paragraph_ordinal: usize,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized_text: Option<String>,
    pub template_id: u8,
    pub backend_id: String,
    /// The paragraph was cut to `max_len` tokens before rendering.
    #[serde(default)]
    pub truncated: bool,
}

impl WorkflowPhrase {
    pub fn key(&self) -> ParagraphRef {
        ParagraphRef {
            paper_id: self.paper_id.clone(),
            ordinal: self.paragraph_ordinal,
        }
    }

    /// Normalized form when available, else the cleaned output.
    pub fn text(&self) -> &str {
        self.normalized_text.as_deref().unwrap_or(&self.raw_text)
    }
}

/// `Ok(None)` when the backend returned nothing usable.
pub fn generate_phrase(
    backend: &dyn GenerationBackend,
    template: &PromptTemplate,
    paragraph: &Paragraph,
    params: GenerationParams,
    max_len: Option<usize>,
) -> Result<Option<WorkflowPhrase>> {
    let prompt = render_prompt(template, &paragraph.text, max_len)?;
    let request = GenerationRequest {
        prompt: &prompt.text,
        paragraph,
        params,
    };
    let raw = backend.generate(&request).map_err(|e| Error::Generation {
        paper_id: paragraph.paper_id.clone(),
        ordinal: paragraph.ordinal,
        message: e.to_string(),
    })?;
    let cleaned = clean_output(&raw);
    if cleaned.is_empty() {
        warn!(
            "empty phrase for {}#{}; skipped",
            paragraph.paper_id, paragraph.ordinal
        );
        return Ok(None);
    }
    Ok(Some(WorkflowPhrase {
        paper_id: paragraph.paper_id.clone(),
        paragraph_ordinal: paragraph.ordinal,
        raw_text: cleaned,
        normalized_text: None,
        template_id: template.id,
        backend_id: backend.id(),
        truncated: prompt.truncated,
    }))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationPass {
    /// In input paragraph order.
    pub phrases: Vec<WorkflowPhrase>,
    pub empty: Vec<ParagraphRef>,
}

/// Generates for every paragraph with at most `concurrency` calls in flight.
pub fn generate_all(
    backend: &dyn GenerationBackend,
    template: &PromptTemplate,
    paragraphs: &[Paragraph],
    params: GenerationParams,
    max_len: Option<usize>,
    concurrency: usize,
) -> Result<GenerationPass> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<Option<WorkflowPhrase>>> = pool.install(|| {
        paragraphs
            .par_iter()
            .map(|p| generate_phrase(backend, template, p, params, max_len))
            .collect()
    });
    let mut pass = GenerationPass::default();
    for (p, r) in paragraphs.iter().zip(results) {
        match r? {
            Some(phrase) => pass.phrases.push(phrase),
            None => pass.empty.push(p.key()),
        }
    }
    Ok(pass)
}

pub fn write_phrases(path: impl AsRef<Path>, phrases: &[WorkflowPhrase]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for p in phrases {
        serde_json::to_writer(&mut out, p).map_err(|e| Error::Data(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_phrases(path: impl AsRef<Path>) -> Result<Vec<WorkflowPhrase>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let p: WorkflowPhrase = serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                field: "phrase".into(),
                message: e.to_string(),
            })?;
            if p.raw_text.trim().is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    field: "raw_text".into(),
                    message: "empty phrase".into(),
                });
            }
            Ok(p)
        })
        .collect()
}
