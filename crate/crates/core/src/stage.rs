//! Sorting workflow phrases into the three research stages.
//!
//! The remote path sends batches of phrases with a few-shot prompt and
//! expects one `phrase // label` line back per input. Replies that do not
//! parse are retried; a batch that keeps failing is labelled by the keyword
//! rules instead and marked as such.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{ChatMessage, ChatModel};
use crate::normalize::{lemmatize, similarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    DataPreparation,
    DataProcessing,
    DataAnalysis,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::DataPreparation, Stage::DataProcessing, Stage::DataAnalysis];

    pub fn label(self) -> &'static str {
        match self {
            Stage::DataPreparation => "data_preparation",
            Stage::DataProcessing => "data_processing",
            Stage::DataAnalysis => "data_analysis",
        }
    }

    /// Human-readable form, e.g. "data preparation".
    pub fn title(self) -> &'static str {
        match self {
            Stage::DataPreparation => "data preparation",
            Stage::DataProcessing => "data processing",
            Stage::DataAnalysis => "data analysis",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Stage {
    type Err = Error;

    /// Case-insensitive; spaces, hyphens and underscores are interchangeable.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .to_lowercase()
            .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
            .filter(|p| !p.is_empty())
            .collect::<Vec<_>>()
            .join("_");
        Stage::ALL
            .into_iter()
            .find(|st| st.label() == key)
            .ok_or_else(|| Error::Response(format!("unknown stage label {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageSource {
    Llm,
    Rule,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagedPhrase {
    pub phrase: String,
    pub stage: Stage,
    pub source: StageSource,
    #[serde(default)]
    pub batch: usize,
    #[serde(default)]
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub phrase: String,
    pub stage: Stage,
}

pub const EXEMPLARS_PER_STAGE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FewShotPromptConfig {
    pub role_preamble: String,
    pub exemplars: Vec<Exemplar>,
    pub batch_size: usize,
    pub temperature: f64,
    pub model_name: String,
    /// Re-asks after an unparseable reply before falling back to rules.
    pub parse_retries: u32,
}

const DEFAULT_PREAMBLE: &str = "You are an NLP expert. You will receive short phrases, each naming one step of the research workflow of an NLP paper. Assign every phrase to exactly one of three stages: data_preparation (obtaining, building, annotating or cleaning data), data_processing (models, features, training and other computation on the data), or data_analysis (evaluation, comparison, ablation and interpretation of results).";

pub fn default_exemplars() -> Vec<Exemplar> {
    fn group(stage: Stage, phrases: [&'static str; EXEMPLARS_PER_STAGE]) -> impl Iterator<Item = Exemplar> {
        phrases.into_iter().map(move |p| Exemplar {
            phrase: p.to_string(),
            stage,
        })
    }
    group(
        Stage::DataPreparation,
        [
            "datasets and preprocessing",
            "data collection",
            "gold standard creation",
            "baselines and preprocessing",
            "data annotation",
        ],
    )
    .chain(group(
        Stage::DataProcessing,
        [
            "text clustering",
            "document retrieval",
            "feature selection",
            "contrastive term extraction",
            "network training",
        ],
    ))
    .chain(group(
        Stage::DataAnalysis,
        [
            "error analysis",
            "ablation study",
            "case study",
            "qualitative analysis",
            "automatic evaluation",
        ],
    ))
    .collect()
}

impl Default for FewShotPromptConfig {
    fn default() -> Self {
        FewShotPromptConfig {
            role_preamble: DEFAULT_PREAMBLE.to_string(),
            exemplars: default_exemplars(),
            batch_size: 10,
            temperature: 0.0,
            model_name: "gpt-4o-mini".to_string(),
            parse_retries: 2,
        }
    }
}

impl FewShotPromptConfig {
    pub fn validate(&self) -> Result<()> {
        for stage in Stage::ALL {
            let n = self.exemplars.iter().filter(|e| e.stage == stage).count();
            if n != EXEMPLARS_PER_STAGE {
                return Err(Error::Config(format!(
                    "need {EXEMPLARS_PER_STAGE} exemplars for {stage}, found {n}"
                )));
            }
        }
        if self.exemplars.iter().any(|e| e.phrase.trim().is_empty()) {
            return Err(Error::Config("exemplar phrases must be non-empty".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::Config(format!(
                "temperature must be non-negative, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// System message (role, exemplars, output format) plus the numbered batch.
pub fn build_classification_prompt(config: &FewShotPromptConfig, batch: &[String]) -> Result<Vec<ChatMessage>> {
    config.validate()?;
    if batch.is_empty() {
        return Err(Error::Domain("cannot classify an empty batch".into()));
    }
    if batch.len() > config.batch_size {
        return Err(Error::Domain(format!(
            "batch of {} exceeds batch_size {}",
            batch.len(),
            config.batch_size
        )));
    }
    let mut system = String::new();
    system.push_str(config.role_preamble.trim());
    system.push_str("\n\nExamples:\n");
    for stage in Stage::ALL {
        for e in config.exemplars.iter().filter(|e| e.stage == stage) {
            system.push_str(&format!("{} // {}\n", e.phrase, stage.label()));
        }
    }
    system.push_str(
        "\nReply with exactly one line per input phrase, in input order, formatted as:\noriginal phrase // label\nThe label must be one of data_preparation, data_processing, data_analysis. Do not add any other text.",
    );
    let mut user = String::from("Phrases:\n");
    for (i, p) in batch.iter().enumerate() {
        user.push_str(&format!("{}. {}\n", i + 1, p));
    }
    Ok(vec![ChatMessage::system(system), ChatMessage::user(user.trim_end())])
}

/// The reply format `parse_response` accepts.
pub fn serialize_response(items: &[(String, Stage)]) -> String {
    items
        .iter()
        .map(|(p, s)| format!("{p} // {}", s.label()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn strip_line_prefix(s: &str) -> &str {
    let s = s.trim();
    let digits = s.len() - s.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            if r.starts_with(char::is_whitespace) {
                return r.trim_start();
            }
        }
    }
    for bullet in ["- ", "* ", "\u{2022} "] {
        if let Some(r) = s.strip_prefix(bullet) {
            return r.trim_start();
        }
    }
    s
}

fn unquote(s: &str) -> &str {
    s.trim()
        .trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '*'))
        .trim()
}

fn comparable(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Parses `phrase // label` lines and aligns them to `batch`.
pub fn parse_response(text: &str, batch: &[String]) -> Result<Vec<StagedPhrase>> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with("```"))
        .collect();
    if lines.len() != batch.len() {
        return Err(Error::Response(format!(
            "expected {} lines, got {}",
            batch.len(),
            lines.len()
        )));
    }
    let mut parsed = Vec::with_capacity(lines.len());
    for (n, line) in &lines {
        let (phrase, label) = line
            .rsplit_once("//")
            .ok_or_else(|| Error::Response(format!("line {n} has no `//` separator: {line:?}")))?;
        let stage: Stage = unquote(label.trim_end_matches('.'))
            .parse()
            .map_err(|_| Error::Response(format!("line {n}: unknown label {:?}", label.trim())))?;
        parsed.push((*n, comparable(unquote(strip_line_prefix(phrase))), stage));
    }

    let targets: Vec<String> = batch.iter().map(|b| comparable(b)).collect();
    let mut slot: Vec<Option<Stage>> = vec![None; batch.len()];
    let mut pending = Vec::new();
    for (pos, (n, phrase, stage)) in parsed.iter().enumerate() {
        let exact = (0..batch.len()).find(|&j| slot[j].is_none() && targets[j] == *phrase);
        match exact {
            Some(j) => slot[j] = Some(*stage),
            None => pending.push((pos, *n, phrase, *stage)),
        }
    }
    let mut unmatched = Vec::new();
    for (pos, n, phrase, stage) in pending {
        if slot[pos].is_none() && similarity(phrase, &targets[pos]) >= 0.9 {
            slot[pos] = Some(stage);
        } else {
            unmatched.push((n, phrase, stage));
        }
    }
    for (n, phrase, stage) in unmatched {
        let best = (0..batch.len())
            .filter(|&j| slot[j].is_none())
            .map(|j| (j, similarity(phrase, &targets[j])))
            .filter(|(_, s)| *s >= 0.9)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match best {
            Some((j, _)) => slot[j] = Some(stage),
            None => {
                return Err(Error::Response(format!(
                    "line {n}: phrase {phrase:?} matches no input phrase"
                )))
            }
        }
    }
    Ok(batch
        .iter()
        .zip(slot)
        .map(|(p, s)| StagedPhrase {
            phrase: p.clone(),
            stage: s.expect("every slot is filled once all lines are placed"),
            source: StageSource::Llm,
            batch: 0,
            retries: 0,
        })
        .collect())
}

const PREPARATION_WORDS: &[&str] = &[
    "collection", "dataset", "data set", "annotation", "preprocessing", "corpus", "split", "cleaning",
    "crawling", "gold standard", "labeling", "labelling", "filtering", "acquisition",
];

const ANALYSIS_WORDS: &[&str] = &[
    "analysis", "evaluation", "study", "comparison", "ablation", "effect", "effectiveness", "cost",
    "performance", "result", "error", "qualitative", "quantitative",
];

fn contains_term(tokens: &[String], term: &str) -> bool {
    let words: Vec<&str> = term.split(' ').collect();
    tokens.windows(words.len()).any(|w| w.iter().zip(&words).all(|(a, b)| a == b))
}

/// Keyword fallback: preparation terms first, then analysis terms, else
/// processing. Matching is on lemmatized tokens with hyphens removed.
pub fn classify_rule_based(phrase: &str) -> Stage {
    let tokens: Vec<String> = lemmatize(phrase)
        .split_whitespace()
        .map(|t| t.replace('-', ""))
        .collect();
    if PREPARATION_WORDS.iter().any(|t| contains_term(&tokens, t)) {
        Stage::DataPreparation
    } else if ANALYSIS_WORDS.iter().any(|t| contains_term(&tokens, t)) {
        Stage::DataAnalysis
    } else {
        Stage::DataProcessing
    }
}

fn rule_batch(batch: &[String], batch_id: usize, retries: u32) -> Vec<StagedPhrase> {
    batch
        .iter()
        .map(|p| StagedPhrase {
            phrase: p.clone(),
            stage: classify_rule_based(p),
            source: StageSource::Rule,
            batch: batch_id,
            retries,
        })
        .collect()
}

/// Asks the model, retrying unparseable replies, then falls back to rules.
pub fn classify_batch(
    client: &dyn ChatModel,
    config: &FewShotPromptConfig,
    batch: &[String],
    batch_id: usize,
) -> Result<Vec<StagedPhrase>> {
    let messages = build_classification_prompt(config, batch)?;
    let mut last_error = String::new();
    for attempt in 0..=config.parse_retries {
        let reply = client.chat(&messages).map_err(|e| Error::Classification {
            batch: batch.to_vec(),
            message: e.to_string(),
        })?;
        match parse_response(&reply, batch) {
            Ok(mut staged) => {
                for s in &mut staged {
                    s.batch = batch_id;
                    s.retries = attempt;
                }
                return Ok(staged);
            }
            Err(e) => {
                warn!("batch {batch_id}, attempt {}: {e}", attempt + 1);
                last_error = e.to_string();
            }
        }
    }
    warn!("batch {batch_id}: falling back to keyword rules after repeated parse failures ({last_error})");
    Ok(rule_batch(batch, batch_id, config.parse_retries))
}

/// Classifies every phrase, in `config.batch_size` batches, with at most
/// `concurrency` requests in flight. Without a client all phrases go to the
/// keyword rules. Output keeps input order.
pub fn classify_all(
    client: Option<&dyn ChatModel>,
    config: &FewShotPromptConfig,
    phrases: &[String],
    concurrency: usize,
) -> Result<Vec<StagedPhrase>> {
    config.validate()?;
    let batches: Vec<&[String]> = phrases.chunks(config.batch_size).collect();
    let Some(client) = client else {
        return Ok(batches
            .iter()
            .enumerate()
            .flat_map(|(i, b)| rule_batch(b, i, 0))
            .collect());
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<Vec<StagedPhrase>>> = pool.install(|| {
        batches
            .par_iter()
            .enumerate()
            .map(|(i, b)| classify_batch(client, config, b, i))
            .collect()
    });
    let mut out = Vec::with_capacity(phrases.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

pub fn write_staged(path: impl AsRef<Path>, staged: &[StagedPhrase]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for s in staged {
        serde_json::to_writer(&mut out, s).map_err(|e| Error::Data(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_staged(path: impl AsRef<Path>) -> Result<Vec<StagedPhrase>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let s: StagedPhrase = serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                field: "staged phrase".into(),
                message: e.to_string(),
            })?;
            if s.phrase.trim().is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    field: "phrase".into(),
                    message: "empty phrase".into(),
                });
            }
            Ok(s)
        })
        .collect()
}
