//! Phrase lemmatization and near-duplicate clustering.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generate::WorkflowPhrase;

pub const LEMMATIZER_VERSION: &str = "suffix-rules/1";
pub const DEFAULT_TAU: f64 = 0.9;

/// Above this many clusters the representative scan runs in parallel.
const PARALLEL_SCAN: usize = 512;

fn lemmatize_token(token: &str) -> String {
    let chars = token.chars().count();
    if chars <= 3 {
        return token.to_string();
    }
    if let Some(stem) = token.strip_suffix("yses") {
        return format!("{stem}ysis");
    }
    if let Some(stem) = token.strip_suffix("ies") {
        return format!("{stem}y");
    }
    if let Some(stem) = token.strip_suffix("sses") {
        return format!("{stem}ss");
    }
    if let Some(stem) = token.strip_suffix("es") {
        if ["s", "x", "z", "ch", "sh"].iter().any(|e| stem.ends_with(e)) {
            return stem.to_string();
        }
    }
    if token.ends_with('s') && !["ss", "us", "is"].iter().any(|e| token.ends_with(e)) {
        return token[..token.len() - 1].to_string();
    }
    token.to_string()
}

/// Lowercases and applies plural-stripping suffix rules to each token.
/// Tokens of three characters or fewer and Latin/Greek singulars ending in
/// `-us`, `-is` or `-ss` are left alone.
pub fn lemmatize(phrase: &str) -> String {
    phrase
        .to_lowercase()
        .split_whitespace()
        .map(lemmatize_token)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Character-level edit distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 − lev(a, b) / max(|a|, |b|)` over characters; two empty strings are
/// identical.
pub fn similarity(a: &str, b: &str) -> f64 {
    let max = a.chars().count().max(b.chars().count());
    if max == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / max as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseCluster {
    pub representative: String,
    pub members: BTreeMap<String, usize>,
}

impl PhraseCluster {
    pub fn total(&self) -> usize {
        self.members.values().sum()
    }
}

/// Orders phrases so the first of any group is its representative: higher
/// count, then shorter, then lexicographically smaller.
fn representative_order(a: &(String, usize), b: &(String, usize)) -> std::cmp::Ordering {
    b.1.cmp(&a.1)
        .then(a.0.chars().count().cmp(&b.0.chars().count()))
        .then(a.0.cmp(&b.0))
}

fn joins(candidate: &str, len: usize, rep: &str, tau: f64) -> bool {
    let rep_len = rep.chars().count();
    let max = len.max(rep_len);
    // lev >= length gap, so a large gap rules the pair out cheaply
    if max > 0 && 1.0 - len.abs_diff(rep_len) as f64 / max as f64 <= tau {
        return false;
    }
    similarity(candidate, rep) > tau
}

/// Greedy leader clustering: each phrase joins the first cluster whose
/// representative is more than `tau` similar, otherwise founds one.
pub fn cluster_phrases(phrases: &[(String, usize)], tau: f64) -> Result<Vec<PhraseCluster>> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Config(format!("tau must lie in (0, 1], got {tau}")));
    }
    let mut merged: HashMap<&str, usize> = HashMap::new();
    for (p, c) in phrases {
        *merged.entry(p.as_str()).or_insert(0) += c;
    }
    let mut sorted: Vec<(String, usize)> = merged.into_iter().map(|(p, c)| (p.to_string(), c)).collect();
    sorted.sort_by(representative_order);

    let mut clusters: Vec<PhraseCluster> = Vec::new();
    for (phrase, count) in sorted {
        let len = phrase.chars().count();
        let hit = if clusters.len() > PARALLEL_SCAN {
            clusters
                .par_iter()
                .position_first(|c| joins(&phrase, len, &c.representative, tau))
        } else {
            clusters
                .iter()
                .position(|c| joins(&phrase, len, &c.representative, tau))
        };
        match hit {
            Some(i) => {
                clusters[i].members.insert(phrase, count);
            }
            None => clusters.push(PhraseCluster {
                representative: phrase.clone(),
                members: BTreeMap::from([(phrase, count)]),
            }),
        }
    }
    Ok(clusters)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberCount {
    pub phrase: String,
    pub count: usize,
}

/// One line of the cluster report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub representative: String,
    pub members: Vec<MemberCount>,
    pub total: usize,
    pub tau: f64,
    pub lemmatizer_version: String,
}

pub fn cluster_records(clusters: &[PhraseCluster], tau: f64) -> Vec<ClusterRecord> {
    clusters
        .iter()
        .map(|c| ClusterRecord {
            representative: c.representative.clone(),
            members: c
                .members
                .iter()
                .map(|(p, n)| MemberCount {
                    phrase: p.clone(),
                    count: *n,
                })
                .collect(),
            total: c.total(),
            tau,
            lemmatizer_version: LEMMATIZER_VERSION.to_string(),
        })
        .collect()
}

pub fn write_cluster_report(path: impl AsRef<Path>, records: &[ClusterRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Data(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_cluster_report(path: impl AsRef<Path>) -> Result<Vec<ClusterRecord>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                field: "cluster".into(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Lemmatizes and clusters the phrases, writing each phrase's cluster
/// representative into `normalized_text`.
pub fn normalize_phrases(phrases: &mut [WorkflowPhrase], tau: f64) -> Result<Vec<PhraseCluster>> {
    let lemmas: Vec<String> = phrases.iter().map(|p| lemmatize(&p.raw_text)).collect();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for l in &lemmas {
        *counts.entry(l.as_str()).or_insert(0) += 1;
    }
    let input: Vec<(String, usize)> = counts.into_iter().map(|(p, c)| (p.to_string(), c)).collect();
    let clusters = cluster_phrases(&input, tau)?;
    let rep_of: HashMap<&str, &str> = clusters
        .iter()
        .flat_map(|c| c.members.keys().map(move |m| (m.as_str(), c.representative.as_str())))
        .collect();
    for (p, l) in phrases.iter_mut().zip(&lemmas) {
        p.normalized_text = Some(rep_of[l.as_str()].to_string());
    }
    Ok(clusters)
}
