//! Workflow fixtures and a checker for the generated flowchart subset.

use std::collections::{BTreeSet, HashMap};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use workflow_miner::stage::{Stage, StageSource, StagedPhrase};
use workflow_miner::workflow::{assemble, ResearchWorkflow};

pub const REFERENCE_ROWS: &str = include_str!("../fixtures/reference_workflows.tsv");

pub fn staged(phrase: &str, stage: Stage, ordinal: usize) -> (StagedPhrase, usize) {
    (
        StagedPhrase {
            phrase: phrase.to_string(),
            stage,
            source: StageSource::Manual,
            batch: 0,
            retries: 0,
        },
        ordinal,
    )
}

/// Reference rows as (paper_id, [cells; 3]).
pub fn reference_rows() -> Vec<(String, [String; 3])> {
    REFERENCE_ROWS
        .lines()
        .skip(1)
        .map(|l| {
            let cells: Vec<&str> = l.split('\t').collect();
            assert_eq!(cells.len(), 4, "{l}");
            (
                cells[0].to_string(),
                [cells[1].to_string(), cells[2].to_string(), cells[3].to_string()],
            )
        })
        .collect()
}

/// Staged phrases for one reference row, shuffled and salted with
/// later duplicates so ordering and dedup both matter.
pub fn reference_input(seed: u64, cells: &[String; 3]) -> Vec<(StagedPhrase, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut ordinal = 2;
    for (stage, cell) in Stage::ALL.iter().zip(cells) {
        for phrase in cell.split(", ") {
            out.push(staged(phrase, *stage, ordinal));
            if rng.random_bool(0.3) {
                out.push(staged(phrase, *stage, ordinal + 100));
            }
            ordinal += rng.random_range(1..4);
        }
    }
    for i in (1..out.len()).rev() {
        out.swap(i, rng.random_range(0..=i));
    }
    out
}

/// Validates the flowchart subset the renderer emits and returns
/// (node count, edge count).
pub fn check_mermaid(doc: &str) -> Result<(usize, usize), String> {
    let mut lines = doc.lines();
    if lines.next() != Some("flowchart TD") {
        return Err("missing flowchart TD header".into());
    }
    if !doc.ends_with('\n') {
        return Err("missing final newline".into());
    }
    let mut nodes = BTreeSet::new();
    let mut edges = 0;
    let mut open = false;
    for line in lines {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("subgraph ") {
            if open {
                return Err("nested subgraph".into());
            }
            let (id, title) = rest.split_once(' ').ok_or("subgraph without title")?;
            if !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(format!("bad subgraph id {id}"));
            }
            quoted_label(title.strip_prefix('[').and_then(|s| s.strip_suffix(']')).ok_or("bad title")?)?;
            open = true;
        } else if t == "end" {
            if !open {
                return Err("end without subgraph".into());
            }
            open = false;
        } else if let Some((a, b)) = t.split_once(" --> ") {
            for id in [a, b] {
                if !nodes.contains(id) {
                    return Err(format!("edge to undeclared node {id}"));
                }
            }
            edges += 1;
        } else {
            let (id, rest) = t.split_once('[').ok_or_else(|| format!("unparsed line {t:?}"))?;
            if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(format!("bad node id {id:?}"));
            }
            quoted_label(rest.strip_suffix(']').ok_or("unterminated node")?)?;
            if !nodes.insert(id.to_string()) {
                return Err(format!("duplicate node {id}"));
            }
        }
    }
    if open {
        return Err("unterminated subgraph".into());
    }
    Ok((nodes.len(), edges))
}

fn quoted_label(s: &str) -> Result<(), String> {
    let inner = s
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .ok_or_else(|| format!("label not quoted: {s}"))?;
    if inner.contains(['"', '[', ']', '<', '>', '\n']) {
        return Err(format!("unescaped label {inner:?}"));
    }
    // every `#` starts an entity
    for (i, _) in inner.match_indices('#') {
        let tail = &inner[i + 1..];
        let end = tail.find(';').ok_or("dangling #")?;
        let name = &tail[..end];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric()) {
            return Err(format!("bad entity #{name};"));
        }
    }
    Ok(())
}

pub const VOCAB: &[&str] = &[
    "case study",
    "ablation study",
    "error analysis",
    "data collection",
    "datasets and preprocessing",
    "model training",
    "baselines",
    "feature extraction",
    "human evaluation",
    "qualitative analysis",
    "annotation",
    "fine-tuning",
    "results",
    "pre-training",
    "hyperparameter search",
];

/// Random assembled workflows with paper years in 2018..=2022.
pub fn random_corpus(seed: u64, papers: usize) -> (Vec<ResearchWorkflow>, HashMap<String, i32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut years = HashMap::new();
    let mut out = Vec::new();
    for p in 0..papers {
        let id = format!("paper-{p:03}");
        years.insert(id.clone(), rng.random_range(2018..=2022));
        let n = rng.random_range(0..12);
        let input: Vec<(StagedPhrase, usize)> = (0..n)
            .map(|i| {
                let stage = *Stage::ALL.choose(&mut rng).unwrap();
                staged(VOCAB.choose(&mut rng).unwrap(), stage, i)
            })
            .collect();
        out.push(assemble(&id, &input));
    }
    (out, years)
}
