//! Year-level trend statistics over assembled workflows.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stage::Stage;
use crate::workflow::ResearchWorkflow;

pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualStats {
    pub year: i32,
    pub papers: usize,
    /// Sum over papers of their distinct phrases.
    pub total_workflows: usize,
    pub avg_per_paper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub year: i32,
    pub avg_preparation: f64,
    pub avg_processing: f64,
    pub avg_analysis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopEntry {
    pub phrase: String,
    pub paper_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopWorkflows {
    pub year: i32,
    pub entries: Vec<TopEntry>,
}

/// One `topk.csv` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopRow {
    pub year: i32,
    pub rank: usize,
    pub phrase: String,
    pub paper_pct: f64,
}

fn distinct_phrases(w: &ResearchWorkflow) -> BTreeSet<&str> {
    w.stages
        .iter()
        .flatten()
        .map(|s| s.phrase.as_str())
        .collect()
}

fn by_year<'a>(
    workflows: &'a [ResearchWorkflow],
    years: &HashMap<String, i32>,
) -> Result<BTreeMap<i32, Vec<&'a ResearchWorkflow>>> {
    let mut out: BTreeMap<i32, Vec<&ResearchWorkflow>> = BTreeMap::new();
    for w in workflows {
        let year = years
            .get(&w.paper_id)
            .ok_or_else(|| Error::Data(format!("no publication year for paper {}", w.paper_id)))?;
        out.entry(*year).or_default().push(w);
    }
    Ok(out)
}

pub fn annual_counts(workflows: &[ResearchWorkflow], years: &HashMap<String, i32>) -> Result<Vec<AnnualStats>> {
    Ok(by_year(workflows, years)?
        .into_iter()
        .map(|(year, ws)| {
            let total: usize = ws.iter().map(|w| distinct_phrases(w).len()).sum();
            AnnualStats {
                year,
                papers: ws.len(),
                total_workflows: total,
                avg_per_paper: total as f64 / ws.len() as f64,
            }
        })
        .collect())
}

pub fn stage_averages(workflows: &[ResearchWorkflow], years: &HashMap<String, i32>) -> Result<Vec<StageStats>> {
    Ok(by_year(workflows, years)?
        .into_iter()
        .map(|(year, ws)| {
            let n = ws.len() as f64;
            let mean = |stage: Stage| ws.iter().map(|w| w.stage(stage).len()).sum::<usize>() as f64 / n;
            StageStats {
                year,
                avg_preparation: mean(Stage::DataPreparation),
                avg_processing: mean(Stage::DataProcessing),
                avg_analysis: mean(Stage::DataAnalysis),
            }
        })
        .collect())
}

/// Phrases ranked by the share of that year's papers containing them.
pub fn top_k_per_year(
    workflows: &[ResearchWorkflow],
    years: &HashMap<String, i32>,
    k: usize,
) -> Result<Vec<TopWorkflows>> {
    if k == 0 {
        return Err(Error::Config("top-k needs k >= 1".into()));
    }
    Ok(by_year(workflows, years)?
        .into_iter()
        .map(|(year, ws)| {
            let mut df: HashMap<&str, usize> = HashMap::new();
            for w in &ws {
                for p in distinct_phrases(w) {
                    *df.entry(p).or_insert(0) += 1;
                }
            }
            let mut ranked: Vec<(&str, usize)> = df.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            ranked.truncate(k);
            TopWorkflows {
                year,
                entries: ranked
                    .into_iter()
                    .map(|(p, n)| TopEntry {
                        phrase: p.to_string(),
                        paper_pct: 100.0 * n as f64 / ws.len() as f64,
                    })
                    .collect(),
            }
        })
        .collect())
}

pub fn top_rows(top: &[TopWorkflows]) -> Vec<TopRow> {
    top.iter()
        .flat_map(|t| {
            t.entries.iter().enumerate().map(move |(i, e)| TopRow {
                year: t.year,
                rank: i + 1,
                phrase: e.phrase.clone(),
                paper_pct: e.paper_pct,
            })
        })
        .collect()
}

pub const ANNUAL_HEADER: [&str; 4] = ["year", "papers", "total_workflows", "avg_per_paper"];
pub const STAGES_HEADER: [&str; 4] = ["year", "avg_preparation", "avg_processing", "avg_analysis"];
pub const TOPK_HEADER: [&str; 4] = ["year", "rank", "phrase", "paper_pct"];

/// Header row followed by one record per item, even when `rows` is empty.
pub fn export_csv<T: Serialize>(path: impl AsRef<Path>, header: &[&str], rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn parse_csv<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(raw.as_slice())
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Parse {
                line: i + 2,
                field: "record".into(),
                message: e.to_string(),
            })
        })
        .collect()
}
