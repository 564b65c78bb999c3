//! Per-paper three-stage workflows and their Mermaid / TSV renderings.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stage::{Stage, StagedPhrase};

pub const TABLE_HEADER: &str = "paper_id\tdata_preparation\tdata_processing\tdata_analysis";
const EMPTY_NODE: &str = "empty[\"no workflow extracted\"]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowStep {
    pub phrase: String,
    pub ordinal: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResearchWorkflow {
    pub paper_id: String,
    /// Indexed by `Stage::index()`.
    pub stages: [Vec<WorkflowStep>; 3],
}

impl ResearchWorkflow {
    pub fn empty(paper_id: impl Into<String>) -> Self {
        ResearchWorkflow {
            paper_id: paper_id.into(),
            stages: Default::default(),
        }
    }

    pub fn stage(&self, stage: Stage) -> &[WorkflowStep] {
        &self.stages[stage.index()]
    }

    pub fn phrase_count(&self) -> usize {
        self.stages.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.phrase_count() == 0
    }

    /// The (phrase, ordinal) list `assemble` would rebuild this workflow from.
    pub fn flatten(&self) -> Vec<(StagedPhrase, usize)> {
        Stage::ALL
            .iter()
            .flat_map(|&stage| {
                self.stage(stage).iter().map(move |s| {
                    (
                        StagedPhrase {
                            phrase: s.phrase.clone(),
                            stage,
                            source: crate::stage::StageSource::Manual,
                            batch: 0,
                            retries: 0,
                        },
                        s.ordinal,
                    )
                })
            })
            .collect()
    }
}

/// Groups phrases by stage in paragraph order. A phrase seen more than once
/// in the paper is kept only at its earliest paragraph.
pub fn assemble(paper_id: &str, staged: &[(StagedPhrase, usize)]) -> ResearchWorkflow {
    let mut earliest: HashMap<&str, (usize, Stage)> = HashMap::new();
    for (s, ordinal) in staged {
        earliest
            .entry(s.phrase.as_str())
            .and_modify(|e| {
                if *ordinal < e.0 {
                    *e = (*ordinal, s.stage);
                }
            })
            .or_insert((*ordinal, s.stage));
    }
    let mut w = ResearchWorkflow::empty(paper_id);
    for (phrase, (ordinal, stage)) in earliest {
        w.stages[stage.index()].push(WorkflowStep {
            phrase: phrase.to_string(),
            ordinal,
        });
    }
    for steps in &mut w.stages {
        steps.sort_by(|a, b| a.ordinal.cmp(&b.ordinal).then_with(|| a.phrase.cmp(&b.phrase)));
    }
    w
}

/// Makes a phrase safe inside a quoted Mermaid label.
pub fn escape_label(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '#' => out.push_str("#35;"),
            '"' => out.push_str("#quot;"),
            '[' => out.push_str("#91;"),
            ']' => out.push_str("#93;"),
            '<' => out.push_str("#lt;"),
            '>' => out.push_str("#gt;"),
            '\n' | '\r' | '\t' => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

fn node_id(stage: Stage, i: usize) -> String {
    format!("s{}n{i}", stage.index())
}

/// `flowchart TD` with one subgraph per non-empty stage.
pub fn render_mermaid(w: &ResearchWorkflow) -> String {
    let mut out = String::from("flowchart TD\n");
    if w.is_empty() {
        let _ = writeln!(out, "    {EMPTY_NODE}");
        return out;
    }
    let mut edges = Vec::new();
    let mut previous_tail: Option<String> = None;
    for stage in Stage::ALL {
        let steps = w.stage(stage);
        if steps.is_empty() {
            continue;
        }
        let _ = writeln!(out, "    subgraph {} [\"{}\"]", stage.label(), stage.title());
        for (i, s) in steps.iter().enumerate() {
            let _ = writeln!(out, "        {}[\"{}\"]", node_id(stage, i), escape_label(&s.phrase));
            if i > 0 {
                edges.push((node_id(stage, i - 1), node_id(stage, i)));
            }
        }
        out.push_str("    end\n");
        if let Some(tail) = previous_tail.take() {
            edges.push((tail, node_id(stage, 0)));
        }
        previous_tail = Some(node_id(stage, steps.len() - 1));
    }
    for (a, b) in edges {
        let _ = writeln!(out, "    {a} --> {b}");
    }
    out
}

fn table_cell(steps: &[WorkflowStep]) -> String {
    steps
        .iter()
        .map(|s| {
            if s.phrase.contains([',', '"', '\t', '\n']) {
                format!("\"{}\"", s.phrase.replace('"', "\"\"").replace(['\t', '\n'], " "))
            } else {
                s.phrase.clone()
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// `paper_id`, then each stage's phrases joined by ", ".
pub fn render_table_row(w: &ResearchWorkflow) -> String {
    let mut cells = vec![w.paper_id.clone()];
    cells.extend(Stage::ALL.iter().map(|&s| table_cell(w.stage(s))));
    cells.join("\t")
}

pub fn render_table(workflows: &[ResearchWorkflow]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for w in workflows {
        out.push_str(&render_table_row(w));
        out.push('\n');
    }
    out
}

/// File name for a paper's flowchart; path separators become `_`.
pub fn flowchart_file_name(paper_id: &str) -> String {
    let safe: String = paper_id
        .chars()
        .map(|c| if matches!(c, '/' | '\\' | ':' | '\0') { '_' } else { c })
        .collect();
    format!("{safe}.mmd")
}

pub fn write_flowcharts(dir: impl AsRef<Path>, workflows: &[ResearchWorkflow]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    workflows
        .iter()
        .map(|w| {
            let path = dir.join(flowchart_file_name(&w.paper_id));
            fs::write(&path, render_mermaid(w)).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
