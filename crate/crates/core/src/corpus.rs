//! Normalized document model and the line-delimited corpus format.
//!
//! Each line of a corpus file is one paper:
//!
//! ```json
//! {"id": "...", "venue": "...", "year": 2021,
//!  "sections": [{"heading": "...",
//!                "paragraphs": [{"heading": null, "heading_emphasized": false, "text": "..."}]}]}
//! ```
//!
//! Unknown fields are ignored. Paragraph ordinals are not stored; they are
//! assigned in document order when a record is loaded.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::text::normalize_whitespace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paper {
    pub id: String,
    pub venue: String,
    pub year: i32,
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    pub paragraphs: Vec<Paragraph>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paragraph {
    pub paper_id: String,
    /// 0-based position within the paper's full paragraph sequence.
    pub ordinal: usize,
    /// Emphasized lead-in run, if the source had one.
    pub heading: Option<String>,
    pub heading_emphasized: bool,
    pub text: String,
}

impl Paragraph {
    /// Stable reference used in manifests and phrase stores.
    pub fn key(&self) -> ParagraphRef {
        ParagraphRef {
            paper_id: self.paper_id.clone(),
            ordinal: self.ordinal,
        }
    }

    pub fn is_titled(&self) -> bool {
        self.heading_emphasized && self.heading.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParagraphRef {
    pub paper_id: String,
    pub ordinal: usize,
}

/// Unvalidated paragraph as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParagraphRecord {
    pub heading: Option<String>,
    pub heading_emphasized: bool,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionRecord {
    pub heading: String,
    pub paragraphs: Vec<ParagraphRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub id: String,
    pub venue: String,
    pub year: i32,
    pub sections: Vec<SectionRecord>,
}

impl Paper {
    /// Builds a paper from an on-disk record: normalizes whitespace, drops
    /// blank headings and numbers paragraphs in document order.
    pub fn from_record(record: PaperRecord) -> Result<Paper> {
        Self::from_record_at(record, 0)
    }

    fn from_record_at(record: PaperRecord, line: usize) -> Result<Paper> {
        let field_err = |field: String, message: &str| Error::Parse {
            line,
            field,
            message: message.to_string(),
        };
        if record.id.trim().is_empty() {
            return Err(field_err("id".into(), "must be non-empty"));
        }
        if !(1900..=2100).contains(&record.year) {
            return Err(field_err(
                "year".into(),
                &format!("{} outside [1900, 2100]", record.year),
            ));
        }
        let id = record.id.trim().to_string();
        let mut ordinal = 0;
        let mut sections = Vec::with_capacity(record.sections.len());
        for (si, section) in record.sections.into_iter().enumerate() {
            let mut paragraphs = Vec::with_capacity(section.paragraphs.len());
            for (pi, p) in section.paragraphs.into_iter().enumerate() {
                let text = normalize_whitespace(&p.text);
                if text.is_empty() {
                    return Err(field_err(
                        format!("sections[{si}].paragraphs[{pi}].text"),
                        "empty after whitespace normalization",
                    ));
                }
                let heading = p
                    .heading
                    .map(|h| normalize_whitespace(&h))
                    .filter(|h| !h.is_empty());
                paragraphs.push(Paragraph {
                    paper_id: id.clone(),
                    ordinal,
                    heading,
                    heading_emphasized: p.heading_emphasized,
                    text,
                });
                ordinal += 1;
            }
            sections.push(Section {
                heading: normalize_whitespace(&section.heading),
                paragraphs,
            });
        }
        Ok(Paper {
            id,
            venue: record.venue,
            year: record.year,
            sections,
        })
    }

    pub fn to_record(&self) -> PaperRecord {
        PaperRecord {
            id: self.id.clone(),
            venue: self.venue.clone(),
            year: self.year,
            sections: self
                .sections
                .iter()
                .map(|s| SectionRecord {
                    heading: s.heading.clone(),
                    paragraphs: s
                        .paragraphs
                        .iter()
                        .map(|p| ParagraphRecord {
                            heading: p.heading.clone(),
                            heading_emphasized: p.heading_emphasized,
                            text: p.text.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// All paragraphs in document order.
    pub fn paragraphs(&self) -> impl Iterator<Item = &Paragraph> {
        self.sections.iter().flat_map(|s| s.paragraphs.iter())
    }

    pub fn paragraph_count(&self) -> usize {
        self.sections.iter().map(|s| s.paragraphs.len()).sum()
    }
}

/// Returns the paragraphs whose heading is present and emphasized, in
/// document order.
pub fn extract_titled_paragraphs(paper: &Paper) -> Vec<Paragraph> {
    paper.paragraphs().filter(|p| p.is_titled()).cloned().collect()
}

/// Loads a corpus file. Blank lines are skipped; line numbers in errors are
/// 1-based.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Paper>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&raw)
}

pub fn parse_corpus(raw: &str) -> Result<Vec<Paper>> {
    let mut papers = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            field: "<record>".into(),
            message: e.to_string(),
        })?;
        let record = record_from_value(&value, line_no)?;
        let paper = Paper::from_record_at(record, line_no)?;
        if !seen.insert(paper.id.clone()) {
            return Err(Error::Parse {
                line: line_no,
                field: "id".into(),
                message: format!("duplicate paper id `{}`", paper.id),
            });
        }
        papers.push(paper);
    }
    Ok(papers)
}

/// Serializes papers back into the corpus format, one record per line.
pub fn serialize_corpus(papers: &[Paper]) -> String {
    let mut out = String::new();
    for paper in papers {
        out.push_str(&serde_json::to_string(&paper.to_record()).expect("record serializes"));
        out.push('\n');
    }
    out
}

fn record_from_value(value: &Value, line: usize) -> Result<PaperRecord> {
    let err = |field: &str, message: &str| Error::Parse {
        line,
        field: field.to_string(),
        message: message.to_string(),
    };
    let obj = value
        .as_object()
        .ok_or_else(|| err("<record>", "expected a JSON object"))?;

    let str_field = |key: &str| -> Result<String> {
        match obj.get(key) {
            None => Err(err(key, "missing required field")),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(err(key, "expected a string")),
        }
    };
    let id = str_field("id")?;
    let venue = str_field("venue")?;
    let year = match obj.get("year") {
        None => return Err(err("year", "missing required field")),
        Some(v) => v
            .as_i64()
            .and_then(|y| i32::try_from(y).ok())
            .ok_or_else(|| err("year", "expected an integer"))?,
    };
    let sections_raw = match obj.get("sections") {
        None => return Err(err("sections", "missing required field")),
        Some(Value::Array(a)) => a,
        Some(_) => return Err(err("sections", "expected an array")),
    };

    let mut sections = Vec::with_capacity(sections_raw.len());
    for (si, s) in sections_raw.iter().enumerate() {
        let path = format!("sections[{si}]");
        let s = s
            .as_object()
            .ok_or_else(|| err(&path, "expected an object"))?;
        let heading = match s.get("heading") {
            Some(Value::String(h)) => h.clone(),
            None => return Err(err(&format!("{path}.heading"), "missing required field")),
            Some(_) => return Err(err(&format!("{path}.heading"), "expected a string")),
        };
        let paras_raw = match s.get("paragraphs") {
            Some(Value::Array(a)) => a,
            None => {
                return Err(err(
                    &format!("{path}.paragraphs"),
                    "missing required field",
                ))
            }
            Some(_) => return Err(err(&format!("{path}.paragraphs"), "expected an array")),
        };
        let mut paragraphs = Vec::with_capacity(paras_raw.len());
        for (pi, p) in paras_raw.iter().enumerate() {
            let ppath = format!("{path}.paragraphs[{pi}]");
            let p = p
                .as_object()
                .ok_or_else(|| err(&ppath, "expected an object"))?;
            let heading = match p.get("heading") {
                Some(Value::Null) => None,
                Some(Value::String(h)) => Some(h.clone()),
                None => return Err(err(&format!("{ppath}.heading"), "missing required field")),
                Some(_) => return Err(err(&format!("{ppath}.heading"), "expected string or null")),
            };
            let heading_emphasized = match p.get("heading_emphasized") {
                Some(Value::Bool(b)) => *b,
                None => {
                    return Err(err(
                        &format!("{ppath}.heading_emphasized"),
                        "missing required field",
                    ))
                }
                Some(_) => {
                    return Err(err(
                        &format!("{ppath}.heading_emphasized"),
                        "expected a boolean",
                    ))
                }
            };
            let text = match p.get("text") {
                Some(Value::String(t)) => t.clone(),
                None => return Err(err(&format!("{ppath}.text"), "missing required field")),
                Some(_) => return Err(err(&format!("{ppath}.text"), "expected a string")),
            };
            paragraphs.push(ParagraphRecord {
                heading,
                heading_emphasized,
                text,
            });
        }
        sections.push(SectionRecord {
            heading,
            paragraphs,
        });
    }
    Ok(PaperRecord {
        id,
        venue,
        year,
        sections,
    })
}
