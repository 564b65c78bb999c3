//! Corpus-level ROUGE-N and ROUGE-L.
//!
//! Both are summed over the whole corpus before dividing: ROUGE-N is the
//! total clipped n-gram matches over the total reference n-grams, and
//! ROUGE-L precision/recall are total LCS length over total generated /
//! reference length.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{tokenize, TOKENIZER_VERSION};

/// A (generated, reference) token pair.
pub type TokenPair = (Vec<String>, Vec<String>);

/// Multiset of contiguous n-grams.
pub fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> Result<HashMap<Vec<&str>, usize>> {
    if n < 1 {
        return Err(Error::Domain(format!("n-gram order must be >= 1, got {n}")));
    }
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            let gram: Vec<&str> = window.iter().map(AsRef::as_ref).collect();
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeN {
    pub n: usize,
    pub score: f64,
    pub matches: usize,
    pub reference_total: usize,
    /// Set when no reference contributed any n-gram.
    pub degenerate: bool,
}

fn clipped_matches(generated: &[String], reference: &[String], n: usize) -> Result<(usize, usize)> {
    let gen = ngram_counts(generated, n)?;
    let refs = ngram_counts(reference, n)?;
    let matches = refs
        .iter()
        .map(|(gram, &rc)| rc.min(gen.get(gram).copied().unwrap_or(0)))
        .sum();
    Ok((matches, refs.values().sum()))
}

pub fn rouge_n(pairs: &[TokenPair], n: usize) -> Result<RougeN> {
    if pairs.is_empty() {
        return Err(Error::Domain("ROUGE-N needs at least one pair".into()));
    }
    let mut matches = 0;
    let mut reference_total = 0;
    for (generated, reference) in pairs {
        let (m, t) = clipped_matches(generated, reference, n)?;
        matches += m;
        reference_total += t;
    }
    let (score, degenerate) = if reference_total == 0 {
        (0.0, true)
    } else {
        (matches as f64 / reference_total as f64, false)
    };
    Ok(RougeN {
        n,
        score,
        matches,
        reference_total,
        degenerate,
    })
}

/// Mean of per-pair ROUGE-N recall over pairs whose reference has at least
/// one n-gram. This is a comparability option, not the corpus-summed form.
pub fn rouge_n_macro(pairs: &[TokenPair], n: usize) -> Result<RougeN> {
    if pairs.is_empty() {
        return Err(Error::Domain("ROUGE-N needs at least one pair".into()));
    }
    let mut sum = 0.0;
    let mut counted = 0usize;
    let mut matches = 0;
    let mut reference_total = 0;
    for (generated, reference) in pairs {
        let (m, t) = clipped_matches(generated, reference, n)?;
        matches += m;
        reference_total += t;
        if t > 0 {
            sum += m as f64 / t as f64;
            counted += 1;
        }
    }
    Ok(RougeN {
        n,
        score: if counted == 0 { 0.0 } else { sum / counted as f64 },
        matches,
        reference_total,
        degenerate: counted == 0,
    })
}

/// Longest common subsequence length over tokens.
pub fn lcs_length<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub beta: f64,
    pub degenerate: bool,
}

/// `F = (1 + β²)·P·R / (P + β²·R)`.
pub fn rouge_l(pairs: &[TokenPair], beta: f64) -> Result<RougeScore> {
    if pairs.is_empty() {
        return Err(Error::Domain("ROUGE-L needs at least one pair".into()));
    }
    let mut lcs_total = 0usize;
    let mut gen_total = 0usize;
    let mut ref_total = 0usize;
    for (generated, reference) in pairs {
        lcs_total += lcs_length(generated, reference);
        gen_total += generated.len();
        ref_total += reference.len();
    }
    let mut degenerate = false;
    let mut ratio = |den: usize| {
        if den == 0 {
            degenerate = true;
            0.0
        } else {
            lcs_total as f64 / den as f64
        }
    };
    let precision = ratio(gen_total);
    let recall = ratio(ref_total);
    let b2 = beta * beta;
    let den = precision + b2 * recall;
    let f1 = if den == 0.0 {
        degenerate = true;
        0.0
    } else {
        (1.0 + b2) * precision * recall / den
    };
    Ok(RougeScore {
        precision,
        recall,
        f1,
        beta,
        degenerate,
    })
}

/// Generation evaluation written by the `evaluate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RougeReport {
    pub pair_count: usize,
    pub tokenizer_version: String,
    pub aggregation: String,
    pub rouge_1: RougeN,
    pub rouge_2: RougeN,
    pub rouge_l: RougeScore,
    pub degenerate_flags: Vec<String>,
}

/// Tokenizes raw (generated, reference) strings and computes ROUGE-1/2/L.
pub fn evaluate_generation(pairs: &[(String, String)], macro_average: bool) -> Result<RougeReport> {
    let tokenized: Vec<TokenPair> = pairs
        .iter()
        .map(|(g, r)| (tokenize(g), tokenize(r)))
        .collect();
    let (rouge_1, rouge_2) = if macro_average {
        (rouge_n_macro(&tokenized, 1)?, rouge_n_macro(&tokenized, 2)?)
    } else {
        (rouge_n(&tokenized, 1)?, rouge_n(&tokenized, 2)?)
    };
    let rouge_l = rouge_l(&tokenized, 1.0)?;
    let mut degenerate_flags = Vec::new();
    if rouge_1.degenerate {
        degenerate_flags.push("rouge_1".to_string());
    }
    if rouge_2.degenerate {
        degenerate_flags.push("rouge_2".to_string());
    }
    if rouge_l.degenerate {
        degenerate_flags.push("rouge_l".to_string());
    }
    Ok(RougeReport {
        pair_count: pairs.len(),
        tokenizer_version: TOKENIZER_VERSION.to_string(),
        aggregation: if macro_average { "macro" } else { "corpus" }.to_string(),
        rouge_1,
        rouge_2,
        rouge_l,
        degenerate_flags,
    })
}
