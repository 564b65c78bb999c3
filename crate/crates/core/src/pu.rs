//! Positive-unlabeled learning with the spy technique.
//!
//! A random fraction of the positives is hidden inside the unlabeled pool, a
//! shallow classifier is trained to separate the remaining positives from
//! that mixture, and unlabeled paragraphs that score below a low quantile of
//! the spy probabilities become reliable negatives.

use std::fs;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Paragraph, ParagraphRef};
use crate::error::{Error, Result};
use crate::shallow::{train_shallow, EmbeddingBagModel, ShallowConfig};
use crate::text::tokenize;

pub const POOL_MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileSource {
    Spy,
    Unlabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RnTarget {
    MatchPositiveCount,
    AllBelowThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpyConfig {
    pub spy_fraction: f64,
    pub threshold_quantile: f64,
    pub quantile_source: QuantileSource,
    pub rn_target: RnTarget,
    pub seed: u64,
    /// Whether spies count as positives for downstream training.
    pub spies_rejoin_positives: bool,
    pub shallow: ShallowConfig,
}

impl Default for SpyConfig {
    fn default() -> Self {
        SpyConfig {
            spy_fraction: 0.15,
            threshold_quantile: 0.01,
            quantile_source: QuantileSource::Spy,
            rn_target: RnTarget::MatchPositiveCount,
            seed: 42,
            spies_rejoin_positives: true,
            shallow: ShallowConfig::default(),
        }
    }
}

impl SpyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.spy_fraction > 0.0 && self.spy_fraction < 1.0) {
            return Err(Error::Config(format!(
                "spy_fraction must lie in (0, 1), got {}",
                self.spy_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold_quantile) {
            return Err(Error::Config(format!(
                "threshold_quantile must lie in [0, 1], got {}",
                self.threshold_quantile
            )));
        }
        self.shallow.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PuPools {
    pub positives: Vec<Paragraph>,
    pub unlabeled: Vec<Paragraph>,
    pub spies: Vec<Paragraph>,
    pub reliable_negatives: Vec<Paragraph>,
}

impl PuPools {
    /// Positives for the downstream classifier.
    pub fn training_positives(&self, spies_rejoin: bool) -> Vec<&Paragraph> {
        if spies_rejoin {
            return self.positives.iter().collect();
        }
        let spies: std::collections::HashSet<ParagraphRef> =
            self.spies.iter().map(Paragraph::key).collect();
        self.positives
            .iter()
            .filter(|p| !spies.contains(&p.key()))
            .collect()
    }

    /// Checks the subset and disjointness relations between pools.
    pub fn check_invariants(&self) -> Result<()> {
        use std::collections::HashSet;
        let keys = |v: &[Paragraph]| v.iter().map(Paragraph::key).collect::<HashSet<_>>();
        let p = keys(&self.positives);
        let u = keys(&self.unlabeled);
        let s = keys(&self.spies);
        let rn = keys(&self.reliable_negatives);
        if !s.is_subset(&p) {
            return Err(Error::Data("spies are not a subset of the positives".into()));
        }
        if !rn.is_subset(&u) {
            return Err(Error::Data(
                "reliable negatives are not a subset of the unlabeled pool".into(),
            ));
        }
        if !rn.is_disjoint(&s) {
            return Err(Error::Data("a spy was selected as a reliable negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilitySummary {
    pub count: usize,
    pub min: f64,
    pub p01: f64,
    pub p05: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

impl ProbabilitySummary {
    pub fn of(probs: &[f64]) -> Result<Self> {
        Ok(ProbabilitySummary {
            count: probs.len(),
            min: compute_threshold(probs, 0.0)?,
            p01: compute_threshold(probs, 0.01)?,
            p05: compute_threshold(probs, 0.05)?,
            median: compute_threshold(probs, 0.5)?,
            mean: probs.iter().sum::<f64>() / probs.len() as f64,
            max: compute_threshold(probs, 1.0)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpyDiagnostics {
    pub quantile_source: QuantileSource,
    pub threshold: f64,
    /// Threshold the other quantile source would have produced.
    pub spy_threshold: f64,
    pub unlabeled_threshold: f64,
    pub candidate_count: usize,
    pub target_size: usize,
    pub reliable_negative_count: usize,
    pub spies_below_threshold: usize,
    pub spy_probabilities: ProbabilitySummary,
    pub unlabeled_probabilities: ProbabilitySummary,
    pub epoch_losses: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SpyRun {
    pub pools: PuPools,
    pub diagnostics: SpyDiagnostics,
    pub model: EmbeddingBagModel,
}

/// Splits `positives` into (P − S, S). Both keep the input order.
pub fn select_spies<T: Clone>(positives: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "spy fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if positives.len() < 2 {
        return Err(Error::Config(format!(
            "need at least two positives to inject spies, got {}",
            positives.len()
        )));
    }
    let k = (fraction * positives.len() as f64).round() as usize;
    if k == 0 || k == positives.len() {
        return Err(Error::Config(format!(
            "spy fraction {fraction} of {} positives gives {k} spies; need at least one spy and one remaining positive",
            positives.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..positives.len()).collect();
    order.shuffle(&mut rng);
    let mut is_spy = vec![false; positives.len()];
    for &i in &order[..k] {
        is_spy[i] = true;
    }
    let (mut rest, mut spies) = (Vec::new(), Vec::with_capacity(k));
    for (item, spy) in positives.iter().zip(is_spy) {
        if spy {
            spies.push(item.clone());
        } else {
            rest.push(item.clone());
        }
    }
    Ok((rest, spies))
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn compute_threshold(probs: &[f64], quantile: f64) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::Domain("cannot take a quantile of no probabilities".into()));
    }
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::Domain(format!("quantile must lie in [0, 1], got {quantile}")));
    }
    if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("probability out of range: {bad}")));
    }
    let mut sorted = probs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = quantile * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Unlabeled items scoring strictly below `threshold`, ascending by
/// probability; ties keep input order.
pub fn select_reliable_negatives<T: Clone>(
    scored: &[(T, f64)],
    threshold: f64,
    target: RnTarget,
    target_size: usize,
) -> Vec<T> {
    let mut candidates: Vec<&(T, f64)> = scored.iter().filter(|(_, p)| *p < threshold).collect();
    candidates.sort_by(|a, b| a.1.total_cmp(&b.1));
    if target == RnTarget::MatchPositiveCount {
        candidates.truncate(target_size);
    }
    candidates.into_iter().map(|(t, _)| t.clone()).collect()
}

/// Trains the spy classifier and extracts reliable negatives from `unlabeled`.
pub fn run_spy_pipeline(positives: &[Paragraph], unlabeled: &[Paragraph], config: &SpyConfig) -> Result<SpyRun> {
    config.validate()?;
    if positives.len() < 2 {
        return Err(Error::Config(format!(
            "need at least two positives, got {}",
            positives.len()
        )));
    }
    let mut warnings = Vec::new();
    if unlabeled.len() < positives.len() {
        let msg = format!(
            "unlabeled pool ({}) is smaller than the positive pool ({}); reliable negatives will be truncated",
            unlabeled.len(),
            positives.len()
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    let indices: Vec<usize> = (0..positives.len()).collect();
    let (rest_idx, spy_idx) = select_spies(&indices, config.spy_fraction, config.seed)?;

    let mut docs = Vec::with_capacity(rest_idx.len() + unlabeled.len() + spy_idx.len());
    let mut labels = Vec::with_capacity(docs.capacity());
    for &i in &rest_idx {
        docs.push(tokenize(&positives[i].text));
        labels.push(1u8);
    }
    let unlabeled_tokens: Vec<Vec<String>> = unlabeled.par_iter().map(|p| tokenize(&p.text)).collect();
    docs.extend(unlabeled_tokens.iter().cloned());
    labels.extend(std::iter::repeat_n(0u8, unlabeled.len()));
    let spy_tokens: Vec<Vec<String>> = spy_idx.iter().map(|&i| tokenize(&positives[i].text)).collect();
    docs.extend(spy_tokens.iter().cloned());
    labels.extend(std::iter::repeat_n(0u8, spy_idx.len()));

    info!(
        "spy training: {} positives, {} unlabeled, {} spies",
        rest_idx.len(),
        unlabeled.len(),
        spy_idx.len()
    );
    let shallow = ShallowConfig {
        seed: config.seed,
        ..config.shallow.clone()
    };
    let fit = train_shallow(&docs, &labels, &shallow)?;
    let model = fit.model;

    let spy_probs: Vec<f64> = spy_tokens.par_iter().map(|t| model.predict_tokens(t)).collect();
    let u_probs: Vec<f64> = unlabeled_tokens.par_iter().map(|t| model.predict_tokens(t)).collect();

    let spy_threshold = compute_threshold(&spy_probs, config.threshold_quantile)?;
    let unlabeled_threshold = if u_probs.is_empty() {
        0.0
    } else {
        compute_threshold(&u_probs, config.threshold_quantile)?
    };
    let threshold = match config.quantile_source {
        QuantileSource::Spy => spy_threshold,
        QuantileSource::Unlabeled => unlabeled_threshold,
    };

    let scored: Vec<(usize, f64)> = u_probs.iter().copied().enumerate().collect();
    let candidate_count = u_probs.iter().filter(|&&p| p < threshold).count();
    let target_size = positives.len();
    let rn_idx = select_reliable_negatives(&scored, threshold, config.rn_target, target_size);
    if config.rn_target == RnTarget::MatchPositiveCount && rn_idx.len() < target_size {
        let msg = format!(
            "only {candidate_count} unlabeled paragraphs fall below threshold {threshold:.6}; reliable negatives truncated to {} of {target_size}",
            rn_idx.len()
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    let spies_below_threshold = spy_probs.iter().filter(|&&p| p < threshold).count();

    let diagnostics = SpyDiagnostics {
        quantile_source: config.quantile_source,
        threshold,
        spy_threshold,
        unlabeled_threshold,
        candidate_count,
        target_size,
        reliable_negative_count: rn_idx.len(),
        spies_below_threshold,
        spy_probabilities: ProbabilitySummary::of(&spy_probs)?,
        unlabeled_probabilities: if u_probs.is_empty() {
            ProbabilitySummary::of(&[0.0])?
        } else {
            ProbabilitySummary::of(&u_probs)?
        },
        epoch_losses: fit.epoch_losses,
        warnings,
    };
    let pools = PuPools {
        positives: positives.to_vec(),
        unlabeled: unlabeled.to_vec(),
        spies: spy_idx.iter().map(|&i| positives[i].clone()).collect(),
        reliable_negatives: rn_idx.iter().map(|&i| unlabeled[i].clone()).collect(),
    };
    pools.check_invariants()?;
    Ok(SpyRun {
        pools,
        diagnostics,
        model,
    })
}

/// Deterministic shuffled partition with largest-remainder sizing.
pub fn split_dataset<T: Clone>(items: &[T], ratios: [u32; 3], seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if items.len() < 10 {
        return Err(Error::Config(format!(
            "need at least 10 items to split, got {}",
            items.len()
        )));
    }
    let sizes = split_sizes(items.len(), ratios)?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |range: &[usize]| range.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    let (a, rest) = order.split_at(sizes[0]);
    let (b, c) = rest.split_at(sizes[1]);
    Ok((pick(a), pick(b), pick(c)))
}

/// Part sizes for `n` items: floors of the exact shares, with leftover
/// items going to the largest fractional parts (earlier part on ties).
pub fn split_sizes(n: usize, ratios: [u32; 3]) -> Result<[usize; 3]> {
    let total: u64 = ratios.iter().map(|&r| u64::from(r)).sum();
    if total == 0 {
        return Err(Error::Config("split ratios must not all be zero".into()));
    }
    let mut sizes = [0usize; 3];
    let mut remainders = [(0u64, 0usize); 3];
    for (i, &r) in ratios.iter().enumerate() {
        let share = n as u64 * u64::from(r);
        sizes[i] = (share / total) as usize;
        remainders[i] = (share % total, i);
    }
    let leftover = n - sizes.iter().sum::<usize>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(leftover) {
        sizes[i] += 1;
    }
    Ok(sizes)
}

/// On-disk record of which paragraphs went into which pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolManifest {
    pub version: u32,
    pub config: SpyConfig,
    pub diagnostics: SpyDiagnostics,
    pub positives: Vec<ParagraphRef>,
    pub unlabeled: Vec<ParagraphRef>,
    pub spies: Vec<ParagraphRef>,
    pub reliable_negatives: Vec<ParagraphRef>,
}

impl PoolManifest {
    pub fn new(run: &SpyRun, config: &SpyConfig) -> Self {
        let refs = |v: &[Paragraph]| v.iter().map(Paragraph::key).collect();
        PoolManifest {
            version: POOL_MANIFEST_VERSION,
            config: config.clone(),
            diagnostics: run.diagnostics.clone(),
            positives: refs(&run.pools.positives),
            unlabeled: refs(&run.pools.unlabeled),
            spies: refs(&run.pools.spies),
            reliable_negatives: refs(&run.pools.reliable_negatives),
        }
    }

    /// Rebuilds the pools from the paragraphs the references point to.
    pub fn resolve(&self, paragraphs: &[Paragraph]) -> Result<PuPools> {
        let by_key: std::collections::HashMap<ParagraphRef, &Paragraph> =
            paragraphs.iter().map(|p| (p.key(), p)).collect();
        let look = |refs: &[ParagraphRef]| -> Result<Vec<Paragraph>> {
            refs.iter()
                .map(|r| {
                    by_key.get(r).map(|p| (*p).clone()).ok_or_else(|| {
                        Error::Data(format!(
                            "pool manifest references unknown paragraph {}#{}",
                            r.paper_id, r.ordinal
                        ))
                    })
                })
                .collect()
        };
        Ok(PuPools {
            positives: look(&self.positives)?,
            unlabeled: look(&self.unlabeled)?,
            spies: look(&self.spies)?,
            reliable_negatives: look(&self.reliable_negatives)?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: PoolManifest = serde_json::from_str(&raw)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if manifest.version != POOL_MANIFEST_VERSION {
            return Err(Error::Data(format!(
                "unsupported pool manifest version {}",
                manifest.version
            )));
        }
        Ok(manifest)
    }
}
