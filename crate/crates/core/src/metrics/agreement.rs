use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub value: f64,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    /// Chance agreement is 1 but observed agreement is not.
    pub undefined: bool,
}

/// Cohen's kappa for two annotators labelling the same items.
pub fn cohens_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<Kappa> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "annotation lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Domain("kappa needs at least one item".into()));
    }
    // label alphabet in first-appearance order keeps the sums deterministic
    let mut index = std::collections::HashMap::new();
    let mut counts_a: Vec<usize> = Vec::new();
    let mut counts_b: Vec<usize> = Vec::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        for (label, rater) in [(x, 0), (y, 1)] {
            let i = *index.entry(label).or_insert_with(|| {
                counts_a.push(0);
                counts_b.push(0);
                counts_a.len() - 1
            });
            if rater == 0 {
                counts_a[i] += 1;
            } else {
                counts_b[i] += 1;
            }
        }
        if x == y {
            agree += 1;
        }
    }
    let n = a.len() as f64;
    let p_o = agree as f64 / n;
    let p_e: f64 = counts_a
        .iter()
        .zip(&counts_b)
        .map(|(&ca, &cb)| (ca as f64 / n) * (cb as f64 / n))
        .sum();
    if (1.0 - p_e).abs() < f64::EPSILON {
        let perfect = p_o == 1.0;
        return Ok(Kappa {
            value: if perfect { 1.0 } else { 0.0 },
            observed_agreement: p_o,
            expected_agreement: p_e,
            undefined: !perfect,
        });
    }
    Ok(Kappa {
        value: (p_o - p_e) / (1.0 - p_e),
        observed_agreement: p_o,
        expected_agreement: p_e,
        undefined: false,
    })
}
